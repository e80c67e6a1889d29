"""Column layout of the CSV outputs. Names and order are part of the file format."""

PARTICLE_COLUMNS = ("id", "object", "x", "y", "vx", "vy", "det_f", "von_mises")

FEM_COLUMNS = ("id", "object", "x", "y", "vx", "vy")

DIAGNOSTICS_COLUMNS = (
    "frame",
    "step",
    "time",
    "kinetic_energy",
    "elastic_energy",
    "barrier_energy",
    "momentum_x",
    "momentum_y",
    "min_distance",
    "min_iterate_distance",
    "newton_iterations",
    "friction_iterations",
    "fem_penetrations",
    "levelset_penetrations",
    "contact_radius",
    "contact_force",
    "wall_time",
)

PARTICLE_FILE = "frame_{frame:06d}_particles.csv"
FEM_FILE = "frame_{frame:06d}_fem.csv"
DIAGNOSTICS_FILE = "diagnostics.csv"
