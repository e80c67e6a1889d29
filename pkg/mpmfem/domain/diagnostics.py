"""Read-side analyses of a simulation state: stresses, energies, oracles and experiment helpers."""

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from mpmfem.core.contact import ContactContext, barrier_forces_on_nodes, pair_energy
from mpmfem.core.elasticity import energy_density, first_piola
from mpmfem.core.fem import FemMesh, fem_elastic_energy
from mpmfem.core.models import ContactParams, Material, RigidScript, SolverParams, TransferScheme
from mpmfem.domain.scene import (
    DeskConfig,
    DirichletConfig,
    FemObjectConfig,
    GridConfig,
    IntegratorConfig,
    MpmObjectConfig,
    OutputConfig,
    RegionSelect,
    SceneConfig,
)
from mpmfem.domain.shapes import BoxShape, points_in_polygons

if TYPE_CHECKING:
    from mpmfem.application.simulation import Simulation, StepReport

logger = logging.getLogger(__name__)


def compute_von_mises(sigma: np.ndarray) -> np.ndarray:
    """In-plane von Mises stress of Cauchy stresses shaped (..., 2, 2)."""
    sigma = np.asarray(sigma, dtype=float)
    s11, s22, s12 = sigma[..., 0, 0], sigma[..., 1, 1], sigma[..., 0, 1]
    return np.sqrt(np.maximum(s11**2 - s11 * s22 + s22**2 + 3.0 * s12**2, 0.0))


def cauchy_stress(P: np.ndarray, F: np.ndarray) -> np.ndarray:
    """sigma = P F^T / det(F)."""
    J = F[:, 0, 0] * F[:, 1, 1] - F[:, 0, 1] * F[:, 1, 0]
    return (P @ np.transpose(F, (0, 2, 1))) / J[:, None, None]


def particle_von_mises(sim: "Simulation") -> np.ndarray:
    p = sim.particles
    if len(p) == 0:
        return np.zeros(0)
    P = first_piola(p.F, p.mu, p.lam, p.model_code)
    return compute_von_mises(cauchy_stress(P, p.F))


def determinants(F: np.ndarray) -> np.ndarray:
    return F[:, 0, 0] * F[:, 1, 1] - F[:, 0, 1] * F[:, 1, 0]


def particle_contact_context(sim: "Simulation") -> tuple[ContactContext, np.ndarray]:
    """Contact context over [FEM nodes; particles] with every particle as its own node."""
    n_fem = sim.mesh.n_nodes
    n = len(sim.particles)
    weights = np.zeros((n, 9))
    weights[:, 0] = 1.0
    nodes = np.repeat((n_fem + np.arange(n))[:, None], 9, axis=1)
    ctx = ContactContext(
        surface=sim.contact_surface(),
        omega=sim.omega,
        stencil_weights=weights,
        stencil_nodes=nodes,
        n_fem=n_fem,
        dhat=sim.scene.contact.dhat,
        kappa=sim.scene.contact.kappa,
        cell_size=sim.grid.dx,
    )
    return ctx, np.vstack([sim.mesh.positions, sim.particles.positions])


@dataclass
class FrameCounters:
    """Solver counters accumulated over the steps since the previous frame."""
    newton_iterations: int = 0
    friction_iterations: int = 0
    min_iterate_distance: float = float("inf")

    def add(self, report: "StepReport") -> None:
        self.newton_iterations += report.newton_iterations
        self.friction_iterations += report.friction_iterations
        self.min_iterate_distance = min(self.min_iterate_distance, report.min_iterate_distance)


def kinetic_energy(sim: "Simulation") -> float:
    p, mesh = sim.particles, sim.mesh
    return 0.5 * float(
        np.dot(p.mass, np.sum(p.velocities**2, axis=1))
        + np.dot(mesh.mass, np.sum(mesh.velocities**2, axis=1))
    )


def elastic_energy(sim: "Simulation") -> float:
    p = sim.particles
    energy = fem_elastic_energy(sim.mesh, sim.mesh.positions)
    if len(p):
        energy += float(np.dot(p.volume, energy_density(p.F, p.mu, p.lam, p.model_code)))
    return energy


def linear_momentum(sim: "Simulation") -> np.ndarray:
    p, mesh = sim.particles, sim.mesh
    return p.mass @ p.velocities + mesh.mass @ mesh.velocities


def center_of_mass(sim: "Simulation") -> np.ndarray:
    """Mass-weighted centre of both domains."""
    p, mesh = sim.particles, sim.mesh
    total = p.mass.sum() + mesh.mass.sum()
    return (p.mass @ p.positions + mesh.mass @ mesh.positions) / total


def particles_inside_mesh(points: np.ndarray, mesh: FemMesh, edges: np.ndarray | None = None) -> int:
    """Number of points inside the closed boundary loops of the mesh."""
    edges = mesh.boundary_edges if edges is None else edges
    if len(edges) == 0 or len(points) == 0:
        return 0
    x = mesh.positions
    return int(points_in_polygons(points, x[edges[:, 0]], x[edges[:, 1]]).sum())


def particles_inside_level_sets(sim: "Simulation") -> int:
    points = sim.particles.positions
    if len(points) == 0 or not sim.level_sets:
        return 0
    inside = np.zeros(len(points), dtype=bool)
    for ls in sim.level_sets:
        inside |= ls.signed_distance(points, sim.time) < 0.0
    return int(inside.sum())


def contact_patch(sim: "Simulation", fem_object: str) -> tuple[float, float]:
    """Half-width of the contact patch on a FEM object and the barrier force it carries.

    The patch is the set of particles within dhat of the object's boundary
    edges; its half-width is half their horizontal spread. The force is the
    magnitude of the summed barrier forces on the object's nodes.
    """
    index = [obj.id for obj in sim.scene.fem_objects].index(fem_object)
    ctx, joint = particle_contact_context(sim)
    pairs = ctx.pairs(joint)
    on_object = ctx.surface.edge_object[pairs.pe_edge] == index
    touching = np.unique(pairs.pe_particle[on_object])
    if len(touching) == 0:
        return 0.0, 0.0
    xs = sim.particles.positions[touching, 0]
    half_width = 0.5 * float(xs.max() - xs.min())
    nodes = np.nonzero(sim.mesh.node_object == index)[0]
    force = float(np.linalg.norm(barrier_forces_on_nodes(ctx, joint, nodes)))
    return half_width, force


def hertz_slope(youngs_modulus: float, poisson_ratio: float, radius: float) -> float:
    """Slope of F against a^2 for a disk pressed by a flat plate, (pi/4) E / ((1 - nu^2) R)."""
    return 0.25 * np.pi * youngs_modulus / ((1.0 - poisson_ratio**2) * radius)


def fit_force_area_slope(half_widths: np.ndarray, forces: np.ndarray) -> float:
    """Least-squares slope of F against a^2."""
    slope, _ = np.polyfit(np.asarray(half_widths, dtype=float) ** 2, np.asarray(forces, dtype=float), 1)
    return float(slope)


def emit_diagnostics(sim: "Simulation", frame: int, counters: FrameCounters, wall_time: float) -> dict:
    """One diagnostics row for the current state."""
    ctx, joint = particle_contact_context(sim)
    pairs = ctx.pairs(joint)
    momentum = linear_momentum(sim)
    radius = force = float("nan")
    if sim.scene.output.hertz_plate is not None:
        radius, force = contact_patch(sim, sim.scene.output.hertz_plate)
    surface = ctx.surface
    row = {
        "frame": frame,
        "step": sim.step_index,
        "time": sim.time,
        "kinetic_energy": kinetic_energy(sim),
        "elastic_energy": elastic_energy(sim),
        "barrier_energy": pair_energy(pairs, ctx.omega, ctx.dhat, ctx.kappa),
        "momentum_x": float(momentum[0]),
        "momentum_y": float(momentum[1]),
        "min_distance": pairs.min_distance(),
        "min_iterate_distance": counters.min_iterate_distance,
        "newton_iterations": counters.newton_iterations,
        "friction_iterations": counters.friction_iterations,
        "fem_penetrations": particles_inside_mesh(sim.particles.positions, sim.mesh, surface.edges),
        "levelset_penetrations": particles_inside_level_sets(sim),
        "contact_radius": radius,
        "contact_force": force,
        "wall_time": wall_time,
    }
    if row["fem_penetrations"]:
        logger.warning(f"Frame {frame}: {row['fem_penetrations']} particles inside FEM boundaries")
    return row


def stacking_scene(n: int, ppc: int = 16, end_time: float = 3.0, dt: float = 0.02) -> SceneConfig:
    """Soft MPM box resting on a soft FEM box, refined with dx = h = 1/n and dhat = 1/n^2."""
    dx = 1.0 / n
    mpm_material = Material(youngs_modulus=4e4, poisson_ratio=0.4, density=1e3)
    fem_material = Material(youngs_modulus=4e4, poisson_ratio=0.4, density=1e2)
    return SceneConfig(
        name=f"stacking_n{n}_ppc{ppc}",
        grid=GridConfig(origin=(0.0, 0.0), extent=(4.0, 4.0), dx=dx),
        integrator=IntegratorConfig(preset="backward_euler", dt=dt, end_time=end_time),
        transfer=TransferScheme.PIC,
        gravity=(0.0, -10.0),
        contact=ContactParams(dhat=dx**2, kappa=1e6),
        solver=SolverParams(newton_tol=1e-9),
        mpm_objects=[
            MpmObjectConfig(
                id="mpm_box",
                shape=BoxShape(lo=(1.0, 1.0 + dx), hi=(3.0, 2.0 + dx)),
                material=mpm_material,
                ppc=ppc,
            ),
        ],
        fem_objects=[
            FemObjectConfig(
                id="fem_box",
                shape=BoxShape(lo=(0.0, 0.0), hi=(4.0, 1.0)),
                material=fem_material,
                h=dx,
                dirichlet=[DirichletConfig(select=RegionSelect(lo=(0.0, 0.0), hi=(4.0, 0.0)), script=RigidScript())],
            ),
        ],
        output=OutputConfig(frame_interval=max(1, int(round(0.1 / dt)))),
        desk=DeskConfig(),
    )
