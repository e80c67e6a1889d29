"""Scene state construction, the coupled time step and the run driver.

Simulation owns the particle set and the FEM mesh. Every step transfers the
particles to a fresh set of active grid nodes, solves the incremental
potential over FEM + grid nodes with lagged friction, then moves the particles
with the grid solution.
"""

import logging
import time as wallclock
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from mpmfem.application.constraints import (
    DirichletGroup,
    LevelSetBoundary,
    build_constraints,
    select_dirichlet_nodes,
)
from mpmfem.application.integrator import (
    JointSystem,
    assemble_ip,
    compute_inertia_target,
    minimize_ip,
    newton_direction,
    potential_gradient,
    update_acceleration,
    update_velocity,
)
from mpmfem.config import Config, get_config
from mpmfem.core.contact import ContactContext, ContactPairs, ContactSurface, contact_weight
from mpmfem.core.errors import MaxItersExceeded, SimulationError
from mpmfem.core.fem import FemMesh, read_triangle_mesh
from mpmfem.core.friction import FrictionSet, build_friction_set
from mpmfem.core.mpm import Grid, GridState, ParticleSet, grid_to_particle, particle_to_grid, sample_particles
from mpmfem.domain.diagnostics import FrameCounters
from mpmfem.domain.scene import RegionSelect, SceneConfig
from mpmfem.domain.shapes import generate_mesh

logger = logging.getLogger(__name__)


@dataclass
class StepReport:
    """Solver counters of one time step.

    Attributes:
        newton_iterations: Newton iterations summed over friction updates.
        friction_iterations: inner minimizations performed.
        min_iterate_distance: smallest active contact distance over all accepted iterates.
        residual: final friction-loop convergence measure in m/s.
    """
    newton_iterations: int
    friction_iterations: int
    min_iterate_distance: float
    residual: float


class Simulation:
    """Coupled MPM/FEM scene advanced one implicit step at a time."""

    def __init__(self, scene: SceneConfig, base_dir: Path | None = None, config: Config | None = None):
        self.scene = scene
        self.config = config or get_config()
        self.integrator = scene.integrator.params()
        self.grid = Grid(
            origin=np.asarray(scene.grid.origin, dtype=float),
            extent=np.asarray(scene.grid.extent, dtype=float),
            dx=scene.grid.dx,
        )
        self.gravity = np.asarray(scene.gravity, dtype=float)
        self.time = 0.0
        self.step_index = 0

        self.particles = self._build_particles()
        self.mesh = self._build_mesh(base_dir)
        self.dirichlet = self._build_dirichlet()
        self.level_sets = [
            LevelSetBoundary(shape=ls.shape, kind=ls.kind, motion=ls.motion) for ls in scene.level_sets
        ]
        self.mu_table = scene.friction_table()
        self.omega = contact_weight(self.particles.volume)
        self.active_until = np.array([
            np.inf if obj.active_until is None else obj.active_until for obj in scene.fem_objects
        ])
        # a^0 of free material under gravity
        self.particles.accelerations = np.tile(self.gravity, (len(self.particles), 1))
        self.mesh.accelerations = np.tile(self.gravity, (self.mesh.n_nodes, 1))
        logger.info(
            f"Scene '{scene.name}': {len(self.particles)} particles, {self.mesh.n_nodes} FEM nodes, "
            f"{self.mesh.n_elements} triangles, {len(self.level_sets)} level sets"
        )

    # ------------------------------------------------------------------ construction

    def _build_particles(self) -> ParticleSet:
        sets = [
            sample_particles(
                obj.shape, self.grid.dx, obj.ppc, obj.material,
                origin=self.grid.origin, object_index=i, velocity=obj.velocity,
            )
            for i, obj in enumerate(self.scene.mpm_objects)
        ]
        return ParticleSet.concatenate(sets)

    def _build_mesh(self, base_dir: Path | None) -> FemMesh:
        meshes = []
        for i, obj in enumerate(self.scene.fem_objects):
            if obj.shape is not None:
                vertices, triangles = generate_mesh(obj.shape, obj.h)
            else:
                vertices, triangles = read_triangle_mesh((base_dir or Path.cwd()) / obj.mesh_file)
            mesh = FemMesh.from_arrays(vertices, triangles, obj.material, object_index=i)
            mesh.velocities = np.tile(np.asarray(obj.velocity, dtype=float), (mesh.n_nodes, 1))
            meshes.append(mesh)
        return FemMesh.concatenate(meshes)

    def _build_dirichlet(self) -> list[DirichletGroup]:
        groups = []
        for i, obj in enumerate(self.scene.fem_objects):
            for spec in obj.dirichlet:
                region = None
                if isinstance(spec.select, RegionSelect):
                    region = (spec.select.lo, spec.select.hi)
                nodes = select_dirichlet_nodes(self.mesh.rest, self.mesh.node_object, i, region)
                if len(nodes) == 0:
                    logger.warning(f"Dirichlet selection of FEM object '{obj.id}' holds no nodes")
                    continue
                groups.append(DirichletGroup(nodes=nodes, script=spec.script))
        return groups

    # ------------------------------------------------------------------ queries

    @property
    def dt(self) -> float:
        return self.integrator.dt

    def contact_surface(self, t: float | None = None) -> ContactSurface:
        """Boundary edges of the FEM objects still active at time t."""
        t = self.time if t is None else t
        edges = self.mesh.boundary_edges
        edge_object = self.mesh.edge_object
        if len(edge_object):
            keep = t < self.active_until[edge_object]
            edges, edge_object = edges[keep], edge_object[keep]
        return ContactSurface.from_edges(edges, edge_object, self.mesh.n_nodes)

    def _contact_context(self, grid_state: GridState) -> ContactContext:
        contact = self.scene.contact
        return ContactContext(
            surface=self.contact_surface(),
            omega=self.omega,
            stencil_weights=grid_state.stencil.weights,
            stencil_nodes=grid_state.local_nodes + self.mesh.n_nodes,
            n_fem=self.mesh.n_nodes,
            dhat=contact.dhat,
            kappa=contact.kappa,
            cell_size=self.grid.dx,
        )

    def build_joint_system(self, grid_state: GridState) -> JointSystem:
        """Stack FEM nodes and active grid nodes into this step's system."""
        mesh = self.mesh
        x_start = np.vstack([mesh.positions, grid_state.positions])
        v_start = np.vstack([mesh.velocities, grid_state.velocities])
        a_prev = np.vstack([mesh.accelerations, grid_state.accelerations])
        mass = np.concatenate([mesh.mass, grid_state.mass])
        system = JointSystem(
            mesh=mesh,
            particles=self.particles,
            grid=grid_state,
            mass=mass,
            x_start=x_start,
            v_start=v_start,
            a_start=np.zeros_like(x_start),
            x_hat=compute_inertia_target(x_start, v_start, a_prev, self.integrator),
            gravity=self.gravity,
            integrator=self.integrator,
            contact=self._contact_context(grid_state),
            constraints=build_constraints(
                mesh.positions, mesh.rest, self.dirichlet, grid_state.positions,
                self.level_sets, self.time, self.time + self.dt,
            ),
            eps_hat=self.dt * self.scene.contact.eps_v,
        )
        if self.integrator.gamma < 1.0:
            elastic_only = self.scene.solver.start_gradient == "elastic"
            empty = FrictionSet.empty(system.contact.particle_positions(x_start), mesh.positions)
            grad = potential_gradient(system, x_start, empty, elastic_only=elastic_only)
            system.a_start = self.gravity - grad / mass[:, None]
        return system

    def friction_set(self, system: JointSystem, x: np.ndarray, pairs: ContactPairs | None = None) -> FrictionSet:
        """Friction data lagged at x, measured from the step-start state."""
        ctx = system.contact
        particle_start = ctx.particle_positions(system.x_start)
        fem_start = system.x_start[: system.n_fem]
        if not np.any(self.mu_table > 0.0) or len(ctx.surface) == 0:
            return FrictionSet.empty(particle_start, fem_start)
        pairs = ctx.pairs(x) if pairs is None else pairs
        if pairs.n_pairs == 0:
            return FrictionSet.empty(particle_start, fem_start)
        return build_friction_set(
            ctx, x, pairs, self.particles.object_id, self.mesh.node_object,
            self.mu_table, particle_start, fem_start,
        )

    # ------------------------------------------------------------------ stepping

    def step(self) -> StepReport:
        """Advance the scene by one time step.

        Raises:
            SimulationError: on solver failure; the state is left at step start.
        """
        solver = self.scene.solver
        grid_state = particle_to_grid(self.particles, self.grid, self.scene.transfer)
        system = self.build_joint_system(grid_state)

        x = system.x_start
        friction = self.friction_set(system, x)
        newton_total = 0
        min_distance = float("inf")
        residual = float("inf")
        for count in range(1, solver.max_friction_iters + 1):
            result = minimize_ip(
                system, x, friction, solver,
                linear_solver=self.config.linear_solver,
                debug_checks=self.config.debug_checks,
            )
            x = result.x
            newton_total += result.iterations
            min_distance = min(min_distance, result.min_distance)

            lagged = friction
            friction = self.friction_set(system, x)
            if len(friction) == 0 and len(lagged) == 0:
                # unchanged problem: another solve would return the same iterate
                residual = result.residual
                break
            # probe step with friction data refreshed at the new iterate
            probe = newton_direction(
                system, x, assemble_ip(system, x, friction), self.config.linear_solver
            )
            residual = float(np.abs(probe).max(initial=0.0)) / self.dt
            if residual <= solver.friction_tolerance:
                break
        else:
            logger.warning(str(MaxItersExceeded("friction loop did not converge", count, residual)))
        logger.debug(f"Step {self.step_index}: {count} friction iterations, {newton_total} Newton iterations")

        self._commit(system, grid_state, x)
        return StepReport(newton_total, count, min_distance, residual)

    def _commit(self, system: JointSystem, grid_state: GridState, x_new: np.ndarray) -> None:
        a_new = update_acceleration(x_new, system.x_hat, self.integrator)
        v_new = update_velocity(system, x_new, a_new)
        n_fem = system.n_fem
        self.mesh = replace(
            self.mesh,
            positions=x_new[:n_fem],
            velocities=v_new[:n_fem],
            accelerations=a_new[:n_fem],
        )
        if len(self.particles):
            self.particles = grid_to_particle(
                self.particles, grid_state, x_new[n_fem:], v_new[n_fem:], a_new[n_fem:],
                self.scene.transfer,
            )
        self.time = (self.step_index + 1) * self.dt
        self.step_index += 1


@dataclass
class RunResult:
    """Outcome of a full run.

    Attributes:
        status: 0 on success, 3 when a solver error stopped the run.
        steps: time steps completed.
        frames: frames written.
        error: message of the error that stopped the run, if any.
    """
    status: int
    steps: int
    frames: int
    error: str | None = None


def step_count(end_time: float, dt: float) -> int:
    return int(round(end_time / dt))


def run_simulation(
    scene: SceneConfig,
    writer,
    base_dir: Path | None = None,
    config: Config | None = None,
) -> RunResult:
    """Step from t = 0 to end_time, handing every frame to `writer`.

    `writer` receives (simulation, frame_index, counters, wall_time) through
    its `write_frame` method and is closed before returning.
    """
    sim = Simulation(scene, base_dir, config)
    n_steps = step_count(scene.integrator.end_time, scene.integrator.dt)
    interval = scene.output.frame_interval
    clock = wallclock.perf_counter if scene.output.wall_clock else None
    started = clock() if clock else 0.0
    counters = FrameCounters()
    frames = 0
    writer.write_frame(sim, frames, counters, 0.0)
    frames += 1
    written_step = 0
    logger.info(f"Running '{scene.name}': {n_steps} steps of {scene.integrator.dt:g} s")

    try:
        for _ in range(n_steps):
            report = sim.step()
            counters.add(report)
            if sim.step_index % interval == 0 or sim.step_index == n_steps:
                wall = clock() - started if clock else 0.0
                writer.write_frame(sim, frames, counters, wall)
                frames += 1
                counters = FrameCounters()
                written_step = sim.step_index
                logger.info(f"Frame {frames - 1}: t={sim.time:.6g} s, step {sim.step_index}/{n_steps}")
    except SimulationError as e:
        logger.error(f"Solver failure at step {sim.step_index}: {e}")
        if sim.step_index > written_step:
            wall = clock() - started if clock else 0.0
            writer.write_frame(sim, frames, counters, wall)
            frames += 1
        return RunResult(status=3, steps=sim.step_index, frames=frames, error=f"step {sim.step_index}: {e}")
    finally:
        writer.close()
    return RunResult(status=0, steps=sim.step_index, frames=frames)
