"""Incremental potential over the joint FEM + grid node set and its projected Newton solver.

Joint node numbering puts the FEM nodes first; active grid node i becomes
joint node n_fem + i. Nodal arrays are (n, 2); flat DOF vectors interleave
components, so DOF 2n + d is component d of node n.
"""

import logging
from dataclasses import dataclass

import numpy as np

from mpmfem.application.constraints import NodeConstraints
from mpmfem.core.contact import ContactContext, broad_phase, contact_energy, contact_stencils
from mpmfem.core.errors import DirichletTunneling, LineSearchStall, MaxItersExceeded, NonPositiveJ
from mpmfem.core.fem import FemMesh, element_deformation_gradients, fem_elastic_stencils
from mpmfem.core.friction import FrictionSet, friction_energy, friction_stencils
from mpmfem.core.geometry import det_degeneracy_step_batch, point_edge_ccd_batch
from mpmfem.core.linalg import (
    SparseAssembler,
    StencilGroup,
    project_stencil_psd,
    scatter_gradient,
    solve_spd,
)
from mpmfem.core.models import IntegratorParams, SolverParams
from mpmfem.core.mpm import GridState, ParticleSet, mpm_elastic_stencils, update_particle_f

logger = logging.getLogger(__name__)

MIN_STEP = 1e-12


def compute_inertia_target(x: np.ndarray, v: np.ndarray, a: np.ndarray, params: IntegratorParams) -> np.ndarray:
    """x_hat = x + dt v + alpha (1 - 2 beta) dt^2 a."""
    dt = params.dt
    return x + dt * v + params.alpha * (1.0 - 2.0 * params.beta) * dt**2 * a


def update_acceleration(x_new: np.ndarray, x_hat: np.ndarray, params: IntegratorParams) -> np.ndarray:
    """Invert the position update: a = (x_new - x_hat) / (2 alpha beta dt^2)."""
    return (x_new - x_hat) / params.energy_scale


@dataclass
class JointSystem:
    """Frozen data of one time step over the joint node set.

    Attributes:
        mesh: FEM state at step start.
        particles: MPM particles at step start.
        grid: active grid nodes of this step.
        mass: (n,) nodal masses.
        x_start, v_start: (n, 2) step-start positions and velocities.
        a_start: (n, 2) step-start accelerations entering the velocity update.
        x_hat: (n, 2) inertia target without gravity.
        gravity: (2,) body acceleration.
        contact: barrier context with grid stencils mapped to joint ids.
        constraints: kinematic constraints for this step.
    """
    mesh: FemMesh
    particles: ParticleSet
    grid: GridState
    mass: np.ndarray
    x_start: np.ndarray
    v_start: np.ndarray
    a_start: np.ndarray
    x_hat: np.ndarray
    gravity: np.ndarray
    integrator: IntegratorParams
    contact: ContactContext
    constraints: NodeConstraints
    eps_hat: float

    @property
    def n_fem(self) -> int:
        return self.mesh.n_nodes

    @property
    def n_nodes(self) -> int:
        return len(self.mass)

    @property
    def inertia_target(self) -> np.ndarray:
        """x_hat with gravity folded in as a constant external acceleration."""
        return self.x_hat + self.integrator.energy_scale * self.gravity

    def split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return x[: self.n_fem], x[self.n_fem:]


@dataclass
class IPEvaluation:
    """E(x) with optional flat gradient and sparse Hessian.

    Attributes:
        terms: unscaled potentials by name (inertia, elastic, barrier, friction).
        min_distance: smallest active contact distance, inf when none.
    """
    energy: float
    gradient: np.ndarray | None
    hessian: object | None
    terms: dict[str, float]
    min_distance: float


def elastic_groups(system: JointSystem, x: np.ndarray, order: int) -> tuple[float, list[StencilGroup]]:
    """Elastic energy of both domains and, for order >= 1, their stencils."""
    x_fem, x_grid = system.split(x)
    energy = 0.0
    groups = []
    if system.mesh.n_elements:
        st = fem_elastic_stencils(system.mesh, x_fem, order=order)
        energy += st.energy
        if order >= 1:
            groups.append(StencilGroup(st.nodes, st.gradients, st.hessians))
    if len(system.particles):
        st = mpm_elastic_stencils(system.particles, system.grid, x_grid, order=order)
        energy += st.energy
        if order >= 1:
            groups.append(StencilGroup(st.nodes + system.n_fem, st.gradients, st.hessians))
    return energy, groups


def assemble_ip(system: JointSystem, x: np.ndarray, friction: FrictionSet, order: int = 2) -> IPEvaluation:
    """E = 1/2 |x - x_hat|_M^2 + 2 alpha beta dt^2 (Psi + B + D).

    The Hessian is M plus the scaled sum of PSD-projected stencils.
    """
    h = system.integrator.energy_scale
    ctx = system.contact
    diff = x - system.inertia_target
    inertia = 0.5 * float(np.sum(system.mass[:, None] * diff**2))
    elastic, elastic_st = elastic_groups(system, x, order)
    pairs = ctx.pairs(x)
    barrier = contact_energy(ctx, x, pairs)
    dissipation = friction_energy(ctx, x, friction, system.eps_hat)
    terms = {"inertia": inertia, "elastic": elastic, "barrier": barrier, "friction": dissipation}
    energy = inertia + h * (elastic + barrier + dissipation)
    if order == 0:
        return IPEvaluation(energy, None, None, terms, pairs.min_distance())

    contact_st = contact_stencils(ctx, x, pairs, order=order)
    contact_st += friction_stencils(ctx, x, friction, system.eps_hat, order=order)
    n_dofs = 2 * system.n_nodes
    gradient = (system.mass[:, None] * diff).reshape(-1)
    for group in elastic_st + contact_st:
        gradient += scatter_gradient(n_dofs, group.dofs, group.gradients, h)

    hessian = None
    if order >= 2:
        assembler = SparseAssembler(n_dofs)
        assembler.add_diagonal(np.repeat(system.mass, 2))
        for group in elastic_st:
            assembler.add_blocks(group.dofs, project_stencil_psd(group.hessians), h)
        # barrier blocks are projected before chaining; friction blocks are PSD already
        for group in contact_st:
            assembler.add_blocks(group.dofs, group.hessians, h)
        hessian = assembler.to_csc()
    return IPEvaluation(energy, gradient, hessian, terms, pairs.min_distance())


def potential_gradient(system: JointSystem, x: np.ndarray, friction: FrictionSet, elastic_only: bool = False) -> np.ndarray:
    """Nodal gradient (n, 2) of Psi + B + D, or of Psi alone."""
    n_dofs = 2 * system.n_nodes
    _, groups = elastic_groups(system, x, order=1)
    if not elastic_only:
        groups += contact_stencils(system.contact, x, order=1)
        groups += friction_stencils(system.contact, x, friction, system.eps_hat, order=1)
    gradient = np.zeros(n_dofs)
    for group in groups:
        gradient += scatter_gradient(n_dofs, group.dofs, group.gradients)
    return gradient.reshape(-1, 2)


def newton_direction(
    system: JointSystem,
    x: np.ndarray,
    evaluation: IPEvaluation,
    linear_solver: str = "auto",
) -> np.ndarray:
    """Projected Newton direction S q + r, shape (n, 2).

    q solves S^T H S q = -S^T (g + H r), where r is the scripted motion still
    owed by the constrained nodes.
    """
    constraints = system.constraints
    r = constraints.remaining(x)
    S = constraints.basis()
    if S.shape[1] == 0:
        return r
    H = evaluation.hessian
    rhs = -(S.T @ (evaluation.gradient + H @ r.reshape(-1)))
    reduced = (S.T @ H @ S).tocsc()
    q = solve_spd(reduced, rhs, method=linear_solver)
    return (S @ q).reshape(-1, 2) + r


def init_step_size(system: JointSystem, x: np.ndarray, direction: np.ndarray, ccd_safety: float) -> float:
    """Largest safe initial step along `direction`, capped at 1.

    Every point-edge trajectory and every element and particle determinant is
    bounded on [0, 1/ccd_safety]; the result is ccd_safety times the first
    critical step found.
    """
    if not np.any(direction):
        return 1.0
    max_step = 1.0 / ccd_safety
    critical = max_step
    ctx = system.contact
    x_fem, x_grid = system.split(x)
    d_fem, d_grid = system.split(direction)

    if len(ctx.surface) and len(system.particles):
        p = ctx.particle_positions(x)
        dp = ctx.particle_positions(direction)
        edges = ctx.surface.edges
        e0, e1 = x_fem[edges[:, 0]], x_fem[edges[:, 1]]
        de0, de1 = d_fem[edges[:, 0]], d_fem[edges[:, 1]]
        reach = max_step * (
            float(np.linalg.norm(dp, axis=1).max())
            + float(max(np.linalg.norm(de0, axis=1).max(), np.linalg.norm(de1, axis=1).max()))
        )
        cand_p, cand_e = broad_phase(p, e0, e1, reach, ctx.cell_size)
        if len(cand_p):
            toi = point_edge_ccd_batch(
                p[cand_p], e0[cand_e], e1[cand_e], dp[cand_p], de0[cand_e], de1[cand_e], max_step
            )
            critical = min(critical, float(toi.min()))

    if system.mesh.n_elements:
        F = element_deformation_gradients(system.mesh, x_fem)
        dF = element_deformation_gradients(system.mesh, d_fem)
        critical = min(critical, float(det_degeneracy_step_batch(F, dF, max_step).min()))

    if len(system.particles):
        grid = system.grid
        F = update_particle_f(system.particles.F, grid.stencil.gradients, x_grid[grid.local_nodes])
        dF = update_particle_f(system.particles.F, grid.stencil.gradients, d_grid[grid.local_nodes])
        critical = min(critical, float(det_degeneracy_step_batch(F, dF, max_step).min()))

    return min(1.0, ccd_safety * critical)


def check_feasibility(system: JointSystem, x: np.ndarray) -> None:
    """Raise if any element or particle is inverted or any contact pair touches."""
    x_fem, x_grid = system.split(x)
    if system.mesh.n_elements:
        F = element_deformation_gradients(system.mesh, x_fem)
        J = F[:, 0, 0] * F[:, 1, 1] - F[:, 0, 1] * F[:, 1, 0]
        if np.any(J <= 0.0):
            raise NonPositiveJ(f"FEM element with det(F) = {J.min():.3e}")
    if len(system.particles):
        grid = system.grid
        F = update_particle_f(system.particles.F, grid.stencil.gradients, x_grid[grid.local_nodes])
        J = F[:, 0, 0] * F[:, 1, 1] - F[:, 0, 1] * F[:, 1, 0]
        if np.any(J <= 0.0):
            raise NonPositiveJ(f"particle with det(F) = {J.min():.3e}")
    system.contact.pairs(x)


@dataclass
class NewtonResult:
    """Outcome of one incremental-potential minimization.

    Attributes:
        residual: final |p|_inf / dt in m/s.
        min_distance: smallest active contact distance over all accepted iterates.
    """
    x: np.ndarray
    iterations: int
    residual: float
    converged: bool
    energy: float
    min_distance: float


def minimize_ip(
    system: JointSystem,
    x0: np.ndarray,
    friction: FrictionSet,
    solver: SolverParams,
    linear_solver: str = "auto",
    debug_checks: bool = False,
    raise_on_max_iters: bool = False,
) -> NewtonResult:
    """Projected Newton with CCD-filtered backtracking line search.

    While scripted Dirichlet motion is still owed, the filtered step is taken
    as is; afterwards steps are halved from the filtered size until E does not
    increase. Iteration stops once |p|_inf / dt <= newton_tol.

    Raises:
        LineSearchStall: if the step size underflows.
        DirichletTunneling: if scripted motion cannot be completed.
        MaxItersExceeded: at the iteration cap when `raise_on_max_iters` is set.
    """
    dt = system.integrator.dt
    constraints = system.constraints
    x = np.array(x0, dtype=float)
    residual = float("inf")
    evaluation = assemble_ip(system, x, friction)
    min_distance = evaluation.min_distance

    for iteration in range(solver.max_newton_iters):
        scripted = constraints.owes_motion(x)
        direction = newton_direction(system, x, evaluation, linear_solver)
        residual = float(np.abs(direction).max(initial=0.0)) / dt
        if not scripted and residual <= solver.newton_tol:
            logger.debug(f"Newton converged in {iteration} iterations (residual {residual:.3e})")
            return NewtonResult(x, iteration, residual, True, evaluation.energy, min_distance)

        tau = init_step_size(system, x, direction, solver.ccd_safety)
        if scripted:
            if tau < MIN_STEP:
                raise DirichletTunneling(f"scripted motion blocked at Newton iteration {iteration}")
            x_new = x + tau * direction
            if tau == 1.0:
                x_new = constraints.snap(x_new)
            trial = assemble_ip(system, x_new, friction, order=0)
        else:
            while True:
                x_new = x + tau * direction
                trial = assemble_ip(system, x_new, friction, order=0)
                if trial.energy <= evaluation.energy:
                    break
                tau *= 0.5
                if tau < MIN_STEP:
                    raise LineSearchStall(
                        f"step size underflow at Newton iteration {iteration} (residual {residual:.3e})"
                    )

        logger.debug(
            f"Newton {iteration}: residual={residual:.3e} tau={tau:.3e} "
            f"E={trial.energy:.6e} scripted={scripted}"
        )
        x = x_new
        if debug_checks:
            check_feasibility(system, x)
        evaluation = assemble_ip(system, x, friction)
        min_distance = min(min_distance, evaluation.min_distance)

    if constraints.owes_motion(x):
        raise DirichletTunneling("scripted motion not completed within the Newton iteration cap")
    error = MaxItersExceeded("Newton iteration cap reached", solver.max_newton_iters, residual)
    if raise_on_max_iters:
        raise error
    logger.warning(str(error))
    return NewtonResult(x, solver.max_newton_iters, residual, False, evaluation.energy, min_distance)


def update_velocity(system: JointSystem, x_new: np.ndarray, a_new: np.ndarray) -> np.ndarray:
    """v = v_start + dt ((1 - gamma) a_start + gamma a_new) on free directions.

    Constrained directions take the velocity of the scripted motion.
    """
    params = system.integrator
    v = system.v_start + params.dt * ((1.0 - params.gamma) * system.a_start + params.gamma * a_new)
    scripted = (x_new - system.x_start) / params.dt
    c = system.constraints
    return c.project_free(v) + c.constrained_part(scripted)
