"""MPM domain: background lattice, quadratic B-spline stencils and particle-grid transfers.

Stencil-local node order is a = 3 * i + j for offsets (i, j) along (x, y)
from the stencil base node.
"""

import logging
from dataclasses import dataclass, replace
from typing import Protocol

import numpy as np

from mpmfem.core.elasticity import MODEL_CODES, ElasticStencils, elastic_stencils
from mpmfem.core.errors import DegenerateSpec, EmptyShape, OutOfDomain
from mpmfem.core.linalg import stencil_dofs
from mpmfem.core.models import Material, TransferScheme

logger = logging.getLogger(__name__)


class Region(Protocol):
    """Anything particles can be sampled from."""

    def contains(self, points: np.ndarray) -> np.ndarray: ...

    def bounds(self) -> tuple[np.ndarray, np.ndarray]: ...


@dataclass(frozen=True)
class Grid:
    """Fixed axis-aligned lattice; node (i, j) sits at origin + (i, j) * dx."""
    origin: np.ndarray
    extent: np.ndarray
    dx: float

    @property
    def shape(self) -> tuple[int, int]:
        counts = np.floor(np.asarray(self.extent) / self.dx + 1e-9).astype(int) + 1
        return int(counts[0]), int(counts[1])

    @property
    def n_nodes(self) -> int:
        nx, ny = self.shape
        return nx * ny

    def node_positions(self, flat_ids: np.ndarray) -> np.ndarray:
        ny = self.shape[1]
        flat_ids = np.asarray(flat_ids, dtype=np.int64)
        ij = np.stack([flat_ids // ny, flat_ids % ny], axis=1)
        return np.asarray(self.origin, dtype=float) + ij * self.dx


@dataclass
class KernelStencil:
    """Quadratic B-spline weights over the 3x3 nodes around each particle.

    Attributes:
        base: (n, 2) lattice index of the lower-left stencil node.
        weights: (n, 9) weights w_ip.
        gradients: (n, 9, 2) weight gradients in 1/m.
        nodes: (n, 9) flat lattice node ids.
    """
    base: np.ndarray
    weights: np.ndarray
    gradients: np.ndarray
    nodes: np.ndarray


def _bspline_1d(frac: np.ndarray, dx: float) -> tuple[np.ndarray, np.ndarray]:
    w = np.stack([0.5 * (1.5 - frac) ** 2, 0.75 - (frac - 1.0) ** 2, 0.5 * (frac - 0.5) ** 2], axis=1)
    dw = np.stack([frac - 1.5, -2.0 * (frac - 1.0), frac - 0.5], axis=1) / dx
    return w, dw


def kernel_stencil(x: np.ndarray, grid: Grid) -> KernelStencil:
    """Batched stencils for particle positions x of shape (n, 2)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    local = (x - np.asarray(grid.origin, dtype=float)) / grid.dx
    base = np.floor(local - 0.5).astype(np.int64)
    nx, ny = grid.shape
    outside = (base < 0).any(axis=1) | (base[:, 0] + 2 >= nx) | (base[:, 1] + 2 >= ny)
    if np.any(outside):
        first = int(np.nonzero(outside)[0][0])
        raise OutOfDomain(f"{int(outside.sum())} particle stencils leave the grid, first at {x[first]}")
    frac = local - base
    wx, dwx = _bspline_1d(frac[:, 0], grid.dx)
    wy, dwy = _bspline_1d(frac[:, 1], grid.dx)
    weights = np.einsum("ni,nj->nij", wx, wy).reshape(-1, 9)
    gradients = np.stack(
        [np.einsum("ni,nj->nij", dwx, wy), np.einsum("ni,nj->nij", wx, dwy)], axis=-1
    ).reshape(-1, 9, 2)
    offsets = np.arange(3)
    ix = base[:, 0, None, None] + offsets[None, :, None]
    iy = base[:, 1, None, None] + offsets[None, None, :]
    nodes = (ix * ny + iy).reshape(-1, 9)
    return KernelStencil(base=base, weights=weights, gradients=gradients, nodes=nodes)


def apic_inertia_inverse(dx: float) -> float:
    """Scalar s with D_p^-1 = s I; quadratic B-splines give D_p = dx^2 / 4 I."""
    return 4.0 / dx**2


@dataclass
class ParticleSet:
    """MPM particle state; all arrays share the leading particle axis.

    Attributes:
        positions, velocities, accelerations: (n, 2).
        mass, volume: (n,) m_p in kg and rest volume V_p^0 in m^2.
        F: (n, 2, 2) deformation gradients.
        B: (n, 2, 2) APIC affine matrices.
        object_id: (n,) index of the MPM object each particle belongs to.
        mu, lam, model_code: per-particle constitutive constants.
    """
    positions: np.ndarray
    velocities: np.ndarray
    mass: np.ndarray
    volume: np.ndarray
    F: np.ndarray
    B: np.ndarray
    object_id: np.ndarray
    mu: np.ndarray
    lam: np.ndarray
    model_code: np.ndarray
    accelerations: np.ndarray | None = None

    def __post_init__(self):
        if self.accelerations is None:
            self.accelerations = np.zeros_like(self.positions)

    def __len__(self) -> int:
        return len(self.positions)

    @classmethod
    def empty(cls) -> "ParticleSet":
        return cls(
            positions=np.zeros((0, 2)), velocities=np.zeros((0, 2)), mass=np.zeros(0),
            volume=np.zeros(0), F=np.zeros((0, 2, 2)), B=np.zeros((0, 2, 2)),
            object_id=np.zeros(0, dtype=np.int64), mu=np.zeros(0), lam=np.zeros(0),
            model_code=np.zeros(0, dtype=np.int64),
        )

    @classmethod
    def concatenate(cls, sets: list["ParticleSet"]) -> "ParticleSet":
        if not sets:
            return cls.empty()
        return cls(
            positions=np.vstack([s.positions for s in sets]),
            velocities=np.vstack([s.velocities for s in sets]),
            mass=np.concatenate([s.mass for s in sets]),
            volume=np.concatenate([s.volume for s in sets]),
            F=np.concatenate([s.F for s in sets]),
            B=np.concatenate([s.B for s in sets]),
            object_id=np.concatenate([s.object_id for s in sets]),
            mu=np.concatenate([s.mu for s in sets]),
            lam=np.concatenate([s.lam for s in sets]),
            model_code=np.concatenate([s.model_code for s in sets]),
            accelerations=np.vstack([s.accelerations for s in sets]),
        )


@dataclass
class GridState:
    """Active grid nodes of one time step.

    Active nodes are the lattice nodes with positive mass, sorted by flat id;
    the position of a node in these arrays is its DOF-node index.

    Attributes:
        node_ids: (k,) flat lattice ids.
        positions, velocities, accelerations: (k, 2) nodal x_i, v_i, a_i.
        mass: (k,) nodal masses m_i.
        stencil: stencils of the particles that produced this state.
        local_nodes: (n, 9) active-node index of each stencil entry.
    """
    node_ids: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    accelerations: np.ndarray
    mass: np.ndarray
    stencil: KernelStencil
    local_nodes: np.ndarray

    @property
    def n_active(self) -> int:
        return len(self.node_ids)

    def interpolate(self, nodal: np.ndarray) -> np.ndarray:
        """Sum_i w_ip f_i at every particle for nodal values f of shape (k, 2)."""
        return np.einsum("na,nad->nd", self.stencil.weights, nodal[self.local_nodes])


def particle_to_grid(
    particles: ParticleSet, grid: Grid, scheme: TransferScheme = TransferScheme.APIC
) -> GridState:
    """Transfer mass, momentum and acceleration to the active grid nodes."""
    stencil = kernel_stencil(particles.positions, grid)
    node_ids, inverse = np.unique(stencil.nodes.reshape(-1), return_inverse=True)
    inverse = inverse.reshape(stencil.nodes.shape)
    k = len(node_ids)

    mw = particles.mass[:, None] * stencil.weights
    mass = np.bincount(inverse.reshape(-1), weights=mw.reshape(-1), minlength=k)

    positions = grid.node_positions(node_ids)
    momentum_p = np.repeat(particles.velocities[:, None, :], 9, axis=1)
    if scheme == TransferScheme.APIC:
        offset = positions[inverse] - particles.positions[:, None, :]
        affine = apic_inertia_inverse(grid.dx) * np.einsum("nij,naj->nai", particles.B, offset)
        momentum_p = momentum_p + affine
    momentum = _scatter_vector(inverse, mw[:, :, None] * momentum_p, k)
    accel = _scatter_vector(inverse, mw[:, :, None] * particles.accelerations[:, None, :], k)

    # zero-weight stencil entries (particle exactly half a cell off a node) carry no mass
    active = mass > 0.0
    if not np.all(active):
        remap = np.cumsum(active) - 1
        dropped = ~active[inverse]
        inverse = np.where(dropped, 0, remap[inverse])
        node_ids, positions, mass = node_ids[active], positions[active], mass[active]
        momentum, accel = momentum[active], accel[active]

    return GridState(
        node_ids=node_ids,
        positions=positions,
        velocities=momentum / mass[:, None],
        accelerations=accel / mass[:, None],
        mass=mass,
        stencil=stencil,
        local_nodes=inverse,
    )


def _scatter_vector(inverse: np.ndarray, values: np.ndarray, k: int) -> np.ndarray:
    flat = inverse.reshape(-1)
    return np.stack(
        [np.bincount(flat, weights=values[..., d].reshape(-1), minlength=k) for d in range(2)], axis=1
    )


def update_particle_f(F: np.ndarray, gradients: np.ndarray, x_stencil: np.ndarray) -> np.ndarray:
    """F^{n+1} = (sum_i x_i grad w_ip^T) F^n with x_stencil of shape (n, 9, 2)."""
    return np.einsum("nai,naj->nij", x_stencil, gradients) @ F


def grid_to_particle(
    particles: ParticleSet,
    state: GridState,
    x_new: np.ndarray,
    v_new: np.ndarray,
    a_new: np.ndarray | None,
    scheme: TransferScheme = TransferScheme.APIC,
) -> ParticleSet:
    """Return the particles advected by the grid solution of this step."""
    w = state.stencil.weights
    x_st = x_new[state.local_nodes]
    v_st = v_new[state.local_nodes]
    positions = np.einsum("na,nad->nd", w, x_st)
    F = update_particle_f(particles.F, state.stencil.gradients, x_st)

    if scheme == TransferScheme.FLIP:
        dv = v_new - state.velocities
        velocities = particles.velocities + np.einsum("na,nad->nd", w, dv[state.local_nodes])
    else:
        velocities = np.einsum("na,nad->nd", w, v_st)

    if scheme == TransferScheme.APIC:
        x_old = state.positions[state.local_nodes] - particles.positions[:, None, :]
        x_adv = x_st - positions[:, None, :]
        B = 0.5 * (
            np.einsum("na,nai,naj->nij", w, v_st, x_old + x_adv)
            + np.einsum("na,nai,naj->nij", w, x_old - x_adv, v_st)
        )
    else:
        B = np.zeros_like(particles.B)

    accelerations = particles.accelerations
    if a_new is not None:
        accelerations = np.einsum("na,nad->nd", w, a_new[state.local_nodes])

    return replace(
        particles, positions=positions, velocities=velocities, F=F, B=B, accelerations=accelerations
    )


def mpm_shape_gradients(particles: ParticleSet, state: GridState) -> np.ndarray:
    """(n, 9, 2) factors D_a = F_p^T grad w_a, so F_p(x) = sum_a x_a D_a^T."""
    return np.einsum("nji,naj->nai", particles.F, state.stencil.gradients)


def mpm_elastic_stencils(
    particles: ParticleSet, state: GridState, x_grid: np.ndarray, order: int = 2
) -> ElasticStencils:
    """Particle energies sum_p V_p^0 psi(F_p(x)) with 18-vector / 18x18 blocks."""
    F = update_particle_f(particles.F, state.stencil.gradients, x_grid[state.local_nodes])
    return elastic_stencils(
        F, particles.volume, particles.mu, particles.lam, particles.model_code,
        mpm_shape_gradients(particles, state), state.local_nodes, order=order,
    )


def mpm_elastic_energy(particles: ParticleSet, state: GridState, x_grid: np.ndarray) -> float:
    if len(particles) == 0:
        return 0.0
    return mpm_elastic_stencils(particles, state, x_grid, order=0).energy


def mpm_elastic_gradient(particles: ParticleSet, state: GridState, x_grid: np.ndarray) -> np.ndarray:
    """Gradient (k, 2) over active grid nodes."""
    grad = np.zeros(2 * state.n_active)
    if len(particles) == 0:
        return grad.reshape(-1, 2)
    st = mpm_elastic_stencils(particles, state, x_grid, order=1)
    np.add.at(grad, stencil_dofs(st.nodes).reshape(-1), st.gradients.reshape(-1))
    return grad.reshape(-1, 2)


def mpm_elastic_hessian_stencils(
    particles: ParticleSet, state: GridState, x_grid: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Per-particle active-node indices (n, 9) and unprojected 18x18 blocks."""
    st = mpm_elastic_stencils(particles, state, x_grid, order=2)
    return st.nodes, st.hessians


def sample_particles(
    shape: Region,
    dx: float,
    ppc: int,
    material: Material,
    origin: np.ndarray | None = None,
    object_index: int = 0,
    velocity: tuple[float, float] = (0.0, 0.0),
) -> ParticleSet:
    """Place one particle at the centre of each sub-cell that lies inside `shape`.

    Cells are aligned with the lattice through `origin`; each cell holds
    sqrt(ppc) x sqrt(ppc) sub-cells.
    """
    per_axis = int(round(np.sqrt(ppc)))
    if ppc < 1 or per_axis * per_axis != ppc:
        raise DegenerateSpec(f"ppc must be a perfect square, got {ppc}")
    origin = np.zeros(2) if origin is None else np.asarray(origin, dtype=float)
    h = dx / per_axis
    lo, hi = shape.bounds()
    first = np.floor((np.asarray(lo) - origin) / h).astype(int)
    last = np.ceil((np.asarray(hi) - origin) / h).astype(int)
    xs = origin[0] + (np.arange(first[0], last[0]) + 0.5) * h
    ys = origin[1] + (np.arange(first[1], last[1]) + 0.5) * h
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    candidates = np.stack([gx.reshape(-1), gy.reshape(-1)], axis=1)
    points = candidates[shape.contains(candidates)]
    if len(points) == 0:
        raise EmptyShape(f"no sub-cell centre at spacing {h} lies inside the shape")

    n = len(points)
    volume = np.full(n, dx * dx / ppc)
    logger.debug(f"Sampled {n} particles (dx={dx}, ppc={ppc})")
    return ParticleSet(
        positions=points,
        velocities=np.tile(np.asarray(velocity, dtype=float), (n, 1)),
        mass=material.density * volume,
        volume=volume,
        F=np.tile(np.eye(2), (n, 1, 1)),
        B=np.zeros((n, 2, 2)),
        object_id=np.full(n, object_index, dtype=np.int64),
        mu=np.full(n, material.mu),
        lam=np.full(n, material.lam),
        model_code=np.full(n, MODEL_CODES[material.model], dtype=np.int64),
    )
