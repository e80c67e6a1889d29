"""Barrier contact between MPM particles and FEM boundary edges.

Particles are the contact quadrature points. Their positions are the grid
interpolations x_q = sum_i w_iq x_i, so every derivative taken with respect to
x_q is chained onto the 3x3 grid stencil of the particle.
"""

import logging
from dataclasses import dataclass

import numpy as np

from mpmfem.core.errors import NonPositiveDistance
from mpmfem.core.geometry import (
    EdgeRegion,
    point_edge_distance_batch,
    point_edge_distance_sq_derivatives,
    point_point_distance_sq_derivatives,
)
from mpmfem.core.linalg import StencilGroup, project_stencil_psd

logger = logging.getLogger(__name__)


def barrier(d, dhat: float, kappa: float):
    """b(d) = -kappa (d/dhat - 1)^2 ln(d/dhat) on (0, dhat), zero beyond."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0.0):
        raise NonPositiveDistance(f"barrier evaluated at d = {d.min():.3e}")
    r = np.minimum(d / dhat, 1.0)
    return -kappa * (r - 1.0) ** 2 * np.log(r)


def barrier_d1(d, dhat: float, kappa: float):
    """db/dd; strictly negative on (0, dhat)."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0.0):
        raise NonPositiveDistance(f"barrier evaluated at d = {d.min():.3e}")
    r = np.minimum(d / dhat, 1.0)
    return -kappa / dhat * (2.0 * (r - 1.0) * np.log(r) + (r - 1.0) ** 2 / r)


def barrier_d2(d, dhat: float, kappa: float):
    """d2b/dd2."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0.0):
        raise NonPositiveDistance(f"barrier evaluated at d = {d.min():.3e}")
    r = np.minimum(d / dhat, 1.0)
    return -kappa / dhat**2 * (2.0 * np.log(r) + 4.0 * (r - 1.0) / r - (r - 1.0) ** 2 / r**2)


def contact_weight(volume):
    """Diameter 2 sqrt(V / pi) of the disk with the particle's rest area."""
    return 2.0 * np.sqrt(np.asarray(volume, dtype=float) / np.pi)


@dataclass
class ContactSurface:
    """The FEM boundary edges taking part in contact at one time.

    Attributes:
        edges: (b, 2) FEM node ids, interior on the left.
        edge_object: (b,) FEM object index of each edge.
        eta: (n_fem,) number of listed edges incident to each node.
    """
    edges: np.ndarray
    edge_object: np.ndarray
    eta: np.ndarray

    @classmethod
    def from_edges(cls, edges: np.ndarray, edge_object: np.ndarray, n_nodes: int) -> "ContactSurface":
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        return cls(
            edges=edges,
            edge_object=np.asarray(edge_object, dtype=np.int64),
            eta=np.bincount(edges.reshape(-1), minlength=n_nodes),
        )

    def __len__(self) -> int:
        return len(self.edges)

    def max_edge_length(self, x_fem: np.ndarray) -> float:
        if len(self.edges) == 0:
            return 0.0
        return float(np.linalg.norm(x_fem[self.edges[:, 1]] - x_fem[self.edges[:, 0]], axis=1).max())


def _cell_keys(cells: np.ndarray) -> np.ndarray:
    # cells are non-negative; pack (i, j) into one int64
    return cells[:, 0] * np.int64(1 << 31) + cells[:, 1]


def broad_phase(
    points: np.ndarray,
    e0: np.ndarray,
    e1: np.ndarray,
    inflate: float,
    cell_size: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Candidate (point, edge) index pairs whose distance may be below `inflate`.

    Points are hashed into square cells of `cell_size`; each edge looks up the
    3x3 cells around its midpoint, which is a superset of every point within
    `inflate` of the edge as long as cell_size >= inflate + edge length.
    Candidates are then filtered by the inflated edge bounding box.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    e0 = np.asarray(e0, dtype=float).reshape(-1, 2)
    e1 = np.asarray(e1, dtype=float).reshape(-1, 2)
    empty = (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
    if len(points) == 0 or len(e0) == 0:
        return empty
    lengths = np.linalg.norm(e1 - e0, axis=1)
    cell_size = max(cell_size, inflate + float(lengths.max()))

    mid = 0.5 * (e0 + e1)
    shift = np.minimum(points.min(axis=0), mid.min(axis=0))
    point_cells = np.floor((points - shift) / cell_size).astype(np.int64) + 1
    mid_cells = np.floor((mid - shift) / cell_size).astype(np.int64) + 1

    point_keys = _cell_keys(point_cells)
    order = np.argsort(point_keys, kind="stable")
    sorted_keys = point_keys[order]

    offsets = np.array([(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1)], dtype=np.int64)
    query_cells = (mid_cells[:, None, :] + offsets[None, :, :]).reshape(-1, 2)
    query_edges = np.repeat(np.arange(len(e0)), len(offsets))
    query_keys = _cell_keys(query_cells)
    starts = np.searchsorted(sorted_keys, query_keys, side="left")
    ends = np.searchsorted(sorted_keys, query_keys, side="right")
    counts = ends - starts
    total = int(counts.sum())
    if total == 0:
        return empty

    edge_idx = np.repeat(query_edges, counts)
    first = np.repeat(starts - np.cumsum(counts) + counts, counts)
    point_idx = order[first + np.arange(total)]

    lo = np.minimum(e0, e1)[edge_idx] - inflate
    hi = np.maximum(e0, e1)[edge_idx] + inflate
    p = points[point_idx]
    inside = np.all((p >= lo) & (p <= hi), axis=1)
    point_idx, edge_idx = point_idx[inside], edge_idx[inside]

    keys = np.unique(point_idx * np.int64(len(e0)) + edge_idx)
    return keys // len(e0), keys % len(e0)


@dataclass
class ContactPairs:
    """Active point-edge and compensating point-point pairs (all with d < dhat).

    Attributes:
        pe_particle, pe_edge: particle index and surface edge index per pair.
        pe_distance, pe_region: point-edge distance and EdgeRegion value.
        pp_particle, pp_node: particle index and FEM node id per pair.
        pp_distance: point-point distance.
        pp_sign: -(eta_k - 1), the compensation multiplicity.
    """
    pe_particle: np.ndarray
    pe_edge: np.ndarray
    pe_distance: np.ndarray
    pe_region: np.ndarray
    pp_particle: np.ndarray
    pp_node: np.ndarray
    pp_distance: np.ndarray
    pp_sign: np.ndarray

    @property
    def n_pairs(self) -> int:
        return len(self.pe_particle) + len(self.pp_particle)

    def min_distance(self) -> float:
        if len(self.pe_distance) == 0:
            return float("inf")
        return float(self.pe_distance.min())


def collect_contact_pairs(
    points: np.ndarray,
    x_fem: np.ndarray,
    surface: ContactSurface,
    dhat: float,
    cell_size: float,
) -> ContactPairs:
    """Exact active pairs among the broad-phase candidates.

    Raises:
        NonPositiveDistance: if any candidate pair is at zero distance.
    """
    e0 = x_fem[surface.edges[:, 0]] if len(surface) else np.zeros((0, 2))
    e1 = x_fem[surface.edges[:, 1]] if len(surface) else np.zeros((0, 2))
    cand_p, cand_e = broad_phase(points, e0, e1, dhat, cell_size)
    if len(cand_p):
        dist, region = point_edge_distance_batch(points[cand_p], e0[cand_e], e1[cand_e])
    else:
        dist, region = np.zeros(0), np.zeros(0, dtype=np.int8)
    if np.any(dist <= 0.0):
        raise NonPositiveDistance(f"particle {int(cand_p[np.argmin(dist)])} touches a boundary edge")
    keep = dist < dhat
    pe_particle, pe_edge = cand_p[keep], cand_e[keep]

    # point-point candidates are the endpoints of point-edge candidates
    if len(cand_p):
        ends = surface.edges[cand_e]
        pp_p = np.concatenate([cand_p, cand_p])
        pp_k = np.concatenate([ends[:, 0], ends[:, 1]])
        n_fem = len(x_fem)
        keys = np.unique(pp_p * np.int64(n_fem) + pp_k)
        pp_p, pp_k = keys // n_fem, keys % n_fem
        pp_d = np.linalg.norm(points[pp_p] - x_fem[pp_k], axis=1)
        sign = -(surface.eta[pp_k] - 1)
        keep_pp = (pp_d < dhat) & (sign != 0)
        pp_p, pp_k, pp_d, sign = pp_p[keep_pp], pp_k[keep_pp], pp_d[keep_pp], sign[keep_pp]
    else:
        pp_p = pp_k = sign = np.zeros(0, dtype=np.int64)
        pp_d = np.zeros(0)

    return ContactPairs(
        pe_particle=pe_particle,
        pe_edge=pe_edge,
        pe_distance=dist[keep],
        pe_region=region[keep],
        pp_particle=pp_p,
        pp_node=pp_k,
        pp_distance=pp_d,
        pp_sign=sign.astype(float),
    )


def chain_to_joint(
    weights: np.ndarray,
    grid_nodes: np.ndarray,
    fem_nodes: np.ndarray,
    prim_grad: np.ndarray,
    prim_hess: np.ndarray | None,
) -> StencilGroup:
    """Map derivatives over z = [x_q, fem endpoints] onto the joint node numbering.

    Args:
        weights: (n, 9) stencil weights of each pair's particle.
        grid_nodes: (n, 9) joint node ids of those stencil nodes.
        fem_nodes: (n, m) joint node ids of the FEM primitive nodes.
        prim_grad: (n, 2 + 2m) gradient over z.
        prim_hess: (n, 2 + 2m, 2 + 2m) Hessian over z, or None.
    """
    n, m = fem_nodes.shape
    width = 2 * (9 + m)
    jac = np.zeros((n, 2 + 2 * m, width))
    for a in range(9):
        jac[:, 0, 2 * a] = weights[:, a]
        jac[:, 1, 2 * a + 1] = weights[:, a]
    for b in range(m):
        jac[:, 2 + 2 * b, 18 + 2 * b] = 1.0
        jac[:, 3 + 2 * b, 19 + 2 * b] = 1.0
    nodes = np.concatenate([grid_nodes, fem_nodes], axis=1)
    gradients = np.einsum("nzi,nz->ni", jac, prim_grad)
    hessians = None
    if prim_hess is not None:
        hessians = np.einsum("nzi,nzy,nyj->nij", jac, prim_hess, jac)
    return StencilGroup(nodes=nodes, gradients=gradients, hessians=hessians)


@dataclass
class ContactContext:
    """Everything the contact terms need besides the current positions.

    Attributes:
        surface: active FEM boundary.
        omega: (n_particles,) contact weights.
        stencil_weights: (n_particles, 9) grid weights of each particle.
        stencil_nodes: (n_particles, 9) joint node ids of each particle's stencil.
        n_fem: number of FEM nodes (joint ids below this are FEM nodes).
        dhat, kappa: barrier constants.
        cell_size: broad-phase cell size lower bound.
    """
    surface: ContactSurface
    omega: np.ndarray
    stencil_weights: np.ndarray
    stencil_nodes: np.ndarray
    n_fem: int
    dhat: float
    kappa: float
    cell_size: float

    def particle_positions(self, x_joint: np.ndarray) -> np.ndarray:
        return np.einsum("na,nad->nd", self.stencil_weights, x_joint[self.stencil_nodes])

    def pairs(self, x_joint: np.ndarray) -> ContactPairs:
        return collect_contact_pairs(
            self.particle_positions(x_joint), x_joint[: self.n_fem], self.surface, self.dhat, self.cell_size
        )


def contact_energy(ctx: ContactContext, x_joint: np.ndarray, pairs: ContactPairs | None = None) -> float:
    """B = sum_q omega_q [sum_e b(d_qe) - sum_k (eta_k - 1) b(d_qk)] over active pairs."""
    if pairs is None:
        pairs = ctx.pairs(x_joint)
    return pair_energy(pairs, ctx.omega, ctx.dhat, ctx.kappa)


def pair_energy(pairs: ContactPairs, omega: np.ndarray, dhat: float, kappa: float) -> float:
    pe = omega[pairs.pe_particle] * barrier(pairs.pe_distance, dhat, kappa)
    pp = omega[pairs.pp_particle] * pairs.pp_sign * barrier(pairs.pp_distance, dhat, kappa)
    return float(pe.sum() + pp.sum())


def _distance_chain(s, ds, dds, b1, b2):
    """Turn squared-distance derivatives into barrier derivatives."""
    d = np.sqrt(s)
    bs = b1 / (2.0 * d)
    bss = b2 / (4.0 * s) - b1 / (4.0 * s * d)
    grad = bs[:, None] * ds
    hess = bss[:, None, None] * np.einsum("ni,nj->nij", ds, ds) + bs[:, None, None] * dds
    return grad, hess


def contact_stencils(
    ctx: ContactContext,
    x_joint: np.ndarray,
    pairs: ContactPairs | None = None,
    order: int = 2,
    project: bool = True,
) -> list[StencilGroup]:
    """Barrier gradient and Hessian blocks over the joint nodes.

    Hessians are PSD-projected in the primitive space before chaining when
    `project` is set; the chained blocks are then PSD as well.
    """
    if pairs is None:
        pairs = ctx.pairs(x_joint)
    points = ctx.particle_positions(x_joint)
    x_fem = x_joint[: ctx.n_fem]
    groups = []

    if len(pairs.pe_particle):
        q = pairs.pe_particle
        edges = ctx.surface.edges[pairs.pe_edge]
        s, ds, dds, _ = point_edge_distance_sq_derivatives(points[q], x_fem[edges[:, 0]], x_fem[edges[:, 1]])
        d = np.sqrt(s)
        scale = ctx.omega[q]
        grad, hess = _distance_chain(
            s, ds, dds,
            scale * barrier_d1(d, ctx.dhat, ctx.kappa),
            scale * barrier_d2(d, ctx.dhat, ctx.kappa),
        )
        groups.append(_finish(ctx, q, edges, grad, hess, order, project))

    if len(pairs.pp_particle):
        q = pairs.pp_particle
        nodes = pairs.pp_node[:, None]
        s, ds, dds = point_point_distance_sq_derivatives(points[q], x_fem[pairs.pp_node])
        d = np.sqrt(s)
        scale = ctx.omega[q] * pairs.pp_sign
        grad, hess = _distance_chain(
            s, ds, dds,
            scale * barrier_d1(d, ctx.dhat, ctx.kappa),
            scale * barrier_d2(d, ctx.dhat, ctx.kappa),
        )
        groups.append(_finish(ctx, q, nodes, grad, hess, order, project))
    return groups


def _finish(ctx, q, fem_nodes, grad, hess, order, project) -> StencilGroup:
    if order < 2:
        hess = None
    elif project:
        hess = project_stencil_psd(hess)
    return chain_to_joint(ctx.stencil_weights[q], ctx.stencil_nodes[q], fem_nodes, grad, hess)


def normal_force_magnitude(distance, omega, multiplicity, dhat: float, kappa: float, scale: float = 1.0):
    """lambda = scale * omega * |multiplicity| * (-b'(d)), the lagged normal force magnitude."""
    return scale * omega * np.abs(multiplicity) * -barrier_d1(distance, dhat, kappa)


def barrier_forces_on_nodes(ctx: ContactContext, x_joint: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """Sum of -dB/dx over the given FEM nodes, shape (2,)."""
    total = np.zeros(2)
    mask = np.zeros(len(x_joint), dtype=bool)
    mask[nodes] = True
    for group in contact_stencils(ctx, x_joint, order=1):
        local = group.gradients.reshape(len(group), -1, 2)
        selected = mask[group.nodes]
        total -= local[selected].sum(axis=0)
    return total


def region_is_endpoint(region: np.ndarray, slot: int) -> np.ndarray:
    code = EdgeRegion.ENDPOINT0.value if slot == 0 else EdgeRegion.ENDPOINT1.value
    return region == code
