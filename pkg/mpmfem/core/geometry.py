"""Exact 2D distance queries, continuous collision detection and step bounds.

All functions are pure. Batched variants take arrays with a leading pair axis
and are what the contact and line-search code call; the scalar functions are
thin wrappers for single queries.
"""

import logging
from enum import Enum

import numpy as np

from mpmfem.core.errors import DegenerateEdge, InvalidStart, NonManifold

logger = logging.getLogger(__name__)

CCD_TOLERANCE = 1e-6
CCD_ADVANCE = 0.9
CCD_MAX_ITERS = 10_000


class EdgeRegion(Enum):
    """Which part of a segment holds the closest point to a query point."""
    ENDPOINT0 = 0
    ENDPOINT1 = 1
    INTERIOR = 2


# Selection matrices mapping the stacked vector z = [p, e0, e1] to a = e1 - e0 and b = p - e0.
_EYE = np.eye(2)
_ZERO = np.zeros((2, 2))
_PA = np.hstack([_ZERO, -_EYE, _EYE])
_PB = np.hstack([_EYE, -_EYE, _ZERO])
_K = np.array([[0.0, 1.0], [-1.0, 0.0]])
_HESS_CROSS = _PA.T @ _K @ _PB + _PB.T @ _K.T @ _PA
_HESS_LEN = 2.0 * _PA.T @ _PA


def point_point_distance(p: np.ndarray, q: np.ndarray) -> float:
    """Euclidean distance between two points."""
    return float(np.linalg.norm(np.asarray(p, dtype=float) - np.asarray(q, dtype=float)))


def edge_regions(p: np.ndarray, e0: np.ndarray, e1: np.ndarray) -> np.ndarray:
    """Region code (EdgeRegion value) of the closest point for each query row."""
    a = e1 - e0
    length_sq = np.einsum("ij,ij->i", a, a)
    if np.any(length_sq <= 0.0):
        raise DegenerateEdge("edge endpoints coincide")
    t = np.einsum("ij,ij->i", p - e0, a) / length_sq
    region = np.full(len(t), EdgeRegion.INTERIOR.value, dtype=np.int8)
    region[t <= 0.0] = EdgeRegion.ENDPOINT0.value
    region[t >= 1.0] = EdgeRegion.ENDPOINT1.value
    return region


def point_edge_distance_batch(
    p: np.ndarray, e0: np.ndarray, e1: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Point-segment distances and region codes for arrays of shape (n, 2)."""
    p, e0, e1 = (np.atleast_2d(np.asarray(v, dtype=float)) for v in (p, e0, e1))
    region = edge_regions(p, e0, e1)
    a = e1 - e0
    b = p - e0
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    dist = np.abs(cross) / np.linalg.norm(a, axis=1)
    end0 = region == EdgeRegion.ENDPOINT0.value
    end1 = region == EdgeRegion.ENDPOINT1.value
    dist[end0] = np.linalg.norm(p[end0] - e0[end0], axis=1)
    dist[end1] = np.linalg.norm(p[end1] - e1[end1], axis=1)
    return dist, region


def point_edge_distance(
    p: np.ndarray, e0: np.ndarray, e1: np.ndarray
) -> tuple[float, EdgeRegion]:
    """Distance from p to the closed segment [e0, e1] and the region of the minimizer."""
    dist, region = point_edge_distance_batch(p, e0, e1)
    return float(dist[0]), EdgeRegion(int(region[0]))


def closest_point_parameter(p: np.ndarray, e0: np.ndarray, e1: np.ndarray) -> np.ndarray:
    """Barycentric coordinate in [0, 1] of the closest point on each segment."""
    a = e1 - e0
    t = np.einsum("ij,ij->i", p - e0, a) / np.einsum("ij,ij->i", a, a)
    return np.clip(t, 0.0, 1.0)


def point_point_distance_sq_derivatives(
    p: np.ndarray, q: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Squared distance with gradient (n, 4) and Hessian (n, 4, 4) over [p, q]."""
    r = p - q
    s = np.einsum("ij,ij->i", r, r)
    grad = np.concatenate([2.0 * r, -2.0 * r], axis=1)
    block = 2.0 * np.block([[_EYE, -_EYE], [-_EYE, _EYE]])
    hess = np.broadcast_to(block, (len(s), 4, 4)).copy()
    return s, grad, hess


def point_edge_distance_sq_derivatives(
    p: np.ndarray, e0: np.ndarray, e1: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Squared point-segment distance with derivatives over z = [p, e0, e1].

    Returns (s, grad (n, 6), hess (n, 6, 6), region). Each row uses the
    point-line form when the closest point is interior and the point-point
    form against the nearer endpoint otherwise.
    """
    region = edge_regions(p, e0, e1)
    n = len(p)
    s = np.empty(n)
    grad = np.zeros((n, 6))
    hess = np.zeros((n, 6, 6))

    inner = region == EdgeRegion.INTERIOR.value
    if np.any(inner):
        a = e1[inner] - e0[inner]
        b = p[inner] - e0[inner]
        c = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        length_sq = np.einsum("ij,ij->i", a, a)
        gb = np.stack([-a[:, 1], a[:, 0]], axis=1)
        ga = np.stack([b[:, 1], -b[:, 0]], axis=1)
        dc = np.concatenate([gb, -gb - ga, ga], axis=1)
        dl = np.concatenate([np.zeros_like(a), -2.0 * a, 2.0 * a], axis=1)

        cc = c[:, None, None]
        ll = length_sq[:, None, None]
        dc_dc = np.einsum("ni,nj->nij", dc, dc)
        dc_dl = np.einsum("ni,nj->nij", dc, dl)
        dl_dl = np.einsum("ni,nj->nij", dl, dl)

        s[inner] = c**2 / length_sq
        grad[inner] = 2.0 * c[:, None] * dc / length_sq[:, None] - (c**2 / length_sq**2)[:, None] * dl
        hess[inner] = (
            (2.0 * dc_dc + 2.0 * cc * _HESS_CROSS) / ll
            - 2.0 * cc / ll**2 * (dc_dl + np.transpose(dc_dl, (0, 2, 1)))
            - cc**2 / ll**2 * _HESS_LEN
            + 2.0 * cc**2 / ll**3 * dl_dl
        )

    for code, slot in ((EdgeRegion.ENDPOINT0.value, 1), (EdgeRegion.ENDPOINT1.value, 2)):
        mask = region == code
        if not np.any(mask):
            continue
        end = e0[mask] if slot == 1 else e1[mask]
        ss, gg, hh = point_point_distance_sq_derivatives(p[mask], end)
        idx = np.r_[0:2, 2 * slot:2 * slot + 2]
        s[mask] = ss
        grad[np.ix_(mask, idx)] = gg
        sub = np.zeros((int(mask.sum()), 6, 6))
        sub[:, idx[:, None], idx[None, :]] = hh
        hess[mask] = sub

    return s, grad, hess, region


def point_edge_ccd_batch(
    p: np.ndarray,
    e0: np.ndarray,
    e1: np.ndarray,
    dp: np.ndarray,
    de0: np.ndarray,
    de1: np.ndarray,
    max_step: float,
) -> np.ndarray:
    """Additive conservative advancement for many point-edge trajectories.

    Each row returns the largest step in (0, max_step] along x + t*dx that keeps
    the point-segment distance strictly positive on [0, step]. A row advances by
    a fraction of distance / (bound on the distance rate) until the remaining
    gap is within CCD_TOLERANCE of the elapsed step.
    """
    p, e0, e1, dp, de0, de1 = (np.atleast_2d(np.asarray(v, dtype=float)) for v in (p, e0, e1, dp, de0, de1))
    n = len(p)
    dist, _ = point_edge_distance_batch(p, e0, e1)
    if np.any(dist <= 0.0):
        raise InvalidStart("point-edge pair starts in contact")

    mean = (dp + de0 + de1) / 3.0
    rate = np.linalg.norm(dp - mean, axis=1) + np.maximum(
        np.linalg.norm(de0 - mean, axis=1), np.linalg.norm(de1 - mean, axis=1)
    )

    toi = np.full(n, float(max_step))
    t = np.zeros(n)
    active = rate > 0.0
    for _ in range(CCD_MAX_ITERS):
        if not np.any(active):
            break
        idx = np.nonzero(active)[0]
        ti = t[idx][:, None]
        d, _ = point_edge_distance_batch(p[idx] + ti * dp[idx], e0[idx] + ti * de0[idx], e1[idx] + ti * de1[idx])
        horizon = d / rate[idx]

        free = t[idx] + horizon >= max_step
        toi[idx[free]] = max_step

        converged = ~free & (horizon <= CCD_TOLERANCE * t[idx])
        toi[idx[converged]] = t[idx[converged]]

        advancing = ~free & ~converged
        t[idx[advancing]] += CCD_ADVANCE * horizon[advancing]
        active[idx[free | converged]] = False
    else:
        toi[active] = t[active]
        logger.debug(f"CCD hit iteration cap on {int(active.sum())} pairs")
    return toi


def point_edge_ccd(
    p: np.ndarray,
    e0: np.ndarray,
    e1: np.ndarray,
    dp: np.ndarray,
    de0: np.ndarray,
    de1: np.ndarray,
    max_step: float = 1.0,
) -> float:
    """Largest contact-free step for one point-edge trajectory (see point_edge_ccd_batch)."""
    return float(point_edge_ccd_batch(p, e0, e1, dp, de0, de1, max_step)[0])


def det_degeneracy_step_batch(F: np.ndarray, dF: np.ndarray, max_step: float) -> np.ndarray:
    """Smallest positive root of det(F + t dF), capped at max_step, for (n, 2, 2) stacks."""
    F = np.asarray(F, dtype=float).reshape(-1, 2, 2)
    dF = np.asarray(dF, dtype=float).reshape(-1, 2, 2)
    c0 = F[:, 0, 0] * F[:, 1, 1] - F[:, 0, 1] * F[:, 1, 0]
    c1 = (
        F[:, 0, 0] * dF[:, 1, 1] + F[:, 1, 1] * dF[:, 0, 0]
        - F[:, 0, 1] * dF[:, 1, 0] - F[:, 1, 0] * dF[:, 0, 1]
    )
    c2 = dF[:, 0, 0] * dF[:, 1, 1] - dF[:, 0, 1] * dF[:, 1, 0]

    disc = c1**2 - 4.0 * c2 * c0
    real = disc >= 0.0
    sqrt_disc = np.sqrt(np.where(real, disc, 0.0))
    sign = np.where(c1 >= 0.0, 1.0, -1.0)
    q = -0.5 * (c1 + sign * sqrt_disc)
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = np.where(c2 != 0.0, q / c2, np.inf)
        r2 = np.where(q != 0.0, c0 / q, np.inf)
    roots = np.stack([r1, r2], axis=1)
    roots = np.where(real[:, None] & np.isfinite(roots) & (roots > 0.0), roots, np.inf)
    return np.minimum(roots.min(axis=1), max_step)


def det_degeneracy_step(F: np.ndarray, dF: np.ndarray, max_step: float = 1.0) -> float:
    """min(max_step, smallest positive t with det(F + t dF) = 0)."""
    return float(det_degeneracy_step_batch(F, dF, max_step)[0])


def extract_boundary_edges(triangles: np.ndarray, n_nodes: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Boundary edges of a counterclockwise triangle mesh and per-node incidence counts.

    Edges keep the orientation they have in their single owning triangle, so the
    interior lies to the left of every boundary edge.

    Returns:
        (edges, eta): edges is (m, 2) node indices; eta[k] is the number of
        boundary edges incident to node k (0 for interior nodes).
    """
    tris = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    if n_nodes is None:
        n_nodes = int(tris.max()) + 1 if len(tris) else 0
    directed = tris[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
    undirected = np.sort(directed, axis=1)
    _, inverse, counts = np.unique(undirected, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    if np.any(counts > 2):
        raise NonManifold(f"{int(np.sum(counts > 2))} edges are shared by more than two triangles")
    edges = directed[counts[inverse] == 1]
    eta = np.bincount(edges.reshape(-1), minlength=n_nodes)
    return edges, eta
