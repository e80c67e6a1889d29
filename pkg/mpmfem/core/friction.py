"""Lagged Coulomb friction: mollifier, frozen friction set and the dissipative potential D."""

import logging
from dataclasses import dataclass

import numpy as np

from mpmfem.core.contact import (
    ContactContext,
    ContactPairs,
    chain_to_joint,
    normal_force_magnitude,
    region_is_endpoint,
)
from mpmfem.core.geometry import EdgeRegion, closest_point_parameter
from mpmfem.core.linalg import StencilGroup

logger = logging.getLogger(__name__)


def f1(y, eps_hat: float):
    """Mollified sliding indicator: -y^2/eps^2 + 2y/eps below eps_hat, 1 above."""
    y = np.asarray(y, dtype=float)
    return np.where(y < eps_hat, -(y**2) / eps_hat**2 + 2.0 * y / eps_hat, 1.0)


def f1_derivative(y, eps_hat: float):
    y = np.asarray(y, dtype=float)
    return np.where(y < eps_hat, 2.0 / eps_hat - 2.0 * y / eps_hat**2, 0.0)


def f0(y, eps_hat: float):
    """Antiderivative of f1 with f0(0) = 0."""
    y = np.asarray(y, dtype=float)
    return np.where(y < eps_hat, -(y**3) / (3.0 * eps_hat**2) + y**2 / eps_hat, y - eps_hat / 3.0)


def _rot90(n: np.ndarray) -> np.ndarray:
    return np.stack([-n[:, 1], n[:, 0]], axis=1)


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _lookup_counts(keys: np.ndarray, counts: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """counts[i] where keys[i] == query, else 0; keys sorted."""
    if len(keys) == 0:
        return np.zeros(len(queries), dtype=np.int64)
    pos = np.minimum(np.searchsorted(keys, queries), len(keys) - 1)
    return np.where(keys[pos] == queries, counts[pos], 0)


@dataclass(frozen=True)
class FrictionSet:
    """Friction data frozen for one inner minimization.

    Point-edge data slide against the lagged closest point of an edge, held by
    its barycentric coordinate; point-node data slide against a boundary node.

    Attributes:
        pe_particle, pe_nodes, pe_bary: particle, (n, 2) FEM node ids, lagged coordinate.
        pe_lambda, pe_tangent, pe_mu: normal force (N), unit tangent, coefficient.
        pp_particle, pp_node, pp_lambda, pp_tangent, pp_mu: same for point-node data.
        particle_start: (n_particles, 2) particle positions at step start.
        fem_start: (n_fem, 2) FEM node positions at step start.
    """
    pe_particle: np.ndarray
    pe_nodes: np.ndarray
    pe_bary: np.ndarray
    pe_lambda: np.ndarray
    pe_tangent: np.ndarray
    pe_mu: np.ndarray
    pp_particle: np.ndarray
    pp_node: np.ndarray
    pp_lambda: np.ndarray
    pp_tangent: np.ndarray
    pp_mu: np.ndarray
    particle_start: np.ndarray
    fem_start: np.ndarray

    def __len__(self) -> int:
        return len(self.pe_particle) + len(self.pp_particle)

    @classmethod
    def empty(cls, particle_start: np.ndarray, fem_start: np.ndarray) -> "FrictionSet":
        zi = np.zeros(0, dtype=np.int64)
        zf = np.zeros(0)
        z2 = np.zeros((0, 2))
        return cls(
            pe_particle=zi, pe_nodes=np.zeros((0, 2), dtype=np.int64), pe_bary=zf,
            pe_lambda=zf, pe_tangent=z2, pe_mu=zf,
            pp_particle=zi, pp_node=zi, pp_lambda=zf, pp_tangent=z2, pp_mu=zf,
            particle_start=particle_start, fem_start=fem_start,
        )


def build_friction_set(
    ctx: ContactContext,
    x_joint: np.ndarray,
    pairs: ContactPairs,
    particle_object: np.ndarray,
    fem_node_object: np.ndarray,
    mu_table: np.ndarray,
    particle_start: np.ndarray,
    fem_start: np.ndarray,
) -> FrictionSet:
    """Freeze normal forces, tangents and closest points at the lagged state `x_joint`.

    Interior point-edge pairs each yield one datum. A particle near a boundary
    node keeps a point-node datum only when the endpoint-region edge pairs at
    that node outnumber the eta_k - 1 compensation, with the force scaled by
    the surplus; pairs whose coefficient is zero are dropped.

    Args:
        mu_table: (n_fem_objects, n_mpm_objects) friction coefficients.
    """
    points = ctx.particle_positions(x_joint)
    x_fem = x_joint[: ctx.n_fem]
    edges = ctx.surface.edges

    interior = pairs.pe_region == EdgeRegion.INTERIOR.value
    q = pairs.pe_particle[interior]
    e = pairs.pe_edge[interior]
    nodes = edges[e]
    mu_pe = mu_table[ctx.surface.edge_object[e], particle_object[q]]
    lam_pe = normal_force_magnitude(pairs.pe_distance[interior], ctx.omega[q], 1.0, ctx.dhat, ctx.kappa)
    e0, e1 = x_fem[nodes[:, 0]], x_fem[nodes[:, 1]]
    bary = closest_point_parameter(points[q], e0, e1)
    closest = e0 + bary[:, None] * (e1 - e0)
    tangent_pe = _rot90(_unit(points[q] - closest))

    n_fem = ctx.n_fem
    endpoint_nodes = []
    endpoint_particles = []
    for slot in (0, 1):
        mask = region_is_endpoint(pairs.pe_region, slot)
        endpoint_particles.append(pairs.pe_particle[mask])
        endpoint_nodes.append(edges[pairs.pe_edge[mask], slot])
    ep_keys, ep_counts = np.unique(
        np.concatenate(endpoint_particles) * np.int64(n_fem) + np.concatenate(endpoint_nodes),
        return_counts=True,
    )
    pp_keys = pairs.pp_particle * np.int64(n_fem) + pairs.pp_node
    surplus = _lookup_counts(ep_keys, ep_counts, pp_keys) + pairs.pp_sign
    keep = surplus > 0
    qk = pairs.pp_particle[keep]
    kk = pairs.pp_node[keep]
    mu_pp = mu_table[fem_node_object[kk], particle_object[qk]]
    lam_pp = normal_force_magnitude(pairs.pp_distance[keep], ctx.omega[qk], surplus[keep], ctx.dhat, ctx.kappa)
    tangent_pp = _rot90(_unit(points[qk] - x_fem[kk]))

    pe_on = mu_pe > 0.0
    pp_on = mu_pp > 0.0
    friction = FrictionSet(
        pe_particle=q[pe_on],
        pe_nodes=nodes[pe_on],
        pe_bary=bary[pe_on],
        pe_lambda=lam_pe[pe_on],
        pe_tangent=tangent_pe[pe_on],
        pe_mu=mu_pe[pe_on],
        pp_particle=qk[pp_on],
        pp_node=kk[pp_on],
        pp_lambda=lam_pp[pp_on],
        pp_tangent=tangent_pp[pp_on],
        pp_mu=mu_pp[pp_on],
        particle_start=particle_start,
        fem_start=fem_start,
    )
    logger.debug(f"Friction set: {len(friction.pe_particle)} edge data, {len(friction.pp_particle)} node data")
    return friction


def _tangential_slip(
    friction: FrictionSet, points: np.ndarray, x_fem: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Signed slips T.u and their primitive-space gradients for edge and node data."""
    q = friction.pe_particle
    t = friction.pe_bary
    coeff = np.stack([1.0 - t, t], axis=1)
    disp_p = points[q] - friction.particle_start[q]
    disp_e = x_fem[friction.pe_nodes] - friction.fem_start[friction.pe_nodes]
    u = disp_p - np.einsum("nb,nbd->nd", coeff, disp_e)
    slip_pe = np.einsum("nd,nd->n", friction.pe_tangent, u)
    T = friction.pe_tangent
    grad_pe = np.concatenate([T, -coeff[:, :1] * T, -coeff[:, 1:] * T], axis=1)

    qk = friction.pp_particle
    k = friction.pp_node
    u_pp = (points[qk] - friction.particle_start[qk]) - (x_fem[k] - friction.fem_start[k])
    slip_pp = np.einsum("nd,nd->n", friction.pp_tangent, u_pp)
    grad_pp = np.concatenate([friction.pp_tangent, -friction.pp_tangent], axis=1)
    return slip_pe, grad_pe, slip_pp, grad_pp


def friction_energy(ctx: ContactContext, x_joint: np.ndarray, friction: FrictionSet, eps_hat: float) -> float:
    """D = sum_k mu_k lambda_k f0(|T_k . u_k|) with frozen data."""
    if len(friction) == 0:
        return 0.0
    points = ctx.particle_positions(x_joint)
    slip_pe, _, slip_pp, _ = _tangential_slip(friction, points, x_joint[: ctx.n_fem])
    return float(
        np.dot(friction.pe_mu * friction.pe_lambda, f0(np.abs(slip_pe), eps_hat))
        + np.dot(friction.pp_mu * friction.pp_lambda, f0(np.abs(slip_pp), eps_hat))
    )


def friction_stencils(
    ctx: ContactContext, x_joint: np.ndarray, friction: FrictionSet, eps_hat: float, order: int = 2
) -> list[StencilGroup]:
    """Gradient and Hessian blocks of D over the joint nodes.

    In 2D the slip is a scalar, so the Hessian mu lambda f1'(|s|) g g^T is
    already positive semidefinite.
    """
    if len(friction) == 0:
        return []
    points = ctx.particle_positions(x_joint)
    slip_pe, grad_pe, slip_pp, grad_pp = _tangential_slip(friction, points, x_joint[: ctx.n_fem])
    groups = []
    for q, fem_nodes, slip, g, scale in (
        (friction.pe_particle, friction.pe_nodes, slip_pe, grad_pe, friction.pe_mu * friction.pe_lambda),
        (friction.pp_particle, friction.pp_node[:, None], slip_pp, grad_pp, friction.pp_mu * friction.pp_lambda),
    ):
        if len(q) == 0:
            continue
        y = np.abs(slip)
        grad = (scale * f1(y, eps_hat) * np.sign(slip))[:, None] * g
        hess = None
        if order >= 2:
            hess = (scale * f1_derivative(y, eps_hat))[:, None, None] * np.einsum("ni,nj->nij", g, g)
        groups.append(chain_to_joint(ctx.stencil_weights[q], ctx.stencil_nodes[q], fem_nodes, grad, hess))
    return groups
