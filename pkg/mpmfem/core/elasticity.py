"""Constitutive models and the chain rule from deformation gradients to nodes.

Matrices are vectorized row-major: vec(F)[2*i + j] = F[i, j]. Every function
is batched over a leading quadrature-point axis.
"""

from dataclasses import dataclass

import numpy as np

from mpmfem.core.errors import NonPositiveJ
from mpmfem.core.models import ElasticModel

_HESS_DET = np.zeros((4, 4))
_HESS_DET[0, 3] = _HESS_DET[3, 0] = 1.0
_HESS_DET[1, 2] = _HESS_DET[2, 1] = -1.0

_VEC_I = np.array([1.0, 0.0, 0.0, 1.0])
_TRANSPOSE = np.zeros((4, 4))
for _i in range(2):
    for _j in range(2):
        _TRANSPOSE[2 * _i + _j, 2 * _j + _i] = 1.0


def _determinant(F: np.ndarray) -> np.ndarray:
    return F[:, 0, 0] * F[:, 1, 1] - F[:, 0, 1] * F[:, 1, 0]


def _as_stack(F: np.ndarray) -> np.ndarray:
    return np.asarray(F, dtype=float).reshape(-1, 2, 2)


def neo_hookean_energy_density(F: np.ndarray, mu, lam) -> np.ndarray:
    """psi = mu/2 (tr(F^T F) - 2) - mu ln J + lam/2 ln^2 J."""
    F = _as_stack(F)
    J = _determinant(F)
    if np.any(J <= 0.0):
        raise NonPositiveJ(f"det(F) = {J.min():.3e}")
    log_j = np.log(J)
    return 0.5 * mu * (np.einsum("nij,nij->n", F, F) - 2.0) - mu * log_j + 0.5 * lam * log_j**2


def neo_hookean_first_piola(F: np.ndarray, mu, lam) -> np.ndarray:
    """First Piola-Kirchhoff stress P = d psi / dF, shape (n, 2, 2)."""
    F = _as_stack(F)
    J = _determinant(F)
    if np.any(J <= 0.0):
        raise NonPositiveJ(f"det(F) = {J.min():.3e}")
    mu = np.broadcast_to(mu, J.shape)
    lam = np.broadcast_to(lam, J.shape)
    cof = np.stack([F[:, 1, 1], -F[:, 1, 0], -F[:, 0, 1], F[:, 0, 0]], axis=1).reshape(-1, 2, 2)
    df = (lam * np.log(J) - mu) / J
    return mu[:, None, None] * F + df[:, None, None] * cof


def neo_hookean_density_hessian(F: np.ndarray, mu, lam) -> np.ndarray:
    """d^2 psi / dF^2 as (n, 4, 4) matrices over vec(F)."""
    F = _as_stack(F)
    J = _determinant(F)
    if np.any(J <= 0.0):
        raise NonPositiveJ(f"det(F) = {J.min():.3e}")
    mu = np.broadcast_to(mu, J.shape)
    lam = np.broadcast_to(lam, J.shape)
    log_j = np.log(J)
    grad_j = np.stack([F[:, 1, 1], -F[:, 1, 0], -F[:, 0, 1], F[:, 0, 0]], axis=1)
    df = (lam * log_j - mu) / J
    ddf = (mu + lam - lam * log_j) / J**2
    return (
        mu[:, None, None] * np.eye(4)
        + ddf[:, None, None] * np.einsum("ni,nj->nij", grad_j, grad_j)
        + df[:, None, None] * _HESS_DET
    )


def _small_strain(F: np.ndarray) -> np.ndarray:
    return 0.5 * (F + np.transpose(F, (0, 2, 1))) - np.eye(2)


def linear_elastic_energy_density(F: np.ndarray, mu, lam) -> np.ndarray:
    """psi = mu eps:eps + lam/2 tr(eps)^2 with eps = (F + F^T)/2 - I."""
    eps = _small_strain(_as_stack(F))
    trace = eps[:, 0, 0] + eps[:, 1, 1]
    return mu * np.einsum("nij,nij->n", eps, eps) + 0.5 * lam * trace**2


def linear_elastic_first_piola(F: np.ndarray, mu, lam) -> np.ndarray:
    eps = _small_strain(_as_stack(F))
    trace = eps[:, 0, 0] + eps[:, 1, 1]
    mu = np.broadcast_to(mu, trace.shape)
    lam = np.broadcast_to(lam, trace.shape)
    return 2.0 * mu[:, None, None] * eps + (lam * trace)[:, None, None] * np.eye(2)


def linear_elastic_density_hessian(F: np.ndarray, mu, lam) -> np.ndarray:
    """Constant Hessian mu (I + T) + lam vec(I) vec(I)^T, broadcast to (n, 4, 4)."""
    n = _as_stack(F).shape[0]
    mu = np.broadcast_to(mu, (n,))
    lam = np.broadcast_to(lam, (n,))
    return (
        mu[:, None, None] * (np.eye(4) + _TRANSPOSE)
        + lam[:, None, None] * np.outer(_VEC_I, _VEC_I)
    )


_MODELS = {
    ElasticModel.NEO_HOOKEAN: (
        neo_hookean_energy_density,
        neo_hookean_first_piola,
        neo_hookean_density_hessian,
    ),
    ElasticModel.LINEAR_ELASTIC: (
        linear_elastic_energy_density,
        linear_elastic_first_piola,
        linear_elastic_density_hessian,
    ),
}
MODEL_CODES = {ElasticModel.NEO_HOOKEAN: 0, ElasticModel.LINEAR_ELASTIC: 1}
_CODE_MODELS = {code: model for model, code in MODEL_CODES.items()}


def energy_density(F: np.ndarray, mu: np.ndarray, lam: np.ndarray, model_code: np.ndarray) -> np.ndarray:
    F = _as_stack(F)
    psi = np.zeros(len(F))
    for code, model in _CODE_MODELS.items():
        mask = model_code == code
        if np.any(mask):
            psi[mask] = _MODELS[model][0](F[mask], mu[mask], lam[mask])
    return psi


def first_piola(F: np.ndarray, mu: np.ndarray, lam: np.ndarray, model_code: np.ndarray) -> np.ndarray:
    """First Piola stress for a mixed stack of models."""
    F = _as_stack(F)
    P = np.zeros_like(F)
    for code, model in _CODE_MODELS.items():
        mask = model_code == code
        if np.any(mask):
            P[mask] = _MODELS[model][1](F[mask], mu[mask], lam[mask])
    return P


def deformation_jacobian(D: np.ndarray) -> np.ndarray:
    """dvec(F)/dx for F = sum_a x_a D_a^T; D is (n, k, 2), result is (n, 4, 2k)."""
    n, k, _ = D.shape
    jac = np.zeros((n, 4, 2 * k))
    for i in range(2):
        for j in range(2):
            jac[:, 2 * i + j, i::2] = D[:, :, j]
    return jac


@dataclass
class ElasticStencils:
    """Energy, local gradients and unprojected local Hessians of a quadrature set.

    Attributes:
        energy: Total energy sum_q V_q psi(F_q) in J.
        nodes: (n, k) global node index of each local node.
        gradients: (n, 2k) local gradient blocks.
        hessians: (n, 2k, 2k) symmetric local Hessian blocks, or None.
    """
    energy: float
    nodes: np.ndarray
    gradients: np.ndarray | None
    hessians: np.ndarray | None


def elastic_stencils(
    F: np.ndarray,
    volume: np.ndarray,
    mu: np.ndarray,
    lam: np.ndarray,
    model_code: np.ndarray,
    D: np.ndarray,
    nodes: np.ndarray,
    order: int = 2,
) -> ElasticStencils:
    """Chain-rule per-quadrature-point energies to local node blocks.

    Args:
        order: 0 for energy only, 1 adds gradients, 2 adds Hessians.
    """
    F = _as_stack(F)
    n, k = nodes.shape
    psi = np.zeros(n)
    P = np.zeros((n, 2, 2))
    H = np.zeros((n, 4, 4))
    for code, model in _CODE_MODELS.items():
        mask = model_code == code
        if not np.any(mask):
            continue
        energy_fn, piola_fn, hessian_fn = _MODELS[model]
        psi[mask] = energy_fn(F[mask], mu[mask], lam[mask])
        if order >= 1:
            P[mask] = piola_fn(F[mask], mu[mask], lam[mask])
        if order >= 2:
            H[mask] = hessian_fn(F[mask], mu[mask], lam[mask])

    energy = float(np.dot(volume, psi))
    if order == 0:
        return ElasticStencils(energy, nodes, None, None)
    jac = deformation_jacobian(D)
    gradients = volume[:, None] * np.einsum("nfi,nf->ni", jac, P.reshape(n, 4))
    hessians = None
    if order >= 2:
        hessians = volume[:, None, None] * np.einsum("nfi,nfg,ngj->nij", jac, H, jac)
    return ElasticStencils(energy, nodes, gradients, hessians)
