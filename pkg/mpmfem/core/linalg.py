"""Stencil PSD projection, sparse assembly and the SPD direct solve."""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

try:
    from sksparse.cholmod import CholmodError, cholesky
    HAVE_CHOLMOD = True
except ImportError:
    HAVE_CHOLMOD = False

logger = logging.getLogger(__name__)


def project_stencil_psd(blocks: np.ndarray) -> np.ndarray:
    """Closest PSD matrix (Frobenius norm) to each symmetric block by eigenvalue clamping.

    Accepts a single (k, k) block or a stack (n, k, k).
    """
    blocks = np.asarray(blocks, dtype=float)
    single = blocks.ndim == 2
    stack = blocks[None] if single else blocks
    if len(stack) == 0:
        return stack.copy()
    sym = 0.5 * (stack + np.transpose(stack, (0, 2, 1)))
    eigvals, eigvecs = np.linalg.eigh(sym)
    if np.all(eigvals >= 0.0):
        projected = sym
    else:
        projected = np.einsum("nik,nk,njk->nij", eigvecs, np.maximum(eigvals, 0.0), eigvecs)
    return projected[0] if single else projected


def stencil_dofs(nodes: np.ndarray) -> np.ndarray:
    """Expand (n, k) node indices to (n, 2k) interleaved DOF indices."""
    nodes = np.asarray(nodes, dtype=np.int64)
    return (2 * nodes[:, :, None] + np.arange(2)).reshape(len(nodes), -1)


@dataclass
class StencilGroup:
    """Local gradient and Hessian blocks sharing one stencil width.

    Attributes:
        nodes: (n, k) node indices in the joint numbering.
        gradients: (n, 2k) local gradients.
        hessians: (n, 2k, 2k) local Hessians, or None when not requested.
    """
    nodes: np.ndarray
    gradients: np.ndarray
    hessians: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def dofs(self) -> np.ndarray:
        return stencil_dofs(self.nodes)


class SparseAssembler:
    """Accumulates dense stencil blocks into COO triplets over a fixed DOF count.

    Entries are summed in insertion order when converted, so assembly is
    deterministic for a fixed sequence of `add` calls.
    """

    def __init__(self, n_dofs: int):
        self.n_dofs = n_dofs
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []

    def add_blocks(self, dofs: np.ndarray, blocks: np.ndarray, scale: float = 1.0) -> None:
        """Scatter (n, k, k) blocks onto (n, k) DOF index rows."""
        if len(dofs) == 0:
            return
        k = dofs.shape[1]
        self._rows.append(np.repeat(dofs, k, axis=1).reshape(-1))
        self._cols.append(np.tile(dofs, (1, k)).reshape(-1))
        self._vals.append(scale * blocks.reshape(-1))

    def add_diagonal(self, values: np.ndarray) -> None:
        idx = np.arange(self.n_dofs)
        self._rows.append(idx)
        self._cols.append(idx)
        self._vals.append(np.asarray(values, dtype=float))

    def to_csc(self) -> sp.csc_matrix:
        if not self._vals:
            return sp.csc_matrix((self.n_dofs, self.n_dofs))
        matrix = sp.coo_matrix(
            (np.concatenate(self._vals), (np.concatenate(self._rows), np.concatenate(self._cols))),
            shape=(self.n_dofs, self.n_dofs),
        )
        return matrix.tocsc()


def scatter_gradient(n_dofs: int, dofs: np.ndarray, local: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """Sum (n, k) local gradient rows into a dense vector of length n_dofs."""
    out = np.zeros(n_dofs)
    if len(dofs):
        np.add.at(out, dofs.reshape(-1), scale * local.reshape(-1))
    return out


def solve_spd(matrix: sp.spmatrix, rhs: np.ndarray, method: str = "auto") -> np.ndarray:
    """Solve matrix @ x = rhs for a sparse symmetric positive definite matrix.

    Args:
        method: "cholmod" (requires scikit-sparse), "splu", or "auto" which
            prefers CHOLMOD when it is installed.
    """
    matrix = sp.csc_matrix(matrix)
    if matrix.shape[0] == 0:
        return np.zeros(0)
    if method == "cholmod" and not HAVE_CHOLMOD:
        raise RuntimeError("scikit-sparse is not installed; set MPMFEM_LINEAR_SOLVER=splu")
    if method in ("auto", "cholmod") and HAVE_CHOLMOD:
        try:
            return cholesky(matrix)(rhs)
        except CholmodError as e:
            logger.warning(f"CHOLMOD factorization failed ({e}); falling back to splu")
    return spla.splu(matrix, permc_spec="MMD_AT_PLUS_A").solve(rhs)
