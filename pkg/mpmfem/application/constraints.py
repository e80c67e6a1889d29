"""Kinematic constraints on the joint node set: Dirichlet scripts and level-set boundaries.

Each joint node is free (2 DOFs), slip (1 DOF along a tangent) or fixed
(0 DOFs). The Newton system acts on reduced coordinates q with
x = x0 + S q; whatever scripted motion remains is C (target - x) with
C = I - S S^T.
"""

import logging
from dataclasses import dataclass
from enum import IntEnum

import numpy as np
import scipy.sparse as sp

from mpmfem.core.fem import RigidMotion, evaluate_dirichlet_script
from mpmfem.core.models import RigidScript

logger = logging.getLogger(__name__)


class NodeKind(IntEnum):
    FREE = 0
    SLIP = 1
    FIXED = 2


_COLUMNS = np.array([2, 1, 0])


@dataclass
class NodeConstraints:
    """Per-node constraint kinds over the joint numbering for one step.

    Attributes:
        kind: (n,) NodeKind values.
        tangent: (n, 2) unit slip directions; ignored for other kinds.
        target: (n, 2) end-of-step positions of constrained nodes. Slip nodes
            only take the normal component from here.
    """
    kind: np.ndarray
    tangent: np.ndarray
    target: np.ndarray

    @classmethod
    def free(cls, positions: np.ndarray) -> "NodeConstraints":
        n = len(positions)
        return cls(
            kind=np.full(n, NodeKind.FREE, dtype=np.int64),
            tangent=np.zeros((n, 2)),
            target=np.array(positions, dtype=float),
        )

    @property
    def n_nodes(self) -> int:
        return len(self.kind)

    @property
    def n_reduced(self) -> int:
        return int(_COLUMNS[self.kind].sum())

    @property
    def is_constrained(self) -> np.ndarray:
        return self.kind != NodeKind.FREE

    def basis(self) -> sp.csc_matrix:
        """Orthonormal columns S of shape (2n, n_reduced)."""
        counts = _COLUMNS[self.kind]
        starts = np.cumsum(counts) - counts
        free = np.nonzero(self.kind == NodeKind.FREE)[0]
        slip = np.nonzero(self.kind == NodeKind.SLIP)[0]
        rows = np.concatenate([2 * free, 2 * free + 1, 2 * slip, 2 * slip + 1])
        cols = np.concatenate([starts[free], starts[free] + 1, starts[slip], starts[slip]])
        vals = np.concatenate([
            np.ones(2 * len(free)), self.tangent[slip, 0], self.tangent[slip, 1],
        ])
        return sp.csc_matrix((vals, (rows, cols)), shape=(2 * self.n_nodes, self.n_reduced))

    def constrained_part(self, v: np.ndarray) -> np.ndarray:
        """C v for nodal vectors v of shape (n, 2)."""
        out = np.where((self.kind == NodeKind.FIXED)[:, None], v, 0.0)
        slip = self.kind == NodeKind.SLIP
        if np.any(slip):
            t = self.tangent[slip]
            vs = v[slip]
            out[slip] = vs - np.einsum("nd,nd->n", vs, t)[:, None] * t
        return out

    def remaining(self, x: np.ndarray) -> np.ndarray:
        """Scripted motion still to be taken from x, shape (n, 2)."""
        return self.constrained_part(self.target - x)

    def snap(self, x: np.ndarray) -> np.ndarray:
        """Place constrained components exactly on their targets."""
        out = x + self.remaining(x)
        fixed = self.kind == NodeKind.FIXED
        out[fixed] = self.target[fixed]
        return out

    def owes_motion(self, x: np.ndarray, rtol: float = 1e-12) -> bool:
        """Whether scripted motion beyond round-off remains from x."""
        r = self.remaining(x)
        if r.size == 0:
            return False
        return float(np.abs(r).max()) > rtol * max(1.0, float(np.abs(x).max()))

    def project_free(self, v: np.ndarray) -> np.ndarray:
        """S S^T v: the part of v the solver may change."""
        return v - self.constrained_part(v)


@dataclass
class DirichletGroup:
    """FEM nodes moved rigidly by a script, relative to their material positions."""
    nodes: np.ndarray
    script: RigidScript

    def targets(self, rest: np.ndarray, t: float) -> np.ndarray:
        return evaluate_dirichlet_script(self.script, t).apply(rest[self.nodes])


def select_dirichlet_nodes(
    rest: np.ndarray,
    node_object: np.ndarray,
    object_index: int,
    region: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """Nodes of one FEM object, optionally restricted to a material-space box."""
    mask = node_object == object_index
    if region is not None:
        lo, hi = (np.asarray(c, dtype=float) for c in region)
        mask &= np.all((rest >= lo) & (rest <= hi), axis=1)
    return np.nonzero(mask)[0]


@dataclass
class LevelSetBoundary:
    """Analytic solid acting on grid nodes, moved rigidly by a script.

    Attributes:
        shape: any shape with signed_distance and normal in its own frame.
        kind: "no_slip" pins nodes to the solid; "slip" keeps only tangential motion.
        motion: rigid script of the solid.
    """
    shape: object
    kind: str
    motion: RigidScript

    def pose(self, t: float) -> RigidMotion:
        return evaluate_dirichlet_script(self.motion, t)

    def signed_distance(self, points: np.ndarray, t: float) -> np.ndarray:
        return self.shape.signed_distance(self.pose(t).inverse_apply(points))

    def contains(self, points: np.ndarray, t: float) -> np.ndarray:
        return self.signed_distance(points, t) <= 0.0

    def normals(self, points: np.ndarray, t: float) -> np.ndarray:
        pose = self.pose(t)
        return pose.rotate(self.shape.normal(pose.inverse_apply(points)))


def apply_level_set_constraints(
    positions: np.ndarray,
    level_sets: list[LevelSetBoundary],
    t: float,
    t_next: float,
) -> NodeConstraints:
    """Classify grid nodes at their step-start positions.

    A node inside a no-slip set follows the set's rigid motion over the step.
    A node inside a slip set follows it only along the local normal and keeps
    one DOF along the tangent. No-slip wins when sets overlap.
    """
    constraints = NodeConstraints.free(positions)
    if len(positions) == 0:
        return constraints
    for ls in sorted(level_sets, key=lambda item: item.kind == "no_slip"):
        inside = ls.contains(positions, t)
        if not np.any(inside):
            continue
        local = ls.pose(t).inverse_apply(positions[inside])
        target = ls.pose(t_next).apply(local)
        constraints.target[inside] = target
        if ls.kind == "no_slip":
            constraints.kind[inside] = NodeKind.FIXED
        else:
            n = ls.normals(positions[inside], t)
            constraints.kind[inside] = NodeKind.SLIP
            constraints.tangent[inside] = np.stack([-n[:, 1], n[:, 0]], axis=1)
    counts = np.bincount(constraints.kind, minlength=3)
    if counts[1] or counts[2]:
        logger.debug(f"Level sets: {counts[1]} slip nodes, {counts[2]} fixed nodes")
    return constraints


def build_constraints(
    x_fem: np.ndarray,
    rest: np.ndarray,
    dirichlet: list[DirichletGroup],
    grid_positions: np.ndarray,
    level_sets: list[LevelSetBoundary],
    t: float,
    t_next: float,
) -> NodeConstraints:
    """Joint constraints: FEM nodes first, then active grid nodes."""
    fem = NodeConstraints.free(x_fem)
    for group in dirichlet:
        fem.kind[group.nodes] = NodeKind.FIXED
        fem.target[group.nodes] = group.targets(rest, t_next)
    grid = apply_level_set_constraints(grid_positions, level_sets, t, t_next)
    return NodeConstraints(
        kind=np.concatenate([fem.kind, grid.kind]),
        tangent=np.vstack([fem.tangent, grid.tangent]),
        target=np.vstack([fem.target, grid.target]),
    )
