"""Total-Lagrangian linear-triangle FEM domain."""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from mpmfem.core.elasticity import MODEL_CODES, ElasticStencils, elastic_stencils
from mpmfem.core.errors import DegenerateSpec, SceneParseError
from mpmfem.core.geometry import extract_boundary_edges
from mpmfem.core.models import Material, RigidScript

logger = logging.getLogger(__name__)


@dataclass
class RigidMotion:
    """A rigid map x = pivot + translation + R(angle) (X - pivot)."""
    translation: np.ndarray
    angle: float
    pivot: np.ndarray

    @property
    def rotation(self) -> np.ndarray:
        c, s = np.cos(self.angle), np.sin(self.angle)
        return np.array([[c, -s], [s, c]])

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.pivot + self.translation + (np.asarray(points) - self.pivot) @ self.rotation.T

    def inverse_apply(self, points: np.ndarray) -> np.ndarray:
        return self.pivot + (np.asarray(points) - self.pivot - self.translation) @ self.rotation

    def rotate(self, vectors: np.ndarray) -> np.ndarray:
        return np.asarray(vectors) @ self.rotation.T

    @property
    def is_identity(self) -> bool:
        return self.angle == 0.0 and not np.any(self.translation)


def evaluate_dirichlet_script(script: RigidScript, t: float) -> RigidMotion:
    """Rigid motion prescribed by `script` at time t (exact at keyframes, clamped after)."""
    translation = np.asarray(script.velocity, dtype=float) * t
    if script.keyframes:
        frames = np.asarray(script.keyframes, dtype=float)
        if frames[0, 0] > 0.0:
            frames = np.vstack([[0.0, 0.0, 0.0], frames])
        translation = translation + np.array([
            np.interp(t, frames[:, 0], frames[:, 1]),
            np.interp(t, frames[:, 0], frames[:, 2]),
        ])
    return RigidMotion(
        translation=translation,
        angle=script.angular_velocity * t,
        pivot=np.asarray(script.pivot, dtype=float),
    )


@dataclass
class FemMesh:
    """One or more triangle meshes stacked into a single node/element numbering.

    Attributes:
        rest: (n, 2) material positions X.
        positions: (n, 2) world positions x.
        velocities: (n, 2) nodal velocities.
        accelerations: (n, 2) nodal accelerations (Newmark state).
        triangles: (m, 3) counterclockwise node indices.
        rest_basis_inv: (m, 2, 2) inverse material edge basis B_e^-1.
        rest_volume: (m,) element areas V_e^0.
        mass: (n,) lumped nodal masses.
        boundary_edges: (b, 2) oriented boundary edges (interior on the left).
        eta: (n,) boundary edges incident to each node.
        node_object: (n,) owning FEM object index per node.
        edge_object: (b,) owning FEM object index per boundary edge.
        mu, lam, density: per-element material constants.
        model_code: per-element constitutive model code.
    """
    rest: np.ndarray
    positions: np.ndarray
    triangles: np.ndarray
    rest_basis_inv: np.ndarray
    rest_volume: np.ndarray
    mass: np.ndarray
    boundary_edges: np.ndarray
    eta: np.ndarray
    node_object: np.ndarray
    edge_object: np.ndarray
    mu: np.ndarray
    lam: np.ndarray
    density: np.ndarray
    model_code: np.ndarray
    velocities: np.ndarray | None = None
    accelerations: np.ndarray | None = None

    def __post_init__(self):
        if self.velocities is None:
            self.velocities = np.zeros_like(self.positions)
        if self.accelerations is None:
            self.accelerations = np.zeros_like(self.positions)

    @property
    def n_nodes(self) -> int:
        return len(self.rest)

    @property
    def n_elements(self) -> int:
        return len(self.triangles)

    @classmethod
    def empty(cls) -> "FemMesh":
        z2 = np.zeros((0, 2))
        return cls(
            rest=z2, positions=z2.copy(), triangles=np.zeros((0, 3), dtype=np.int64),
            rest_basis_inv=np.zeros((0, 2, 2)), rest_volume=np.zeros(0), mass=np.zeros(0),
            boundary_edges=np.zeros((0, 2), dtype=np.int64), eta=np.zeros(0, dtype=np.int64),
            node_object=np.zeros(0, dtype=np.int64), edge_object=np.zeros(0, dtype=np.int64),
            mu=np.zeros(0), lam=np.zeros(0), density=np.zeros(0),
            model_code=np.zeros(0, dtype=np.int64),
        )

    @classmethod
    def from_arrays(
        cls,
        vertices: np.ndarray,
        triangles: np.ndarray,
        material: Material,
        object_index: int = 0,
    ) -> "FemMesh":
        """Build a mesh, flipping clockwise triangles so every rest area is positive."""
        rest = np.asarray(vertices, dtype=float).reshape(-1, 2)
        tris = np.asarray(triangles, dtype=np.int64).reshape(-1, 3).copy()
        if len(tris) == 0:
            raise DegenerateSpec("mesh has no triangles")
        if tris.min() < 0 or tris.max() >= len(rest):
            raise DegenerateSpec("triangle index out of range")

        basis = _edge_basis(rest, tris)
        det = basis[:, 0, 0] * basis[:, 1, 1] - basis[:, 0, 1] * basis[:, 1, 0]
        if np.any(det == 0.0):
            raise DegenerateSpec(f"{int(np.sum(det == 0.0))} triangles have zero area")
        flip = det < 0.0
        if np.any(flip):
            tris[flip] = tris[flip][:, [0, 2, 1]]
            basis = _edge_basis(rest, tris)
            det = np.abs(det)

        edges, eta = extract_boundary_edges(tris, len(rest))
        m = len(tris)
        volume = 0.5 * det
        density = np.full(m, material.density)
        return cls(
            rest=rest,
            positions=rest.copy(),
            triangles=tris,
            rest_basis_inv=np.linalg.inv(basis),
            rest_volume=volume,
            mass=compute_lumped_mass(tris, volume, density, len(rest)),
            boundary_edges=edges,
            eta=eta,
            node_object=np.full(len(rest), object_index, dtype=np.int64),
            edge_object=np.full(len(edges), object_index, dtype=np.int64),
            mu=np.full(m, material.mu),
            lam=np.full(m, material.lam),
            density=density,
            model_code=np.full(m, MODEL_CODES[material.model], dtype=np.int64),
        )

    @classmethod
    def concatenate(cls, meshes: list["FemMesh"]) -> "FemMesh":
        """Stack meshes into one numbering; node and edge object ids are preserved."""
        if not meshes:
            return cls.empty()
        offsets = np.cumsum([0] + [mesh.n_nodes for mesh in meshes[:-1]])
        return cls(
            rest=np.vstack([mesh.rest for mesh in meshes]),
            positions=np.vstack([mesh.positions for mesh in meshes]),
            triangles=np.vstack([mesh.triangles + off for mesh, off in zip(meshes, offsets)]),
            rest_basis_inv=np.concatenate([mesh.rest_basis_inv for mesh in meshes]),
            rest_volume=np.concatenate([mesh.rest_volume for mesh in meshes]),
            mass=np.concatenate([mesh.mass for mesh in meshes]),
            boundary_edges=np.vstack([mesh.boundary_edges + off for mesh, off in zip(meshes, offsets)]),
            eta=np.concatenate([mesh.eta for mesh in meshes]),
            node_object=np.concatenate([mesh.node_object for mesh in meshes]),
            edge_object=np.concatenate([mesh.edge_object for mesh in meshes]),
            mu=np.concatenate([mesh.mu for mesh in meshes]),
            lam=np.concatenate([mesh.lam for mesh in meshes]),
            density=np.concatenate([mesh.density for mesh in meshes]),
            model_code=np.concatenate([mesh.model_code for mesh in meshes]),
            velocities=np.vstack([mesh.velocities for mesh in meshes]),
            accelerations=np.vstack([mesh.accelerations for mesh in meshes]),
        )

    def shape_gradients(self) -> np.ndarray:
        """(m, 3, 2) factors D with F_e = sum_a x_a D_a^T."""
        b = self.rest_basis_inv
        return np.stack([-(b[:, 0, :] + b[:, 1, :]), b[:, 0, :], b[:, 1, :]], axis=1)


def _edge_basis(points: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Column basis [p1 - p0, p2 - p0] per triangle, shape (m, 2, 2)."""
    p0, p1, p2 = (points[tris[:, k]] for k in range(3))
    return np.stack([p1 - p0, p2 - p0], axis=2)


def compute_lumped_mass(
    triangles: np.ndarray, rest_volume: np.ndarray, density, n_nodes: int
) -> np.ndarray:
    """m_i = sum over incident elements of rho V_e^0 / 3."""
    share = np.broadcast_to(np.asarray(density, dtype=float), rest_volume.shape) * rest_volume / 3.0
    return np.bincount(np.asarray(triangles).reshape(-1), weights=np.repeat(share, 3), minlength=n_nodes)


def element_deformation_gradients(mesh: FemMesh, x: np.ndarray) -> np.ndarray:
    """F_e = T_e(x) B_e^-1 for every element, shape (m, 2, 2)."""
    return _edge_basis(np.asarray(x, dtype=float), mesh.triangles) @ mesh.rest_basis_inv


def fem_elastic_stencils(mesh: FemMesh, x: np.ndarray, order: int = 2) -> ElasticStencils:
    """Energy sum_e V_e^0 psi(F_e) with per-element 6-vector / 6x6 blocks."""
    F = element_deformation_gradients(mesh, x)
    return elastic_stencils(
        F, mesh.rest_volume, mesh.mu, mesh.lam, mesh.model_code,
        mesh.shape_gradients(), mesh.triangles, order=order,
    )


def fem_elastic_energy(mesh: FemMesh, x: np.ndarray) -> float:
    if mesh.n_elements == 0:
        return 0.0
    return fem_elastic_stencils(mesh, x, order=0).energy


def fem_elastic_gradient(mesh: FemMesh, x: np.ndarray) -> np.ndarray:
    """Nodal gradient (n, 2) of the FEM elastic energy."""
    grad = np.zeros(mesh.n_nodes * 2)
    if mesh.n_elements == 0:
        return grad.reshape(-1, 2)
    st = fem_elastic_stencils(mesh, x, order=1)
    dofs = (2 * st.nodes[:, :, None] + np.arange(2)).reshape(len(st.nodes), -1)
    np.add.at(grad, dofs.reshape(-1), st.gradients.reshape(-1))
    return grad.reshape(-1, 2)


def fem_elastic_hessian_stencils(mesh: FemMesh, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Element node triples and unprojected 6x6 Hessian blocks."""
    st = fem_elastic_stencils(mesh, x, order=2)
    return st.nodes, st.hessians


def read_triangle_mesh(path: Path | str) -> tuple[np.ndarray, np.ndarray]:
    """Read the 'v x y' / 'f i j k' (1-based) subset of the OBJ format.

    Extra vertex coordinates (a z column) are ignored; other line types are
    rejected so malformed files fail loudly.
    """
    vertices: list[tuple[float, float]] = []
    faces: list[tuple[int, int, int]] = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        try:
            if head == "v":
                vertices.append((float(rest[0]), float(rest[1])))
            elif head == "f":
                if len(rest) != 3:
                    raise ValueError("faces must be triangles")
                faces.append(tuple(int(tok.split("/")[0]) - 1 for tok in rest))
            else:
                raise ValueError(f"unsupported record '{head}'")
        except (ValueError, IndexError) as e:
            raise SceneParseError(f"{path}: {e}", line=lineno) from e
    logger.info(f"Read mesh {path}: {len(vertices)} vertices, {len(faces)} triangles")
    return np.asarray(vertices, dtype=float), np.asarray(faces, dtype=np.int64)
