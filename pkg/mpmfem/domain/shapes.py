"""Analytic shapes: particle regions, level sets and structured triangle meshes.

Every shape is a pydantic model tagged by `kind` so scene files can name it
directly. Signed distances are negative inside the solid.
"""

import logging
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from mpmfem.core.errors import DegenerateSpec

logger = logging.getLogger(__name__)

Vec2 = tuple[float, float]


class _Shape(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    def check(self) -> None:
        """Raise DegenerateSpec when the parameters describe no valid shape."""

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def contains(self, points: np.ndarray) -> np.ndarray:
        return self.signed_distance(points) < 0.0

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError


class BoxShape(_Shape):
    """Axis-aligned rectangle [lo, hi]."""
    kind: Literal["box"] = "box"
    lo: Vec2
    hi: Vec2

    def check(self) -> None:
        if not (self.hi[0] > self.lo[0] and self.hi[1] > self.lo[1]):
            raise DegenerateSpec(f"box corners {self.lo} and {self.hi} enclose no area")

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.lo, dtype=float), np.asarray(self.hi, dtype=float)

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        lo, hi = self.bounds()
        centre, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        q = np.abs(np.atleast_2d(points) - centre) - half
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        return outside + np.minimum(q.max(axis=1), 0.0)

    def normal(self, points: np.ndarray) -> np.ndarray:
        lo, hi = self.bounds()
        centre, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        rel = np.atleast_2d(points) - centre
        q = np.abs(rel) - half
        sign = np.where(rel >= 0.0, 1.0, -1.0)
        out = np.maximum(q, 0.0)
        length = np.linalg.norm(out, axis=1, keepdims=True)
        inside_axis = np.eye(2)[np.argmax(q, axis=1)]
        n = np.where(length > 0.0, out / np.where(length > 0.0, length, 1.0), inside_axis)
        return sign * n

    def triangulate(self, h: float) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.bounds()
        nx = max(1, int(np.ceil((hi[0] - lo[0]) / h - 1e-9)))
        ny = max(1, int(np.ceil((hi[1] - lo[1]) / h - 1e-9)))
        return _structured_mesh(np.linspace(lo[0], hi[0], nx + 1), np.linspace(lo[1], hi[1], ny + 1))


class PlateShape(BoxShape):
    """Rigid-style plate: a rectangle meshed with four vertices and two triangles."""
    kind: Literal["plate"] = "plate"

    def triangulate(self, h: float | None = None) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.bounds()
        return _structured_mesh(np.array([lo[0], hi[0]]), np.array([lo[1], hi[1]]))


class DiskShape(_Shape):
    kind: Literal["disk"] = "disk"
    center: Vec2
    radius: float

    def check(self) -> None:
        if self.radius <= 0.0:
            raise DegenerateSpec(f"disk radius must be positive, got {self.radius}")

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center, dtype=float)
        return c - self.radius, c + self.radius

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        return np.linalg.norm(np.atleast_2d(points) - np.asarray(self.center), axis=1) - self.radius


class AnnulusShape(_Shape):
    """Ring between two concentric circles."""
    kind: Literal["annulus"] = "annulus"
    center: Vec2
    inner_radius: float
    outer_radius: float

    def check(self) -> None:
        if not 0.0 < self.inner_radius < self.outer_radius:
            raise DegenerateSpec(
                f"annulus needs 0 < inner < outer, got {self.inner_radius}, {self.outer_radius}"
            )

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center, dtype=float)
        return c - self.outer_radius, c + self.outer_radius

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(np.atleast_2d(points) - np.asarray(self.center), axis=1)
        mid = 0.5 * (self.inner_radius + self.outer_radius)
        return np.abs(r - mid) - 0.5 * (self.outer_radius - self.inner_radius)

    def triangulate(self, h: float) -> tuple[np.ndarray, np.ndarray]:
        """Structured polar mesh, closed in the angular direction."""
        n_theta = max(8, int(np.ceil(2.0 * np.pi * self.outer_radius / h)))
        n_r = max(1, int(np.ceil((self.outer_radius - self.inner_radius) / h - 1e-9)))
        return _polar_mesh(self.center, self.inner_radius, self.outer_radius, n_r, n_theta, 0.0, 2.0 * np.pi, closed=True)


class SemiAnnulusShape(AnnulusShape):
    """Upper half (y >= center y) of an annulus."""
    kind: Literal["semi_annulus"] = "semi_annulus"

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center, dtype=float)
        return np.array([c[0] - self.outer_radius, c[1]]), c + self.outer_radius

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        below = self.center[1] - points[:, 1]
        return np.maximum(super().signed_distance(points), below)

    def triangulate(self, h: float) -> tuple[np.ndarray, np.ndarray]:
        n_theta = max(4, int(np.ceil(np.pi * self.outer_radius / h)))
        n_r = max(1, int(np.ceil((self.outer_radius - self.inner_radius) / h - 1e-9)))
        return _polar_mesh(self.center, self.inner_radius, self.outer_radius, n_r, n_theta, 0.0, np.pi, closed=False)


class _SineProfile(_Shape):
    base: float
    amplitude: float = 1.0 / 40.0
    wavelength: float = 0.1

    def profile(self, x: np.ndarray) -> np.ndarray:
        return self.base + self.amplitude * np.cos(2.0 * np.pi * x / self.wavelength)

    def slope(self, x: np.ndarray) -> np.ndarray:
        k = 2.0 * np.pi / self.wavelength
        return -self.amplitude * k * np.sin(k * x)


class SineStripShape(_SineProfile):
    """Strip whose lower side follows base + A cos(2 pi x / wavelength) and upper side is flat."""
    kind: Literal["sine_strip"] = "sine_strip"
    x_min: float
    x_max: float
    thickness: float

    def check(self) -> None:
        if self.x_max <= self.x_min or self.wavelength <= 0.0:
            raise DegenerateSpec("sine strip needs x_max > x_min and a positive wavelength")
        if self.thickness <= self.amplitude:
            raise DegenerateSpec("sine strip thickness must exceed its amplitude")

    @property
    def top(self) -> float:
        return self.base + self.thickness

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array([self.x_min, self.base - abs(self.amplitude)]), np.array([self.x_max, self.top])

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        x, y = points[:, 0], points[:, 1]
        below = (self.profile(x) - y) / np.sqrt(1.0 + self.slope(x) ** 2)
        return np.maximum.reduce([below, y - self.top, self.x_min - x, x - self.x_max])

    def triangulate(self, h: float) -> tuple[np.ndarray, np.ndarray]:
        nx = max(1, int(np.ceil((self.x_max - self.x_min) / h - 1e-9)))
        ny = max(1, int(np.ceil(self.thickness / h - 1e-9)))
        xs = np.linspace(self.x_min, self.x_max, nx + 1)
        s = np.linspace(0.0, 1.0, ny + 1)
        bottom = self.profile(xs)
        ys = bottom[:, None] + s[None, :] * (self.top - bottom)[:, None]
        gx = np.repeat(xs[:, None], ny + 1, axis=1)
        return _quads_to_triangles(np.stack([gx, ys], axis=-1))


class SineWallShape(_SineProfile):
    """Level set of the solid above y = base + A cos(2 pi x / wavelength)."""
    kind: Literal["sine_wall"] = "sine_wall"

    def check(self) -> None:
        if self.wavelength <= 0.0:
            raise DegenerateSpec("sine wall wavelength must be positive")

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array([-np.inf, self.base - abs(self.amplitude)]), np.array([np.inf, np.inf])

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        x = points[:, 0]
        return (self.profile(x) - points[:, 1]) / np.sqrt(1.0 + self.slope(x) ** 2)

    def normal(self, points: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(points)[:, 0]
        n = np.stack([self.slope(x), -np.ones_like(x)], axis=1)
        return n / np.linalg.norm(n, axis=1, keepdims=True)


class HalfPlaneShape(_Shape):
    """Solid half plane {(x - point) . normal <= 0}; `normal` points out of the solid."""
    kind: Literal["halfplane"] = "halfplane"
    point: Vec2
    normal_vector: Vec2 = Field(alias="normal")

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    def check(self) -> None:
        if np.hypot(*self.normal_vector) == 0.0:
            raise DegenerateSpec("half plane normal must be nonzero")

    def _unit_normal(self) -> np.ndarray:
        n = np.asarray(self.normal_vector, dtype=float)
        return n / np.linalg.norm(n)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return np.full(2, -np.inf), np.full(2, np.inf)

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(points) - np.asarray(self.point)) @ self._unit_normal()

    def normal(self, points: np.ndarray) -> np.ndarray:
        return np.tile(self._unit_normal(), (len(np.atleast_2d(points)), 1))


MpmShape = Annotated[
    Union[BoxShape, DiskShape, AnnulusShape, SemiAnnulusShape], Field(discriminator="kind")
]
FemShape = Annotated[
    Union[BoxShape, PlateShape, AnnulusShape, SemiAnnulusShape, SineStripShape], Field(discriminator="kind")
]
LevelSetShape = Annotated[
    Union[HalfPlaneShape, BoxShape, SineWallShape], Field(discriminator="kind")
]


def _structured_mesh(xs: np.ndarray, ys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return _quads_to_triangles(np.stack([gx, gy], axis=-1))


def _quads_to_triangles(grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split a logically rectangular (nu, nv, 2) node array into CCW triangles."""
    nu, nv, _ = grid.shape
    ids = np.arange(nu * nv).reshape(nu, nv)
    a, b = ids[:-1, :-1].reshape(-1), ids[1:, :-1].reshape(-1)
    c, d = ids[1:, 1:].reshape(-1), ids[:-1, 1:].reshape(-1)
    triangles = np.concatenate([np.stack([a, b, c], axis=1), np.stack([a, c, d], axis=1)])
    return grid.reshape(-1, 2), triangles


def _polar_mesh(center, r_in, r_out, n_r, n_theta, theta0, theta1, closed: bool):
    radii = np.linspace(r_in, r_out, n_r + 1)
    count = n_theta if closed else n_theta + 1
    thetas = theta0 + (theta1 - theta0) * np.arange(count) / n_theta
    c = np.asarray(center, dtype=float)
    rr, tt = np.meshgrid(radii, thetas, indexing="ij")
    vertices = c + np.stack([rr * np.cos(tt), rr * np.sin(tt)], axis=-1).reshape(-1, 2)

    ids = np.arange((n_r + 1) * count).reshape(n_r + 1, count)
    k = np.arange(n_theta)
    k1 = (k + 1) % count
    a, b = ids[:-1][:, k].reshape(-1), ids[1:][:, k].reshape(-1)
    cc, d = ids[1:][:, k1].reshape(-1), ids[:-1][:, k1].reshape(-1)
    triangles = np.concatenate([np.stack([a, b, cc], axis=1), np.stack([a, cc, d], axis=1)])
    return vertices, triangles


def generate_mesh(shape: _Shape, h: float | None) -> tuple[np.ndarray, np.ndarray]:
    """Triangulate a FEM shape with target edge length h."""
    shape.check()
    if not hasattr(shape, "triangulate"):
        raise DegenerateSpec(f"shape '{shape.kind}' has no mesh generator")
    if h is None and not isinstance(shape, PlateShape):
        raise DegenerateSpec(f"shape '{shape.kind}' needs an edge length h")
    if h is not None and h <= 0.0:
        raise DegenerateSpec(f"edge length must be positive, got {h}")
    vertices, triangles = shape.triangulate(h)
    logger.debug(f"Meshed {shape.kind}: {len(vertices)} vertices, {len(triangles)} triangles")
    return vertices, triangles


def points_in_polygons(points: np.ndarray, e0: np.ndarray, e1: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Even-odd test of each point against the closed loops formed by the segments e0 -> e1."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    inside = np.zeros(len(points), dtype=bool)
    if len(e0) == 0 or len(points) == 0:
        return inside
    lo = np.minimum(e0, e1).min(axis=0)
    hi = np.maximum(e0, e1).max(axis=0)
    candidates = np.nonzero(np.all((points >= lo) & (points <= hi), axis=1))[0]
    for start in range(0, len(candidates), chunk):
        idx = candidates[start:start + chunk]
        px, py = points[idx, 0][:, None], points[idx, 1][:, None]
        ay, by = e0[:, 1][None, :], e1[:, 1][None, :]
        ax, bx = e0[:, 0][None, :], e1[:, 0][None, :]
        straddle = (ay > py) != (by > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_cross = ax + (py - ay) * (bx - ax) / (by - ay)
        crossings = np.sum(straddle & (px < x_cross), axis=1)
        inside[idx] = crossings % 2 == 1
    return inside
