"""Domain layer: scene schema, analytic shapes and read-side diagnostics."""

from mpmfem.domain.diagnostics import emit_diagnostics
from mpmfem.domain.scene import SceneConfig, parse_scene, serialize_scene

__all__ = ["SceneConfig", "parse_scene", "serialize_scene", "emit_diagnostics"]
