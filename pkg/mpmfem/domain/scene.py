"""Scene files: pydantic schema, parsing with error context, and serialization.

A scene is a JSON object. Every section rejects unknown keys; semantic checks
that span sections (references, grid margins, shape validity) run after the
schema and are reported together.
"""

import json
import logging
from importlib import resources
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from mpmfem.core.errors import DegenerateSpec, SceneParseError, SceneValidationError
from mpmfem.core.models import (
    ContactParams,
    IntegratorParams,
    Material,
    RigidScript,
    SolverParams,
    TransferScheme,
)
from mpmfem.domain.shapes import FemShape, LevelSetShape, MpmShape, Vec2

logger = logging.getLogger(__name__)

SCENE_PACKAGE = "mpmfem.scenes"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridConfig(_Section):
    origin: Vec2 = (0.0, 0.0)
    extent: Vec2
    dx: float = Field(gt=0.0)

    @field_validator("extent")
    @classmethod
    def _positive_extent(cls, value: Vec2) -> Vec2:
        if value[0] <= 0.0 or value[1] <= 0.0:
            raise ValueError("extent must be positive")
        return value


class IntegratorConfig(_Section):
    preset: Literal["backward_euler", "newmark_midpoint"] = "backward_euler"
    dt: float = Field(gt=0.0)
    end_time: float = Field(ge=0.0)

    def params(self) -> IntegratorParams:
        return IntegratorParams.from_preset(self.preset, self.dt)


class MpmObjectConfig(_Section):
    id: str
    shape: MpmShape
    material: Material
    ppc: int = 4
    velocity: Vec2 = (0.0, 0.0)

    @field_validator("ppc")
    @classmethod
    def _square_ppc(cls, value: int) -> int:
        if value not in (4, 9, 16):
            raise ValueError("ppc must be 4, 9 or 16")
        return value


class RegionSelect(_Section):
    """Axis-aligned box in material coordinates."""
    lo: Vec2
    hi: Vec2


class DirichletConfig(_Section):
    select: Literal["all"] | RegionSelect = "all"
    script: RigidScript = RigidScript()


class FemObjectConfig(_Section):
    id: str
    shape: FemShape | None = None
    mesh_file: str | None = None
    material: Material
    h: float | None = Field(default=None, gt=0.0)
    dirichlet: list[DirichletConfig] = []
    active_until: float | None = None
    velocity: Vec2 = (0.0, 0.0)

    @field_validator("dirichlet", mode="before")
    @classmethod
    def _listify(cls, value):
        if value is None:
            return []
        return value if isinstance(value, list) else [value]

    @model_validator(mode="after")
    def _one_source(self) -> "FemObjectConfig":
        if (self.shape is None) == (self.mesh_file is None):
            raise ValueError("exactly one of 'shape' and 'mesh_file' is required")
        return self


class LevelSetConfig(_Section):
    id: str
    shape: LevelSetShape
    kind: Literal["no_slip", "slip"] = "slip"
    motion: RigidScript = RigidScript()


class FrictionEntry(_Section):
    fem: str
    mpm: str
    mu: float = Field(ge=0.0)


class OutputConfig(_Section):
    directory: str | None = None
    frame_interval: int = Field(default=1, ge=1)
    wall_clock: bool = False
    hertz_plate: str | None = None


class DeskConfig(_Section):
    """Coarsened profile used for desk-scale runs."""
    coarsen: float = Field(default=1.0, ge=1.0)
    dt: float | None = Field(default=None, gt=0.0)
    end_time: float | None = Field(default=None, ge=0.0)


class SceneConfig(_Section):
    name: str
    grid: GridConfig
    integrator: IntegratorConfig
    transfer: TransferScheme = TransferScheme.APIC
    gravity: Vec2 = (0.0, 0.0)
    contact: ContactParams
    solver: SolverParams = SolverParams()
    mpm_objects: list[MpmObjectConfig] = []
    fem_objects: list[FemObjectConfig] = []
    level_sets: list[LevelSetConfig] = []
    friction: list[FrictionEntry] = []
    output: OutputConfig = OutputConfig()
    desk: DeskConfig = DeskConfig()

    def friction_table(self) -> np.ndarray:
        """(n_fem_objects, n_mpm_objects) coefficient table; missing entries are 0."""
        fem_index = {obj.id: i for i, obj in enumerate(self.fem_objects)}
        mpm_index = {obj.id: i for i, obj in enumerate(self.mpm_objects)}
        table = np.zeros((len(self.fem_objects), len(self.mpm_objects)))
        for entry in self.friction:
            table[fem_index[entry.fem], mpm_index[entry.mpm]] = entry.mu
        return table


def validate_scene(config: SceneConfig, base_dir: Path | None = None) -> list[str]:
    """Cross-section checks; returns one message per violation."""
    errors: list[str] = []
    for section, objects in (
        ("mpm_objects", config.mpm_objects),
        ("fem_objects", config.fem_objects),
        ("level_sets", config.level_sets),
    ):
        seen = set()
        for i, obj in enumerate(objects):
            if obj.id in seen:
                errors.append(f"{section}.{i}.id: duplicate id '{obj.id}'")
            seen.add(obj.id)

    fem_ids = {obj.id for obj in config.fem_objects}
    mpm_ids = {obj.id for obj in config.mpm_objects}
    for i, entry in enumerate(config.friction):
        if entry.fem not in fem_ids:
            errors.append(f"friction.{i}.fem: unknown FEM object '{entry.fem}'")
        if entry.mpm not in mpm_ids:
            errors.append(f"friction.{i}.mpm: unknown MPM object '{entry.mpm}'")
    if config.output.hertz_plate is not None and config.output.hertz_plate not in fem_ids:
        errors.append(f"output.hertz_plate: unknown FEM object '{config.output.hertz_plate}'")

    grid_lo = np.asarray(config.grid.origin) + 2.0 * config.grid.dx
    grid_hi = np.asarray(config.grid.origin) + np.asarray(config.grid.extent) - 2.0 * config.grid.dx
    for i, obj in enumerate(config.mpm_objects):
        try:
            obj.shape.check()
        except DegenerateSpec as e:
            errors.append(f"mpm_objects.{i}.shape: {e}")
            continue
        lo, hi = obj.shape.bounds()
        if np.any(lo < grid_lo) or np.any(hi > grid_hi):
            errors.append(f"mpm_objects.{i}.shape: must lie inside the grid extent minus a 2 dx margin")

    for i, obj in enumerate(config.fem_objects):
        if obj.shape is not None:
            try:
                obj.shape.check()
            except DegenerateSpec as e:
                errors.append(f"fem_objects.{i}.shape: {e}")
            if obj.h is None and obj.shape.kind != "plate":
                errors.append(f"fem_objects.{i}.h: required for shape '{obj.shape.kind}'")
        elif base_dir is not None and not (base_dir / obj.mesh_file).is_file():
            errors.append(f"fem_objects.{i}.mesh_file: file '{obj.mesh_file}' not found")

    for i, ls in enumerate(config.level_sets):
        try:
            ls.shape.check()
        except DegenerateSpec as e:
            errors.append(f"level_sets.{i}.shape: {e}")
    return errors


def _format_pydantic_errors(error: ValidationError) -> list[str]:
    return [f"{'.'.join(str(p) for p in item['loc'])}: {item['msg']}" for item in error.errors()]


def scene_from_dict(data: dict, base_dir: Path | None = None) -> SceneConfig:
    """Validate a decoded scene.

    Raises:
        SceneValidationError: listing every violated invariant.
    """
    try:
        config = SceneConfig.model_validate(data)
    except ValidationError as e:
        raise SceneValidationError(_format_pydantic_errors(e)) from e
    errors = validate_scene(config, base_dir)
    if errors:
        raise SceneValidationError(errors)
    return config


def parse_scene_text(text: str, source: str = "<scene>", base_dir: Path | None = None) -> SceneConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise SceneParseError(f"{source}: {e.msg}", line=e.lineno) from e
    if not isinstance(data, dict):
        raise SceneParseError(f"{source}: top level must be an object")
    return scene_from_dict(data, base_dir)


def parse_scene(path: Path | str) -> SceneConfig:
    """Read and validate a scene file.

    Raises:
        SceneParseError: malformed JSON, with the offending line.
        SceneValidationError: well-formed file violating the schema or invariants.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise SceneParseError(f"cannot read scene '{path}': {e}") from e
    config = parse_scene_text(text, str(path), base_dir=path.parent)
    logger.info(f"Loaded scene '{config.name}' from {path}")
    return config


def serialize_scene(config: SceneConfig) -> str:
    return json.dumps(config.model_dump(mode="json", by_alias=True), indent=2)


def bundled_scene_names() -> list[str]:
    return sorted(
        entry.name.removesuffix(".json")
        for entry in resources.files(SCENE_PACKAGE).iterdir()
        if entry.name.endswith(".json")
    )


def load_bundled_scene(name: str) -> SceneConfig:
    resource = resources.files(SCENE_PACKAGE) / f"{name}.json"
    if not resource.is_file():
        raise SceneParseError(f"no bundled scene named '{name}'")
    return parse_scene_text(resource.read_text(encoding="utf-8"), f"{name}.json")


def resolve_scene(reference: str) -> tuple[SceneConfig, Path | None]:
    """A scene from a file path, or by bundled name when no such file exists."""
    path = Path(reference)
    if path.is_file():
        return parse_scene(path), path.parent
    return load_bundled_scene(reference), None


def apply_desk_profile(config: SceneConfig) -> SceneConfig:
    """Coarsen grid spacing and mesh edge lengths and switch to the desk time settings."""
    desk = config.desk
    c = desk.coarsen
    fem_objects = [
        obj.model_copy(update={"h": obj.h * c}) if obj.h is not None else obj
        for obj in config.fem_objects
    ]
    integrator = config.integrator.model_copy(update={
        "dt": desk.dt if desk.dt is not None else config.integrator.dt,
        "end_time": desk.end_time if desk.end_time is not None else config.integrator.end_time,
    })
    return config.model_copy(update={
        "grid": config.grid.model_copy(update={"dx": config.grid.dx * c}),
        "fem_objects": fem_objects,
        "integrator": integrator,
    })


def apply_overrides(
    config: SceneConfig,
    end_time: float | None = None,
    dt: float | None = None,
    transfer: TransferScheme | str | None = None,
    frames_per_second: float | None = None,
    output_dir: str | None = None,
) -> SceneConfig:
    """Return a copy with command-line overrides applied."""
    integrator = config.integrator
    if end_time is not None:
        integrator = integrator.model_copy(update={"end_time": end_time})
    if dt is not None:
        integrator = integrator.model_copy(update={"dt": dt})
    output = config.output
    if frames_per_second is not None:
        interval = max(1, int(round(1.0 / (frames_per_second * integrator.dt))))
        output = output.model_copy(update={"frame_interval": interval})
    if output_dir is not None:
        output = output.model_copy(update={"directory": output_dir})
    update = {"integrator": integrator, "output": output}
    if transfer is not None:
        update["transfer"] = TransferScheme(transfer)
    return config.model_copy(update=update)
