"""Pydantic models for physical and numerical parameters."""

from enum import Enum
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator


class TransferScheme(str, Enum):
    """Particle-grid transfer scheme."""
    APIC = "apic"
    PIC = "pic"
    FLIP = "flip"


class ElasticModel(str, Enum):
    """Constitutive model of a domain."""
    NEO_HOOKEAN = "neo_hookean"
    LINEAR_ELASTIC = "linear_elastic"


class Material(BaseModel):
    """Isotropic hyperelastic material. Lamé parameters use plane-strain conversion."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    youngs_modulus: float = Field(gt=0.0)
    poisson_ratio: float = Field(gt=0.0, lt=0.5)
    density: float = Field(gt=0.0)
    model: ElasticModel = ElasticModel.NEO_HOOKEAN

    @property
    def mu(self) -> float:
        return self.youngs_modulus / (2.0 * (1.0 + self.poisson_ratio))

    @property
    def lam(self) -> float:
        nu = self.poisson_ratio
        return self.youngs_modulus * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))


class ContactParams(BaseModel):
    """Barrier and friction mollifier constants shared by every contact pair."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    dhat: float = Field(gt=0.0)
    kappa: float = Field(gt=0.0)
    eps_v: float = Field(default=1e-3, gt=0.0)


class IntegratorParams(BaseModel):
    """Newmark-family constants (alpha, beta, gamma) and the time step."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    alpha: float = 1.0
    beta: float = Field(default=0.5, gt=0.0)
    gamma: float = Field(default=1.0, ge=0.0, le=1.0)
    dt: float = Field(gt=0.0)

    @classmethod
    def backward_euler(cls, dt: float) -> "IntegratorParams":
        return cls(alpha=1.0, beta=0.5, gamma=1.0, dt=dt)

    @classmethod
    def newmark_midpoint(cls, dt: float) -> "IntegratorParams":
        return cls(alpha=0.5, beta=0.25, gamma=0.5, dt=dt)

    @classmethod
    def from_preset(cls, preset: str, dt: float) -> "IntegratorParams":
        presets = {
            "backward_euler": cls.backward_euler,
            "newmark_midpoint": cls.newmark_midpoint,
        }
        if preset not in presets:
            raise ValueError(f"unknown integrator preset '{preset}'")
        return presets[preset](dt)

    @property
    def energy_scale(self) -> float:
        """Weight 2*alpha*beta*dt^2 of the potential terms in the incremental potential."""
        return 2.0 * self.alpha * self.beta * self.dt**2


class SolverParams(BaseModel):
    """Projected Newton and lagged-friction loop controls."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    newton_tol: float = Field(default=1e-6, gt=0.0)
    max_newton_iters: int = Field(default=200, ge=1)
    max_friction_iters: int = Field(default=20, ge=1)
    friction_tol: float | None = None
    ccd_safety: float = Field(default=0.9, gt=0.0, lt=1.0)
    # Which gradient enters the step-start term of the velocity update.
    start_gradient: Literal["full", "elastic"] = "full"

    @field_validator("friction_tol")
    @classmethod
    def _positive_friction_tol(cls, value: float | None) -> float | None:
        if value is not None and value <= 0.0:
            raise ValueError("friction_tol must be positive")
        return value

    @property
    def friction_tolerance(self) -> float:
        """Friction-loop tolerance (m/s); defaults to the Newton tolerance."""
        return self.friction_tol if self.friction_tol is not None else self.newton_tol


class RigidScript(BaseModel):
    """Scripted rigid motion: keyframed translation plus constant-rate rotation.

    Keyframes are (t, ux, uy) rows with strictly increasing t; translation is
    linearly interpolated between them and clamped after the last one. An
    implicit (0, 0, 0) keyframe precedes the first one when it starts after t=0.
    `velocity` adds a constant-velocity drift on top of the keyframes.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    keyframes: list[tuple[float, float, float]] = []
    velocity: tuple[float, float] = (0.0, 0.0)
    angular_velocity: float = 0.0
    pivot: tuple[float, float] = (0.0, 0.0)

    @field_validator("keyframes")
    @classmethod
    def _increasing_times(cls, frames: list[tuple[float, float, float]]) -> list[tuple[float, float, float]]:
        times = [frame[0] for frame in frames]
        if any(t < 0.0 for t in times):
            raise ValueError("keyframe times must be non-negative")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("keyframe times must be strictly increasing")
        return frames
