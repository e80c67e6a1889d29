"""Configuration management for mpmfem."""

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables
load_dotenv()


def _env_flag(name: str) -> bool:
    return os.getenv(name, "").lower() in ("1", "true", "yes")


@dataclass
class Config:
    """Process-wide settings. Physics parameters live in the scene file."""

    # Output Settings
    output_dir: Path = field(
        default_factory=lambda: Path(os.getenv("MPMFEM_OUTPUT_DIR", "output"))
    )

    # Logging Settings
    log_file: Path = field(
        default_factory=lambda: Path(os.getenv("MPMFEM_LOG_FILE", "mpmfem.log"))
    )
    log_level: int = field(
        default_factory=lambda: logging.getLevelName(os.getenv("MPMFEM_LOG_LEVEL", "INFO").upper())
    )

    # Feasibility guards after every accepted Newton iterate (det F > 0, d > 0).
    debug_checks: bool = field(default_factory=lambda: _env_flag("MPMFEM_DEBUG_CHECKS"))

    # Sparse SPD solver: auto|cholmod|splu. auto picks cholmod when scikit-sparse is installed.
    linear_solver: str = field(
        default_factory=lambda: os.getenv("MPMFEM_LINEAR_SOLVER", "auto").lower()
    )
    valid_linear_solvers: list[str] = field(default_factory=lambda: ["auto", "cholmod", "splu"])

    def __post_init__(self):
        if self.linear_solver not in self.valid_linear_solvers:
            logging.getLogger(__name__).warning(
                f"Unknown linear solver '{self.linear_solver}', using 'auto'"
            )
            self.linear_solver = "auto"


_config: Config | None = None


def get_config() -> Config:
    """Get the application configuration singleton."""
    global _config
    if _config is None:
        _config = Config()
    return _config


def configure_logging() -> None:
    """Configure application logging."""
    config = get_config()
    level = config.log_level if isinstance(config.log_level, int) else logging.INFO
    logging.basicConfig(
        level=level,
        format="{asctime} - {levelname} - {message}",
        style="{",
        datefmt="%Y-%m-%d %H:%M",
        filename=str(config.log_file),
        encoding="utf-8",
        filemode="a",
    )
