"""CSV writers for per-frame particle/FEM tables and the diagnostics log."""

import logging
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd

from mpmfem.domain.diagnostics import FrameCounters, determinants, emit_diagnostics, particle_von_mises
from mpmfem.storage.schema import (
    DIAGNOSTICS_COLUMNS,
    DIAGNOSTICS_FILE,
    FEM_COLUMNS,
    FEM_FILE,
    PARTICLE_COLUMNS,
    PARTICLE_FILE,
)

if TYPE_CHECKING:
    from mpmfem.application.simulation import Simulation

logger = logging.getLogger(__name__)


def particle_table(sim: "Simulation") -> pd.DataFrame:
    p = sim.particles
    return pd.DataFrame(
        {
            "id": np.arange(len(p)),
            "object": p.object_id,
            "x": p.positions[:, 0],
            "y": p.positions[:, 1],
            "vx": p.velocities[:, 0],
            "vy": p.velocities[:, 1],
            "det_f": determinants(p.F),
            "von_mises": particle_von_mises(sim),
        },
        columns=list(PARTICLE_COLUMNS),
    )


def fem_table(sim: "Simulation") -> pd.DataFrame:
    mesh = sim.mesh
    return pd.DataFrame(
        {
            "id": np.arange(mesh.n_nodes),
            "object": mesh.node_object,
            "x": mesh.positions[:, 0],
            "y": mesh.positions[:, 1],
            "vx": mesh.velocities[:, 0],
            "vy": mesh.velocities[:, 1],
        },
        columns=list(FEM_COLUMNS),
    )


class FrameWriter:
    """Writes frame tables and appends one diagnostics row per frame.

    Args:
        directory: Output directory, created if missing. An existing
            diagnostics file is replaced on the first frame.
    """

    def __init__(self, directory: Path | str):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.rows: list[dict] = []

    @property
    def diagnostics_path(self) -> Path:
        return self.directory / DIAGNOSTICS_FILE

    def write_frame(self, sim: "Simulation", frame: int, counters: FrameCounters, wall_time: float) -> dict:
        particle_table(sim).to_csv(self.directory / PARTICLE_FILE.format(frame=frame), index=False)
        fem_table(sim).to_csv(self.directory / FEM_FILE.format(frame=frame), index=False)

        row = emit_diagnostics(sim, frame, counters, wall_time)
        first = not self.rows
        pd.DataFrame([row], columns=list(DIAGNOSTICS_COLUMNS)).to_csv(
            self.diagnostics_path,
            mode="w" if first else "a",
            header=first,
            index=False,
            na_rep="nan",
        )
        self.rows.append(row)
        logger.debug(f"Wrote frame {frame} to {self.directory}")
        return row

    def diagnostics(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=list(DIAGNOSTICS_COLUMNS))

    def close(self) -> None:
        logger.info(f"Wrote {len(self.rows)} frames to {self.directory}")
