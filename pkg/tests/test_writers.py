"""Tests for storage/writers.py."""

import numpy as np
import pandas as pd

from mpmfem.application.simulation import Simulation
from mpmfem.domain.diagnostics import FrameCounters
from mpmfem.domain.scene import scene_from_dict
from mpmfem.storage.schema import DIAGNOSTICS_COLUMNS, FEM_COLUMNS, PARTICLE_COLUMNS
from mpmfem.storage.writers import FrameWriter, fem_table, particle_table
from tests.helpers import block_over_slab


class TestTables:
    def test_particle_columns(self, scene_dict, isolated_config):
        sim = Simulation(scene_from_dict(scene_dict), config=isolated_config)
        table = particle_table(sim)
        assert tuple(table.columns) == PARTICLE_COLUMNS
        assert len(table) == 24
        np.testing.assert_allclose(table["det_f"], 1.0)
        assert (table["object"] == 0).all()

    def test_fem_columns(self, scene_dict, isolated_config):
        sim = Simulation(scene_from_dict(block_over_slab(scene_dict)), config=isolated_config)
        table = fem_table(sim)
        assert tuple(table.columns) == FEM_COLUMNS
        assert len(table) == sim.mesh.n_nodes
        np.testing.assert_array_equal(table["id"], np.arange(sim.mesh.n_nodes))

    def test_empty_mesh_table(self, scene_dict, isolated_config):
        sim = Simulation(scene_from_dict(scene_dict), config=isolated_config)
        table = fem_table(sim)
        assert tuple(table.columns) == FEM_COLUMNS
        assert len(table) == 0


class TestFrameWriter:
    """Per-frame CSV files and the appended diagnostics log."""

    def test_files_per_frame(self, scene_dict, isolated_config, tmp_path):
        sim = Simulation(scene_from_dict(scene_dict), config=isolated_config)
        writer = FrameWriter(tmp_path / "nested" / "run")
        writer.write_frame(sim, 0, FrameCounters(), 0.0)
        writer.write_frame(sim, 1, FrameCounters(), 0.0)
        writer.close()
        names = sorted(p.name for p in (tmp_path / "nested" / "run").iterdir())
        assert names == [
            "diagnostics.csv",
            "frame_000000_fem.csv",
            "frame_000000_particles.csv",
            "frame_000001_fem.csv",
            "frame_000001_particles.csv",
        ]
        particles = pd.read_csv(tmp_path / "nested" / "run" / "frame_000001_particles.csv")
        assert tuple(particles.columns) == PARTICLE_COLUMNS
        assert len(particles) == 24

    def test_diagnostics_rows_appended(self, scene_dict, isolated_config, tmp_path):
        sim = Simulation(scene_from_dict(scene_dict), config=isolated_config)
        writer = FrameWriter(tmp_path)
        for frame in range(3):
            writer.write_frame(sim, frame, FrameCounters(), 0.0)
        diagnostics = pd.read_csv(writer.diagnostics_path)
        assert tuple(diagnostics.columns) == DIAGNOSTICS_COLUMNS
        assert diagnostics["frame"].tolist() == [0, 1, 2]
        assert diagnostics["contact_radius"].isna().all()
        assert len(writer.diagnostics()) == 3

    def test_existing_diagnostics_replaced(self, scene_dict, isolated_config, tmp_path):
        (tmp_path / "diagnostics.csv").write_text("stale\n1\n2\n3\n", encoding="utf-8")
        sim = Simulation(scene_from_dict(scene_dict), config=isolated_config)
        FrameWriter(tmp_path).write_frame(sim, 0, FrameCounters(), 0.0)
        diagnostics = pd.read_csv(tmp_path / "diagnostics.csv")
        assert len(diagnostics) == 1
        assert "stale" not in diagnostics.columns

    def test_returns_row(self, scene_dict, isolated_config, tmp_path):
        sim = Simulation(scene_from_dict(scene_dict), config=isolated_config)
        row = FrameWriter(tmp_path).write_frame(sim, 7, FrameCounters(newton_iterations=2), 0.25)
        assert row["frame"] == 7
        assert row["newton_iterations"] == 2
        assert row["wall_time"] == 0.25
