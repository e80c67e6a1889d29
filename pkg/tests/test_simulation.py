"""Tests for application/simulation.py."""

import numpy as np
import pytest

from mpmfem.application.simulation import Simulation, run_simulation, step_count
from mpmfem.domain.scene import scene_from_dict
from mpmfem.storage.writers import FrameWriter


class RecordingWriter:
    """Writer double that keeps (frame, step, time) per call."""

    def __init__(self):
        self.frames = []
        self.closed = False

    def write_frame(self, sim, frame, counters, wall_time):
        self.frames.append((frame, sim.step_index, sim.time))

    def close(self):
        self.closed = True


def _with_slab(scene_dict, velocity=(0.0, -1.0)):
    """Block falling onto a clamped slab 5 mm below it."""
    scene_dict["integrator"]["end_time"] = 0.012
    scene_dict["output"]["frame_interval"] = 4
    scene_dict["contact"] = {"dhat": 0.01, "kappa": 1e5}
    scene_dict["mpm_objects"][0]["shape"] = {"kind": "box", "lo": [0.3, 0.4], "hi": [0.6, 0.6]}
    scene_dict["mpm_objects"][0]["velocity"] = list(velocity)
    scene_dict["fem_objects"] = [{
        "id": "slab",
        "shape": {"kind": "box", "lo": [0.2, 0.2], "hi": [0.7, 0.42]},
        "material": {"youngs_modulus": 1e5, "poisson_ratio": 0.3, "density": 1000.0},
        "h": 0.1,
        "dirichlet": {"select": "all"},
    }]
    scene_dict["friction"] = [{"fem": "slab", "mpm": "box", "mu": 0.3}]
    return scene_dict


class TestConstruction:
    def test_particles_sampled(self, scene_dict, isolated_config):
        sim = Simulation(scene_from_dict(scene_dict), config=isolated_config)
        assert len(sim.particles) == 24
        assert sim.mesh.n_nodes == 0
        np.testing.assert_allclose(sim.particles.accelerations, np.tile([0.0, -9.81], (24, 1)))
        assert sim.dt == 0.001
        assert sim.time == 0.0

    def test_fem_object_and_dirichlet(self, scene_dict, isolated_config):
        sim = Simulation(scene_from_dict(_with_slab(scene_dict)), config=isolated_config)
        assert sim.mesh.n_nodes == 24
        assert len(sim.dirichlet) == 1
        assert len(sim.dirichlet[0].nodes) == 24
        np.testing.assert_allclose(sim.mu_table, [[0.3]])

    def test_contact_surface_retires(self, scene_dict, isolated_config):
        scene_dict = _with_slab(scene_dict)
        scene_dict["fem_objects"][0]["active_until"] = 0.5
        sim = Simulation(scene_from_dict(scene_dict), config=isolated_config)
        assert len(sim.contact_surface(0.0)) == len(sim.mesh.boundary_edges)
        assert len(sim.contact_surface(0.5)) == 0

    def test_empty_dirichlet_region_is_skipped(self, scene_dict, isolated_config):
        scene_dict = _with_slab(scene_dict)
        scene_dict["fem_objects"][0]["dirichlet"] = {"select": {"lo": [5.0, 5.0], "hi": [6.0, 6.0]}}
        sim = Simulation(scene_from_dict(scene_dict), config=isolated_config)
        assert sim.dirichlet == []


class TestStep:
    """One coupled step at a time."""

    def test_time_advances(self, scene_dict, isolated_config):
        sim = Simulation(scene_from_dict(scene_dict), config=isolated_config)
        report = sim.step()
        sim.step()
        assert sim.step_index == 2
        assert sim.time == pytest.approx(0.002)
        assert report.friction_iterations == 1
        assert report.min_iterate_distance == float("inf")

    def test_scripted_plate_moves_exactly(self, scene_dict, isolated_config):
        scene_dict["fem_objects"] = [{
            "id": "plate",
            "shape": {"kind": "plate", "lo": [0.1, 0.1], "hi": [0.2, 0.15]},
            "material": {"youngs_modulus": 1e6, "poisson_ratio": 0.3, "density": 1000.0},
            "dirichlet": {"script": {"velocity": [0.1, 0.0]}},
        }]
        sim = Simulation(scene_from_dict(scene_dict), config=isolated_config)
        for _ in range(3):
            sim.step()
        np.testing.assert_allclose(sim.mesh.positions, sim.mesh.rest + [0.0003, 0.0], atol=1e-12)
        np.testing.assert_allclose(sim.mesh.velocities, np.tile([0.1, 0.0], (4, 1)), atol=1e-9)

    def test_falling_block_stays_separated(self, scene_dict, isolated_config):
        sim = Simulation(scene_from_dict(_with_slab(scene_dict)), config=isolated_config)
        for _ in range(12):
            report = sim.step()
            assert report.min_iterate_distance > 0.0
        assert sim.particles.positions[:, 1].min() > 0.42
        # the slab has taken momentum out of the fall
        assert sim.particles.velocities[:, 1].mean() > -1.0 - 9.81 * 0.012
        np.testing.assert_allclose(sim.mesh.positions, sim.mesh.rest, atol=1e-12)


class TestRunSimulation:
    def test_step_count(self):
        assert step_count(0.004, 0.001) == 4
        assert step_count(1.8, 1e-3) == 1800

    def test_frames_written(self, scene_dict, isolated_config):
        writer = RecordingWriter()
        result = run_simulation(scene_from_dict(scene_dict), writer, config=isolated_config)
        assert result.status == 0
        assert result.steps == 4
        assert result.frames == 3
        assert [f[1] for f in writer.frames] == [0, 2, 4]
        assert writer.closed

    def test_last_partial_interval_is_written(self, scene_dict, isolated_config):
        scene_dict["output"]["frame_interval"] = 3
        writer = RecordingWriter()
        result = run_simulation(scene_from_dict(scene_dict), writer, config=isolated_config)
        assert [f[1] for f in writer.frames] == [0, 3, 4]
        assert result.frames == 3

    def test_solver_failure_flushes_state(self, scene_dict, isolated_config):
        """A block thrown out of the grid stops the run with status 3."""
        scene_dict["mpm_objects"][0]["velocity"] = [0.0, 50.0]
        scene_dict["integrator"]["end_time"] = 0.02
        scene_dict["output"]["frame_interval"] = 100
        writer = RecordingWriter()
        result = run_simulation(scene_from_dict(scene_dict), writer, config=isolated_config)
        assert result.status == 3
        assert result.steps == 10
        assert result.frames == 2
        assert result.error.startswith("step 10:")
        assert writer.frames[-1][1] == 10
        assert writer.closed

    def test_writes_csv_files(self, scene_dict, isolated_config, tmp_path):
        writer = FrameWriter(tmp_path / "run")
        run_simulation(scene_from_dict(scene_dict), writer, config=isolated_config)
        assert (tmp_path / "run" / "frame_000002_particles.csv").is_file()
        assert (tmp_path / "run" / "frame_000002_fem.csv").is_file()
        assert len(writer.diagnostics()) == 3

    def test_rerun_is_bitwise_identical(self, scene_dict, isolated_config, tmp_path):
        """The same scene run twice writes the same diagnostics file, byte for byte."""
        scene = scene_from_dict(_with_slab(scene_dict))
        outputs = []
        for name in ("first", "second"):
            writer = FrameWriter(tmp_path / name)
            assert run_simulation(scene, writer, config=isolated_config).status == 0
            outputs.append(writer.diagnostics_path.read_bytes())
        assert outputs[0] == outputs[1]
        assert len(outputs[0].splitlines()) == 5
