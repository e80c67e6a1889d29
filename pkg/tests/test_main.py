"""Tests for the command line entry point."""

import json

import pandas as pd
import pytest

from mpmfem.main import EXIT_INVALID, EXIT_OK, EXIT_SOLVER, main, parse_args
from tests.conftest import MINIMAL_SCENE


@pytest.fixture
def scene_file(tmp_path, scene_dict):
    """Write a scene dict to disk and return the path factory."""

    def write(data=None, name="scene.json"):
        path = tmp_path / name
        path.write_text(json.dumps(scene_dict if data is None else data), encoding="utf-8")
        return path

    return write


class TestParseArgs:
    def test_run_options(self):
        args = parse_args(["run", "minimal_box", "--end-time", "0.5", "--transfer", "flip", "--desk-scale"])
        assert args.command == "run"
        assert args.scene == "minimal_box"
        assert args.end_time == 0.5
        assert args.transfer == "flip"
        assert args.desk_scale

    def test_command_required(self):
        with pytest.raises(SystemExit):
            parse_args([])

    def test_bad_transfer(self):
        with pytest.raises(SystemExit):
            parse_args(["run", "minimal_box", "--transfer", "mls"])


class TestValidateCommand:
    def test_bundled(self, isolated_config, capsys):
        assert main(["validate", "minimal_box"]) == EXIT_OK
        assert capsys.readouterr().out.strip() == "minimal_box: ok"

    def test_file(self, isolated_config, scene_file, capsys):
        assert main(["validate", str(scene_file())]) == EXIT_OK
        assert "tiny_box: ok" in capsys.readouterr().out

    def test_every_problem_reported(self, isolated_config, scene_file, scene_dict, capsys):
        scene_dict["mpm_objects"][0]["ppc"] = 5
        scene_dict["grid"]["dx"] = -1.0
        assert main(["validate", str(scene_file(scene_dict))]) == EXIT_INVALID
        err = capsys.readouterr().err
        assert "grid.dx" in err
        assert "ppc" in err

    def test_malformed(self, isolated_config, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text('{"name": "x",\n "grid": }', encoding="utf-8")
        assert main(["validate", str(path)]) == EXIT_INVALID
        assert "line 2" in capsys.readouterr().err

    def test_unknown_name(self, isolated_config, capsys):
        assert main(["validate", "no_such_scene"]) == EXIT_INVALID


class TestListCommand:
    def test_lists_bundled(self, isolated_config, capsys):
        assert main(["list"]) == EXIT_OK
        names = capsys.readouterr().out.split()
        assert "minimal_box" in names
        assert "stacking" in names


class TestRunCommand:
    def test_writes_frames(self, isolated_config, scene_file, tmp_path, capsys):
        out = tmp_path / "frames"
        assert main(["run", str(scene_file()), "--output-dir", str(out)]) == EXIT_OK
        assert "4 steps, 3 frames" in capsys.readouterr().out
        diagnostics = pd.read_csv(out / "diagnostics.csv")
        assert diagnostics["step"].tolist() == [0, 2, 4]

    def test_default_directory_from_config(self, isolated_config, scene_file):
        assert main(["run", str(scene_file())]) == EXIT_OK
        assert (isolated_config.output_dir / MINIMAL_SCENE["name"] / "diagnostics.csv").is_file()

    def test_overrides(self, isolated_config, scene_file, tmp_path):
        out = tmp_path / "frames"
        argv = ["run", str(scene_file()), "--output-dir", str(out), "--end-time", "0.002", "--frames-per-second", "1000"]
        assert main(argv) == EXIT_OK
        assert pd.read_csv(out / "diagnostics.csv")["step"].tolist() == [0, 1, 2]

    def test_empty_shape_is_invalid(self, isolated_config, scene_file, scene_dict, tmp_path, capsys):
        """A valid box too thin to hold a particle fails while building the scene."""
        scene_dict["mpm_objects"][0]["shape"] = {"kind": "box", "lo": [0.3, 0.3], "hi": [0.6, 0.31]}
        argv = ["run", str(scene_file(scene_dict)), "--output-dir", str(tmp_path / "frames")]
        assert main(argv) == EXIT_INVALID
        assert "no sub-cell centre" in capsys.readouterr().err

    def test_solver_failure(self, isolated_config, scene_file, scene_dict, tmp_path, capsys):
        scene_dict["mpm_objects"][0]["velocity"] = [0.0, 50.0]
        scene_dict["integrator"]["end_time"] = 0.02
        out = tmp_path / "frames"
        assert main(["run", str(scene_file(scene_dict)), "--output-dir", str(out)]) == EXIT_SOLVER
        assert "solver failure at step 10" in capsys.readouterr().err
        assert pd.read_csv(out / "diagnostics.csv")["step"].iloc[-1] == 10
