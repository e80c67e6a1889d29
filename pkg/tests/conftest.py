"""Pytest configuration and fixtures."""

import copy

import numpy as np
import pytest

from mpmfem.config import Config
from mpmfem.core.fem import FemMesh
from mpmfem.core.models import Material
from mpmfem.core.mpm import Grid, sample_particles
from mpmfem.domain.shapes import BoxShape

MINIMAL_SCENE = {
    "name": "tiny_box",
    "grid": {"origin": [0.0, 0.0], "extent": [1.0, 1.0], "dx": 0.1},
    "integrator": {"preset": "backward_euler", "dt": 0.001, "end_time": 0.004},
    "gravity": [0.0, -9.81],
    "contact": {"dhat": 0.001, "kappa": 100000.0},
    "mpm_objects": [
        {
            "id": "box",
            "shape": {"kind": "box", "lo": [0.3, 0.3], "hi": [0.6, 0.5]},
            "material": {"youngs_modulus": 100000.0, "poisson_ratio": 0.3, "density": 1000.0},
            "ppc": 4,
        }
    ],
    "output": {"frame_interval": 2},
}


@pytest.fixture
def material():
    """A soft neo-Hookean material."""
    return Material(youngs_modulus=1e5, poisson_ratio=0.3, density=1000.0)


@pytest.fixture
def square_mesh(material):
    """Unit square meshed with 2x2 quads (8 triangles)."""
    vertices, triangles = BoxShape(lo=(0.0, 0.0), hi=(1.0, 1.0)).triangulate(0.5)
    return FemMesh.from_arrays(vertices, triangles, material)


@pytest.fixture
def grid():
    """2 m x 2 m lattice with 0.1 m spacing."""
    return Grid(origin=np.zeros(2), extent=np.array([2.0, 2.0]), dx=0.1)


@pytest.fixture
def particles(grid, material):
    """100 particles filling [0.5, 1.0]^2."""
    return sample_particles(BoxShape(lo=(0.5, 0.5), hi=(1.0, 1.0)), grid.dx, 4, material)


@pytest.fixture
def scene_dict():
    """A small valid scene: one MPM box falling under gravity."""
    return copy.deepcopy(MINIMAL_SCENE)


@pytest.fixture
def isolated_config(tmp_path, monkeypatch):
    """Process configuration writing into a temporary directory."""
    config = Config(
        output_dir=tmp_path / "output",
        log_file=tmp_path / "mpmfem.log",
        debug_checks=True,
        linear_solver="splu",
    )
    monkeypatch.setattr("mpmfem.config._config", config)
    return config
