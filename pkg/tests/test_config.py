"""Tests for config.py."""

import logging
from pathlib import Path

from mpmfem.config import Config, configure_logging, get_config


class TestConfig:
    """Environment-driven process settings."""

    def test_defaults(self, monkeypatch):
        """Test defaults with no MPMFEM_* variables set."""
        for name in ("MPMFEM_OUTPUT_DIR", "MPMFEM_LOG_LEVEL", "MPMFEM_DEBUG_CHECKS", "MPMFEM_LINEAR_SOLVER"):
            monkeypatch.delenv(name, raising=False)
        config = Config()
        assert config.output_dir == Path("output")
        assert config.log_level == logging.INFO
        assert config.debug_checks is False
        assert config.linear_solver == "auto"

    def test_environment(self, monkeypatch, tmp_path):
        """Test values read from the environment."""
        monkeypatch.setenv("MPMFEM_OUTPUT_DIR", str(tmp_path))
        monkeypatch.setenv("MPMFEM_DEBUG_CHECKS", "yes")
        monkeypatch.setenv("MPMFEM_LINEAR_SOLVER", "SPLU")
        monkeypatch.setenv("MPMFEM_LOG_LEVEL", "debug")
        config = Config()
        assert config.output_dir == tmp_path
        assert config.debug_checks is True
        assert config.linear_solver == "splu"
        assert config.log_level == logging.DEBUG

    def test_unknown_solver_falls_back(self, monkeypatch):
        monkeypatch.setenv("MPMFEM_LINEAR_SOLVER", "pardiso")
        assert Config().linear_solver == "auto"

    def test_singleton(self, isolated_config):
        assert get_config() is isolated_config

    def test_configure_logging_accepts_unknown_level(self, isolated_config):
        isolated_config.log_level = "Level NOPE"
        configure_logging()
