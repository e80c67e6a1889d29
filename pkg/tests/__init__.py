"""Tests for mpmfem."""
