"""Bundled scene files, loaded through importlib.resources."""
