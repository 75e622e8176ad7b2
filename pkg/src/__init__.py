"""Reifenberg parameterization toolkit: nets, plane families, maps and beta diagnostics."""

__version__ = "0.1.0"
