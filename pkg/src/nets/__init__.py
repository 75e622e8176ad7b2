"""Multiscale nets, coherent plane collections and their audits."""
