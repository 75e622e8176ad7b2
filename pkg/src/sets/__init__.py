"""Deterministic generators of test sets with exact measure weights."""
