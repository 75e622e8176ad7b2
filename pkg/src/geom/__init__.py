"""Affine planes, balls, boxes and the local distance functionals."""
from src.geom.distances import (
    grassmann_distance,
    plane_angle,
    plane_cap_sample,
    plane_local_distance,
    set_local_distance,
)
from src.geom.primitives import (
    AffinePlane,
    Ball,
    Box,
    box_points,
    coordinate_plane,
    orthonormalize,
    perp_project,
    project,
)

__all__ = [
    "AffinePlane",
    "Ball",
    "Box",
    "box_points",
    "coordinate_plane",
    "grassmann_distance",
    "orthonormalize",
    "perp_project",
    "plane_angle",
    "plane_cap_sample",
    "plane_local_distance",
    "project",
    "set_local_distance",
]
