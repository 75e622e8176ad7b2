"""Plane families P_k(x): one d-plane through each sampled point at every scale."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from src.beta.cloud import PointCloud
from src.beta.fitting import fit_plane_minimax
from src.geom.primitives import AffinePlane
from src.nets.multiscale import scale


@dataclass(eq=False)
class PlaneFamily:
    """frames[i, k] is the direction frame of P_k at cloud point indices[i]."""
    points: np.ndarray
    indices: np.ndarray
    frames: np.ndarray

    @property
    def depth(self) -> int:
        return self.frames.shape[1] - 1

    def position(self, point_id: int) -> int:
        hits = np.flatnonzero(self.indices == point_id)
        if not hits.size:
            raise KeyError(f"point {point_id} is not part of the family")
        return int(hits[0])

    def point(self, i: int) -> np.ndarray:
        return self.points[i]

    def plane(self, i: int, k: int) -> AffinePlane:
        return AffinePlane(base=self.points[i], frame=self.frames[i, k])


def _default_indices(cloud: PointCloud, indices: Optional[Sequence[int]]) -> np.ndarray:
    return np.arange(cloud.size) if indices is None else np.asarray(indices, dtype=int)


def tangent_family(
    cloud: PointCloud,
    depth: int,
    indices: Optional[Sequence[int]] = None,
    coarse_plane: Optional[AffinePlane] = None,
    switch_level: int = 0,
) -> PlaneFamily:
    """
    Exact tangent planes at every scale; with `coarse_plane`, levels below
    `switch_level` use its direction instead.
    """
    indices = _default_indices(cloud, indices)
    frames = np.zeros((len(indices), depth + 1, cloud.d, cloud.n))
    for i, point_id in enumerate(indices):
        tangent = cloud.tangent_plane(int(point_id)).frame
        for k in range(depth + 1):
            use_coarse = coarse_plane is not None and k < switch_level
            frames[i, k] = coarse_plane.frame if use_coarse else tangent
    return PlaneFamily(points=cloud.points[indices], indices=indices, frames=frames)


def fitted_family(cloud: PointCloud, depth: int, indices: Optional[Sequence[int]] = None) -> PlaneFamily:
    """Minimax planes through each point over B(x, r_k)."""
    indices = _default_indices(cloud, indices)
    frames = np.zeros((len(indices), depth + 1, cloud.d, cloud.n))
    for i, point_id in enumerate(indices):
        x = cloud.points[point_id]
        for k in range(depth + 1):
            frames[i, k] = fit_plane_minimax(cloud, x, scale(k)).plane.frame
    return PlaneFamily(points=cloud.points[indices], indices=indices, frames=frames)
