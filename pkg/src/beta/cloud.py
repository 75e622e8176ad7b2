"""Weighted point samples of a d-dimensional set in R^n."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Optional

import numpy as np
from scipy.linalg import null_space
from scipy.spatial import cKDTree

from src.geom.primitives import MAX_DIM, AffinePlane
from src.shared.errors import DimensionMismatchError, MissingNormalsError, NumericError
from src.shared.jsonio import require, require_matrix

UNIT_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class PointCloud:
    """
    Sample of E with H^d mass weights.

    `normals` (m, n) is only meaningful for d = n - 1; `tangents` (m, d, n)
    holds exact tangent frames when a generator knows them. `attributes`
    carries generator-specific per-point data (e.g. the snowflake angle ledger).
    """
    points: np.ndarray
    weights: np.ndarray
    intrinsic_dim: int
    normals: Optional[np.ndarray] = None
    tangents: Optional[np.ndarray] = None
    attributes: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.size == 0:
            points = points.reshape(0, points.shape[-1] if points.ndim == 2 else 0)
        if points.ndim != 2:
            raise DimensionMismatchError(f"points must be an (m, n) array, got shape {points.shape}")
        m, n = points.shape
        if m and not 1 <= n <= MAX_DIM:
            raise DimensionMismatchError(f"ambient dimension {n} outside 1..{MAX_DIM}")
        if m and not 1 <= self.intrinsic_dim < n:
            raise DimensionMismatchError(f"intrinsic dimension {self.intrinsic_dim} must satisfy 1 <= d < {n}")
        if not np.all(np.isfinite(points)):
            raise NumericError("point cloud holds non-finite coordinates")
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if weights.shape[0] != m:
            raise DimensionMismatchError(f"{weights.shape[0]} weights for {m} points")
        if np.any(weights <= 0) or not np.all(np.isfinite(weights)):
            raise NumericError("weights must be positive and finite")
        object.__setattr__(self, "points", _readonly(points))
        object.__setattr__(self, "weights", _readonly(weights))
        if self.normals is not None:
            normals = np.asarray(self.normals, dtype=float)
            if normals.shape != (m, n):
                raise DimensionMismatchError(f"normals of shape {normals.shape} for {m} points in R^{n}")
            if m and np.abs(np.linalg.norm(normals, axis=1) - 1.0).max() > UNIT_TOL:
                raise NumericError("normals must have unit length")
            object.__setattr__(self, "normals", _readonly(normals))
        if self.tangents is not None:
            tangents = np.asarray(self.tangents, dtype=float)
            if tangents.shape != (m, self.intrinsic_dim, n):
                raise DimensionMismatchError(f"tangent frames of shape {tangents.shape}")
            object.__setattr__(self, "tangents", _readonly(tangents))

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def n(self) -> int:
        return self.points.shape[1]

    @property
    def d(self) -> int:
        return self.intrinsic_dim

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    @cached_property
    def tree(self) -> cKDTree:
        return cKDTree(self.points)

    def ball_indices(self, x, r: float) -> np.ndarray:
        """Sorted indices of samples in the open ball B(x, r)."""
        if self.size == 0:
            return np.zeros(0, dtype=int)
        x = np.asarray(x, dtype=float)
        candidates = np.asarray(self.tree.query_ball_point(x, r), dtype=int)
        if candidates.size == 0:
            return candidates
        inside = np.linalg.norm(self.points[candidates] - x, axis=1) < r
        return np.sort(candidates[inside])

    def nearest_distance(self, z) -> np.ndarray:
        return self.tree.query(np.atleast_2d(np.asarray(z, dtype=float)))[0]

    def tangent_plane(self, index: int) -> AffinePlane:
        """Exact tangent plane at a sample, from frames or (for hypersurfaces) normals."""
        if self.tangents is not None:
            return AffinePlane(base=self.points[index], frame=self.tangents[index])
        if self.normals is not None and self.d == self.n - 1:
            plane = AffinePlane.from_directions(self.points[index], _complement(self.normals[index]))
            return plane
        raise MissingNormalsError("cloud carries neither tangent frames nor normals")

    def require_normals(self) -> np.ndarray:
        if self.normals is None:
            raise MissingNormalsError("this statistic needs unit normals on the cloud")
        if self.d != self.n - 1:
            raise MissingNormalsError(f"normals need d = n - 1, got d={self.d}, n={self.n}")
        return self.normals

    def subset(self, indices) -> "PointCloud":
        indices = np.asarray(indices, dtype=int)
        return PointCloud(
            points=self.points[indices],
            weights=self.weights[indices],
            intrinsic_dim=self.intrinsic_dim,
            normals=None if self.normals is None else self.normals[indices],
            tangents=None if self.tangents is None else self.tangents[indices],
        )

    def transformed(self, rotation=None, shift=None, scale: float = 1.0) -> "PointCloud":
        """Image under z -> scale * rotation z + shift; weights scale by scale^d."""
        rotation = np.eye(self.n) if rotation is None else np.asarray(rotation, dtype=float)
        shift = np.zeros(self.n) if shift is None else np.asarray(shift, dtype=float)
        return PointCloud(
            points=scale * self.points @ rotation.T + shift,
            weights=self.weights * scale**self.intrinsic_dim,
            intrinsic_dim=self.intrinsic_dim,
            normals=None if self.normals is None else self.normals @ rotation.T,
            tangents=None if self.tangents is None else self.tangents @ rotation.T,
        )

    def to_dict(self) -> dict:
        data: dict[str, Any] = {
            "intrinsic_dim": self.intrinsic_dim,
            "points": self.points.tolist(),
            "weights": self.weights.tolist(),
        }
        if self.normals is not None:
            data["normals"] = self.normals.tolist()
        if self.tangents is not None:
            data["tangents"] = self.tangents.tolist()
        if self.attributes:
            data["attributes"] = self.attributes
        return data

    @classmethod
    def from_dict(cls, data: dict, path: str = "cloud") -> "PointCloud":
        points = require_matrix(data, "points", path)
        intrinsic_dim = require(data, "intrinsic_dim", "int", path)
        if "weights" in data:
            weights = require_matrix(data, "weights", path, ndim=1)
        else:
            weights = np.ones(points.shape[0])
        normals = require_matrix(data, "normals", path) if "normals" in data else None
        tangents = require_matrix(data, "tangents", path, ndim=3) if "tangents" in data else None
        attributes = require(data, "attributes", "dict", path, default={})
        return cls(
            points=points,
            weights=weights,
            intrinsic_dim=intrinsic_dim,
            normals=normals,
            tangents=tangents,
            attributes=attributes,
        )


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


def _complement(normal: np.ndarray) -> np.ndarray:
    return null_space(normal[None, :]).T


def plane_cloud(plane: AffinePlane, half_width: float, pitch: float, density: float = 1.0) -> PointCloud:
    """Regular grid sample of a square patch of `plane`; each weight is pitch^d times density."""
    ticks = np.arange(-half_width, half_width + 0.5 * pitch, pitch)
    mesh = np.stack(np.meshgrid(*([ticks] * plane.d), indexing="ij"), axis=-1).reshape(-1, plane.d)
    points = plane.base + mesh @ plane.frame
    weights = np.full(points.shape[0], density * pitch**plane.d)
    tangents = np.broadcast_to(plane.frame, (points.shape[0], plane.d, plane.n))
    return PointCloud(points=points, weights=weights, intrinsic_dim=plane.d, tangents=tangents)
