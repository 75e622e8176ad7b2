"""
Affine planes, balls and boxes in R^n (1 <= n <= 8).

All types are frozen; arrays are copied and made read-only on construction.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import null_space

from src.shared.errors import DimensionMismatchError, NonOrthonormalFrameError, NumericError

MAX_DIM = 8
ORTHO_TOL = 1e-10


def as_vec(z, n: int | None = None) -> np.ndarray:
    """Coerce to a float vector (or stack of vectors) and check the trailing dimension."""
    arr = np.asarray(z, dtype=float)
    if arr.ndim == 0 or arr.ndim > 2:
        raise DimensionMismatchError(f"expected a vector or a stack of vectors, got shape {arr.shape}")
    if n is not None and arr.shape[-1] != n:
        raise DimensionMismatchError(f"expected dimension {n}, got {arr.shape[-1]}")
    if not np.all(np.isfinite(arr)):
        raise NumericError("non-finite coordinates")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


def orthonormalize(frame, tol: float = ORTHO_TOL) -> np.ndarray:
    """
    Modified Gram-Schmidt with a re-orthogonalization pass.

    Raises:
        NonOrthonormalFrameError: rows are (numerically) linearly dependent
    """
    rows = np.array(frame, dtype=float, copy=True)
    if rows.ndim == 1:
        rows = rows[None, :]
    d = rows.shape[0]
    for _ in range(2):
        for i in range(d):
            for j in range(i):
                rows[i] -= (rows[i] @ rows[j]) * rows[j]
            norm = np.linalg.norm(rows[i])
            if norm < tol:
                raise NonOrthonormalFrameError(f"frame vector {i} is dependent on the previous ones")
            rows[i] /= norm
    residual = np.abs(rows @ rows.T - np.eye(d)).max()
    if residual > tol:
        raise NonOrthonormalFrameError(f"orthonormalization residual {residual:.3e} exceeds {tol:.0e}")
    return rows


def check_orthonormal(frame: np.ndarray, tol: float = ORTHO_TOL) -> None:
    gram = frame @ frame.T
    residual = np.abs(gram - np.eye(frame.shape[0])).max()
    if residual > tol:
        raise NonOrthonormalFrameError(f"frame is not orthonormal (residual {residual:.3e})")


@dataclass(frozen=True, eq=False)
class AffinePlane:
    """A d-plane: base point plus an orthonormal (d, n) direction frame."""
    base: np.ndarray
    frame: np.ndarray

    def __post_init__(self):
        base = as_vec(self.base)
        frame = np.asarray(self.frame, dtype=float)
        if base.ndim != 1:
            raise DimensionMismatchError("plane base must be a single vector")
        if frame.ndim == 1:
            frame = frame[None, :]
        n = base.shape[0]
        if not 1 <= n <= MAX_DIM:
            raise DimensionMismatchError(f"ambient dimension {n} outside 1..{MAX_DIM}")
        if frame.shape[1] != n:
            raise DimensionMismatchError(f"frame has dimension {frame.shape[1]}, base has {n}")
        if not 1 <= frame.shape[0] < n:
            raise DimensionMismatchError(f"plane dimension {frame.shape[0]} must satisfy 1 <= d < {n}")
        check_orthonormal(frame)
        object.__setattr__(self, "base", _frozen(base))
        object.__setattr__(self, "frame", _frozen(frame))

    @classmethod
    def from_directions(cls, base, directions) -> "AffinePlane":
        """Plane through `base` spanned by arbitrary independent directions."""
        return cls(base=np.asarray(base, dtype=float), frame=orthonormalize(directions))

    @property
    def n(self) -> int:
        return self.base.shape[0]

    @property
    def d(self) -> int:
        return self.frame.shape[0]

    @cached_property
    def projector(self) -> np.ndarray:
        """Orthogonal projector onto the direction space (the differential of project)."""
        return self.frame.T @ self.frame

    @cached_property
    def normal_projector(self) -> np.ndarray:
        return np.eye(self.n) - self.projector

    def normal_frame(self) -> np.ndarray:
        """Orthonormal basis (n-d, n) of the orthogonal complement."""
        return null_space(self.frame).T

    def through(self, point) -> "AffinePlane":
        """Parallel plane through `point`."""
        return AffinePlane(base=as_vec(point, self.n), frame=self.frame)

    def coordinates(self, z) -> np.ndarray:
        """Tangential coordinates of z relative to the base."""
        return (as_vec(z, self.n) - self.base) @ self.frame.T

    def point_at(self, u) -> np.ndarray:
        return self.base + np.asarray(u, dtype=float) @ self.frame

    def distance(self, z) -> np.ndarray:
        return np.linalg.norm(perp_project(self, z), axis=-1)

    def contains(self, z, tol: float = 1e-12) -> bool:
        return bool(np.all(self.distance(z) <= tol * max(1.0, float(np.abs(z).max()))))

    def to_dict(self) -> dict:
        return {"base": self.base.tolist(), "frame": self.frame.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "AffinePlane":
        return cls(base=np.asarray(data["base"], dtype=float), frame=np.asarray(data["frame"], dtype=float))

    def __repr__(self) -> str:
        return f"AffinePlane(n={self.n}, d={self.d}, base={self.base.tolist()})"


def project(plane: AffinePlane, z) -> np.ndarray:
    """Orthogonal projection pi(z) onto the plane; accepts (n,) or (m, n)."""
    z = as_vec(z, plane.n)
    return plane.base + (z - plane.base) @ plane.projector


def perp_project(plane: AffinePlane, z) -> np.ndarray:
    """Normal component of z - base, so that project(z) + perp_project(z) = z."""
    z = as_vec(z, plane.n)
    return (z - plane.base) @ plane.normal_projector


@dataclass(frozen=True, eq=False)
class Ball:
    """Open ball B(center, radius)."""
    center: np.ndarray
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise NumericError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", _frozen(as_vec(self.center)))
        object.__setattr__(self, "radius", float(self.radius))

    def dilate(self, factor: float) -> "Ball":
        return Ball(self.center, self.radius * factor)

    def contains(self, z) -> np.ndarray:
        return np.linalg.norm(as_vec(z, self.center.shape[0]) - self.center, axis=-1) < self.radius


@dataclass(frozen=True, eq=False)
class Box:
    """D(x, P, R): points whose tangential and normal offsets from x are both below R."""
    plane: AffinePlane
    half_width: float

    def __post_init__(self):
        if not self.half_width > 0:
            raise NumericError(f"box half width must be positive, got {self.half_width}")

    def split(self, z) -> tuple[np.ndarray, np.ndarray]:
        """Tangential coordinates and normal offset vectors relative to the box center."""
        offsets = as_vec(z, self.plane.n) - self.plane.base
        return offsets @ self.plane.frame.T, offsets @ self.plane.normal_projector

    def contains(self, z) -> np.ndarray:
        u, h = self.split(z)
        return (np.linalg.norm(u, axis=-1) < self.half_width) & (np.linalg.norm(h, axis=-1) < self.half_width)


def box_points(box: Box, points) -> np.ndarray:
    """Indices of the rows of `points` inside the box."""
    return np.flatnonzero(box.contains(np.atleast_2d(points)))


def coordinate_plane(n: int, d: int, base=None) -> AffinePlane:
    """The plane spanned by the first d coordinate axes, through `base` (origin by default)."""
    base = np.zeros(n) if base is None else np.asarray(base, dtype=float)
    return AffinePlane(base=base, frame=np.eye(n)[:d])
