"""
The construction maps.

sigma_k(y) = y + sum_j theta_{j,k}(y) (pi_{j,k}(y) - y),  f_0 = id,
f_{k+1} = sigma_k o f_k, and f := f_K for the configured depth K.
Each step moves points by at most 10 r_k, so |f - f_inf| <= (10/9) 10 r_K.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from src.beta.statistics import eps_profiles
from src.geom.primitives import AffinePlane, orthonormalize
from src.nets.ccbp import Ccbp
from src.nets.multiscale import scale
from src.shared.errors import DimensionMismatchError
from src.unity.partition import partition_many

log = logging.getLogger(__name__)

CHUNK_SIZE = 2048
STEP_FACTOR = 10.0


class Region:
    CORE = "V8"
    SHELL = "V10"
    OUTSIDE = "outside"


@dataclass
class Trajectory:
    """States z_k = f_k(z) for k = 0..upto, with per-step data."""
    z: np.ndarray
    states: np.ndarray
    displacements: np.ndarray
    tags: list[str]
    tail_bound: float
    jacobians: Optional[np.ndarray] = None

    @property
    def image(self) -> np.ndarray:
        return self.states[-1]

    def frozen_after(self) -> Optional[int]:
        """First step k whose state lies outside V_k^10, if any."""
        for k, tag in enumerate(self.tags):
            if tag == Region.OUTSIDE:
                return k
        return None

    def to_dict(self) -> dict:
        return {
            "z": self.z.tolist(),
            "states": self.states.tolist(),
            "displacements": self.displacements.tolist(),
            "tags": self.tags,
            "tail_bound": self.tail_bound,
        }


@dataclass(eq=False)
class ParamMap:
    ccbp: Ccbp
    depth: Optional[int] = None
    threads: int = 1
    chunk_size: int = CHUNK_SIZE
    _identity: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.depth is None:
            self.depth = self.ccbp.depth
        if self.depth > self.ccbp.depth:
            raise DimensionMismatchError(f"depth {self.depth} exceeds CCBP depth {self.ccbp.depth}")
        self._identity = np.eye(self.ccbp.n)
        for k in range(self.ccbp.depth + 1):
            self.ccbp.net.grid(k)

    @property
    def n(self) -> int:
        return self.ccbp.n

    @property
    def sigma0(self) -> AffinePlane:
        return self.ccbp.sigma0

    def tail_bound(self, upto: Optional[int] = None) -> float:
        upto = self.depth if upto is None else upto
        return (10.0 / 9.0) * STEP_FACTOR * scale(upto)

    def _level(self, k: int, Y: np.ndarray, jacobian: bool):
        level = partition_many(self.ccbp.net, k, Y)
        rows, cols = level.rows, level.cols
        if not len(rows):
            images = Y.copy()
            return images, (np.broadcast_to(self._identity, (len(Y), self.n, self.n)).copy() if jacobian else None)
        centers = self.ccbp.centers(k)[cols]
        projectors = self.ccbp.projectors(k)[cols]
        offsets = Y[rows] - centers
        # pi_j(y) - y = -(I - P_j)(y - x_j)
        moves = np.einsum("pij,pj->pi", projectors, offsets) - offsets
        images = Y.copy()
        np.add.at(images, rows, level.theta[:, None] * moves)
        if not jacobian:
            return images, None
        D = np.broadcast_to(self._identity, (len(Y), self.n, self.n)).copy()
        np.add.at(D, rows, level.theta[:, None, None] * (projectors - self._identity))
        np.add.at(D, rows, moves[:, :, None] * level.grad_theta[:, None, :])
        return images, D

    def sigma_many(self, k: int, Y) -> np.ndarray:
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        return self._level(k, Y, jacobian=False)[0]

    def dsigma_many(self, k: int, Y) -> np.ndarray:
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        return self._level(k, Y, jacobian=True)[1]

    def sigma(self, k: int, y) -> np.ndarray:
        return self.sigma_many(k, y)[0]

    def dsigma(self, k: int, y) -> np.ndarray:
        return self.dsigma_many(k, y)[0]

    def region_tags(self, k: int, Y) -> list[str]:
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        core = self.ccbp.net.in_neighbourhood(Y, k, 8.0)
        shell = self.ccbp.net.in_neighbourhood(Y, k, 10.0)
        return [Region.CORE if c else Region.SHELL if s else Region.OUTSIDE for c, s in zip(core, shell)]

    def evaluate(self, z, upto: Optional[int] = None, jacobian: bool = False) -> Trajectory:
        """z_0 = z, z_{k+1} = sigma_k(z_k) for k < upto; Df_k by the chain rule on request."""
        upto = self.depth if upto is None else upto
        z = np.asarray(z, dtype=float)
        states = [z.copy()]
        tags: list[str] = []
        jacobians = [self._identity.copy()] if jacobian else None
        current = z[None, :]
        for k in range(upto):
            tags.append(self.region_tags(k, current)[0])
            images, D = self._level(k, current, jacobian)
            if jacobian:
                jacobians.append(D[0] @ jacobians[-1])
            current = images
            states.append(current[0].copy())
        states_arr = np.asarray(states)
        return Trajectory(
            z=z,
            states=states_arr,
            displacements=np.linalg.norm(np.diff(states_arr, axis=0), axis=1),
            tags=tags,
            tail_bound=self.tail_bound(upto),
            jacobians=None if jacobians is None else np.asarray(jacobians),
        )

    def _evaluate_chunk(self, Z: np.ndarray, upto: int, jacobian: bool):
        current = Z.copy()
        J = np.broadcast_to(self._identity, (len(Z), self.n, self.n)).copy() if jacobian else None
        for k in range(upto):
            current, D = self._level(k, current, jacobian)
            if jacobian:
                J = np.einsum("mij,mjk->mik", D, J)
        return current, J

    def evaluate_many(self, Z, upto: Optional[int] = None, jacobian: bool = False, threads: Optional[int] = None):
        """
        f_upto on a batch. Chunks run on a thread pool and are reassembled in
        input order, so results do not depend on the thread count.
        Returns images, or (images, jacobians) when jacobian=True.
        """
        upto = self.depth if upto is None else upto
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if Z.shape[1] != self.n:
            raise DimensionMismatchError(f"queries in R^{Z.shape[1]}, map in R^{self.n}")
        chunks = [Z[i : i + self.chunk_size] for i in range(0, len(Z), self.chunk_size)] or [Z]
        workers = max(1, threads or self.threads)
        if workers == 1 or len(chunks) == 1:
            results = [self._evaluate_chunk(chunk, upto, jacobian) for chunk in chunks]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(lambda chunk: self._evaluate_chunk(chunk, upto, jacobian), chunks))
        images = np.concatenate([r[0] for r in results]) if results else Z.copy()
        if not jacobian:
            return images
        return images, np.concatenate([r[1] for r in results])

    def history_many(self, Z, upto: Optional[int] = None, jacobian: bool = False):
        """f_k(Z) for k = 0..upto (and Df_k(Z) on request), as per-level lists."""
        upto = self.depth if upto is None else upto
        current = np.atleast_2d(np.asarray(Z, dtype=float))
        J = np.broadcast_to(self._identity, (len(current), self.n, self.n)).copy() if jacobian else None
        images, jacobians = [current], [J]
        for k in range(upto):
            current, D = self._level(k, current, jacobian)
            if jacobian:
                J = np.einsum("mij,mjk->mik", D, J)
            images.append(current)
            jacobians.append(J)
        return (images, jacobians) if jacobian else images

    def tangent_frame(self, jacobian: np.ndarray) -> np.ndarray:
        """Orthonormalized pushforward of Sigma_0's frame by Df_k."""
        return orthonormalize(self.sigma0.frame @ jacobian.T)


def evaluate(pm: ParamMap, z, upto: Optional[int] = None, jacobian: bool = False) -> Trajectory:
    return pm.evaluate(z, upto, jacobian)


def sigma(pm: ParamMap, k: int, y) -> np.ndarray:
    return pm.sigma(k, y)


def dsigma(pm: ParamMap, k: int, y) -> np.ndarray:
    return pm.dsigma(k, y)


@dataclass(frozen=True)
class SurfaceGrid:
    """Regular grid on Sigma_0: points (m, n), tangential coords (m, d) and pitch."""
    points: np.ndarray
    coords: np.ndarray
    pitch: float


def sigma0_grid(plane: AffinePlane, half_width: float, pitch: float, center=None) -> SurfaceGrid:
    center = plane.base if center is None else np.asarray(center, dtype=float)
    origin = plane.base + plane.coordinates(center) @ plane.frame
    ticks = np.arange(-half_width, half_width + 0.5 * pitch, pitch)
    coords = np.stack(np.meshgrid(*([ticks] * plane.d), indexing="ij"), axis=-1).reshape(-1, plane.d)
    return SurfaceGrid(points=origin + coords @ plane.frame, coords=coords, pitch=pitch)


@dataclass(frozen=True)
class SurfaceSample:
    """f_k images of a Sigma_0 grid; source[i] is the grid node of points[i]."""
    points: np.ndarray
    source: np.ndarray
    coords: np.ndarray
    k: int
    pitch: float

    @property
    def half_width(self) -> float:
        return float(np.abs(self.coords).max()) if self.coords.size else 0.0

    def to_rows(self) -> list[dict]:
        return [
            {"source": int(s), **{f"x{i}": float(v) for i, v in enumerate(p)}}
            for s, p in zip(self.source, self.points)
        ]


def surface_sample(pm: ParamMap, grid: SurfaceGrid, k: Optional[int] = None) -> SurfaceSample:
    k = pm.depth if k is None else k
    images = pm.evaluate_many(grid.points, upto=k)
    return SurfaceSample(points=images, source=np.arange(len(images)), coords=grid.coords, k=k, pitch=grid.pitch)


def tangential_stretch(pm: ParamMap, k: int, y, v) -> float:
    """| |D sigma_k(y) v| - 1 | for a unit vector v."""
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    return abs(float(np.linalg.norm(pm.dsigma(k, y) @ v)) - 1.0)


def eps_prime_sum(pm: ParamMap, z) -> float:
    """sum_{k=0..K} eps'_k(f_k(z))^2 along the trajectory of z."""
    trajectory = pm.evaluate(z)
    total = 0.0
    for k, state in enumerate(trajectory.states):
        total += eps_profiles(pm.ccbp, state, k).eps_prime_k ** 2
    return total
