"""
Multiscale nets {x_{j,k}} at scales r_k = 10^-k, with per-level grid indices.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree

from src.beta.cloud import PointCloud
from src.shared.errors import DimensionMismatchError
from src.shared.jsonio import require, require_matrix

log = logging.getLogger(__name__)

CELL_FACTOR = 10.0

# keep(points, k) -> boolean mask over the rows of points
KeepPredicate = Callable[[np.ndarray, int], np.ndarray]


def scale(k: int) -> float:
    return 10.0 ** (-k)


class GridIndex:
    """
    Uniform grid hash over one level's centers.

    Cell size is CELL_FACTOR * r_k; every coherence condition and every
    partition-of-unity support pairs centers within 100 r_k, so queries touch
    a bounded number of cells.
    """

    def __init__(self, centers: np.ndarray, r: float, cell_factor: float = CELL_FACTOR):
        self.centers = np.asarray(centers, dtype=float)
        self.cell = cell_factor * r
        self.n = self.centers.shape[1] if self.centers.ndim == 2 else 0
        self._cells: dict[tuple[int, ...], np.ndarray] = {}
        if len(self.centers):
            keys = np.floor(self.centers / self.cell).astype(np.int64)
            buckets: dict[tuple[int, ...], list[int]] = {}
            for index, key in enumerate(map(tuple, keys)):
                buckets.setdefault(key, []).append(index)
            self._cells = {key: np.asarray(value, dtype=int) for key, value in buckets.items()}

    def __len__(self) -> int:
        return len(self.centers)

    def _candidate_cells(self, key: tuple[int, ...], span: int) -> list[np.ndarray]:
        if (2 * span + 1) ** self.n > len(self._cells):
            return [
                members
                for other, members in self._cells.items()
                if max(abs(a - b) for a, b in zip(other, key)) <= span
            ]
        found = []
        for offset in itertools.product(range(-span, span + 1), repeat=self.n):
            members = self._cells.get(tuple(a + b for a, b in zip(key, offset)))
            if members is not None:
                found.append(members)
        return found

    def query(self, y, radius: float) -> tuple[np.ndarray, np.ndarray]:
        """Sorted indices of centers with |c - y| < radius, and their distances."""
        qi, cj, dist = self.query_many(np.atleast_2d(np.asarray(y, dtype=float)), radius)
        return cj, dist

    def query_many(self, Y: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        All (query, center) pairs with |c - y| < radius, as parallel arrays
        sorted by query index then center index.
        """
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        empty = (np.zeros(0, dtype=int), np.zeros(0, dtype=int), np.zeros(0))
        if not len(self.centers) or not len(Y):
            return empty
        if Y.shape[1] != self.n:
            raise DimensionMismatchError(f"query dimension {Y.shape[1]} != index dimension {self.n}")
        span = max(1, math.ceil(radius / self.cell))
        keys = np.floor(Y / self.cell).astype(np.int64)
        unique, inverse = np.unique(keys, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        qs, cs, ds = [], [], []
        for group, key in enumerate(map(tuple, unique)):
            cells = self._candidate_cells(key, span)
            if not cells:
                continue
            candidates = np.sort(np.concatenate(cells))
            rows = np.flatnonzero(inverse == group)
            dist = np.linalg.norm(Y[rows, None, :] - self.centers[None, candidates, :], axis=2)
            hit_r, hit_c = np.nonzero(dist < radius)
            qs.append(rows[hit_r])
            cs.append(candidates[hit_c])
            ds.append(dist[hit_r, hit_c])
        if not qs:
            return empty
        qi, cj, dist = np.concatenate(qs), np.concatenate(cs), np.concatenate(ds)
        order = np.lexsort((cj, qi))
        return qi[order], cj[order], dist[order]

    def nearest_distance(self, Y: np.ndarray, radius: float) -> np.ndarray:
        """Distance to the nearest center, or inf when none lies within `radius`."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        out = np.full(len(Y), np.inf)
        qi, _, dist = self.query_many(Y, radius)
        if len(qi):
            np.minimum.at(out, qi, dist)
        return out

    def pairs_within(self, radius: float, closed: bool = True) -> tuple[np.ndarray, np.ndarray]:
        """Center pairs (i, j), i != j, with |c_i - c_j| <= radius (or < when open)."""
        bound = np.nextafter(radius, np.inf) if closed else radius
        qi, cj, _ = self.query_many(self.centers, bound)
        keep = qi != cj
        return qi[keep], cj[keep]


@dataclass(eq=False)
class MultiscaleNet:
    """Centers x_{j,k} for k = 0..depth; level k is an (m_k, n) array."""
    levels: list[np.ndarray]
    n: int
    _grids: dict[int, GridIndex] = field(default_factory=dict, repr=False)

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    def centers(self, k: int) -> np.ndarray:
        return self.levels[k]

    def grid(self, k: int) -> GridIndex:
        if k not in self._grids:
            self._grids[k] = GridIndex(self.levels[k], scale(k))
        return self._grids[k]

    def counts(self) -> list[int]:
        return [len(level) for level in self.levels]

    def in_neighbourhood(self, Y, k: int, lam: float) -> np.ndarray:
        """Membership in V_k^lam, the union of the open balls lam * B_{j,k}."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if k > self.depth or not len(self.levels[k]):
            return np.zeros(len(Y), dtype=bool)
        return self.grid(k).nearest_distance(Y, lam * scale(k)) < lam * scale(k)

    def structural_violations(self) -> list[dict]:
        """Every breach of separation |x_i - x_j| >= r_k and nesting x_{j,k} in V_{k-1}^2."""
        violations: list[dict] = []
        for k, level in enumerate(self.levels):
            if len(level) < 2:
                continue
            qi, cj = self.grid(k).pairs_within(scale(k), closed=False)
            for i, j in zip(qi, cj):
                if i < j:
                    violations.append(
                        {
                            "condition": "separation",
                            "k": k,
                            "indices": [int(i), int(j)],
                            "value": float(np.linalg.norm(level[i] - level[j]) / scale(k)),
                        }
                    )
        for k in range(1, len(self.levels)):
            if not len(self.levels[k]):
                continue
            inside = self.in_neighbourhood(self.levels[k], k - 1, 2.0)
            for j in np.flatnonzero(~inside):
                violations.append({"condition": "nesting", "k": k, "indices": [int(j)], "value": None})
        return violations

    def to_dict(self) -> dict:
        return {"n": self.n, "levels": [level.tolist() for level in self.levels]}

    @classmethod
    def from_dict(cls, data: dict, path: str = "net") -> "MultiscaleNet":
        n = require(data, "n", "int", path)
        raw_levels = require(data, "levels", "list", path)
        levels = []
        for k, raw in enumerate(raw_levels):
            level = require_matrix({"level": raw}, "level", f"{path}.levels[{k}]")
            levels.append(level.reshape(-1, n))
        return cls(levels=levels, n=n)


def greedy_net(points: np.ndarray, r: float) -> np.ndarray:
    """
    Maximal r-separated subset, scanned in lexicographic coordinate order
    (ties by input index). Returns the selected row indices in scan order.
    """
    if not len(points):
        return np.zeros(0, dtype=int)
    order = np.lexsort(points.T[::-1])
    tree = cKDTree(points)
    blocked = np.zeros(len(points), dtype=bool)
    chosen: list[int] = []
    block_radius = np.nextafter(r, 0.0)
    for index in order:
        if blocked[index]:
            continue
        chosen.append(int(index))
        blocked[tree.query_ball_point(points[index], block_radius)] = True
    return np.asarray(chosen, dtype=int)


def build_net(cloud: PointCloud, depth: int, keep: Optional[KeepPredicate] = None) -> MultiscaleNet:
    """
    Greedy maximal nets of the nested sets E_k = {p : keep(p, l) for all l <= k}.

    An empty level is allowed; the construction step at that scale is the identity.
    """
    n = cloud.n
    if cloud.size == 0:
        log.info("Empty cloud: returning an empty net")
        return MultiscaleNet(levels=[np.zeros((0, n)) for _ in range(depth + 1)], n=n)
    alive = np.ones(cloud.size, dtype=bool)
    levels = []
    for k in range(depth + 1):
        if keep is not None:
            alive &= np.asarray(keep(cloud.points, k), dtype=bool)
        candidates = np.flatnonzero(alive)
        chosen = candidates[greedy_net(cloud.points[candidates], scale(k))]
        levels.append(cloud.points[chosen].copy())
        log.debug("Level %d: %d kept points, %d centers", k, len(candidates), len(chosen))
    net = MultiscaleNet(levels=levels, n=n)
    log.info("Built net with %s centers per level", net.counts())
    return net
