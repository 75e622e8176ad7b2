"""
The ambient extension g of f.

For z = x + y with x in Sigma_0 and y normal,
    g(z) = sum_k rho_k(y) (f_k(x) + R_k(x) y),
with a cutoff ladder rho_k truncated at the configured depth.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.extend.isometry import IsometryField, split
from src.flow.param_map import CHUNK_SIZE, ParamMap
from src.nets.multiscale import scale
from src.unity.partition import smoothstep

log = logging.getLogger(__name__)

FAR_DISTANCE = 2.0


def h(t):
    """Smooth monotone profile: 0 on [0, 1], 1 on [2, inf)."""
    return smoothstep(np.asarray(t, dtype=float) - 1.0)


@dataclass(frozen=True)
class CutoffLadder:
    """
    rho_0 = h(|y|), rho_k = h(|y|/r_k) - h(|y|/r_{k-1}) for 0 < k < K and
    rho_K = 1 - h(|y|/r_{K-1}), so the weights sum to 1 for every y.
    """
    depth: int

    def weights(self, norm_y) -> np.ndarray:
        """(K+1,) weights for a scalar |y|, or (m, K+1) for a vector of norms."""
        norm_y = np.asarray(norm_y, dtype=float)
        scalar = norm_y.ndim == 0
        t = np.atleast_1d(norm_y)
        K = self.depth
        if K == 0:
            out = np.ones((len(t), 1))
            return out[0] if scalar else out
        levels = h(t[:, None] / np.array([scale(k) for k in range(K)])[None, :])
        out = np.empty((len(t), K + 1))
        out[:, 0] = levels[:, 0]
        out[:, 1:K] = levels[:, 1:] - levels[:, :-1]
        out[:, K] = 1.0 - levels[:, K - 1]
        return out[0] if scalar else out

    def support(self, k: int) -> tuple[float, float]:
        """Open interval of |y| outside which rho_k vanishes."""
        if k == 0 and self.depth > 0:
            return 1.0, np.inf
        if k == self.depth:
            return 0.0, (np.inf if k == 0 else 20.0 * scale(k))
        return scale(k), 20.0 * scale(k)


def _g_chunk(pm: ParamMap, field: IsometryField, ladder: CutoffLadder, Z: np.ndarray) -> np.ndarray:
    X, Y = split(pm.sigma0, Z)
    out = Z.copy()
    norms = np.linalg.norm(Y, axis=1)
    near = np.flatnonzero(norms < FAR_DISTANCE)
    if not near.size:
        return out
    X, Y = X[near], Y[near]
    rho = ladder.weights(norms[near])
    history = pm.history_many(X)
    nodes = field.nearest_node(X)
    blended = np.zeros_like(X)
    for k in range(ladder.depth + 1):
        active = rho[:, k] != 0.0
        if not np.any(active):
            continue
        R = field.rotations[k, nodes[active]]
        term = history[k][active] + np.einsum("mij,mj->mi", R, Y[active])
        blended[active] += rho[active, k, None] * term
    out[near] = blended
    return out


def g_many(pm: ParamMap, field: IsometryField, Z, threads: Optional[int] = None) -> np.ndarray:
    """g on a batch; chunked on a thread pool, reassembled in input order."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if len(Z):
        outside = int(np.count_nonzero(field.outside_patch(Z)))
        if outside:
            log.warning("%d of %d queries lie outside the isometry grid and reuse edge rotations", outside, len(Z))
    ladder = CutoffLadder(pm.depth)
    chunks = [Z[i : i + CHUNK_SIZE] for i in range(0, len(Z), CHUNK_SIZE)] or [Z]
    workers = max(1, threads or pm.threads)
    if workers == 1 or len(chunks) == 1:
        results = [_g_chunk(pm, field, ladder, chunk) for chunk in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda chunk: _g_chunk(pm, field, ladder, chunk), chunks))
    return np.concatenate(results)


def g(pm: ParamMap, field: IsometryField, z) -> np.ndarray:
    """g(z); equal to z when dist(z, Sigma_0) >= 2 and to f(z) on Sigma_0."""
    return g_many(pm, field, np.asarray(z, dtype=float)[None, :])[0]
