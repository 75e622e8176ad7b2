"""
Normalized local distances between planes, sampled sets and subspaces.

plane_local_distance is exact: each one-sided sup is the maximum of a convex
quadratic over a d-disc, found on the boundary sphere through the secular
equation of the trust-region subproblem.
"""
from __future__ import annotations

import logging

import numpy as np
from scipy.optimize import brentq
from scipy.spatial import cKDTree

from src.geom.primitives import AffinePlane, as_vec, check_orthonormal, project
from src.shared.errors import DimensionMismatchError, DisjointBallError, EmptyBallError

log = logging.getLogger(__name__)

SECULAR_TOL = 1e-10
_HARD_CASE_TOL = 1e-13


def _cap(plane: AffinePlane, x: np.ndarray, r: float) -> tuple[np.ndarray, float]:
    """Center and radius of the d-disc plane ∩ closed B(x, r)."""
    center = project(plane, x)
    offset = float(np.linalg.norm(x - center))
    if offset > r * (1.0 + 1e-12):
        raise DisjointBallError(f"plane misses B(x, r): distance {offset:.6g} > radius {r:.6g}")
    return center, float(np.sqrt(max(r * r - offset * offset, 0.0)))


def _max_on_sphere(a: np.ndarray, M: np.ndarray, rho: float) -> float:
    """
    max |a + M t|^2 over |t| <= rho.

    The objective is convex so the maximum sits on |t| = rho, where the
    multiplier satisfies (lam I - M^T M) t = M^T a with lam >= mu_max.
    """
    base = float(a @ a)
    if rho <= 0.0:
        return base
    mu, U = np.linalg.eigh(M.T @ M)
    b = U.T @ (M.T @ a)
    mu_max = float(mu[-1])
    scale = max(1.0, mu_max)
    top = np.abs(mu - mu_max) <= _HARD_CASE_TOL * scale
    b_norm = float(np.linalg.norm(b))

    def objective(t: np.ndarray) -> float:
        v = a + M @ (U @ t)
        return float(v @ v)

    def t_of(lam: float) -> np.ndarray:
        return b / (lam - mu)

    def secular(lam: float) -> float:
        return float(np.sum((b / (lam - mu)) ** 2)) - rho * rho

    candidates: list[float] = []
    b_top = float(np.linalg.norm(b[top]))
    hi = mu_max + b_norm / rho
    if b_top > _HARD_CASE_TOL * max(1.0, b_norm):
        lo = mu_max + b_top / rho
        if hi - lo <= SECULAR_TOL * scale or secular(lo) <= 0.0:
            lam = lo
        else:
            lam = brentq(secular, lo, hi, xtol=SECULAR_TOL * scale, rtol=4 * np.finfo(float).eps)
        candidates.append(objective(t_of(lam)))
    else:
        rest = ~top
        partial = np.zeros_like(b)
        partial[rest] = b[rest] / (mu_max - mu[rest])
        partial_norm = float(np.linalg.norm(partial))
        if partial_norm > rho and hi > mu_max:
            lam = brentq(
                lambda value: float(np.sum((b[rest] / (value - mu[rest])) ** 2)) - rho * rho,
                mu_max,
                hi,
                xtol=SECULAR_TOL * scale,
            )
            t = np.zeros_like(b)
            t[rest] = b[rest] / (lam - mu[rest])
            candidates.append(objective(t))
        else:
            fill = np.sqrt(max(rho * rho - partial_norm * partial_norm, 0.0))
            direction = np.zeros_like(b)
            direction[np.flatnonzero(top)[0]] = 1.0
            candidates.append(objective(partial + fill * direction))
            candidates.append(objective(partial - fill * direction))
    return max(candidates)


def one_sided_plane_distance(source: AffinePlane, target: AffinePlane, x, r: float) -> float:
    """sup { dist(y, target) : y in source ∩ B(x, r) } (not normalized)."""
    x = as_vec(x, source.n)
    center, rho = _cap(source, x, r)
    normal = target.normal_projector
    a = normal @ (center - target.base)
    M = normal @ source.frame.T
    return float(np.sqrt(max(_max_on_sphere(a, M, rho), 0.0)))


def plane_local_distance(P1: AffinePlane, P2: AffinePlane, x, r: float) -> float:
    """
    d_{x,r}(P1, P2): the larger one-sided sup of distances inside B(x, r), over r.

    Raises:
        DisjointBallError: either plane misses B(x, r)
    """
    if P1.n != P2.n:
        raise DimensionMismatchError(f"planes live in R^{P1.n} and R^{P2.n}")
    if r <= 0:
        raise DimensionMismatchError("radius must be positive")
    forward = one_sided_plane_distance(P1, P2, x, r)
    backward = one_sided_plane_distance(P2, P1, x, r)
    return max(forward, backward) / r


def _points_of(sample) -> np.ndarray:
    points = getattr(sample, "points", sample)
    return np.atleast_2d(np.asarray(points, dtype=float))


def set_local_distance(A, B, x, r: float) -> float:
    """
    d_{x,r} between two sampled sets (PointCloud or (m, n) arrays).

    Nearest distances are taken to the full other sample, not only to its
    part inside the ball.

    Raises:
        EmptyBallError: either sample has no point in B(x, r)
    """
    a_pts, b_pts = _points_of(A), _points_of(B)
    x = as_vec(x, a_pts.shape[1])
    if b_pts.shape[1] != a_pts.shape[1]:
        raise DimensionMismatchError("sampled sets have different ambient dimensions")
    a_in = a_pts[np.linalg.norm(a_pts - x, axis=1) < r]
    b_in = b_pts[np.linalg.norm(b_pts - x, axis=1) < r]
    if len(a_in) == 0 or len(b_in) == 0:
        raise EmptyBallError(f"sampled set has no point in B(x, {r:.6g})")
    forward = cKDTree(b_pts).query(a_in)[0].max()
    backward = cKDTree(a_pts).query(b_in)[0].max()
    return float(max(forward, backward) / r)


def grassmann_distance(V1, V2) -> float:
    """
    Distance between d-dimensional subspaces given by orthonormal row frames:
    the largest distance from a unit vector of one to the other, in [0, 1].
    """
    V1 = np.atleast_2d(np.asarray(V1, dtype=float))
    V2 = np.atleast_2d(np.asarray(V2, dtype=float))
    if V1.shape != V2.shape:
        raise DimensionMismatchError(f"frames of shapes {V1.shape} and {V2.shape}")
    check_orthonormal(V1)
    check_orthonormal(V2)
    sigma = np.linalg.svd(V1 @ V2.T, compute_uv=False)
    smallest = float(np.clip(sigma.min(), 0.0, 1.0))
    return float(np.sqrt(max(0.0, 1.0 - smallest * smallest)))


def plane_angle(P1: AffinePlane, P2: AffinePlane) -> float:
    """Largest principal angle between the direction spaces, in radians."""
    return float(np.arcsin(min(1.0, grassmann_distance(P1.frame, P2.frame))))


def plane_cap_sample(plane: AffinePlane, x, r: float, per_axis: int = 21) -> np.ndarray:
    """Deterministic grid sample of plane ∩ B(x, r); the cap center is always included."""
    x = as_vec(x, plane.n)
    center, rho = _cap(plane, x, r)
    if rho == 0.0:
        return center[None, :]
    ticks = np.linspace(-rho, rho, per_axis)
    mesh = np.stack(np.meshgrid(*([ticks] * plane.d), indexing="ij"), axis=-1).reshape(-1, plane.d)
    mesh = mesh[np.linalg.norm(mesh, axis=1) < rho]
    coords = np.vstack([np.zeros((1, plane.d)), mesh])
    return center + coords @ plane.frame
