"""
Plane fitting over the samples of a ball.

Every fit returns a PlaneFit whose `objective` is what the fit minimized:
the weighted sum of squared distances (L2), the weighted sum of q-th powers
of distances (Lq), or the largest distance (minimax, plane through x).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from src.beta.cloud import PointCloud
from src.geom.primitives import AffinePlane, Ball, orthonormalize
from src.geom.distances import plane_cap_sample
from src.shared.errors import EmptyBallError, NonOrthonormalFrameError, RankDeficientError

log = logging.getLogger(__name__)

RANK_TOL = 1e-14
IRLS_FLOOR = 1e-12
NM_OPTIONS = {"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000, "maxfev": 8000}


@dataclass(frozen=True)
class PlaneFit:
    plane: AffinePlane
    objective: float
    converged: bool = True
    iterations: int = 0
    n_samples: int = 0


def ball_sample(cloud: PointCloud, x, r: float) -> tuple[np.ndarray, np.ndarray]:
    idx = cloud.ball_indices(x, r)
    if idx.size == 0:
        raise EmptyBallError(f"no samples in B(x, {r:.6g})")
    return cloud.points[idx], cloud.weights[idx]


def _pca(points: np.ndarray, weights: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Weighted centroid, top-d frame and eigenvalues (descending)."""
    total = weights.sum()
    centroid = (weights[:, None] * points).sum(axis=0) / total
    offsets = points - centroid
    cov = (weights[:, None] * offsets).T @ offsets / total
    values, vectors = np.linalg.eigh(cov)
    values, vectors = values[::-1], vectors[:, ::-1]
    frame = vectors[:, :d].T.copy()
    # largest entry positive so repeated runs agree
    for row in frame:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return centroid, frame, values


def distances(plane: AffinePlane, points: np.ndarray) -> np.ndarray:
    return np.linalg.norm((points - plane.base) @ plane.normal_projector, axis=1)


def _l2_plane(points: np.ndarray, weights: np.ndarray, d: int) -> AffinePlane:
    if len(points) < d + 1:
        raise RankDeficientError(f"{len(points)} samples cannot span a {d}-plane")
    centroid, frame, values = _pca(points, weights, d)
    spread = max(values[0], np.finfo(float).tiny)
    if values[d - 1] <= RANK_TOL * spread or values[0] <= 0.0:
        raise RankDeficientError("samples do not affinely span a d-plane")
    return AffinePlane(base=centroid, frame=frame)


def fit_plane_l2(cloud: PointCloud, ball: Ball) -> PlaneFit:
    """Weighted PCA plane through the weighted centroid of cloud ∩ ball."""
    points, weights = ball_sample(cloud, ball.center, ball.radius)
    plane = _l2_plane(points, weights, cloud.d)
    objective = float(np.sum(weights * distances(plane, points) ** 2))
    return PlaneFit(plane=plane, objective=objective, n_samples=len(points))


def _tilted(plane: AffinePlane, normals: np.ndarray, params: np.ndarray, through_base: bool) -> AffinePlane:
    d, c = plane.d, normals.shape[0]
    tilt = params[: d * c].reshape(d, c)
    frame = orthonormalize(plane.frame + tilt @ normals)
    base = plane.base if through_base else plane.base + params[d * c:] @ normals
    return AffinePlane(base=base, frame=frame)


def _lq_objective(plane: AffinePlane, points: np.ndarray, weights: np.ndarray, q: float) -> float:
    return float(np.sum(weights * distances(plane, points) ** q))


def _polish(plane, points, weights, objective_of, through_base: bool, scale: float):
    """Nelder-Mead over tilt (and normal offset) parameters around `plane`."""
    normals = plane.normal_frame()
    tilt_size = plane.d * normals.shape[0]
    size = tilt_size + (0 if through_base else normals.shape[0])
    steps = np.ones(size)
    steps[tilt_size:] = scale

    def value(params: np.ndarray) -> float:
        try:
            return objective_of(_tilted(plane, normals, params, through_base))
        except NonOrthonormalFrameError:
            return np.inf

    best_params, best_value = np.zeros(size), value(np.zeros(size))
    for step in (0.05, 0.005):
        simplex = np.vstack([best_params, best_params + step * np.diag(steps)])
        result = minimize(value, best_params, method="Nelder-Mead", options={**NM_OPTIONS, "initial_simplex": simplex})
        if result.fun < best_value:
            best_params, best_value = result.x, float(result.fun)
    return _tilted(plane, normals, best_params, through_base), best_value


def fit_plane_lq(
    cloud: PointCloud,
    ball: Ball,
    q: float,
    max_iter: int = 100,
    tol: float = 1e-12,
    polish: bool = True,
) -> PlaneFit:
    """
    Plane minimizing sum w_i dist(p_i, P)^q over cloud ∩ ball (planes need not pass through the center).

    IRLS from the L2 plane (each reweighted PCA step is a majorization step for
    q <= 2, so the objective never increases), then a Nelder-Mead polish.
    Non-convergence keeps the best iterate and sets converged=False.
    """
    points, weights = ball_sample(cloud, ball.center, ball.radius)
    best = _l2_plane(points, weights, cloud.d)
    best_value = _lq_objective(best, points, weights, q)
    if q == 2.0:
        return PlaneFit(plane=best, objective=best_value, n_samples=len(points))

    converged = False
    iterations = 0
    floor = IRLS_FLOOR * ball.radius
    for iterations in range(1, max_iter + 1):
        dist = np.maximum(distances(best, points), floor)
        try:
            candidate = _l2_plane(points, weights * dist ** (q - 2.0), cloud.d)
        except RankDeficientError:
            converged = True
            break
        value = _lq_objective(candidate, points, weights, q)
        if value >= best_value - tol * max(best_value, floor):
            converged = True
            if value < best_value:
                best, best_value = candidate, value
            break
        best, best_value = candidate, value
    if not converged:
        log.warning("IRLS did not converge after %d iterations (objective %.6g)", max_iter, best_value)

    if polish and best_value > 0.0:
        polished, polished_value = _polish(
            best,
            points,
            weights,
            lambda plane: _lq_objective(plane, points, weights, q),
            through_base=False,
            scale=ball.radius,
        )
        if polished_value < best_value:
            best, best_value = polished, polished_value
    return PlaneFit(plane=best, objective=best_value, converged=converged, iterations=iterations, n_samples=len(points))


def fit_plane_l1(cloud: PointCloud, ball: Ball, **options) -> PlaneFit:
    return fit_plane_lq(cloud, ball, 1.0, **options)


def fit_plane_minimax(cloud: PointCloud, x, r: float) -> PlaneFit:
    """
    Approximate minimax d-plane through x over cloud ∩ B(x, r).

    The achieved sup is an upper bound for r * beta_inf(x, r). With at most d
    samples some plane through x meets them all, so the sup is 0.
    """
    x = np.asarray(x, dtype=float)
    points, weights = ball_sample(cloud, x, r)
    d = cloud.d
    if len(points) <= d:
        frame = _frame_through(points, x, d, cloud.n)
        return PlaneFit(plane=AffinePlane(base=x, frame=frame), objective=0.0, n_samples=len(points))
    try:
        start = _l2_plane(points, weights, d).through(x)
    except RankDeficientError:
        frame = _frame_through(points, x, d, cloud.n)
        start = AffinePlane(base=x, frame=frame)

    def sup_distance(plane: AffinePlane) -> float:
        return float(distances(plane, points).max())

    best_value = sup_distance(start)
    best = start
    if best_value > 0.0:
        polished, value = _polish(start, points, weights, sup_distance, through_base=True, scale=r)
        if value < best_value:
            best, best_value = polished, value
    return PlaneFit(plane=best, objective=best_value, n_samples=len(points))


def _frame_through(points: np.ndarray, x: np.ndarray, d: int, n: int) -> np.ndarray:
    """A d-frame containing the directions from x to the given points (completed by axes)."""
    rows = [p - x for p in points if np.linalg.norm(p - x) > 0]
    basis: list[np.ndarray] = []
    for vec in rows + list(np.eye(n)):
        for b in basis:
            vec = vec - (vec @ b) * b
        norm = np.linalg.norm(vec)
        if norm > 1e-9:
            basis.append(vec / norm)
        if len(basis) == d:
            break
    return orthonormalize(np.asarray(basis))


def fit_residual(cloud: PointCloud, plane: AffinePlane, x, r: float, per_axis: int = 21) -> tuple[float, float]:
    """
    The two halves of d_{x,r}(cloud, plane): sup dist(y, P)/r over samples in
    B(x, r) and sup dist(y, cloud)/r over a grid on P ∩ B(x, r).
    """
    points, _ = ball_sample(cloud, x, r)
    to_plane = float(distances(plane, points).max()) / r
    cap = plane_cap_sample(plane, x, r, per_axis=per_axis)
    to_cloud = float(cloud.nearest_distance(cap).max()) / r
    return to_plane, to_cloud
