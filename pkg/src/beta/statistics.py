"""
Multiscale flatness statistics: beta numbers, Jones sums, plane-family
epsilons, Carleson sums, Ahlfors ratios and the unit-normal functional.

beta_inf follows the planes-through-x definition; beta_q allows any plane
meeting the ball. Both are normalized, so they are invariant under rigid
motions and dilations of (cloud, x, r).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Optional

import numpy as np
from scipy.special import gamma

from src.beta.cloud import PointCloud
from src.beta.fitting import fit_plane_lq, fit_plane_minimax
from src.geom.distances import plane_local_distance
from src.geom.primitives import Ball
from src.shared.errors import DimensionMismatchError, DisjointBallError, EmptyBallError, RankDeficientError

if TYPE_CHECKING:
    from src.nets.ccbp import Ccbp
    from src.nets.family import PlaneFamily

log = logging.getLogger(__name__)

J1_FIRST_SCALE = 3


def scale(k: int) -> float:
    return 10.0 ** (-k)


def beta_inf(cloud: PointCloud, x, r: float) -> float:
    """sup dist(y, P)/r over samples in B(x, r), for the (approximate) best plane P through x."""
    return fit_plane_minimax(cloud, x, r).objective / r


def beta_q(cloud: PointCloud, x, r: float, q: float = 1.0, polish: bool = True) -> float:
    """(r^-d sum w_i (dist_i / r)^q)^(1/q) over samples in B(x, r) for the best Lq plane."""
    try:
        fit = fit_plane_lq(cloud, Ball(np.asarray(x, dtype=float), r), q, polish=polish)
    except RankDeficientError:
        # the samples lie in a lower-dimensional affine set, hence in some d-plane
        return 0.0
    value = fit.objective / r ** (cloud.d + q)
    return float(max(value, 0.0) ** (1.0 / q))


def beta_ladder(cloud: PointCloud, x, depth: int, q: float = 1.0, polish: bool = True) -> list[dict]:
    """beta_inf and beta_q at r_k = 10^-k for k = 0..depth."""
    rows = []
    for k in range(depth + 1):
        r = scale(k)
        rows.append({"k": k, "r": r, "beta_inf": beta_inf(cloud, x, r), "beta_q": beta_q(cloud, x, r, q, polish)})
    return rows


def alpha_profile(family: "PlaneFamily", index: int, depth: Optional[int] = None) -> list[float]:
    """alpha_k(x) = d_{x,r_k}(P_{k+1}(x), P_k(x)) for k = 0..depth-1."""
    depth = family.depth if depth is None else min(depth, family.depth)
    x = family.point(index)
    return [
        plane_local_distance(family.plane(index, k + 1), family.plane(index, k), x, scale(k))
        for k in range(depth)
    ]


@dataclass(frozen=True)
class JonesSums:
    J_inf: float
    J_1: float
    J: float
    depth: int


def jones_J(
    beta_inf_values: Iterable[float] = (),
    beta_1_values: Iterable[float] = (),
    alpha_values: Iterable[float] = (),
) -> JonesSums:
    """
    Truncated Jones sums. Entry k of each input is the statistic at r_k;
    J_1 starts at k = 3.
    """
    b_inf = [float(v) for v in beta_inf_values]
    b_1 = [float(v) for v in beta_1_values]
    alpha = [float(v) for v in alpha_values]
    return JonesSums(
        J_inf=float(sum(v * v for v in b_inf)),
        J_1=float(sum(v * v for v in b_1[J1_FIRST_SCALE:])),
        J=float(sum(v * v for v in alpha)),
        depth=max(len(b_inf), len(b_1), len(alpha) + 1) - 1,
    )


@dataclass(frozen=True)
class EpsProfile:
    eps_k: float
    eps_prime_k: float


def _pair_sup(ccbp: "Ccbp", y: np.ndarray, k: int, l: int, lam_j: float, lam_i: float, same_level: bool) -> float:
    if l < 0 or k > ccbp.depth or l > ccbp.depth:
        return 0.0
    js, _ = ccbp.net.grid(k).query(y, lam_j * scale(k))
    is_, _ = ccbp.net.grid(l).query(y, lam_i * scale(l))
    worst = 0.0
    for j in js:
        for i in is_:
            if same_level and i == j:
                continue
            try:
                value = plane_local_distance(
                    ccbp.plane(j, k), ccbp.plane(i, l), ccbp.net.levels[l][i], 100.0 * scale(l)
                )
            except DisjointBallError:
                log.warning("Planes (%d,%d) and (%d,%d) miss the comparison ball", j, k, i, l)
                continue
            worst = max(worst, value)
    return worst


def eps_profiles(ccbp: "Ccbp", y, k: int) -> EpsProfile:
    """
    eps_k(y): worst same-level distance over pairs whose 10-dilates both contain y.
    eps'_k(y): worst distance between P_{j,k} (y in 10B_{j,k}) and P_{i,l}
    (y in 11B_{i,l}, l in {k-1, k}). Both vanish outside V_k^10.
    """
    y = np.asarray(y, dtype=float)
    eps_k = _pair_sup(ccbp, y, k, k, 10.0, 10.0, same_level=True)
    eps_prime = _pair_sup(ccbp, y, k, k, 10.0, 11.0, same_level=True)
    if k >= 1:
        eps_prime = max(eps_prime, _pair_sup(ccbp, y, k, k - 1, 10.0, 11.0, same_level=False))
    return EpsProfile(eps_k=eps_k, eps_prime_k=eps_prime)


def carleson_sum(cloud: PointCloud, x, r: float, q: float = 1.0, depth: int = 6) -> float:
    """
    r^-d sum_{y in B(x,r)} sum_{k : r_k <= r, k <= depth} w(y) beta_q(y, r_k)^2.
    """
    idx = cloud.ball_indices(x, r)
    if idx.size == 0:
        raise EmptyBallError(f"no samples in B(x, {r:.6g})")
    first = max(0, math.ceil(-math.log10(r) - 1e-12))
    total = 0.0
    for k in range(first, depth + 1):
        rk = scale(k)
        for i in idx:
            total += cloud.weights[i] * beta_q(cloud, cloud.points[i], rk, q, polish=False) ** 2
    return total / r**cloud.d


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2.0) / gamma(d / 2.0 + 1.0)


@dataclass(frozen=True)
class AhlforsResult:
    ratios: list[float]
    lower_ratio: float
    upper_ratio: float
    boundary: bool


@dataclass(frozen=True)
class _IntrinsicBox:
    origin: np.ndarray
    frame: np.ndarray
    low: np.ndarray
    high: np.ndarray


def _intrinsic_box(cloud: PointCloud) -> _IntrinsicBox:
    centroid = np.average(cloud.points, axis=0, weights=cloud.weights)
    offsets = cloud.points - centroid
    cov = (cloud.weights[:, None] * offsets).T @ offsets
    _, vectors = np.linalg.eigh(cov)
    frame = vectors[:, ::-1][:, : cloud.d].T
    coords = offsets @ frame.T
    return _IntrinsicBox(origin=centroid, frame=frame, low=coords.min(axis=0), high=coords.max(axis=0))


def ahlfors_check(cloud: PointCloud, x, r) -> AhlforsResult:
    """
    mass(cloud ∩ B(x, r)) / (omega_d r^d) for one radius or a list of radii.

    `boundary` is set when a ball exits the bounding box of the cloud in its
    global principal frame; such balls see about half the mass and are
    excluded from pass/fail by callers.
    """
    x = np.asarray(x, dtype=float)
    radii = [float(r)] if np.isscalar(r) else [float(v) for v in r]
    box = _intrinsic_box(cloud)
    coords = (x - box.origin) @ box.frame.T
    omega = unit_ball_volume(cloud.d)
    ratios = []
    boundary = False
    for radius in radii:
        idx = cloud.ball_indices(x, radius)
        if idx.size == 0:
            raise EmptyBallError(f"no samples in B(x, {radius:.6g})")
        ratios.append(float(cloud.weights[idx].sum() / (omega * radius**cloud.d)))
        if np.any(coords - radius < box.low) or np.any(coords + radius > box.high):
            boundary = True
    return AhlforsResult(ratios=ratios, lower_ratio=min(ratios), upper_ratio=max(ratios), boundary=boundary)


@dataclass(frozen=True)
class NormalFunctional:
    value: float
    min_normal_norm: float
    radii: list[float] = field(default_factory=list)
    integrand: list[float] = field(default_factory=list)


def normal_functional(cloud: PointCloud, x, depth: int = 6, per_decade: int = 1) -> NormalFunctional:
    """
    Discretized H(x): sum over r = 10^(-i/per_decade) <= 1 of
    [r^-d sum_{y in B(x,r)} w(y) |<y - x, n_{x,r}>| / r]^2 * log(10)/per_decade,
    where n_{x,r} is the mass-averaged (not renormalized) normal over B(x, r).
    """
    normals = cloud.require_normals()
    x = np.asarray(x, dtype=float)
    step = math.log(10.0) / per_decade
    radii, integrand, norms = [], [], []
    for i in range(depth * per_decade + 1):
        r = 10.0 ** (-i / per_decade)
        idx = cloud.ball_indices(x, r)
        if idx.size == 0:
            raise EmptyBallError(f"no samples in B(x, {r:.6g})")
        w = cloud.weights[idx]
        n_xr = (w[:, None] * normals[idx]).sum(axis=0) / w.sum()
        bracket = float(np.sum(w * np.abs((cloud.points[idx] - x) @ n_xr)) / r ** (cloud.d + 1))
        radii.append(r)
        integrand.append(bracket)
        norms.append(float(np.linalg.norm(n_xr)))
    value = float(sum(v * v for v in integrand) * step)
    return NormalFunctional(value=value, min_normal_norm=min(norms), radii=radii, integrand=integrand)


class StoppingSet:
    """
    E'_0 = {x : J_1(x) <= threshold}, usable as a build_net keep predicate.

    J_1 is evaluated once per sample; the same mask applies at every level,
    so the kept sets are nested.
    """

    def __init__(self, cloud: PointCloud, threshold: float, depth: int, q: float = 1.0):
        self.threshold = threshold
        self.j1 = np.array(
            [
                jones_J(beta_1_values=[beta_q(cloud, p, scale(k), q, polish=False) for k in range(depth + 1)]).J_1
                for p in cloud.points
            ]
        )
        self.mask = self.j1 <= threshold
        self._points = cloud.points
        log.info("Stopping set keeps %d of %d samples (J_1 <= %.4g)", int(self.mask.sum()), len(self.mask), threshold)

    def __call__(self, points: np.ndarray, k: int) -> np.ndarray:
        if points.shape != self._points.shape:
            raise DimensionMismatchError("stopping set evaluated on a different cloud")
        return self.mask


def stopping_predicate(cloud: PointCloud, threshold: float, depth: int, q: float = 1.0) -> StoppingSet:
    return StoppingSet(cloud, threshold, depth, q)
