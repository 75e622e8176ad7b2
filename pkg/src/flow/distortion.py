"""
Intrinsic distortion of Sigma_0 -> Sigma.

Pairs are drawn with log-uniform separations so every scale carries the same
weight; exponents come from log-log regression of |f(x) - f(y)| on |x - y|.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from src.flow.param_map import ParamMap, eps_prime_sum
from src.geom.primitives import AffinePlane
from src.shared.errors import InsufficientSampleError

log = logging.getLogger(__name__)

MIN_SEPARATION = 1e-4
MAX_SEPARATION = 1.0
ENVELOPE_BINS = 12


@dataclass
class DistortionReport:
    n_pairs: int
    ratio_min: float
    ratio_max: float
    exponent: float
    exponent_upper: float
    exponent_lower: float
    constant_upper: float
    constant_lower: float
    separation_min: float
    separation_max: float
    eps_prime_max: Optional[float] = None
    eps_prime_mean: Optional[float] = None

    @property
    def spread(self) -> float:
        """ratio_max / ratio_min, the bi-Lipschitz estimate."""
        return self.ratio_max / self.ratio_min

    def to_dict(self) -> dict:
        return {
            "n_pairs": self.n_pairs,
            "ratio_min": self.ratio_min,
            "ratio_max": self.ratio_max,
            "spread": self.spread,
            "exponent": self.exponent,
            "exponent_upper": self.exponent_upper,
            "exponent_lower": self.exponent_lower,
            "constant_upper": self.constant_upper,
            "constant_lower": self.constant_lower,
            "separation_min": self.separation_min,
            "separation_max": self.separation_max,
            "eps_prime_max": self.eps_prime_max,
            "eps_prime_mean": self.eps_prime_mean,
        }


def sample_pairs(
    plane: AffinePlane,
    n_pairs: int,
    seed: int = 0,
    radius: float = 0.5,
    center=None,
    min_separation: float = MIN_SEPARATION,
    max_separation: float = MAX_SEPARATION,
) -> tuple[np.ndarray, np.ndarray]:
    """x uniform in a tangential cube of half width `radius`, y = x + s u with log-uniform s."""
    rng = np.random.default_rng(seed)
    origin = plane.base if center is None else plane.base + plane.coordinates(center) @ plane.frame
    coords = rng.uniform(-radius, radius, size=(n_pairs, plane.d))
    directions = rng.normal(size=(n_pairs, plane.d))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    separations = np.exp(rng.uniform(np.log(min_separation), np.log(max_separation), size=n_pairs))
    X = origin + coords @ plane.frame
    Y = X + (separations[:, None] * directions) @ plane.frame
    return X, Y


def _envelope(log_sep: np.ndarray, log_img: np.ndarray, bins: int, pick) -> tuple[float, float]:
    edges = np.linspace(log_sep.min(), log_sep.max(), bins + 1)
    which = np.clip(np.digitize(log_sep, edges) - 1, 0, bins - 1)
    xs, ys = [], []
    for b in range(bins):
        members = np.flatnonzero(which == b)
        if members.size:
            chosen = members[pick(log_img[members])]
            xs.append(log_sep[chosen])
            ys.append(log_img[chosen])
    if len(xs) < 2:
        return 1.0, float(np.exp(ys[0] - xs[0])) if xs else 1.0
    slope, intercept = np.polyfit(xs, ys, 1)
    return float(slope), float(np.exp(intercept))


def measure_distortion(
    map_fn: Callable[[np.ndarray], np.ndarray],
    X,
    Y,
    bins: int = ENVELOPE_BINS,
) -> DistortionReport:
    """
    Ratios |F(x) - F(y)| / |x - y| and Hölder fits for a bulk map F.

    Raises:
        InsufficientSampleError: fewer than two pairs, coincident pairs, or
            all pairs at a single separation
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    separations = np.linalg.norm(X - Y, axis=1)
    if len(separations) < 2 or np.any(separations <= 0.0):
        raise InsufficientSampleError("distortion needs at least two pairs of distinct points")
    if np.ptp(np.log(separations)) <= 0.0:
        raise InsufficientSampleError("distortion pairs must span more than one separation")
    images = map_fn(np.vstack([X, Y]))
    gaps = np.linalg.norm(images[: len(X)] - images[len(X):], axis=1)
    if np.any(gaps <= 0.0):
        raise InsufficientSampleError("the map collapses a sampled pair")
    ratios = gaps / separations
    log_sep, log_img = np.log(separations), np.log(gaps)
    exponent = float(np.polyfit(log_sep, log_img, 1)[0])
    exponent_upper, constant_upper = _envelope(log_sep, log_img, bins, np.argmax)
    exponent_lower, constant_lower = _envelope(log_sep, log_img, bins, np.argmin)
    report = DistortionReport(
        n_pairs=len(separations),
        ratio_min=float(ratios.min()),
        ratio_max=float(ratios.max()),
        exponent=exponent,
        exponent_upper=exponent_upper,
        exponent_lower=exponent_lower,
        constant_upper=constant_upper,
        constant_lower=constant_lower,
        separation_min=float(separations.min()),
        separation_max=float(separations.max()),
    )
    log.info("Distortion over %d pairs: ratio [%.4g, %.4g], exponent %.4f",
             report.n_pairs, report.ratio_min, report.ratio_max, report.exponent)
    return report


def distortion(
    pm: ParamMap,
    n_pairs: int = 2000,
    seed: int = 0,
    radius: float = 0.5,
    center=None,
    eps_prime_points: int = 0,
    threads: Optional[int] = None,
) -> DistortionReport:
    """Distortion of f_K on log-uniform pairs of Sigma_0, optionally with eps' sums along trajectories."""
    X, Y = sample_pairs(pm.sigma0, n_pairs, seed=seed, radius=radius, center=center)
    report = measure_distortion(lambda Z: pm.evaluate_many(Z, threads=threads), X, Y)
    if eps_prime_points:
        sums = np.array([eps_prime_sum(pm, z) for z in X[:eps_prime_points]])
        report.eps_prime_max = float(sums.max())
        report.eps_prime_mean = float(sums.mean())
    return report
