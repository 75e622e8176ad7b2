"""
Saw-tooth domains Omega_A = {z : |q(z)| > A dist(p(z), F_inf)} over the
preimage F_inf of the limit set, and the audit that g keeps them off E.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from src.beta.cloud import PointCloud
from src.extend.extension import g_many
from src.extend.isometry import IsometryField, split
from src.flow.param_map import ParamMap
from src.geom.primitives import AffinePlane
from src.nets.multiscale import scale
from src.shared.errors import InsufficientSampleError, NonOrthonormalFrameError, SchemaError

log = logging.getLogger(__name__)

NEWTON_MAX_ITER = 50
NEWTON_TOL_FACTOR = 1e-8
DEFAULT_MARGIN_THRESHOLD = 0.25


@dataclass
class Preimages:
    """x_i on Sigma_0 with f_K(x_i) = target_i up to a normal residual."""
    points: np.ndarray
    tangential_residual: np.ndarray
    normal_residual: np.ndarray
    converged: np.ndarray
    iterations: int


def preimages(pm: ParamMap, targets, tol: Optional[float] = None, max_iter: int = NEWTON_MAX_ITER) -> Preimages:
    """
    Gauss-Newton on u in Sigma_0 coordinates for f_K(base + u V0) = target,
    solved in the least-squares sense so only the tangential part of the
    residual is driven to zero. Starts from the orthogonal projections.

    Raises:
        NonOrthonormalFrameError: the Gauss-Newton system is singular
    """
    sigma0 = pm.sigma0
    targets = np.asarray(targets, dtype=float).reshape(-1, sigma0.n)
    tol = NEWTON_TOL_FACTOR * scale(pm.depth) if tol is None else tol
    if not len(targets):
        empty = np.zeros(0)
        return Preimages(points=targets.copy(), tangential_residual=empty, normal_residual=empty,
                         converged=np.zeros(0, dtype=bool), iterations=0)
    u = sigma0.coordinates(targets)
    tangential = np.full(len(targets), np.inf)
    residual = np.zeros_like(targets)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        X = sigma0.point_at(u)
        images, jacobians = pm.evaluate_many(X, jacobian=True)
        residual = images - targets
        Ju = np.einsum("mij,dj->mid", jacobians, sigma0.frame)
        normal_eq = np.einsum("mid,mie->mde", Ju, Ju)
        rhs = np.einsum("mid,mi->md", Ju, residual)
        try:
            step = np.linalg.solve(normal_eq, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise NonOrthonormalFrameError("Df_K collapses the tangent plane of Sigma_0 at a preimage") from exc
        # tangential part of the residual = its projection on the column space of Ju
        tangential = np.linalg.norm(np.einsum("mid,md->mi", Ju, step), axis=1)
        if tangential.max() <= tol:
            break
        u = u - step
    X = sigma0.point_at(u)
    normal = np.linalg.norm(residual, axis=1)
    converged = tangential <= tol
    if not np.all(converged):
        log.warning("%d of %d preimages did not converge", int(np.count_nonzero(~converged)), len(targets))
    return Preimages(points=X, tangential_residual=tangential, normal_residual=normal,
                     converged=converged, iterations=iterations)


def limit_set_sample(pm: ParamMap) -> np.ndarray:
    """F_inf sample: level-K net centers pulled back to Sigma_0."""
    result = preimages(pm, pm.ccbp.centers(pm.depth))
    return result.points[result.converged]


@dataclass(eq=False)
class SawTooth:
    A: float
    f_inf: np.ndarray
    sigma0: AffinePlane

    def __post_init__(self):
        if self.A < 1.0:
            raise SchemaError(f"saw-tooth aperture A must be >= 1, got {self.A}", path="sawtooth_a")
        self.f_inf = np.atleast_2d(np.asarray(self.f_inf, dtype=float))
        if not self.f_inf.size:
            raise InsufficientSampleError("the limit-set sample F_inf is empty")

    @cached_property
    def tree(self) -> cKDTree:
        return cKDTree(self.f_inf)

    def members(self, Z) -> np.ndarray:
        P, Q = split(self.sigma0, np.atleast_2d(np.asarray(Z, dtype=float)))
        gaps = self.tree.query(P)[0]
        return np.linalg.norm(Q, axis=1) > self.A * gaps


def sawtooth_test(st: SawTooth, z) -> bool:
    return bool(st.members(z)[0])


def sample_domain(st: SawTooth, n_samples: int, seed: int, half_width: float, max_height: float) -> np.ndarray:
    """Seeded candidates around Sigma_0 (log-uniform heights), filtered to Omega_A."""
    rng = np.random.default_rng(seed)
    d, n = st.sigma0.d, st.sigma0.n
    coords = rng.uniform(-half_width, half_width, size=(n_samples, d))
    normal_frame = st.sigma0.normal_frame()
    directions = rng.normal(size=(n_samples, n - d))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    heights = np.exp(rng.uniform(np.log(1e-4 * max_height), np.log(max_height), size=n_samples))
    Z = st.sigma0.point_at(coords) + (heights[:, None] * directions) @ normal_frame
    return Z[st.members(Z)]


@dataclass
class SawtoothAudit:
    n_samples: int
    n_members: int
    min_distance: float
    min_ratio: float
    threshold: float
    worst_index: Optional[int] = None
    calibrated: bool = False
    ratios: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    @property
    def passed(self) -> bool:
        return self.min_distance > 0.0 and self.min_ratio >= self.threshold

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "n_members": self.n_members,
            "min_distance": self.min_distance,
            "min_ratio": self.min_ratio,
            "threshold": self.threshold,
            "calibrated": self.calibrated,
            "passed": self.passed,
            "worst_index": self.worst_index,
        }


def sawtooth_audit(
    pm: ParamMap,
    field_: IsometryField,
    st: SawTooth,
    cloud: PointCloud,
    samples,
    threshold: float = DEFAULT_MARGIN_THRESHOLD,
    threads: Optional[int] = None,
    calibrated: bool = False,
) -> SawtoothAudit:
    """
    min over sampled z in Omega_A of dist(g(z), cloud) and of that distance
    relative to |q(z)|.

    Raises:
        InsufficientSampleError: no sample lies in Omega_A
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    inside = st.members(samples)
    Z = samples[inside]
    if not len(Z):
        raise InsufficientSampleError("no sampled point lies in the saw-tooth domain")
    _, Q = split(st.sigma0, Z)
    images = g_many(pm, field_, Z, threads=threads)
    gaps = cloud.nearest_distance(images)
    ratios = gaps / np.linalg.norm(Q, axis=1)
    worst = int(np.argmin(ratios))
    audit = SawtoothAudit(
        n_samples=len(samples),
        n_members=len(Z),
        min_distance=float(gaps.min()),
        min_ratio=float(ratios[worst]),
        threshold=threshold,
        worst_index=worst,
        calibrated=calibrated,
        ratios=ratios,
    )
    log.info("Saw-tooth audit: %d members, min ratio %.4g", audit.n_members, audit.min_ratio)
    return audit
