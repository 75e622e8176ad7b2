"""Verification of the output surfaces: local graph property and Reifenberg flatness."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from src.beta.cloud import PointCloud
from src.beta.fitting import fit_plane_minimax
from src.geom.distances import plane_cap_sample
from src.geom.primitives import Box, box_points
from src.flow.param_map import ParamMap, SurfaceSample
from src.nets.multiscale import scale
from src.shared.errors import InsufficientSampleError

log = logging.getLogger(__name__)

BOX_FACTOR = 49.0
COLLISION_SLACK = 0.25
NORMAL_SLACK = 0.5
SLOPE_WINDOW = 4.0
DEFAULT_FLAT_BUDGET = 50.0
MAX_ANCHORS = 64


@dataclass
class GraphCheck:
    k: int
    j: int
    lipschitz_estimate: float
    single_valued: bool
    collisions: int
    n_samples: int

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "j": self.j,
            "lipschitz_estimate": self.lipschitz_estimate,
            "single_valued": self.single_valued,
            "collisions": self.collisions,
            "n_samples": self.n_samples,
        }


def graph_check(pm: ParamMap, k: int, j: int, surface: SurfaceSample) -> GraphCheck:
    """
    Project Sigma_k ∩ D(x_{j,k}, P_{j,k}, 49 r_k) to P_{j,k}.

    Two samples closer than h/4 tangentially but more than h/2 apart in the
    normal direction break single-valuedness. The Lipschitz estimate is the
    worst secant slope over pairs with h/4 < |du| <= 4h.

    Raises:
        InsufficientSampleError: the box holds fewer than d + 1 samples or
            the sample pitch is too coarse for the box
    """
    plane = pm.ccbp.plane(j, k)
    half_width = BOX_FACTOR * scale(k)
    h = surface.pitch
    idx = box_points(Box(plane, half_width), surface.points)
    if len(idx) < plane.d + 1 or h >= 0.5 * half_width:
        raise InsufficientSampleError(
            f"box of level {k} center {j} holds {len(idx)} samples at pitch {h:.3g}"
        )
    u, v = Box(plane, half_width).split(surface.points[idx])
    tree = cKDTree(u)

    close = tree.query_pairs(COLLISION_SLACK * h, output_type="ndarray")
    collisions = 0
    if len(close):
        jumps = np.linalg.norm(v[close[:, 0]] - v[close[:, 1]], axis=1)
        collisions = int(np.count_nonzero(jumps > NORMAL_SLACK * h))

    slope = 0.0
    near = tree.query_pairs(SLOPE_WINDOW * h, output_type="ndarray")
    if len(near):
        du = np.linalg.norm(u[near[:, 0]] - u[near[:, 1]], axis=1)
        dv = np.linalg.norm(v[near[:, 0]] - v[near[:, 1]], axis=1)
        keep = du > COLLISION_SLACK * h
        if np.any(keep):
            slope = float((dv[keep] / du[keep]).max())

    result = GraphCheck(k=k, j=j, lipschitz_estimate=slope, single_valued=collisions == 0,
                        collisions=collisions, n_samples=len(idx))
    if not result.single_valued:
        log.debug("Level %d center %d: %d projected collisions", k, j, collisions)
    return result


def graph_checks(pm: ParamMap, surface: SurfaceSample, k: Optional[int] = None) -> list[GraphCheck]:
    """graph_check at every level-k center whose box is adequately sampled."""
    k = surface.k if k is None else k
    results = []
    for j in range(len(pm.ccbp.centers(k))):
        try:
            results.append(graph_check(pm, k, j, surface))
        except InsufficientSampleError as exc:
            log.debug("Skipping graph check: %s", exc)
    return results


@dataclass
class FlatnessReport:
    worst: float
    eps_in: Optional[float]
    budget: float
    worst_anchor: Optional[int]
    worst_scale: Optional[float]
    resolution: float
    per_scale: dict[float, float] = field(default_factory=dict)
    checked: int = 0
    calibrated: bool = False

    @property
    def ratio(self) -> Optional[float]:
        if not self.eps_in:
            return None
        return self.worst / self.eps_in

    @property
    def passed(self) -> Optional[bool]:
        ratio = self.ratio
        return None if ratio is None else ratio <= self.budget

    def to_dict(self) -> dict:
        return {
            "worst": self.worst,
            "eps_in": self.eps_in,
            "ratio": self.ratio,
            "budget": self.budget,
            "calibrated": self.calibrated,
            "passed": self.passed,
            "worst_anchor": self.worst_anchor,
            "worst_scale": self.worst_scale,
            "resolution": self.resolution,
            "per_scale": {repr(t): v for t, v in self.per_scale.items()},
            "checked": self.checked,
        }


def _default_anchors(surface: SurfaceSample, reach: float) -> np.ndarray:
    margin = surface.half_width - 1.2 * reach
    inner = np.flatnonzero(np.abs(surface.coords).max(axis=1) <= margin)
    if not len(inner):
        raise InsufficientSampleError(
            f"no grid node lies {1.2 * reach:.3g} inside the sampled patch of half width {surface.half_width:.3g}"
        )
    if len(inner) > MAX_ANCHORS:
        inner = inner[np.linspace(0, len(inner) - 1, MAX_ANCHORS).round().astype(int)]
    return inner


def flatness_check(
    pm: ParamMap,
    surface: SurfaceSample,
    scales: Sequence[float],
    anchors: Optional[Sequence[int]] = None,
    eps_in: Optional[float] = None,
    budget: float = DEFAULT_FLAT_BUDGET,
    calibrated: bool = False,
) -> FlatnessReport:
    """
    Worst two-sided d_{z,t}(Sigma_sample, P(z, t)) over anchors z and scales t,
    with P(z, t) the minimax plane through z.

    The sample-to-plane half is exact. The plane-to-sample half discounts the
    sample resolution inside B(z, t) (largest nearest-neighbour spacing of the
    samples in the ball), so a flat sample scores 0 and a coarse patch
    elsewhere does not hide gaps near z. `resolution` reports the largest
    discount applied.
    """
    scales = [float(t) for t in scales]
    cloud = PointCloud(points=surface.points, weights=np.ones(len(surface.points)), intrinsic_dim=pm.sigma0.d)
    if len(surface.points) > 1:
        spacing = cloud.tree.query(surface.points, k=2)[0][:, 1]
    else:
        spacing = np.zeros(len(surface.points))
    anchors = _default_anchors(surface, max(scales)) if anchors is None else np.asarray(anchors, dtype=int)

    report = FlatnessReport(worst=0.0, eps_in=eps_in, budget=budget, worst_anchor=None,
                            worst_scale=None, resolution=0.0, calibrated=calibrated)
    for t in scales:
        report.per_scale[t] = 0.0
        for a in anchors:
            z = surface.points[a]
            inside = cloud.ball_indices(z, t)
            resolution = float(spacing[inside].max()) if len(inside) else 0.0
            report.resolution = max(report.resolution, resolution)
            fit = fit_plane_minimax(cloud, z, t)
            to_plane = fit.objective / t
            cap = plane_cap_sample(fit.plane, z, t)
            gaps = cloud.nearest_distance(cap)
            to_sample = float(np.maximum(gaps - resolution, 0.0).max()) / t
            value = max(to_plane, to_sample)
            report.checked += 1
            report.per_scale[t] = max(report.per_scale[t], value)
            if value > report.worst or report.worst_anchor is None:
                report.worst, report.worst_anchor, report.worst_scale = value, int(a), t
    log.info("Flatness: worst %.4g over %d (z, t) pairs", report.worst, report.checked)
    return report
