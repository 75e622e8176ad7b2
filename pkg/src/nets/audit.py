"""
Coherence audits.

audit_ccbp checks a CCBP (base proximity, same-level, Sigma_0-link and
cross-level plane distances) against c_audit * eps; audit_family checks a
plane family P_k(x) directly against eps.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from src.beta.cloud import PointCloud
from src.geom.distances import plane_angle, plane_local_distance
from src.geom.primitives import AffinePlane
from src.nets.ccbp import Ccbp
from src.nets.family import PlaneFamily
from src.nets.multiscale import scale
from src.shared.errors import DisjointBallError

log = logging.getLogger(__name__)

CCBP_C_AUDIT = 25.0
FAMILY_C_AUDIT = 1.0
CENTER_TOL = 1e-12


@dataclass
class ConditionResult:
    """Worst value of one coherence condition and where it occurred."""
    name: str
    value: float = 0.0
    angle: float = 0.0
    worst_angle: float = 0.0
    level: Optional[int] = None
    indices: list[int] = field(default_factory=list)
    checked: int = 0
    skipped: int = 0
    passed: bool = True

    def record(self, value: float, angle: float, level: Optional[int], indices: list[int]) -> None:
        self.checked += 1
        self.worst_angle = max(self.worst_angle, angle)
        if value > self.value:
            self.value, self.angle, self.level, self.indices = value, angle, level, indices


@dataclass
class AuditReport:
    kind: str
    eps: float
    c_audit: float
    conditions: dict[str, ConditionResult] = field(default_factory=dict)
    structural: list[dict] = field(default_factory=list)

    @property
    def threshold(self) -> float:
        return self.c_audit * self.eps

    @property
    def effective_eps(self) -> float:
        """Largest measured coherence value."""
        return max((c.value for c in self.conditions.values()), default=0.0)

    @property
    def passed(self) -> bool:
        return not self.structural and all(c.passed for c in self.conditions.values())

    def finalize(self) -> "AuditReport":
        for condition in self.conditions.values():
            condition.passed = condition.value <= self.threshold
        return self

    def failing(self) -> list[str]:
        return [name for name, c in self.conditions.items() if not c.passed]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "eps": self.eps,
            "c_audit": self.c_audit,
            "threshold": self.threshold,
            "passed": self.passed,
            "effective_eps": self.effective_eps,
            "structural": self.structural,
            "conditions": {
                name: {
                    "value": c.value,
                    "angle": c.angle,
                    "worst_angle": c.worst_angle,
                    "level": c.level,
                    "indices": c.indices,
                    "checked": c.checked,
                    "skipped": c.skipped,
                    "passed": c.passed,
                }
                for name, c in self.conditions.items()
            },
        }


def _compare(result: ConditionResult, P1: AffinePlane, P2: AffinePlane, x, r: float, level, indices) -> None:
    try:
        value = plane_local_distance(P1, P2, x, r)
    except DisjointBallError:
        result.skipped += 1
        log.warning("%s: planes at %s miss B(x, %.3g); pair skipped", result.name, indices, r)
        return
    result.record(value, plane_angle(P1, P2), level, indices)


def audit_ccbp(ccbp: Ccbp, c_audit: float = CCBP_C_AUDIT) -> AuditReport:
    """
    Worst values of:
      base_proximity  dist(x_{j,0}, Sigma_0)
      same_level      d_{x_{j,k},100r_k}(P_{i,k}, P_{j,k}) for |x_i - x_j| <= 100 r_k
      sigma0_link     d_{x_{i,0},100}(P_{i,0}, Sigma_0) for centers within 2 of Sigma_0
      cross_level     d_{x_{i,k},20r_k}(P_{i,k}, P_{j,k+1}) for |x_{i,k} - x_{j,k+1}| <= 2 r_k
    plus structural breaches of separation, nesting and planes through centers.
    """
    report = AuditReport(kind="ccbp", eps=ccbp.eps, c_audit=c_audit)
    base = ConditionResult("base_proximity")
    same = ConditionResult("same_level")
    link = ConditionResult("sigma0_link")
    cross = ConditionResult("cross_level")
    report.conditions = {c.name: c for c in (base, same, link, cross)}
    report.structural = ccbp.net.structural_violations()
    sigma0 = ccbp.sigma0

    for k in range(ccbp.depth + 1):
        for j, center in enumerate(ccbp.centers(k)):
            if ccbp.plane(j, k).distance(center) > CENTER_TOL * max(1.0, float(np.abs(center).max())):
                report.structural.append({"condition": "plane_through_center", "k": k, "indices": [j], "value": None})

    if ccbp.depth >= 0:
        for j, center in enumerate(ccbp.centers(0)):
            base.record(float(sigma0.distance(center)), 0.0, 0, [j])
            if sigma0.distance(center) <= 2.0:
                _compare(link, ccbp.plane(j, 0), sigma0, center, 100.0, 0, [j])

    for k in range(ccbp.depth + 1):
        r = scale(k)
        qi, cj = ccbp.net.grid(k).pairs_within(100.0 * r)
        for i, j in zip(qi, cj):
            _compare(same, ccbp.plane(i, k), ccbp.plane(j, k), ccbp.centers(k)[j], 100.0 * r, k, [int(i), int(j)])
        if k < ccbp.depth and len(ccbp.centers(k + 1)):
            child_grid = ccbp.net.grid(k + 1)
            bound = np.nextafter(2.0 * r, np.inf)
            parents, children, _ = child_grid.query_many(ccbp.centers(k), bound)
            for i, j in zip(parents, children):
                _compare(cross, ccbp.plane(i, k), ccbp.plane(j, k + 1), ccbp.centers(k)[i], 20.0 * r, k, [int(i), int(j)])

    report.finalize()
    _log_report(report)
    return report


def audit_family(
    cloud: PointCloud,
    family: PlaneFamily,
    sigma0: AffinePlane,
    eps: float = 0.1,
    c_audit: float = FAMILY_C_AUDIT,
) -> AuditReport:
    """
    Worst values of:
      same_scale  d_{x,100r_k}(P_k(x), P_k(x')) for |x - x'| <= 100 r_k
      cross_scale d_{x,r_k}(P_k(x), P_{k+1}(x))
      base_link   d_{x,100}(P_0(x), Sigma_0) for x within 2 of Sigma_0
    """
    report = AuditReport(kind="family", eps=eps, c_audit=c_audit)
    same = ConditionResult("same_scale")
    cross = ConditionResult("cross_scale")
    link = ConditionResult("base_link")
    report.conditions = {c.name: c for c in (same, cross, link)}
    points = family.points
    tree = cKDTree(points)

    for k in range(family.depth + 1):
        r = scale(k)
        for i, j in sorted(tree.query_pairs(100.0 * r)):
            _compare(same, family.plane(i, k), family.plane(j, k), points[i], 100.0 * r, k, [int(i), int(j)])
            _compare(same, family.plane(j, k), family.plane(i, k), points[j], 100.0 * r, k, [int(j), int(i)])
    for i in range(len(points)):
        for k in range(family.depth):
            _compare(cross, family.plane(i, k), family.plane(i, k + 1), points[i], scale(k), k, [i])
        if sigma0.distance(points[i]) <= 2.0:
            _compare(link, family.plane(i, 0), sigma0, points[i], 100.0, 0, [i])

    report.finalize()
    _log_report(report)
    return report


def _log_report(report: AuditReport) -> None:
    if report.passed:
        log.info("%s audit passed (effective eps %.4g, threshold %.4g)", report.kind, report.effective_eps, report.threshold)
    else:
        log.warning(
            "%s audit failed: %s; %d structural issues",
            report.kind,
            ", ".join(report.failing()) or "structure",
            len(report.structural),
        )
