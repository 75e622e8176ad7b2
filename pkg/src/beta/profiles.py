"""Per-point multiscale statistic tables (BetaProfile) and their exports."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from src.beta.cloud import PointCloud
from src.beta.statistics import alpha_profile, beta_inf, beta_q, eps_profiles, jones_J, scale
from src.shared.jsonio import export_rows_csv

if TYPE_CHECKING:
    from src.nets.ccbp import Ccbp
    from src.nets.family import PlaneFamily

log = logging.getLogger(__name__)

CSV_COLUMNS = ["point_id", "k", "beta_inf", "beta_1", "eps_k", "eps_prime_k"]


@dataclass
class ScaleRow:
    point_id: int
    k: int
    beta_inf: float
    beta_1: float
    eps_k: float = 0.0
    eps_prime_k: float = 0.0
    alpha_k: Optional[float] = None


@dataclass
class PointProfile:
    point_id: int
    point: list[float]
    rows: list[ScaleRow]
    J_inf: float
    J_1: float
    J: Optional[float]


@dataclass
class BetaProfile:
    """beta/eps/alpha ladders for a set of base points, with their Jones sums."""
    depth: int
    q: float
    points: list[PointProfile] = field(default_factory=list)

    def rows(self) -> list[ScaleRow]:
        return [row for point in self.points for row in point.rows]

    def to_json(self) -> dict:
        return {
            "depth": self.depth,
            "q": self.q,
            "points": [
                {
                    "point_id": point.point_id,
                    "point": point.point,
                    "J_inf": point.J_inf,
                    "J_1": point.J_1,
                    "J": point.J,
                    "scales": [
                        {
                            "k": row.k,
                            "beta_inf": row.beta_inf,
                            "beta_1": row.beta_1,
                            "eps_k": row.eps_k,
                            "eps_prime_k": row.eps_prime_k,
                            "alpha_k": row.alpha_k,
                        }
                        for row in point.rows
                    ],
                }
                for point in self.points
            ],
        }

    def to_csv(self, output_path: Path) -> Path:
        records = [
            {column: getattr(row, column) for column in CSV_COLUMNS}
            for row in self.rows()
        ]
        return export_rows_csv(records, output_path, CSV_COLUMNS)


def build_profile(
    cloud: PointCloud,
    indices: Sequence[int],
    depth: int,
    q: float = 1.0,
    ccbp: Optional["Ccbp"] = None,
    family: Optional["PlaneFamily"] = None,
    polish: bool = True,
) -> BetaProfile:
    """
    Compute the profile at cloud points `indices` for k = 0..depth.

    eps columns need a CCBP and stay 0 without one; alpha and J need a plane
    family whose indices include the requested points.
    """
    profile = BetaProfile(depth=depth, q=q)
    for point_id in indices:
        x = cloud.points[point_id]
        rows = []
        for k in range(depth + 1):
            r = scale(k)
            row = ScaleRow(
                point_id=int(point_id),
                k=k,
                beta_inf=beta_inf(cloud, x, r),
                beta_1=beta_q(cloud, x, r, q, polish=polish),
            )
            if ccbp is not None and k <= ccbp.depth:
                eps = eps_profiles(ccbp, x, k)
                row.eps_k, row.eps_prime_k = eps.eps_k, eps.eps_prime_k
            rows.append(row)
        alphas: list[float] = []
        if family is not None:
            alphas = alpha_profile(family, family.position(int(point_id)), depth)
            for row, value in zip(rows, alphas):
                row.alpha_k = value
        sums = jones_J(
            beta_inf_values=[row.beta_inf for row in rows],
            beta_1_values=[row.beta_1 for row in rows],
            alpha_values=alphas,
        )
        profile.points.append(
            PointProfile(
                point_id=int(point_id),
                point=np.asarray(x).tolist(),
                rows=rows,
                J_inf=sums.J_inf,
                J_1=sums.J_1,
                J=sums.J if family is not None else None,
            )
        )
    log.info("Computed beta profile at %d points to depth %d", len(profile.points), depth)
    return profile
