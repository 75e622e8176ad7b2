"""
Coherent collections of balls and planes (CCBP): a multiscale net, one
d-plane through each center, the model plane Sigma_0 and the budget eps.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from src.beta.cloud import PointCloud
from src.beta.fitting import distances, fit_plane_l1, fit_plane_l2, fit_plane_minimax
from src.geom.primitives import AffinePlane, Ball
from src.nets.multiscale import MultiscaleNet, scale
from src.shared.errors import DegenerateBallError, RankDeficientError, SchemaError
from src.shared.jsonio import require, require_matrix

log = logging.getLogger(__name__)

FIT_MODES = ("L2", "L1", "MINIMAX")
FIT_RADIUS_FACTOR = 110.0
RESELECT_FACTOR = 1.0 / 3.0


@dataclass(eq=False)
class Ccbp:
    net: MultiscaleNet
    frames: list[np.ndarray]
    sigma0: AffinePlane
    eps: float
    fit_mode: str = "L2"
    fit_residuals: list[np.ndarray] = field(default_factory=list)
    _planes: dict[tuple[int, int], AffinePlane] = field(default_factory=dict, repr=False)
    _projectors: dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def depth(self) -> int:
        return self.net.depth

    @property
    def n(self) -> int:
        return self.sigma0.n

    @property
    def d(self) -> int:
        return self.sigma0.d

    def centers(self, k: int) -> np.ndarray:
        return self.net.levels[k]

    def plane(self, j: int, k: int) -> AffinePlane:
        key = (int(j), int(k))
        if key not in self._planes:
            self._planes[key] = AffinePlane(base=self.net.levels[k][j], frame=self.frames[k][j])
        return self._planes[key]

    def projectors(self, k: int) -> np.ndarray:
        """Stacked tangential projectors (m_k, n, n) of the level-k planes."""
        if k not in self._projectors:
            frames = self.frames[k]
            self._projectors[k] = np.einsum("mdi,mdj->mij", frames, frames)
        return self._projectors[k]

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "fit_mode": self.fit_mode,
            "sigma0": self.sigma0.to_dict(),
            "net": self.net.to_dict(),
            "frames": [level.tolist() for level in self.frames],
            "fit_residuals": [level.tolist() for level in self.fit_residuals],
        }

    @classmethod
    def from_dict(cls, data: dict, path: str = "ccbp") -> "Ccbp":
        net = MultiscaleNet.from_dict(require(data, "net", "dict", path), f"{path}.net")
        sigma0_raw = require(data, "sigma0", "dict", path)
        sigma0 = AffinePlane(
            base=require_matrix(sigma0_raw, "base", f"{path}.sigma0", ndim=1),
            frame=require_matrix(sigma0_raw, "frame", f"{path}.sigma0"),
        )
        raw_frames = require(data, "frames", "list", path)
        if len(raw_frames) != len(net.levels):
            raise SchemaError("one frame list per net level expected", path=f"{path}.frames")
        frames = []
        for k, raw in enumerate(raw_frames):
            level = np.asarray(raw, dtype=float).reshape(len(net.levels[k]), sigma0.d, sigma0.n)
            frames.append(level)
        residuals = [np.asarray(level, dtype=float) for level in require(data, "fit_residuals", "list", path, default=[])]
        fit_mode = require(data, "fit_mode", "str", path, default="L2")
        if fit_mode not in FIT_MODES:
            raise SchemaError(f"fit_mode must be one of {FIT_MODES}", path=f"{path}.fit_mode")
        return cls(
            net=net,
            frames=frames,
            sigma0=sigma0,
            eps=float(require(data, "eps", "number", path)),
            fit_mode=fit_mode,
            fit_residuals=residuals,
        )


def uniform_ccbp(net: MultiscaleNet, sigma0: AffinePlane, eps: float = 0.2) -> Ccbp:
    """Every plane parallel to Sigma_0; the identity configuration when centers lie on Sigma_0."""
    frames = [np.broadcast_to(sigma0.frame, (len(level), sigma0.d, sigma0.n)).copy() for level in net.levels]
    return Ccbp(net=net, frames=frames, sigma0=sigma0, eps=eps, fit_residuals=[np.zeros(len(level)) for level in net.levels])


def _reselect_center(
    cloud: PointCloud,
    plane: AffinePlane,
    center: np.ndarray,
    r: float,
    fixed: np.ndarray,
) -> np.ndarray:
    """
    Sample in B(center, r/3) closest to the fitted plane, among those keeping
    distance >= r from every other center of the level.
    """
    idx = cloud.ball_indices(center, RESELECT_FACTOR * r)
    if idx.size == 0:
        return center
    dist = distances(plane, cloud.points[idx])
    for position in np.lexsort((idx, dist)):
        candidate = cloud.points[idx[position]]
        if not len(fixed) or np.linalg.norm(fixed - candidate, axis=1).min() >= r:
            return candidate
    return center


def fit_ccbp(
    cloud: PointCloud,
    net: MultiscaleNet,
    sigma0: AffinePlane,
    fit_mode: str = "L2",
    eps: float = 0.2,
    fit_radius_factor: float = FIT_RADIUS_FACTOR,
) -> Ccbp:
    """
    Fit P_{j,k} through x_{j,k} to cloud ∩ B(x_{j,k}, fit_radius_factor * r_k).

    L2 and L1 fits are translated through the center; L1 first re-selects
    the center inside B(x, r_k/3). MINIMAX fits planes through x directly.

    Raises:
        DegenerateBallError: a fitting ball holds fewer than d + 1 samples or
            samples that do not span a d-plane
    """
    if fit_mode not in FIT_MODES:
        raise SchemaError(f"fit_mode must be one of {FIT_MODES}", path="fit_mode")
    d = cloud.d
    new_levels: list[np.ndarray] = []
    frames: list[np.ndarray] = []
    residuals: list[np.ndarray] = []
    for k, level in enumerate(net.levels):
        r = scale(k)
        radius = fit_radius_factor * r
        centers = level.copy()
        level_frames = np.zeros((len(level), d, cloud.n))
        level_residuals = np.zeros(len(level))
        for j, center in enumerate(level):
            count = cloud.ball_indices(center, radius).size
            if count < d + 1:
                raise DegenerateBallError(j, k, count, d + 1)
            try:
                if fit_mode == "MINIMAX":
                    plane = fit_plane_minimax(cloud, center, radius).plane
                elif fit_mode == "L1":
                    fitted = fit_plane_l1(cloud, Ball(center, radius)).plane
                    others = np.delete(centers, j, axis=0)
                    centers[j] = _reselect_center(cloud, fitted, center, r, others)
                    plane = fitted.through(centers[j])
                else:
                    plane = fit_plane_l2(cloud, Ball(center, radius)).plane.through(center)
            except RankDeficientError as exc:
                raise DegenerateBallError(j, k, count, d + 1) from exc
            level_frames[j] = plane.frame
            inside = cloud.points[cloud.ball_indices(centers[j], radius)]
            level_residuals[j] = float(distances(plane, inside).max()) / radius if len(inside) else 0.0
        new_levels.append(centers)
        frames.append(level_frames)
        residuals.append(level_residuals)
        log.debug("Level %d: fitted %d planes (%s), worst residual %.4g", k, len(level), fit_mode,
                  float(level_residuals.max()) if len(level) else 0.0)
    fitted_net = MultiscaleNet(levels=new_levels, n=net.n) if fit_mode == "L1" else net
    log.info("Fitted CCBP with %d planes over %d levels", sum(len(level) for level in new_levels), len(new_levels))
    return Ccbp(net=fitted_net, frames=frames, sigma0=sigma0, eps=eps, fit_mode=fit_mode, fit_residuals=residuals)
