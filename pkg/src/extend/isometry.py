"""
Isometry fields R_k(x) over a Sigma_0 grid.

R_0 = I and R_{k+1} = H(S_k) with
    S_k = Pi_{k+1} R_k Pi_0 + (I - Pi_{k+1}) R_k (I - Pi_0),
Pi_k the projector onto T_k(x), the tangent space of Sigma_k at f_k(x), and
H(S) = (S S^T)^{-1/2} S the orthogonal polar factor.

Queries read R_k at the nearest grid node, which needs a pitch of at most
r_K / 4 and queries inside the grid patch.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from src.flow.param_map import ParamMap, SurfaceGrid
from src.geom.distances import grassmann_distance
from src.geom.primitives import AffinePlane, as_vec, project
from src.nets.multiscale import scale
from src.shared.errors import IsometryDomainError, NonOrthonormalFrameError, SchemaError

log = logging.getLogger(__name__)

DOMAIN_RADIUS = 0.5
RANK_TOL = 1e-12
PITCH_FACTOR = 0.25


def split(plane: AffinePlane, z) -> tuple[np.ndarray, np.ndarray]:
    """z = p + q with p the orthogonal projection onto the plane; accepts (n,) or (m, n)."""
    z = as_vec(z, plane.n)
    p = project(plane, z)
    return p, z - p


def project_isometry_many(S: np.ndarray, radius: float = DOMAIN_RADIUS) -> np.ndarray:
    """
    H(S) on a stack (m, n, n) through the eigendecomposition of S S^T.

    Raises:
        IsometryDomainError: |S S^T - I| > radius for some entry of the stack
    """
    S = np.asarray(S, dtype=float)
    M = np.einsum("mij,mkj->mik", S, S)
    M = 0.5 * (M + np.swapaxes(M, 1, 2))
    w, V = np.linalg.eigh(M)
    excess = np.abs(w - 1.0).max(axis=1)
    bad = np.flatnonzero(excess > radius)
    if bad.size:
        raise IsometryDomainError(
            f"|S S^T - I| = {excess[bad[0]]:.3g} exceeds {radius} at entry {int(bad[0])}"
        )
    inv_sqrt = np.einsum("mij,mj,mkj->mik", V, 1.0 / np.sqrt(w), V)
    return inv_sqrt @ S


def project_isometry(S, radius: float = DOMAIN_RADIUS) -> np.ndarray:
    """H(S) = (S S^T)^{-1/2} S for a single n x n map."""
    return project_isometry_many(np.asarray(S, dtype=float)[None], radius)[0]


def _tangent_projectors(frame0: np.ndarray, jacobians: np.ndarray) -> np.ndarray:
    pushed = np.einsum("mij,dj->mid", jacobians, frame0)
    Q, R = np.linalg.qr(pushed)
    diag = np.abs(np.diagonal(R, axis1=1, axis2=2))
    if diag.size and diag.min() < RANK_TOL:
        raise NonOrthonormalFrameError("Df_k collapses the tangent plane of Sigma_0")
    return np.einsum("mid,mjd->mij", Q, Q)


@dataclass(eq=False)
class IsometryField:
    """rotations[k, i] = R_k at grid node i; projectors[k, i] = Pi_k there; images[k, i] = f_k(x_i)."""
    grid: SurfaceGrid
    rotations: np.ndarray
    projectors: np.ndarray
    images: np.ndarray
    sigma0: AffinePlane

    @property
    def depth(self) -> int:
        return self.rotations.shape[0] - 1

    @property
    def max_pitch(self) -> float:
        return PITCH_FACTOR * scale(self.depth)

    @property
    def pitch_ok(self) -> bool:
        return self.grid.pitch <= self.max_pitch * (1.0 + 1e-12)

    @cached_property
    def tree(self) -> cKDTree:
        return cKDTree(self.grid.points)

    def nearest_node(self, X) -> np.ndarray:
        return self.tree.query(np.atleast_2d(np.asarray(X, dtype=float)))[1]

    def rotation(self, k: int, x) -> np.ndarray:
        """R_k at the grid node nearest to x."""
        return self.rotations[k, int(self.nearest_node(x)[0])]

    def outside_patch(self, X) -> np.ndarray:
        """Mask of points whose Sigma_0 coordinates leave the grid by more than half a pitch."""
        coords = self.sigma0.coordinates(np.atleast_2d(np.asarray(X, dtype=float)))
        if not len(self.grid.coords):
            return np.ones(len(coords), dtype=bool)
        slack = 0.5 * self.grid.pitch
        low = self.grid.coords.min(axis=0) - slack
        high = self.grid.coords.max(axis=0) + slack
        offset = self.sigma0.coordinates(self.grid.points[:1])[0] - self.grid.coords[0]
        coords = coords - offset
        return np.any((coords < low) | (coords > high), axis=1)

    def neighbour_jump(self) -> float:
        """max over levels and adjacent grid nodes of |R_k(x_i) - R_k(x_j)| (spectral norm)."""
        pairs = self.tree.query_pairs(1.01 * self.grid.pitch, output_type="ndarray")
        if not len(pairs):
            return 0.0
        diffs = self.rotations[:, pairs[:, 0]] - self.rotations[:, pairs[:, 1]]
        return float(np.linalg.norm(diffs, ord=2, axis=(2, 3)).max())

    def increments(self) -> list[float]:
        """max over nodes of |R_{k+1} - R_k| (spectral norm) for each k."""
        return [
            float(np.linalg.norm(self.rotations[k + 1] - self.rotations[k], ord=2, axis=(1, 2)).max())
            for k in range(self.depth)
        ]

    def orthogonality_residual(self) -> float:
        n = self.rotations.shape[-1]
        gram = np.einsum("kmji,kmjl->kmil", self.rotations, self.rotations)
        return float(np.abs(gram - np.eye(n)).max())

    def to_dict(self) -> dict:
        return {
            "grid": {"points": self.grid.points.tolist(), "coords": self.grid.coords.tolist(), "pitch": self.grid.pitch},
            "max_pitch": self.max_pitch,
            "pitch_ok": self.pitch_ok,
            "rotations": self.rotations.tolist(),
        }


def build_isometry_field(pm: ParamMap, grid: SurfaceGrid, strict: bool = False) -> IsometryField:
    """
    Recursion from R_0 = I over all grid nodes at once, sequential in k.

    A grid coarser than r_K / 4 is logged (and recorded as pitch_ok = False)
    unless `strict`, in which case it is rejected.

    Raises:
        SchemaError: strict and the grid pitch exceeds r_K / 4
        IsometryDomainError: some S_k leaves the domain of H (the CCBP is too rough)
    """
    max_pitch = PITCH_FACTOR * scale(pm.depth)
    if grid.pitch > max_pitch * (1.0 + 1e-12):
        message = f"grid pitch {grid.pitch:.3g} exceeds r_K/4 = {max_pitch:.3g}; R_k jumps between nodes"
        if strict:
            raise SchemaError(message, path="grid_pitch")
        log.warning(message)
    images, jacobians = pm.history_many(grid.points, jacobian=True)
    m, n = grid.points.shape
    frame0 = pm.sigma0.frame
    identity = np.eye(n)
    pi0 = pm.sigma0.projector
    projectors = np.stack([_tangent_projectors(frame0, J) for J in jacobians])
    rotations = np.empty((pm.depth + 1, m, n, n))
    rotations[0] = identity
    for k in range(pm.depth):
        R = rotations[k]
        Pi = projectors[k + 1]
        S = Pi @ R @ pi0 + (identity - Pi) @ R @ (identity - pi0)
        try:
            rotations[k + 1] = project_isometry_many(S)
        except IsometryDomainError as exc:
            raise IsometryDomainError(f"level {k}: {exc}") from exc
        log.debug("Level %d: max |R_{k+1} - R_k| = %.4g", k,
                  float(np.abs(rotations[k + 1] - R).max()) if m else 0.0)
    field = IsometryField(grid=grid, rotations=rotations, projectors=projectors, images=np.stack(images),
                          sigma0=pm.sigma0)
    log.info("Built isometry field on %d nodes over %d levels", m, pm.depth + 1)
    return field


def mapping_residual(field: IsometryField, frame0: np.ndarray, k: Optional[int] = None) -> float:
    """Worst Grassmann distance between R_k T_0 and T_k over nodes (and levels when k is None)."""
    levels = range(field.depth + 1) if k is None else [k]
    worst = 0.0
    for level in levels:
        for i in range(field.rotations.shape[1]):
            moved = frame0 @ field.rotations[level, i].T
            w, V = np.linalg.eigh(field.projectors[level, i])
            tangent = V[:, w > 0.5].T
            worst = max(worst, grassmann_distance(moved, tangent))
    return worst
