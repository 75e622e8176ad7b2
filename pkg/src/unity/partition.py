"""
Partition of unity {theta_{j,k}} and psi_k over one level's balls.

theta~_{j,k}(y) = theta(|y - x_{j,k}| / r_k) with theta = 1 on [0, 9] and 0 on
[10, inf). With w = sum_j theta~_{j,k}, the weights are
theta_{j,k} = eta(w) theta~_{j,k} / w and psi_k = 1 - eta(w), where eta(t) = t
on [0, 1/2] and eta = 1 on [1, inf). Hence psi_k + sum_j theta_{j,k} = 1
everywhere, and psi_k = 0 wherever some theta~ equals 1 (on V_k^9).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from src.nets.multiscale import MultiscaleNet, scale

INNER_RADIUS = 9.0
OUTER_RADIUS = 10.0


def smoothstep(s):
    """Quintic S(s) = s^3 (10 - 15 s + 6 s^2) clamped to [0, 1]; C2 with flat ends."""
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (10.0 - 15.0 * s + 6.0 * s * s)


def smoothstep_prime(s):
    s = np.asarray(s, dtype=float)
    inside = (s > 0.0) & (s < 1.0)
    return np.where(inside, 30.0 * s * s * (1.0 - s) ** 2, 0.0)


@dataclass(frozen=True)
class BumpProfile:
    """Radial profile theta on [9, 10] and normalizing profile eta on [1/2, 1]."""
    inner: float = INNER_RADIUS
    outer: float = OUTER_RADIUS

    def theta(self, t):
        return 1.0 - smoothstep((np.asarray(t, dtype=float) - self.inner) / (self.outer - self.inner))

    def dtheta(self, t):
        width = self.outer - self.inner
        return -smoothstep_prime((np.asarray(t, dtype=float) - self.inner) / width) / width

    @staticmethod
    def eta(w):
        w = np.asarray(w, dtype=float)
        u = 2.0 * (w - 0.5)
        blended = w + smoothstep(u) * (1.0 - w)
        return np.where(w <= 0.5, w, np.where(w >= 1.0, 1.0, blended))

    @staticmethod
    def deta(w):
        w = np.asarray(w, dtype=float)
        u = 2.0 * (w - 0.5)
        blended = 1.0 - smoothstep(u) + 2.0 * smoothstep_prime(u) * (1.0 - w)
        return np.where(w <= 0.5, 1.0, np.where(w >= 1.0, 0.0, blended))

    def phi(self, w):
        """eta(w) / w, equal to 1 on [0, 1/2]."""
        w = np.asarray(w, dtype=float)
        safe = np.where(w > 0.5, w, 1.0)
        return np.where(w > 0.5, self.eta(safe) / safe, 1.0)

    def dphi(self, w):
        w = np.asarray(w, dtype=float)
        safe = np.where(w > 0.5, w, 1.0)
        return np.where(w > 0.5, (self.deta(safe) * safe - self.eta(safe)) / safe**2, 0.0)


PROFILE = BumpProfile()


def theta_tilde(net: MultiscaleNet, k: int, j: int, y, profile: BumpProfile = PROFILE) -> tuple[float, np.ndarray]:
    """theta~_{j,k}(y) and its gradient."""
    y = np.asarray(y, dtype=float)
    r = scale(k)
    offset = y - net.levels[k][j]
    dist = float(np.linalg.norm(offset))
    t = dist / r
    value = float(profile.theta(t))
    if dist == 0.0:
        return value, np.zeros_like(y)
    return value, float(profile.dtheta(t)) * offset / (dist * r)


@dataclass
class LevelPartition:
    """
    Partition at a batch of points, stored sparsely: pair p couples query
    rows[p] with center cols[p].
    """
    rows: np.ndarray
    cols: np.ndarray
    theta: np.ndarray
    grad_theta: np.ndarray
    psi: np.ndarray
    grad_psi: np.ndarray
    w: np.ndarray

    def weights_at(self, i: int) -> dict[int, float]:
        mask = self.rows == i
        return dict(zip(self.cols[mask].tolist(), self.theta[mask].tolist()))

    def total(self) -> np.ndarray:
        """psi + sum_j theta_j per query point."""
        sums = np.zeros(len(self.psi))
        np.add.at(sums, self.rows, self.theta)
        return sums + self.psi


def partition_many(net: MultiscaleNet, k: int, Y, profile: BumpProfile = PROFILE) -> LevelPartition:
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    m, n = Y.shape
    r = scale(k)
    if k > net.depth or not len(net.levels[k]):
        rows = np.zeros(0, dtype=int)
        cols = np.zeros(0, dtype=int)
        tilde = np.zeros(0)
        grad_tilde = np.zeros((0, n))
    else:
        rows, cols, dist = net.grid(k).query_many(Y, OUTER_RADIUS * r)
        offsets = Y[rows] - net.levels[k][cols]
        t = dist / r
        tilde = profile.theta(t)
        safe = np.where(dist > 0.0, dist, 1.0)
        grad_tilde = (profile.dtheta(t) / (safe * r))[:, None] * offsets
        grad_tilde[dist == 0.0] = 0.0

    w = np.zeros(m)
    np.add.at(w, rows, tilde)
    grad_w = np.zeros((m, n))
    np.add.at(grad_w, rows, grad_tilde)

    phi = profile.phi(w)
    dphi = profile.dphi(w)
    theta = phi[rows] * tilde
    grad_theta = phi[rows, None] * grad_tilde + (tilde * dphi[rows])[:, None] * grad_w[rows]
    eta = profile.eta(w)
    psi = 1.0 - eta
    grad_psi = -profile.deta(w)[:, None] * grad_w
    return LevelPartition(rows=rows, cols=cols, theta=theta, grad_theta=grad_theta, psi=psi, grad_psi=grad_psi, w=w)


@dataclass(frozen=True)
class PointPartition:
    indices: np.ndarray
    weights: np.ndarray
    gradients: np.ndarray
    psi: float
    grad_psi: np.ndarray


def partition(net: MultiscaleNet, k: int, y, profile: BumpProfile = PROFILE) -> PointPartition:
    """theta_{j,k}(y) for the centers within 10 r_k, psi_k(y), and all gradients."""
    level = partition_many(net, k, np.atleast_2d(np.asarray(y, dtype=float)), profile)
    return PointPartition(
        indices=level.cols,
        weights=level.theta,
        gradients=level.grad_theta,
        psi=float(level.psi[0]),
        grad_psi=level.grad_psi[0],
    )
