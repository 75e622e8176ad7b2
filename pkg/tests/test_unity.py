"""Tests for the bump profiles and partitions of unity."""
import numpy as np
import pytest

from src.nets.multiscale import MultiscaleNet
from src.unity.partition import (
    PROFILE,
    partition,
    partition_many,
    smoothstep,
    smoothstep_prime,
    theta_tilde,
)


def _single_center_net() -> MultiscaleNet:
    return MultiscaleNet(levels=[np.zeros((1, 2))], n=2)


def _row_net() -> MultiscaleNet:
    return MultiscaleNet(levels=[np.array([[-2.0, 0.0], [-1.0, 0.0], [0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])], n=2)


# ── Profiles ──


class TestProfiles:
    def test_smoothstep_endpoints(self):
        assert smoothstep(0.0) == 0.0
        assert smoothstep(1.0) == 1.0
        assert smoothstep(0.5) == pytest.approx(0.5)
        assert smoothstep(-3.0) == 0.0 and smoothstep(4.0) == 1.0

    def test_smoothstep_prime_matches_difference(self):
        s, h = 0.3, 1e-6
        numeric = (smoothstep(s + h) - smoothstep(s - h)) / (2 * h)
        assert smoothstep_prime(s) == pytest.approx(numeric, rel=1e-6)

    def test_theta_plateau_and_support(self):
        assert PROFILE.theta(0.0) == 1.0
        assert PROFILE.theta(9.0) == 1.0
        assert PROFILE.theta(10.0) == 0.0
        assert 0.0 < PROFILE.theta(9.5) < 1.0

    def test_eta(self):
        assert PROFILE.eta(0.25) == pytest.approx(0.25)
        assert PROFILE.eta(1.0) == 1.0
        assert PROFILE.eta(3.0) == 1.0
        values = PROFILE.eta(np.linspace(0.0, 2.0, 201))
        assert np.all(np.diff(values) >= -1e-15)

    def test_phi_is_eta_over_w(self):
        w = np.array([0.2, 0.7, 1.5])
        assert np.allclose(PROFILE.phi(w)[1:] * w[1:], PROFILE.eta(w)[1:])
        assert PROFILE.phi(w)[0] == 1.0


# ── Partition ──


class TestPartition:
    def test_sums_to_one_everywhere(self):
        net = _row_net()
        rng = np.random.default_rng(1)
        Y = rng.uniform(-15.0, 15.0, size=(300, 2))
        assert np.allclose(partition_many(net, 0, Y).total(), 1.0)

    def test_psi_vanishes_near_centers(self):
        point = partition(_row_net(), 0, np.array([0.3, 4.0]))
        assert point.psi == 0.0
        assert point.weights.sum() == pytest.approx(1.0)

    def test_far_point_is_all_psi(self):
        point = partition(_row_net(), 0, np.array([0.0, 50.0]))
        assert point.psi == 1.0
        assert len(point.indices) == 0

    def test_empty_level(self):
        net = MultiscaleNet(levels=[np.zeros((0, 2))], n=2)
        level = partition_many(net, 0, np.zeros((2, 2)))
        assert np.allclose(level.psi, 1.0)

    def test_weights_at(self):
        level = partition_many(_row_net(), 0, np.array([[0.0, 0.0]]))
        weights = level.weights_at(0)
        assert sorted(weights) == [0, 1, 2, 3, 4]
        assert sum(weights.values()) == pytest.approx(1.0)
        assert weights[0] == pytest.approx(0.2)

    def test_gradients_match_finite_differences(self):
        net = _single_center_net()
        y = np.array([9.3, 0.4])
        h = 1e-6
        base = partition(net, 0, y)
        assert 0.0 < base.psi < 1.0
        for axis in range(2):
            step = np.zeros(2)
            step[axis] = h
            plus, minus = partition(net, 0, y + step), partition(net, 0, y - step)
            assert base.gradients[0, axis] == pytest.approx((plus.weights[0] - minus.weights[0]) / (2 * h), abs=1e-6)
            assert base.grad_psi[axis] == pytest.approx((plus.psi - minus.psi) / (2 * h), abs=1e-6)

    def test_theta_tilde_gradient_points_inward(self):
        value, grad = theta_tilde(_single_center_net(), 0, 0, np.array([9.5, 0.0]))
        assert 0.0 < value < 1.0
        assert grad[0] < 0.0 and grad[1] == 0.0
