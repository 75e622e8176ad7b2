"""Tests for multiscale nets, CCBP fitting, plane families and coherence audits."""
import numpy as np
import pytest

from src.beta.cloud import PointCloud, plane_cloud
from src.beta.profiles import build_profile
from src.beta.statistics import alpha_profile, eps_profiles
from src.geom.primitives import coordinate_plane
from src.nets.audit import audit_ccbp, audit_family
from src.nets.ccbp import Ccbp, fit_ccbp, uniform_ccbp
from src.nets.family import fitted_family, tangent_family
from src.nets.multiscale import GridIndex, MultiscaleNet, build_net, greedy_net, scale
from src.sets.generators import MobiusSpec, annulus_strip, mobius
from src.shared.errors import DegenerateBallError, SchemaError


@pytest.fixture
def line():
    return plane_cloud(coordinate_plane(2, 1), 3.0, 0.01)


@pytest.fixture
def line_net(line):
    return build_net(line, depth=1)


def _tilted_frame(angle: float) -> np.ndarray:
    return np.array([[np.cos(angle), np.sin(angle)]])


# ── Grid index and nets ──


class TestGridIndex:
    def test_query_matches_brute_force(self):
        rng = np.random.default_rng(3)
        centers = rng.uniform(0.0, 1.0, size=(200, 2))
        grid = GridIndex(centers, 0.01)
        y = np.array([0.4, 0.6])
        found, dist = grid.query(y, 0.2)
        expected = np.flatnonzero(np.linalg.norm(centers - y, axis=1) < 0.2)
        assert found.tolist() == expected.tolist()
        assert np.allclose(dist, np.linalg.norm(centers[expected] - y, axis=1))

    def test_pairs_within_closed_and_open(self):
        grid = GridIndex(np.array([[0.0, 0.0], [1.0, 0.0]]), 1.0)
        assert len(grid.pairs_within(1.0, closed=True)[0]) == 2
        assert len(grid.pairs_within(1.0, closed=False)[0]) == 0

    def test_empty_index(self):
        grid = GridIndex(np.zeros((0, 2)), 1.0)
        assert len(grid.query(np.zeros(2), 5.0)[0]) == 0
        assert np.isinf(grid.nearest_distance(np.zeros((1, 2)), 5.0)[0])


class TestBuildNet:
    def test_levels_are_separated_and_maximal(self, line, line_net):
        for k in range(line_net.depth + 1):
            centers = line_net.centers(k)
            gaps = np.linalg.norm(centers[:, None] - centers[None], axis=2)
            np.fill_diagonal(gaps, np.inf)
            assert gaps.min() >= scale(k) * (1.0 - 1e-12)
            nearest = np.linalg.norm(line.points[:, None] - centers[None], axis=2).min(axis=1)
            assert nearest.max() <= scale(k) * (1.0 + 1e-12)

    def test_structure_is_clean(self, line_net):
        assert line_net.structural_violations() == []

    def test_deterministic(self, line):
        assert np.array_equal(build_net(line, 1).centers(1), build_net(line, 1).centers(1))

    def test_keep_predicate_can_empty_a_level(self, line):
        net = build_net(line, 1, keep=lambda points, k: np.full(len(points), k == 0))
        assert net.counts()[1] == 0
        assert net.counts()[0] > 0

    def test_empty_cloud(self):
        cloud = PointCloud(points=np.zeros((0, 2)), weights=np.zeros(0), intrinsic_dim=1)
        net = build_net(cloud, 2)
        assert net.counts() == [0, 0, 0]

    def test_greedy_net_scans_lexicographically(self):
        points = np.array([[1.0, 0.0], [0.0, 0.0], [0.5, 0.0]])
        assert greedy_net(points, 1.0).tolist() == [1, 0]

    def test_dict_roundtrip(self, line_net):
        again = MultiscaleNet.from_dict(line_net.to_dict())
        assert again.counts() == line_net.counts()

    def test_violations_are_reported(self):
        crowded = MultiscaleNet(levels=[np.array([[0.0, 0.0], [0.5, 0.0]])], n=2)
        assert [v["condition"] for v in crowded.structural_violations()] == ["separation"]
        orphan = MultiscaleNet(levels=[np.array([[0.0, 0.0]]), np.array([[5.0, 0.0]])], n=2)
        assert [v["condition"] for v in orphan.structural_violations()] == ["nesting"]

    def test_in_neighbourhood(self, line_net):
        inside = line_net.in_neighbourhood(np.array([[0.0, 0.5], [0.0, 30.0]]), 0, 10.0)
        assert inside.tolist() == [True, False]


# ── CCBP ──


class TestCcbp:
    @pytest.mark.parametrize("mode", ["L2", "MINIMAX"])
    def test_fitted_planes_follow_the_line(self, line, line_net, mode):
        ccbp = fit_ccbp(line, line_net, coordinate_plane(2, 1), fit_mode=mode)
        for k in range(ccbp.depth + 1):
            assert np.allclose(np.abs(ccbp.frames[k][:, 0, 0]), 1.0)
            assert np.all(ccbp.fit_residuals[k] < 1e-9)

    def test_l1_keeps_the_net_structure(self, line, line_net):
        ccbp = fit_ccbp(line, line_net, coordinate_plane(2, 1), fit_mode="L1")
        assert ccbp.net.structural_violations() == []

    def test_unknown_mode(self, line, line_net):
        with pytest.raises(SchemaError):
            fit_ccbp(line, line_net, coordinate_plane(2, 1), fit_mode="L3")

    def test_degenerate_ball(self):
        cloud = PointCloud(points=np.zeros((1, 2)), weights=np.ones(1), intrinsic_dim=1)
        net = build_net(cloud, 0)
        with pytest.raises(DegenerateBallError):
            fit_ccbp(cloud, net, coordinate_plane(2, 1))

    def test_dict_roundtrip(self, line_net):
        ccbp = uniform_ccbp(line_net, coordinate_plane(2, 1), eps=0.05)
        again = Ccbp.from_dict(ccbp.to_dict())
        assert again.eps == 0.05
        assert again.net.counts() == ccbp.net.counts()
        assert np.allclose(again.frames[1], ccbp.frames[1])

    def test_from_dict_rejects_missing_frames(self, line_net):
        data = uniform_ccbp(line_net, coordinate_plane(2, 1)).to_dict()
        data["frames"] = data["frames"][:1]
        with pytest.raises(SchemaError):
            Ccbp.from_dict(data)

    def test_projectors(self, line_net):
        ccbp = uniform_ccbp(line_net, coordinate_plane(2, 1))
        assert np.allclose(ccbp.projectors(0)[0], [[1.0, 0.0], [0.0, 0.0]])


# ── Audits ──


class TestAuditCcbp:
    def test_flat_configuration_passes(self, line_net):
        report = audit_ccbp(uniform_ccbp(line_net, coordinate_plane(2, 1), eps=0.01))
        assert report.passed
        assert report.effective_eps == pytest.approx(0.0, abs=1e-12)
        assert report.conditions["same_level"].checked > 0
        assert report.conditions["cross_level"].checked > 0

    def test_tilted_plane_fails_same_level(self, line_net):
        ccbp = uniform_ccbp(line_net, coordinate_plane(2, 1), eps=0.001)
        ccbp.frames[1][0] = _tilted_frame(0.5)
        report = audit_ccbp(ccbp)
        assert not report.passed
        assert "same_level" in report.failing()
        assert report.conditions["same_level"].worst_angle == pytest.approx(0.5)

    def test_offset_sigma0_fails_base_proximity(self, line_net):
        sigma0 = coordinate_plane(2, 1, base=[0.0, 0.5])
        report = audit_ccbp(uniform_ccbp(line_net, sigma0, eps=0.01))
        assert report.conditions["base_proximity"].value == pytest.approx(0.5)
        assert "base_proximity" in report.failing()

    def test_threshold_and_dict(self, line_net):
        report = audit_ccbp(uniform_ccbp(line_net, coordinate_plane(2, 1), eps=0.02), c_audit=10.0)
        data = report.to_dict()
        assert data["threshold"] == pytest.approx(0.2)
        assert set(data["conditions"]) == {"base_proximity", "same_level", "sigma0_link", "cross_level"}


class TestFamilies:
    def test_tangent_family_audit_passes(self, line):
        family = tangent_family(line, 1, indices=range(0, line.size, 20))
        report = audit_family(line, family, coordinate_plane(2, 1), eps=0.01)
        assert report.passed
        assert report.c_audit == 1.0

    def test_coarse_plane_below_switch_level(self, line):
        coarse = coordinate_plane(2, 1)
        family = tangent_family(line, 2, indices=[0], coarse_plane=coarse, switch_level=1)
        assert np.allclose(family.frames[0, 0], coarse.frame)

    def test_alpha_vanishes_on_a_line(self, line):
        family = tangent_family(line, 2, indices=[300])
        assert alpha_profile(family, 0) == pytest.approx([0.0, 0.0], abs=1e-12)

    def test_fitted_family_is_horizontal(self, line):
        family = fitted_family(line, 1, indices=[300])
        assert np.allclose(np.abs(family.frames[0, :, 0, 0]), 1.0)

    def test_position_of_missing_point(self, line):
        family = tangent_family(line, 1, indices=[1, 2])
        with pytest.raises(KeyError):
            family.position(5)


def test_eps_profiles_vanish_for_parallel_planes(line_net):
    ccbp = uniform_ccbp(line_net, coordinate_plane(2, 1))
    eps = eps_profiles(ccbp, np.zeros(2), 1)
    assert eps.eps_k == pytest.approx(0.0, abs=1e-12)
    assert eps.eps_prime_k == pytest.approx(0.0, abs=1e-12)


def test_eps_profiles_vanish_far_away(line_net):
    ccbp = uniform_ccbp(line_net, coordinate_plane(2, 1))
    ccbp.frames[1][:] = _tilted_frame(0.3)
    eps = eps_profiles(ccbp, np.array([0.0, 50.0]), 1)
    assert eps.eps_k == 0.0 and eps.eps_prime_k == 0.0


def test_profile_with_ccbp_and_family(line, line_net):
    ccbp = uniform_ccbp(line_net, coordinate_plane(2, 1))
    family = tangent_family(line, 1, indices=[300])
    profile = build_profile(line, [300], depth=1, ccbp=ccbp, family=family)
    rows = profile.rows()
    assert rows[0].alpha_k == pytest.approx(0.0, abs=1e-12)
    assert profile.points[0].J == pytest.approx(0.0, abs=1e-20)


def test_twisted_strip_fails_the_family_audit_where_the_annulus_passes():
    sigma0 = coordinate_plane(3, 2)
    twisted = mobius(MobiusSpec(tau=1e-3, n_angular=40, n_transverse=1))
    flat = annulus_strip(tau=1e-3, n_angular=40, n_transverse=1)
    twisted_report = audit_family(twisted, tangent_family(twisted, 1), sigma0, eps=0.1)
    flat_report = audit_family(flat, tangent_family(flat, 1), sigma0, eps=0.1)
    assert not twisted_report.passed
    assert twisted_report.conditions["same_scale"].worst_angle >= 1.0
    assert flat_report.passed
