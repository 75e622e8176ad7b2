"""Tests for the construction maps, surface checks and distortion estimates."""
import numpy as np
import pytest

from src.beta.cloud import plane_cloud
from src.flow.checks import flatness_check, graph_check, graph_checks
from src.flow.distortion import distortion, measure_distortion, sample_pairs
from src.flow.param_map import (
    ParamMap,
    Region,
    SurfaceSample,
    dsigma,
    eps_prime_sum,
    evaluate,
    sigma,
    sigma0_grid,
    surface_sample,
    tangential_stretch,
)
from src.geom.primitives import coordinate_plane
from src.nets.audit import audit_ccbp
from src.nets.ccbp import Ccbp, fit_ccbp, uniform_ccbp
from src.nets.multiscale import MultiscaleNet, build_net, scale
from src.sets.generators import SnowflakeSpec, snowflake
from src.shared.errors import DimensionMismatchError, InsufficientSampleError

SIGMA0 = coordinate_plane(2, 1)


def _frame(angle: float) -> np.ndarray:
    return np.array([[np.cos(angle), np.sin(angle)]])


@pytest.fixture(scope="module")
def net():
    return build_net(plane_cloud(SIGMA0, 1.5, 0.005), depth=2)


@pytest.fixture
def flat_pm(net):
    return ParamMap(uniform_ccbp(net, SIGMA0))


@pytest.fixture
def bent_pm(net):
    ccbp = uniform_ccbp(net, SIGMA0)
    for k, level in enumerate(ccbp.frames):
        for j in range(len(level)):
            level[j] = _frame(0.1 * np.sin(3.0 * j + k))
    return ParamMap(ccbp)


@pytest.fixture(scope="module")
def flake_ccbp():
    cloud = snowflake(SnowflakeSpec.constant(3, 0.05, max_spacing=0.002))
    return fit_ccbp(cloud, build_net(cloud, depth=2), SIGMA0)


def _depth_reports(spec: SnowflakeSpec):
    """Distortion of f_1 and f_2 over the middle of a snowflake."""
    cloud = snowflake(spec)
    ccbp = fit_ccbp(cloud, build_net(cloud, depth=2), SIGMA0)
    return [
        distortion(ParamMap(ccbp, depth=k), n_pairs=1000, seed=0, radius=0.4, center=[0.5, 0.0])
        for k in (1, 2)
    ]


@pytest.fixture
def folded_pm():
    """One ball per level; the level-1 plane is nearly vertical."""
    net = MultiscaleNet(levels=[np.zeros((1, 2)), np.zeros((1, 2))], n=2)
    frames = [_frame(0.0)[None], _frame(1.5)[None]]
    return ParamMap(Ccbp(net=net, frames=frames, sigma0=SIGMA0, eps=0.1))


def _central_difference(fn, y, h=1e-6):
    columns = []
    for axis in range(len(y)):
        step = np.zeros(len(y))
        step[axis] = h
        columns.append((fn(y + step) - fn(y - step)) / (2 * h))
    return np.stack(columns, axis=-1)


# ── Maps ──


class TestParamMap:
    def test_identity_on_sigma0(self, flat_pm):
        Z = np.stack([np.linspace(-0.5, 0.5, 11), np.zeros(11)], axis=1)
        assert np.allclose(flat_pm.evaluate_many(Z), Z, atol=1e-14)

    def test_first_step_projects_onto_the_planes(self, flat_pm):
        assert np.allclose(flat_pm.sigma(0, [0.2, 0.3]), [0.2, 0.0])

    def test_tail_bound(self, flat_pm):
        assert flat_pm.tail_bound() == pytest.approx(100.0 / 9.0 * scale(2))
        assert flat_pm.tail_bound(0) == pytest.approx(100.0 / 9.0)

    def test_steps_move_at_most_ten_radii(self, bent_pm):
        rng = np.random.default_rng(5)
        for z in rng.uniform(-1.0, 1.0, size=(20, 2)):
            trajectory = bent_pm.evaluate(z)
            for k, step in enumerate(trajectory.displacements):
                assert step <= 10.0 * scale(k)

    def test_dsigma_matches_finite_differences(self, bent_pm):
        y = np.array([0.0, 9.5])
        numeric = _central_difference(lambda p: bent_pm.sigma(0, p), y)
        assert np.allclose(bent_pm.dsigma(0, y), numeric, atol=1e-5)

    def test_chain_rule_jacobian(self, bent_pm):
        z = np.array([0.05, 0.3])
        _, J = bent_pm.evaluate_many(z, jacobian=True)
        numeric = _central_difference(lambda p: bent_pm.evaluate_many(p)[0], z)
        assert np.allclose(J[0], numeric, atol=1e-5)

    def test_trajectory_jacobian_matches_batch(self, bent_pm):
        z = np.array([-0.2, 0.1])
        trajectory = bent_pm.evaluate(z, jacobian=True)
        images, J = bent_pm.evaluate_many(z, jacobian=True)
        assert np.allclose(trajectory.image, images[0])
        assert np.allclose(trajectory.jacobians[-1], J[0])

    def test_results_do_not_depend_on_threads(self, net):
        pm = ParamMap(uniform_ccbp(net, SIGMA0), chunk_size=7)
        Z = np.random.default_rng(2).uniform(-1.0, 1.0, size=(50, 2))
        assert np.array_equal(pm.evaluate_many(Z, threads=1), pm.evaluate_many(Z, threads=3))

    def test_history_ends_at_the_image(self, bent_pm):
        Z = np.array([[0.1, 0.2], [0.4, -0.1]])
        history = bent_pm.history_many(Z)
        assert len(history) == bent_pm.depth + 1
        assert np.allclose(history[-1], bent_pm.evaluate_many(Z))

    def test_far_points_are_frozen(self, flat_pm):
        trajectory = flat_pm.evaluate([0.0, 50.0])
        assert trajectory.tags == [Region.OUTSIDE, Region.OUTSIDE]
        assert trajectory.frozen_after() == 0
        assert np.allclose(trajectory.image, [0.0, 50.0])

    def test_region_tags(self, flat_pm):
        assert flat_pm.region_tags(0, [[0.0, 0.5], [0.0, 9.5], [0.0, 12.0]]) == [
            Region.CORE,
            Region.SHELL,
            Region.OUTSIDE,
        ]

    def test_trajectory_dict(self, flat_pm):
        data = flat_pm.evaluate([0.1, 0.0]).to_dict()
        assert len(data["states"]) == 3
        assert data["tail_bound"] == pytest.approx(flat_pm.tail_bound())

    def test_module_functions(self, bent_pm):
        y = np.array([0.1, 0.2])
        assert np.allclose(sigma(bent_pm, 1, y), bent_pm.sigma(1, y))
        assert np.allclose(dsigma(bent_pm, 1, y), bent_pm.dsigma(1, y))
        assert np.allclose(evaluate(bent_pm, y).image, bent_pm.evaluate(y).image)

    def test_depth_beyond_ccbp(self, net):
        with pytest.raises(DimensionMismatchError):
            ParamMap(uniform_ccbp(net, SIGMA0), depth=5)

    def test_query_dimension(self, flat_pm):
        with pytest.raises(DimensionMismatchError):
            flat_pm.evaluate_many(np.zeros((2, 3)))

    def test_tangent_frame_of_identity(self, flat_pm):
        assert np.allclose(np.abs(flat_pm.tangent_frame(np.eye(2))), SIGMA0.frame)

    def test_tangential_stretch_and_eps_prime_on_flat_data(self, flat_pm):
        assert tangential_stretch(flat_pm, 0, [0.1, 0.0], [1.0, 0.0]) == pytest.approx(0.0, abs=1e-12)
        assert eps_prime_sum(flat_pm, [0.1, 0.0]) == pytest.approx(0.0, abs=1e-20)


class TestSurfaceSample:
    def test_grid(self):
        grid = sigma0_grid(SIGMA0, 0.5, 0.1)
        assert len(grid.points) == 11
        assert grid.coords.shape == (11, 1)
        assert np.allclose(grid.points[:, 1], 0.0)

    def test_grid_in_the_plane(self):
        grid = sigma0_grid(coordinate_plane(3, 2), 0.2, 0.1)
        assert grid.points.shape == (25, 3)

    def test_flat_surface_equals_grid(self, flat_pm):
        grid = sigma0_grid(SIGMA0, 1.0, 0.01)
        surface = surface_sample(flat_pm, grid)
        assert surface.k == flat_pm.depth
        assert np.allclose(surface.points, grid.points, atol=1e-14)
        assert surface.half_width == pytest.approx(1.0)
        assert surface.to_rows()[0]["source"] == 0


# ── Surface checks ──


class TestGraphCheck:
    def test_flat_surface_is_a_graph(self, flat_pm):
        surface = surface_sample(flat_pm, sigma0_grid(SIGMA0, 1.0, 0.01))
        results = graph_checks(flat_pm, surface, 1)
        assert results
        assert all(r.single_valued for r in results)
        assert max(r.lipschitz_estimate for r in results) == pytest.approx(0.0, abs=1e-9)

    def test_nearly_vertical_plane_breaks_the_graph(self, folded_pm):
        surface = surface_sample(folded_pm, sigma0_grid(SIGMA0, 1.5, 0.01))
        result = graph_check(folded_pm, 1, 0, surface)
        assert not result.single_valued
        assert result.collisions > 0
        assert result.lipschitz_estimate > 5.0

    def test_empty_box(self, flat_pm):
        surface = SurfaceSample(
            points=np.array([[40.0, 40.0]]), source=np.zeros(1, dtype=int), coords=np.zeros((1, 1)), k=2, pitch=0.01
        )
        with pytest.raises(InsufficientSampleError):
            graph_check(flat_pm, 2, 0, surface)
        assert graph_checks(flat_pm, surface) == []

    def test_to_dict(self, flat_pm):
        surface = surface_sample(flat_pm, sigma0_grid(SIGMA0, 1.0, 0.01))
        data = graph_check(flat_pm, 0, 0, surface).to_dict()
        assert data["single_valued"] is True
        assert data["n_samples"] > 0


class TestFlatness:
    def test_flat_surface_passes(self, flat_pm):
        surface = surface_sample(flat_pm, sigma0_grid(SIGMA0, 1.0, 0.01))
        report = flatness_check(flat_pm, surface, [0.2, 0.1], eps_in=0.01)
        assert report.worst == pytest.approx(0.0, abs=1e-9)
        assert report.passed is True
        assert report.checked > 0
        assert report.to_dict()["calibrated"] is False
        assert flatness_check(flat_pm, surface, [0.2], eps_in=0.01, calibrated=True).to_dict()["calibrated"] is True

    def test_without_eps_in(self, flat_pm):
        surface = surface_sample(flat_pm, sigma0_grid(SIGMA0, 1.0, 0.01))
        report = flatness_check(flat_pm, surface, [0.2], anchors=[100])
        assert report.ratio is None and report.passed is None
        assert report.worst_anchor == 100

    def test_local_edge_is_not_hidden_by_a_distant_gap(self, flat_pm):
        x = np.concatenate([np.arange(-1.0, 0.0501, 0.01), np.arange(0.6, 1.0001, 0.01)])
        points = np.stack([x, np.zeros_like(x)], axis=1)
        surface = SurfaceSample(points=points, source=np.arange(len(x)), coords=x[:, None], k=0, pitch=0.01)
        anchor = int(np.argmin(np.abs(x)))
        report = flatness_check(flat_pm, surface, [0.1], anchors=[anchor])
        assert report.resolution == pytest.approx(0.01, rel=1e-6)
        assert report.worst > 0.25

    def test_snowflake_image_within_budget(self, flake_ccbp):
        pm = ParamMap(flake_ccbp)
        surface = surface_sample(pm, sigma0_grid(SIGMA0, 0.4, 0.0025, center=[0.5, 0.0]))
        eps_in = audit_ccbp(flake_ccbp).effective_eps
        assert eps_in > 0.0
        report = flatness_check(pm, surface, [0.1, 0.03], eps_in=eps_in)
        assert report.worst > 0.0
        assert report.passed is True

    def test_scale_too_large_for_the_patch(self, flat_pm):
        surface = surface_sample(flat_pm, sigma0_grid(SIGMA0, 1.0, 0.01))
        with pytest.raises(InsufficientSampleError):
            flatness_check(flat_pm, surface, [2.0])


# ── Distortion ──


class TestDistortion:
    def test_sample_pairs(self):
        X, Y = sample_pairs(SIGMA0, 500, seed=4)
        separations = np.linalg.norm(X - Y, axis=1)
        assert np.all(separations >= 1e-4 * (1 - 1e-12)) and np.all(separations <= 1.0 + 1e-12)
        assert np.allclose(X[:, 1], 0.0) and np.allclose(Y[:, 1], 0.0)
        assert np.all(np.abs(X[:, 0]) <= 0.5)

    def test_sample_pairs_are_seeded(self):
        assert np.array_equal(sample_pairs(SIGMA0, 10, seed=1)[1], sample_pairs(SIGMA0, 10, seed=1)[1])

    def test_scaling_map(self):
        X, Y = sample_pairs(SIGMA0, 300, seed=0)
        report = measure_distortion(lambda Z: 2.0 * Z, X, Y)
        assert report.ratio_min == pytest.approx(2.0)
        assert report.spread == pytest.approx(1.0)
        assert report.exponent == pytest.approx(1.0)
        assert report.exponent_upper == pytest.approx(1.0)
        assert report.constant_upper == pytest.approx(2.0)

    def test_square_root_map_has_exponent_one_half(self):
        X = np.array([[0.0, 0.0]] * 4)
        Y = np.array([[s, 0.0] for s in (1e-4, 1e-3, 1e-2, 1e-1)])
        report = measure_distortion(lambda Z: np.sqrt(np.abs(Z)), X, Y)
        assert report.exponent == pytest.approx(0.5)

    def test_needs_distinct_pairs(self):
        with pytest.raises(InsufficientSampleError):
            measure_distortion(lambda Z: Z, np.zeros((1, 2)), np.ones((1, 2)))
        with pytest.raises(InsufficientSampleError):
            measure_distortion(lambda Z: Z, np.zeros((2, 2)), np.zeros((2, 2)))

    def test_flat_map_is_an_isometry(self, flat_pm):
        report = distortion(flat_pm, n_pairs=200, seed=3, eps_prime_points=2)
        assert report.ratio_min == pytest.approx(1.0, rel=1e-9)
        assert report.ratio_max == pytest.approx(1.0, rel=1e-9)
        assert report.eps_prime_max == pytest.approx(0.0, abs=1e-20)
        assert report.to_dict()["n_pairs"] == 200

    def test_reproducible(self, bent_pm):
        first = distortion(bent_pm, n_pairs=100, seed=8).to_dict()
        assert first == distortion(bent_pm, n_pairs=100, seed=8).to_dict()

    def test_summable_angles_keep_the_spread(self):
        coarse, fine = _depth_reports(SnowflakeSpec.summable(4, 0.1, ratio=0.5, max_spacing=0.001))
        assert abs(fine.spread / coarse.spread - 1.0) < 0.1

    def test_constant_angles_grow_the_spread(self):
        coarse, fine = _depth_reports(SnowflakeSpec.constant(4, 0.1, max_spacing=0.001))
        assert fine.spread > coarse.spread
        assert fine.exponent < 1.0
