import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from agsf.gaussian import Gaussian, JointGaussian, condition_mixture
from agsf.models import range_bearing, range_bearing_jacobian
from agsf.moments import (
    Transform,
    UnscentedConfig,
    fd_hessians,
    fd_jacobian,
    kalman_condition,
    linear_moments,
    sigma_points,
    unscented_moments,
)
from conftest import random_spd


def affine(A, b, R):
    A, b = np.atleast_2d(A), np.atleast_1d(b)
    return Transform(fn=lambda x: x @ A.T + b, noise_cov=np.atleast_2d(R), jacobian=lambda x: np.broadcast_to(A, x.shape[:-1] + A.shape))


SQUARE = Transform(fn=lambda x: x**2, noise_cov=np.eye(1), jacobian=lambda x: (2 * x)[..., None])


class TestLinearMoments:
    def test_affine_exact(self, rng):
        A, b, R = rng.standard_normal((2, 3)), rng.standard_normal(2), random_spd(rng, 2)
        g = Gaussian(rng.standard_normal(3), random_spd(rng, 3))
        j = linear_moments(g, affine(A, b, R))
        assert np.allclose(j.mean_y, A @ g.mean + b, atol=1e-9)
        assert np.allclose(j.cov_y, A @ g.cov @ A.T + R, atol=1e-9)
        assert np.allclose(j.cross, g.cov @ A.T, atol=1e-9)

    def test_zero_gradient_point(self):
        j = linear_moments(Gaussian([0.0], [[1.0]]), SQUARE)
        assert j.mean_y[0] == 0.0 and j.cov_y[0, 0] == pytest.approx(1.0) and j.cross[0, 0] == 0.0

    def test_sine_small_covariance_against_monte_carlo(self, rng):
        t = Transform(fn=np.sin, noise_cov=np.zeros((1, 1)), jacobian=lambda x: np.cos(x)[..., None])
        j = linear_moments(Gaussian([0.3], [[0.01]]), t)
        # closed-form moments of sin(x), x ~ N(mu, s), checked against 1e6 samples
        mu, s = 0.3, 0.01
        mean = np.exp(-s / 2) * np.sin(mu)
        var = 0.5 * (1 - np.exp(-2 * s) * np.cos(2 * mu)) - mean**2
        x = mu + np.sqrt(s) * rng.standard_normal(1_000_000)
        y = np.sin(x)
        assert abs(y.mean() - mean) < 4 * y.std() / np.sqrt(y.size)
        assert abs(y.var() - var) < 4 * var * np.sqrt(2 / y.size)
        assert j.mean_y[0] == pytest.approx(mean, rel=0.01)
        assert j.cov_y[0, 0] == pytest.approx(var, rel=0.01)

    def test_noise_mean_and_state_dependent_noise(self):
        t = Transform(fn=lambda x: 2 * x, noise_cov=lambda x: (x**2 + 1.0)[..., None], noise_mean=np.array([0.5]))
        j = linear_moments(Gaussian([3.0], [[1.0]]), t)
        assert j.mean_y[0] == pytest.approx(6.5)
        assert j.cov_y[0, 0] == pytest.approx(4.0 + 10.0, rel=1e-8)


class TestSigmaPoints:
    def test_zero_cov(self):
        mu = np.array([1.0, 2.0])
        pts = sigma_points(Gaussian(mu, np.zeros((2, 2))))
        assert len(pts) == 5 and all(np.array_equal(p, mu) for p, _, _ in pts)

    def test_hand_evaluation_1d(self):
        cfg = UnscentedConfig(alpha=1.0, beta=2.0, kappa=0.0)
        pts = sigma_points(Gaussian([0.0], [[1.0]]), cfg)
        assert [float(p[0]) for p, _, _ in pts] == pytest.approx([0.0, 1.0, -1.0])
        assert [wm for _, wm, _ in pts] == pytest.approx([0.0, 0.5, 0.5])
        assert [wc for _, _, wc in pts] == pytest.approx([2.0, 0.5, 0.5])

    @given(
        st.floats(min_value=0.1, max_value=2.0),
        st.floats(min_value=0.0, max_value=3.0),
        st.floats(min_value=0.0, max_value=3.0),
        st.integers(min_value=1, max_value=5),
    )
    def test_mean_weights_sum_to_one(self, alpha, beta, kappa, d):
        wm, _ = UnscentedConfig(alpha, beta, kappa).weights(d)
        assert wm.sum() == pytest.approx(1.0)

    def test_invalid_spread(self):
        with pytest.raises(ValueError):
            UnscentedConfig(alpha=1.0, kappa=-2.0).weights(2)

    def test_default_kappa(self):
        assert UnscentedConfig().kappa_for(1) == 2.0
        assert UnscentedConfig().kappa_for(4) == 0.0


class TestUnscentedMoments:
    def test_affine_matches_linear(self, rng):
        t = affine(rng.standard_normal((2, 3)), rng.standard_normal(2), random_spd(rng, 2))
        g = Gaussian(rng.standard_normal(3), random_spd(rng, 3))
        a, b = linear_moments(g, t), unscented_moments(g, t)
        for name in ("mean_y", "cov_y", "cross"):
            assert np.allclose(getattr(a, name), getattr(b, name), atol=1e-10)

    def test_square_sigma_point_arithmetic(self):
        j = unscented_moments(Gaussian([0.0], [[1.0]]), SQUARE, UnscentedConfig(1.0, 2.0, 0.0))
        assert j.mean_y[0] == pytest.approx(1.0)

    def test_prior_block_is_input(self, rng):
        g = Gaussian(rng.standard_normal(2), random_spd(rng, 2))
        j = unscented_moments(g, affine(np.eye(2), 0.0, np.eye(2)))
        assert np.array_equal(j.mean_x, g.mean) and np.array_equal(j.cov_x, g.cov)

    def test_cov_psd_for_random_cubics(self, rng):
        for _ in range(100):
            d = int(rng.integers(1, 4))
            c1, c2, c3 = rng.standard_normal((3, d))
            t = Transform(fn=lambda x, c1=c1, c2=c2, c3=c3: c1 * x + c2 * x**2 + c3 * x**3, noise_cov=np.zeros((d, d)))
            g = Gaussian(rng.standard_normal(d), random_spd(rng, d))
            j = unscented_moments(g, t)
            assert np.min(np.linalg.eigvalsh(j.cov_y)) > -1e-9
            j.validate()

    def test_bearing_unwrapped_across_branch_cut(self):
        t = Transform(fn=range_bearing, noise_cov=1e-4 * np.eye(2), jacobian=range_bearing_jacobian, angular=(1,))
        g = Gaussian(np.array([-10.0, 0.0, 0.0, 0.0]), np.diag([0.1, 0.1, 0.1, 0.1]))
        j = unscented_moments(g, t)
        assert abs(abs(j.mean_y[1]) - np.pi) < 1e-3
        assert j.cov_y[1, 1] < 0.01


class TestKalmanCondition:
    def test_zero_cross(self):
        j = JointGaussian(np.array([1.0]), np.array([2.0]), np.array([[3.0]]), np.zeros((1, 1)), np.array([[2.0]]))
        post, log_ev = kalman_condition(j, np.array([1.0]))
        assert post.mean[0] == 1.0 and post.cov[0, 0] == 3.0
        assert log_ev == pytest.approx(-0.5 * np.log(2 * np.pi * 2.0) - 0.25)

    def test_textbook_conjugate(self):
        prior = Gaussian([0.0], [[1.0]])
        j = linear_moments(prior, affine(1.0, 0.0, 1.0))
        post, _ = kalman_condition(j, np.array([2.0]))
        assert post.mean[0] == pytest.approx(1.0) and post.cov[0, 0] == pytest.approx(0.5)

    def test_matches_single_component_mixture(self, rng):
        full = random_spd(rng, 5)
        j = JointGaussian(rng.standard_normal(3), rng.standard_normal(2), full[:3, :3], full[:3, 3:], full[3:, 3:])
        y = rng.standard_normal(2)
        post, _ = kalman_condition(j, y)
        mix = condition_mixture([(1.0, j)], y)
        assert np.allclose(post.mean, mix.means[0]) and np.allclose(post.cov, mix.covs[0])

    @given(st.integers(min_value=0, max_value=10_000))
    def test_posterior_never_wider(self, seed):
        rng = np.random.default_rng(seed)
        full = random_spd(rng, 4)
        j = JointGaussian(np.zeros(2), np.zeros(2), full[:2, :2], full[:2, 2:], full[2:, 2:])
        post, _ = kalman_condition(j, rng.standard_normal(2))
        assert np.min(np.linalg.eigvalsh(j.cov_x - post.cov)) > -1e-9


class TestFiniteDifferences:
    def test_jacobian_and_hessians_of_known_map(self, rng):
        fn = lambda x: np.stack([x[..., 0] ** 2 * x[..., 1], np.sin(x[..., 1])], axis=-1)  # noqa: E731
        x = rng.standard_normal(2)
        a, b = x
        jac = fd_jacobian(fn, x)
        assert np.allclose(jac, [[2 * a * b, a**2], [0.0, np.cos(b)]], rtol=1e-6, atol=1e-8)
        hess = fd_hessians(lambda z: fd_jacobian(fn, z), x)
        assert np.allclose(hess[0], [[2 * b, 2 * a], [2 * a, 0.0]], atol=1e-5)
        assert np.allclose(hess[1], [[0.0, 0.0], [0.0, -np.sin(b)]], atol=1e-5)

    def test_transform_defaults_to_finite_differences(self):
        t = Transform(fn=lambda x: x**3, noise_cov=np.eye(1))
        assert t.jac(np.array([2.0]))[0, 0] == pytest.approx(12.0, rel=1e-8)
        assert t.hess(np.array([2.0]))[0, 0, 0] == pytest.approx(12.0, rel=1e-5)
