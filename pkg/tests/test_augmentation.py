import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import trapezoid

from agsf.augmentation import (
    AdaptiveProportional,
    Fixed,
    Proportional,
    augment_split,
    augmented_joint,
    check_split_constraint,
    mse_objective,
    optimal_rho,
    resolve_batch,
    resolve_delta,
)
from agsf.errors import ConstraintViolationError
from agsf.gaussian import Gaussian, mixture_moments, sample_batch
from agsf.moments import Transform, linear_moments, unscented_moments
from conftest import quadratic_transform, random_delta, random_spd

SQUARE = Transform(
    fn=lambda x: x**2,
    noise_cov=np.zeros((1, 1)),
    jacobian=lambda x: (2 * x)[..., None],
    hessians=lambda x: np.full(x.shape[:-1] + (1, 1, 1), 2.0),
)
SINE = Transform(
    fn=np.sin,
    noise_cov=np.array([[0.04]]),
    jacobian=lambda x: np.cos(x)[..., None],
    hessians=lambda x: (-np.sin(x))[..., None, None],
)


class TestAugmentSplit:
    def test_full_delta_copies_without_draws(self, rng):
        g = Gaussian([1.0, 2.0], [[2.0, 0.3], [0.3, 1.0]])
        before = rng.bit_generator.state
        m = augment_split(g, g.cov, 4, rng)
        assert rng.bit_generator.state == before
        assert np.array_equal(m.means, np.tile(g.mean, (4, 1))) and np.array_equal(m.covs, np.tile(g.cov, (4, 1, 1)))

    def test_zero_delta_gives_particles(self):
        g = Gaussian([1.0, 2.0], [[2.0, 0.3], [0.3, 1.0]])
        m = augment_split(g, np.zeros((2, 2)), 6, np.random.default_rng(8))
        ref = sample_batch(np.tile(g.mean, (6, 1)), g.cov, np.random.default_rng(8))
        assert np.allclose(m.means, ref) and np.all(m.covs == 0.0)
        assert np.allclose(m.weights, 1 / 6)

    def test_half_delta_reproduces_covariance(self, rng):
        g = Gaussian([0.5, -1.0], [[2.0, 0.6], [0.6, 1.0]])
        out = mixture_moments(augment_split(g, 0.5 * g.cov, 10_000, rng))
        assert np.all(np.abs(out.cov - g.cov) <= 0.05 * np.abs(g.cov))

    def test_constraint_violations(self, rng):
        g = Gaussian([0.0], [[1.0]])
        with pytest.raises(ConstraintViolationError):
            augment_split(g, np.array([[1.5]]), 3, rng)
        with pytest.raises(ConstraintViolationError):
            augment_split(g, np.array([[-0.1]]), 3, rng)
        with pytest.raises(ValueError):
            augment_split(g, np.array([[0.5]]), 0, rng)

    def test_split_mean_is_unbiased(self, rng):
        g = Gaussian([1.0, -2.0], [[1.0, 0.4], [0.4, 2.0]])
        means = np.array([mixture_moments(augment_split(g, 0.3 * g.cov, 50, rng)).mean for _ in range(200)])
        se = means.std(axis=0, ddof=1) / np.sqrt(200)
        assert np.all(np.abs(means.mean(axis=0) - g.mean) < 4 * se)


class TestResolveDelta:
    def test_affine_gives_full_sigma(self, rng):
        t = Transform(fn=lambda x: 3 * x, noise_cov=np.eye(2), jacobian=lambda x: np.broadcast_to(3 * np.eye(2), x.shape[:-1] + (2, 2)), hessians=lambda x: np.zeros(x.shape[:-1] + (2, 2, 2)))
        sigma = random_spd(rng, 2)
        assert np.array_equal(resolve_delta(AdaptiveProportional(), sigma, t, np.zeros(2), 5), sigma)

    def test_zero_gradient_gives_zero(self):
        assert resolve_delta(AdaptiveProportional(), np.eye(1), SQUARE, np.zeros(1), 5)[0, 0] == 0.0

    def test_hand_evaluation(self):
        # numerator Tr(1 * 4) = 4, denominator Tr(1 * 2)^2 = 4, rho = (2/4) * 1
        assert resolve_delta(AdaptiveProportional(), np.eye(1), SQUARE, np.ones(1), 4)[0, 0] == pytest.approx(0.5)

    def test_sample_count_hint_overrides_n(self):
        delta = resolve_delta(AdaptiveProportional(sample_count_hint=8), np.eye(1), SQUARE, np.ones(1), 4)
        assert delta[0, 0] == pytest.approx(0.25)

    def test_fixed_and_proportional(self):
        sigma = np.diag([2.0, 1.0])
        assert np.array_equal(resolve_delta(Proportional(0.25), sigma, SQUARE, np.zeros(2), 3), 0.25 * sigma)
        assert np.array_equal(resolve_delta(Fixed(np.diag([1.0, 0.5])), sigma, SQUARE, np.zeros(2), 3), np.diag([1.0, 0.5]))
        with pytest.raises(ConstraintViolationError):
            resolve_delta(Fixed(np.diag([3.0, 0.5])), sigma, SQUARE, np.zeros(2), 3)
        with pytest.raises(ValueError):
            Proportional(1.5)

    def test_batch_resolution(self):
        sigmas = np.stack([np.eye(1), 4 * np.eye(1)])
        deltas, rhos = resolve_batch(AdaptiveProportional(), sigmas, SQUARE, np.array([[1.0], [0.0]]), 4)
        assert np.allclose(rhos, [0.5, 0.0]) and np.allclose(deltas[:, 0, 0], [0.5, 0.0])
        _, rhos = resolve_batch(Fixed(np.eye(1) * 0.5), sigmas, SQUARE, np.zeros((2, 1)), 4)
        assert np.all(np.isnan(rhos))

    @given(st.integers(min_value=0, max_value=10_000), st.integers(min_value=1, max_value=3), st.integers(min_value=1, max_value=20))
    def test_resolved_delta_satisfies_constraint(self, seed, d, n):
        rng = np.random.default_rng(seed)
        sigma = random_spd(rng, d)
        delta = resolve_delta(AdaptiveProportional(), sigma, quadratic_transform(rng, d), rng.standard_normal(d), n)
        check_split_constraint(sigma, delta)

    def test_zero_numerator_and_denominator(self):
        flat = Transform(fn=lambda x: 0 * x, noise_cov=np.eye(1), jacobian=lambda x: np.zeros(x.shape + (1,)), hessians=lambda x: np.zeros(x.shape + (1, 1)))
        assert optimal_rho(np.eye(1), flat.jac(np.zeros(1)), flat.hess(np.zeros(1)), 3) == 1.0


class TestObjective:
    def test_endpoints(self, rng):
        t = quadratic_transform(rng, 2)
        sigma, mu = random_spd(rng, 2), rng.standard_normal(2)
        jac, hess = t.jac(mu), t.hess(mu)
        bias_only = 0.25 * sum(np.trace(sigma @ h) ** 2 for h in hess)
        var_only = np.trace(sigma @ jac.T @ jac) / 7
        assert mse_objective(sigma, sigma, t, mu, 7) == pytest.approx(bias_only, rel=1e-12)
        assert mse_objective(np.zeros((2, 2)), sigma, t, mu, 7) == pytest.approx(var_only, rel=1e-12)

    def test_grid_minimizer_square(self):
        grid = np.linspace(0.0, 1.0, 1001)
        psi = [mse_objective(r * np.eye(1), np.eye(1), SQUARE, np.ones(1), 10) for r in grid]
        assert grid[int(np.argmin(psi))] == pytest.approx(0.2, abs=1e-3)
        assert resolve_delta(AdaptiveProportional(), np.eye(1), SQUARE, np.ones(1), 10)[0, 0] == pytest.approx(0.2)

    @given(st.integers(min_value=0, max_value=10_000), st.floats(min_value=0.0, max_value=1.0))
    def test_rho_star_beats_any_rho(self, seed, rho):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(1, 3))
        t, sigma, mu = quadratic_transform(rng, d), random_spd(rng, d), rng.standard_normal(d)
        best = resolve_delta(AdaptiveProportional(), sigma, t, mu, 5)
        assert mse_objective(best, sigma, t, mu, 5) <= mse_objective(rho * sigma, sigma, t, mu, 5) + 1e-12

    def test_objective_nonnegative(self, rng):
        for _ in range(20):
            t, sigma = quadratic_transform(rng, 2), random_spd(rng, 2)
            assert mse_objective(random_delta(rng, sigma), sigma, t, rng.standard_normal(2), 3) >= 0


class TestAugmentedJoint:
    def test_full_delta_is_plain_moments(self):
        g = Gaussian([0.4], [[0.5]])
        for method, plain in (("linear", linear_moments), ("unscented", unscented_moments)):
            (w, j), = augmented_joint(g, SINE, g.cov, 1, method=method, rng=np.random.default_rng(0))
            ref = plain(g, SINE)
            assert w == 1.0
            for name in ("mean_x", "mean_y", "cov_x", "cross", "cov_y"):
                assert np.array_equal(getattr(j, name), getattr(ref, name))

    def test_zero_delta_is_particle(self):
        t = Transform(fn=np.sin, noise_cov=np.array([[0.04]]), noise_mean=np.array([0.1]))
        (w, j), = augmented_joint(Gaussian([0.4], [[0.5]]), t, np.zeros((1, 1)), 1, rng=np.random.default_rng(3))
        assert j.cov_x[0, 0] == 0.0 and j.cross[0, 0] == 0.0
        assert j.mean_y[0] == pytest.approx(np.sin(j.mean_x[0]) + 0.1)
        assert j.cov_y[0, 0] == pytest.approx(0.04)

    def test_prior_marginal_has_delta_cov(self, rng):
        g = Gaussian([0.0, 1.0], random_spd(rng, 2))
        delta = 0.3 * g.cov
        t = quadratic_transform(rng, 2)
        for _, j in augmented_joint(g, t, delta, 5, method="unscented", rng=rng):
            assert np.array_equal(j.cov_x, delta)

    def test_marginal_mean_against_quadrature(self, rng):
        # E[sin x + r] for x ~ N(0, 1), by quadrature
        xs = np.linspace(-12, 12, 20001)
        target = trapezoid(np.sin(xs) * np.exp(-xs**2 / 2) / np.sqrt(2 * np.pi), xs)
        joint = augmented_joint(Gaussian([0.0], [[1.0]]), SINE, np.array([[0.1]]), 200, rng=rng)
        mu_y = np.array([j.mean_y[0] for _, j in joint])
        assert abs(mu_y.mean() - target) < 3 * mu_y.std(ddof=1) / np.sqrt(mu_y.size)
