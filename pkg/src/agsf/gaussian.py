"""Gaussian and Gaussian-mixture algebra.

Beliefs are plain arrays underneath. A :class:`GaussianMixture` stores its
components stacked (``means`` is ``(K, d)``, ``covs`` is ``(K, d, d)``) so the
filters can push thousands of components through a transform in one numpy
call. Most helpers in this module therefore accept arbitrary leading batch
dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy.special import logsumexp

from agsf.errors import (
    DegenerateWeightsError,
    IndefiniteCovarianceError,
    SingularCovarianceError,
)

SYMMETRY_TOL = 1e-10
PSD_TOL = 1e-9
ZERO_COV_TOL = 1e-12
WEIGHT_SUM_TOL = 1e-12

# Relative jitter ladder (multiples of trace/d), tried after a plain Cholesky fails.
JITTER_LADDER = tuple(10.0 ** -k for k in range(12, 5, -1))

LOG_2PI = np.log(2.0 * np.pi)


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def is_zero_cov(cov: np.ndarray) -> np.ndarray:
    """Elementwise-over-batch test for the zero matrix (entries below 1e-12)."""
    return np.all(np.abs(cov) < ZERO_COV_TOL, axis=(-1, -2))


def check_psd(cov: np.ndarray, name: str = "covariance") -> None:
    """Raise if any matrix in ``cov`` is asymmetric or has eigenvalue < -1e-9."""
    cov = np.asarray(cov, dtype=float)
    if cov.shape[-1] != cov.shape[-2]:
        raise ValueError(f"{name}: expected square matrices, got shape {cov.shape}")
    asym = np.max(np.abs(cov - np.swapaxes(cov, -1, -2)), initial=0.0)
    if asym > SYMMETRY_TOL * max(1.0, np.max(np.abs(cov), initial=0.0)):
        raise ValueError(f"{name}: not symmetric (max asymmetry {asym:.3e})")
    if cov.size == 0:
        return
    lo = np.min(np.linalg.eigvalsh(symmetrize(cov)))
    if lo < -PSD_TOL:
        raise IndefiniteCovarianceError(f"{name}: eigenvalue {lo:.3e} below -{PSD_TOL:g}")


def _cholesky_with_jitter_single(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    d = cov.shape[-1]
    scale = np.trace(cov) / d
    if scale > 0 and np.isfinite(scale):
        eye = np.eye(d)
        for eps in JITTER_LADDER:
            try:
                return np.linalg.cholesky(cov + eps * scale * eye)
            except np.linalg.LinAlgError:
                continue
    raise SingularCovarianceError(
        f"Cholesky failed after jitter up to {JITTER_LADDER[-1]:g}*trace/d (trace={np.trace(cov):.3e})"
    )


def cholesky_jitter(cov: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor(s), escalating diagonal jitter on failure.

    Jitter starts at ``1e-12 * trace(cov)/d`` and grows by 10x up to ``1e-6``;
    past that :class:`SingularCovarianceError` is raised. Works on stacks.
    """
    cov = np.asarray(cov, dtype=float)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    if cov.ndim == 2:
        return _cholesky_with_jitter_single(cov)
    flat = cov.reshape(-1, *cov.shape[-2:])
    out = np.empty_like(flat)
    for i, c in enumerate(flat):
        out[i] = _cholesky_with_jitter_single(c)
    return out.reshape(cov.shape)


def psd_sqrt(s: np.ndarray) -> np.ndarray:
    """Square-root factor ``L`` with ``L @ L.T == s`` for PSD ``s`` (stack-aware).

    Positive definite matrices get their lower Cholesky factor. Semidefinite
    ones fall back to the symmetric eigen-square-root with tiny negative
    eigenvalues clipped to zero.
    """
    s = np.asarray(s, dtype=float)
    try:
        return np.linalg.cholesky(s)
    except np.linalg.LinAlgError:
        pass
    if s.ndim == 2:
        return _psd_sqrt_single(s)
    flat = s.reshape(-1, *s.shape[-2:])
    out = np.empty_like(flat)
    for i, c in enumerate(flat):
        out[i] = _psd_sqrt_single(c)
    return out.reshape(s.shape)


def _psd_sqrt_single(s: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(s)
    except np.linalg.LinAlgError:
        pass
    vals, vecs = np.linalg.eigh(symmetrize(s))
    if vals.min() < -PSD_TOL:
        raise IndefiniteCovarianceError(f"eigenvalue {vals.min():.3e} below -{PSD_TOL:g}")
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def mvn_logpdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Batched ``log N(x | mean, cov)``; all arguments broadcast over batch dims."""
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    d = cov.shape[-1]
    chol = cholesky_jitter(cov)
    diff = x - mean
    batch = np.broadcast_shapes(diff.shape[:-1], chol.shape[:-2])
    diff = np.broadcast_to(diff, batch + (d,))
    chol = np.broadcast_to(chol, batch + (d, d))
    white = np.linalg.solve(chol, diff[..., None])[..., 0]
    log_det = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1)), axis=-1)
    with np.errstate(over="ignore"):
        return -0.5 * (d * LOG_2PI + log_det + np.sum(white * white, axis=-1))


def sample_batch(means: np.ndarray, covs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One draw per row from ``N(means[k], covs[k])``.

    Rows whose covariance is the zero matrix return their mean exactly and
    consume no randomness; the remaining rows share a single
    ``standard_normal((k_nonzero, d))`` call, in row order.
    """
    means = np.asarray(means, dtype=float)
    k, d = means.shape
    covs = np.broadcast_to(np.asarray(covs, dtype=float), (k, d, d))
    out = means.copy()
    live = ~is_zero_cov(covs)
    if not np.any(live):
        return out
    factors = psd_sqrt(covs[live])
    eps = rng.standard_normal((int(live.sum()), d))
    out[live] = means[live] + np.einsum("kij,kj->ki", factors, eps)
    return out


def normalize_log_weights(log_w: np.ndarray) -> tuple[np.ndarray, float]:
    """Return normalized weights and the log normalizer (log-sum-exp).

    Raises :class:`DegenerateWeightsError` when every entry is -inf or nan.
    """
    log_w = np.asarray(log_w, dtype=float)
    finite = np.isfinite(log_w)
    if not np.any(finite):
        raise DegenerateWeightsError("all log-weights are -inf or nan")
    log_w = np.where(finite, log_w, -np.inf)
    log_z = float(logsumexp(log_w))
    w = np.exp(log_w - log_z)
    return w / w.sum(), log_z


def ess(weights: np.ndarray) -> float:
    """Effective sample size ``1 / sum(w^2)``."""
    w = np.asarray(weights, dtype=float)
    return float(1.0 / np.sum(w * w))


def _check_simplex(weights: np.ndarray) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty vector")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and nonnegative")
    total = w.sum()
    if total <= 0:
        raise DegenerateWeightsError("all weights are zero")
    return w / total


def multinomial_resample(weights: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` i.i.d. categorical indices drawn with probabilities ``weights``."""
    w = _check_simplex(weights)
    cdf = np.cumsum(w)
    cdf[-1] = 1.0
    u = rng.random(count)
    return np.searchsorted(cdf, u, side="right").clip(max=w.size - 1)


def systematic_resample(weights: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Low-variance systematic resampling (one uniform draw)."""
    w = _check_simplex(weights)
    cdf = np.cumsum(w)
    cdf[-1] = 1.0
    u = (rng.random() + np.arange(count)) / count
    return np.searchsorted(cdf, u, side="right").clip(max=w.size - 1)


@dataclass(frozen=True, eq=False)
class Gaussian:
    """Multivariate normal ``N(mean, cov)``."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if mean.ndim != 1:
            raise ValueError(f"mean must be a vector, got shape {mean.shape}")
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"cov shape {cov.shape} does not match mean of size {mean.size}")
        check_psd(cov, "Gaussian.cov")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Weighted sum of Gaussians sharing one dimension, stored stacked."""

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        means = np.asarray(self.means, dtype=float)
        covs = np.asarray(self.covs, dtype=float)
        if means.ndim != 2 or means.shape[0] != w.size:
            raise ValueError(f"means shape {means.shape} inconsistent with {w.size} weights")
        k, d = means.shape
        if covs.shape != (k, d, d):
            raise ValueError(f"covs shape {covs.shape}, expected {(k, d, d)}")
        if np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_SUM_TOL * max(1, k):
            raise ValueError(f"weights must be a probability vector (sum={w.sum()!r})")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covs", covs)

    @classmethod
    def from_components(cls, weights: Sequence[float], components: Sequence[Gaussian]) -> GaussianMixture:
        return cls(
            np.asarray(weights, dtype=float),
            np.stack([c.mean for c in components]),
            np.stack([c.cov for c in components]),
        )

    @classmethod
    def single(cls, g: Gaussian) -> GaussianMixture:
        return cls(np.ones(1), g.mean[None], g.cov[None])

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def components(self) -> list[Gaussian]:
        return [Gaussian(m, c) for m, c in zip(self.means, self.covs)]

    def __iter__(self) -> Iterator[tuple[float, Gaussian]]:
        return iter(zip(self.weights.tolist(), self.components))

    def validate(self) -> None:
        """Check symmetry/PSD of every component (used after filter steps)."""
        check_psd(self.covs, "mixture component covariance")


@dataclass(frozen=True, eq=False)
class JointGaussian:
    """Block-partitioned Gaussian over ``(x, y)``; arrays may carry batch dims.

    Blocks: ``mean_x``, ``mean_y``, ``cov_x`` (Σ_x), ``cross`` (C_xy, shape
    ``(..., dx, dy)``) and ``cov_y`` (S_y).
    """

    mean_x: np.ndarray
    mean_y: np.ndarray
    cov_x: np.ndarray
    cross: np.ndarray
    cov_y: np.ndarray

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.mean_x.shape[:-1]

    @property
    def stacked_mean(self) -> np.ndarray:
        return np.concatenate([self.mean_x, self.mean_y], axis=-1)

    @property
    def stacked_cov(self) -> np.ndarray:
        top = np.concatenate([self.cov_x, self.cross], axis=-1)
        bottom = np.concatenate([np.swapaxes(self.cross, -1, -2), self.cov_y], axis=-1)
        return np.concatenate([top, bottom], axis=-2)

    def __getitem__(self, idx) -> JointGaussian:
        return JointGaussian(
            self.mean_x[idx], self.mean_y[idx], self.cov_x[idx], self.cross[idx], self.cov_y[idx]
        )

    def validate(self) -> None:
        check_psd(self.stacked_cov, "joint covariance")


def log_pdf(g: Gaussian, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != g.mean.shape:
        raise ValueError(f"point shape {x.shape} does not match dimension {g.dim}")
    return float(mvn_logpdf(x, g.mean, g.cov))


def sample(g: Gaussian, rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` draws ``mean + L @ eps``; zero covariance returns the mean, no draws."""
    if is_zero_cov(g.cov):
        return np.repeat(g.mean[None], n, axis=0)
    check_psd(g.cov)
    factor = psd_sqrt(g.cov)
    eps = rng.standard_normal((n, g.dim))
    return g.mean + eps @ factor.T


def mixture_component_logpdf(m: GaussianMixture, x: np.ndarray) -> np.ndarray:
    """Per-component ``log w_k + log N(x | mu_k, Sigma_k)``."""
    with np.errstate(divide="ignore"):
        log_w = np.log(m.weights)
    return log_w + mvn_logpdf(np.asarray(x, dtype=float), m.means, m.covs)


def mixture_log_pdf(m: GaussianMixture, x: np.ndarray) -> float:
    return float(logsumexp(mixture_component_logpdf(m, x)))


def mixture_moments(m: GaussianMixture) -> Gaussian:
    """Collapse a mixture to its mean and total covariance."""
    mean = m.weights @ m.means
    dev = m.means - mean
    cov = np.einsum("k,kij->ij", m.weights, m.covs) + np.einsum("k,ki,kj->ij", m.weights, dev, dev)
    return Gaussian(mean, symmetrize(cov))


def mixture_mean(m: GaussianMixture) -> np.ndarray:
    return m.weights @ m.means


def wrap_angle(a: np.ndarray) -> np.ndarray:
    """Map angles to ``[-pi, pi)``."""
    return np.mod(np.asarray(a) + np.pi, 2.0 * np.pi) - np.pi


def wrap_residual(res: np.ndarray, angular: Sequence[int] = ()) -> np.ndarray:
    """Wrap the listed components of a residual; other components pass through."""
    if not angular:
        return res
    res = np.array(res, dtype=float, copy=True)
    idx = list(angular)
    res[..., idx] = wrap_angle(res[..., idx])
    return res


def condition_batch(
    joint: JointGaussian, y: np.ndarray, angular: Sequence[int] = ()
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gaussian conditioning of every joint in a batch on the same ``y``.

    Returns ``(means, covs, log_evidence)`` where ``log_evidence`` is
    ``log N(y | mean_y, cov_y)`` per joint. Innovation components listed in
    ``angular`` are wrapped to ``[-pi, pi)``.
    """
    y = np.asarray(y, dtype=float)
    chol = cholesky_jitter(joint.cov_y)
    innov = wrap_residual(y - joint.mean_y, angular)
    # gain = C S^-1 computed as (S^-1 C^T)^T through the Cholesky factor
    ct = np.swapaxes(joint.cross, -1, -2)
    half = np.linalg.solve(chol, ct)
    gain = np.swapaxes(np.linalg.solve(np.swapaxes(chol, -1, -2), half), -1, -2)
    white = np.linalg.solve(chol, innov[..., None])[..., 0]
    means = joint.mean_x + np.einsum("...ij,...j->...i", gain, innov)
    covs = symmetrize(joint.cov_x - np.swapaxes(half, -1, -2) @ half)
    d = joint.mean_y.shape[-1]
    log_det = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1)), axis=-1)
    with np.errstate(over="ignore"):  # overflow means zero evidence, handled by the caller
        log_ev = -0.5 * (d * LOG_2PI + log_det + np.sum(white * white, axis=-1))
    return means, covs, log_ev


def condition_mixture(
    joint: Sequence[tuple[float, JointGaussian]], y: np.ndarray, angular: Sequence[int] = ()
) -> GaussianMixture:
    """Condition a mixture of joint Gaussians on ``y``.

    Each component is conditioned in closed form and its weight multiplied by
    the marginal likelihood ``N(y | mu_y, S_y)``; weights are renormalized in
    log space.
    """
    weights = np.array([w for w, _ in joint], dtype=float)
    parts = [j for _, j in joint]
    stacked = JointGaussian(
        np.stack([p.mean_x for p in parts]),
        np.stack([p.mean_y for p in parts]),
        np.stack([p.cov_x for p in parts]),
        np.stack([p.cross for p in parts]),
        np.stack([p.cov_y for p in parts]),
    )
    means, covs, log_ev = condition_batch(stacked, y, angular)
    with np.errstate(divide="ignore"):
        log_w = np.log(weights) + log_ev
    w, _ = normalize_log_weights(log_w)
    return GaussianMixture(w, means, covs)
