"""Gaussian augmentation: splitting one Gaussian into narrower ones.

``N(x | mu, Sigma)`` equals the convolution of ``N(x | z, Delta)`` with
``N(z | mu, Sigma - Delta)`` for any ``0 <= Delta <= Sigma``. Sampling ``z``
gives an equally weighted mixture of components with covariance ``Delta``:
``Delta = Sigma`` keeps the original Gaussian, ``Delta = 0`` gives particles.

The module also scores a candidate ``Delta`` with the first-order
bias/variance objective and solves it in closed form under ``Delta = rho *
Sigma``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from agsf.errors import ConstraintViolationError
from agsf.gaussian import Gaussian, GaussianMixture, JointGaussian, PSD_TOL, sample_batch
from agsf.moments import Transform, UnscentedConfig, moments_batch


@dataclass(frozen=True)
class Fixed:
    """A user-supplied augmentation covariance, validated against each Sigma."""

    delta: np.ndarray


@dataclass(frozen=True)
class Proportional:
    """``Delta = rho * Sigma``."""

    rho: float

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")


@dataclass(frozen=True)
class AdaptiveProportional:
    """``Delta = rho* Sigma`` with ``rho*`` re-derived for every component.

    ``sample_count_hint`` overrides the split count used in the formula.
    """

    sample_count_hint: Optional[int] = None


AugmentationPolicy = Union[Fixed, Proportional, AdaptiveProportional]


def check_split_constraint(sigma: np.ndarray, delta: np.ndarray) -> None:
    """Raise unless ``0 <= delta <= sigma`` (stack-aware, 1e-9 slack)."""
    sigma = np.asarray(sigma, dtype=float)
    delta = np.broadcast_to(np.asarray(delta, dtype=float), sigma.shape)
    lo = np.min(np.linalg.eigvalsh(0.5 * (delta + np.swapaxes(delta, -1, -2))))
    if lo < -PSD_TOL:
        raise ConstraintViolationError(f"delta has eigenvalue {lo:.3e} < 0")
    gap = sigma - delta
    hi = np.max(-np.linalg.eigvalsh(0.5 * (gap + np.swapaxes(gap, -1, -2))))
    if hi > PSD_TOL:
        raise ConstraintViolationError(f"delta - sigma has eigenvalue {hi:.3e} > 0")


def _bias_variance_terms(sigma, jac, hess):
    """``Tr(Sigma J^T J)`` and ``sum_i Tr(Sigma H_i)^2``, batched."""
    variance = np.einsum("...ij,...kj,...ki->...", sigma, jac, jac)
    curvature = np.einsum("...ij,...kji->...k", sigma, hess)
    return variance, np.sum(curvature**2, axis=-1)


def optimal_rho(sigma: np.ndarray, jac: np.ndarray, hess: np.ndarray, n: int) -> np.ndarray:
    """Closed-form minimizer of the objective along ``Delta = rho Sigma``.

    ``rho* = min(1, (2/n) Tr(Sigma J^T J) / sum_i Tr(Sigma H_i)^2)``. A vanishing
    curvature term (affine map) gives ``rho* = 1``, also when the numerator is
    zero.
    """
    num, den = _bias_variance_terms(np.asarray(sigma, float), np.asarray(jac, float), np.asarray(hess, float))
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(den > 0, (2.0 / n) * num / np.where(den > 0, den, 1.0), 1.0)
    return np.clip(rho, 0.0, 1.0)


def resolve_batch(
    policy: AugmentationPolicy,
    sigmas: np.ndarray,
    t: Transform,
    mus: np.ndarray,
    n: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Augmentation covariances for a stack of components.

    Returns ``(deltas, rhos)``; ``rhos`` is nan for :class:`Fixed` policies.
    """
    sigmas = np.asarray(sigmas, dtype=float)
    batch = sigmas.shape[:-2]
    if isinstance(policy, Fixed):
        delta = np.broadcast_to(np.asarray(policy.delta, dtype=float), sigmas.shape).copy()
        check_split_constraint(sigmas, delta)
        return delta, np.full(batch, np.nan)
    if isinstance(policy, Proportional):
        return policy.rho * sigmas, np.full(batch, float(policy.rho))
    if isinstance(policy, AdaptiveProportional):
        count = policy.sample_count_hint or n
        rho = optimal_rho(sigmas, t.jac(mus), t.hess(mus), count)
        return rho[..., None, None] * sigmas, rho
    raise TypeError(f"unknown augmentation policy {policy!r}")


def resolve_delta(policy: AugmentationPolicy, sigma: np.ndarray, t: Transform, mu: np.ndarray, n: int) -> np.ndarray:
    """Augmentation covariance for one component ``N(mu, sigma)``."""
    delta, _ = resolve_batch(policy, np.asarray(sigma, float), t, np.asarray(mu, float), n)
    return delta


def mse_objective(delta: np.ndarray, sigma: np.ndarray, t: Transform, mu: np.ndarray, n: int) -> float:
    """First-order MSE of the split-mean estimator ``(1/n) sum f(z_i)``.

    ``(1/n) Tr((Sigma - Delta) J^T J) + (1/4) sum_i Tr(Delta H_i)^2`` with the
    Jacobian ``J`` and Hessians ``H_i`` taken at ``mu``.
    """
    delta = np.asarray(delta, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    check_split_constraint(sigma, delta)
    jac, hess = t.jac(mu), t.hess(mu)
    variance, _ = _bias_variance_terms(sigma - delta, jac, hess)
    _, bias = _bias_variance_terms(delta, jac, hess)
    return float(variance / n + 0.25 * bias)


def split_batch(
    means: np.ndarray, sigmas: np.ndarray, deltas: np.ndarray, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw ``n`` split centres per component, component-major ``(K*n, d)``.

    Components with ``delta == sigma`` consume no randomness.
    """
    means = np.repeat(np.asarray(means, dtype=float), n, axis=0)
    gap = np.repeat(np.asarray(sigmas, dtype=float) - np.asarray(deltas, dtype=float), n, axis=0)
    return sample_batch(means, gap, rng)


def augment_split(g: Gaussian, delta: np.ndarray, n: int, rng: np.random.Generator) -> GaussianMixture:
    """Monte Carlo split of ``g`` into ``n`` components of covariance ``delta``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    delta = np.asarray(delta, dtype=float)
    check_split_constraint(g.cov, delta)
    centres = split_batch(g.mean[None], g.cov[None], delta[None], n, rng)
    return GaussianMixture(np.full(n, 1.0 / n), centres, np.repeat(delta[None], n, axis=0))


def augmented_joint(
    g: Gaussian,
    t: Transform,
    delta: np.ndarray,
    n: int,
    method: str = "linear",
    cfg: UnscentedConfig = UnscentedConfig(),
    rng: Optional[np.random.Generator] = None,
) -> list[tuple[float, JointGaussian]]:
    """Mixture approximation of the joint of ``(x, f(x) + r)`` for ``x ~ g``.

    ``g`` is split into ``n`` narrow components and each is moment matched
    through ``t`` with the linear or unscented rule.
    """
    if rng is None:
        rng = np.random.default_rng()
    split = augment_split(g, delta, n, rng)
    joint = moments_batch(split.means, split.covs, t, method, cfg)
    return [(1.0 / n, joint[i]) for i in range(n)]
