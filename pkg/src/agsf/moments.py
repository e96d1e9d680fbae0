"""Gaussian moment matching through (possibly nonlinear) maps.

A :class:`Transform` describes ``y = f(x) + r`` with ``r ~ N(noise_mean,
R(x))``. All callables take arrays with arbitrary leading batch dimensions and
the input dimension last, so a single call can linearize a whole mixture.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from agsf.gaussian import (
    Gaussian,
    JointGaussian,
    condition_batch,
    psd_sqrt,
    symmetrize,
    wrap_angle,
)

ArrayFn = Callable[[np.ndarray], np.ndarray]

FD_JACOBIAN_STEP = 1e-5
FD_HESSIAN_STEP = 1e-4


def fd_jacobian(fn: ArrayFn, x: np.ndarray, step: float = FD_JACOBIAN_STEP) -> np.ndarray:
    """Central-difference Jacobian, shape ``(..., d_out, d_in)``."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    cols = []
    for j in range(d):
        h = step * (1.0 + np.abs(x[..., j]))
        e = np.zeros_like(x)
        e[..., j] = h
        cols.append((fn(x + e) - fn(x - e)) / (2.0 * h[..., None]))
    return np.stack(cols, axis=-1)


def fd_hessians(jac: ArrayFn, x: np.ndarray, step: float = FD_HESSIAN_STEP) -> np.ndarray:
    """Hessians of every output from central differences of the Jacobian.

    Shape ``(..., d_out, d_in, d_in)``; the result is symmetrized.
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    cols = []
    for j in range(d):
        h = step * (1.0 + np.abs(x[..., j]))
        e = np.zeros_like(x)
        e[..., j] = h
        cols.append((jac(x + e) - jac(x - e)) / (2.0 * h[..., None, None]))
    return symmetrize(np.stack(cols, axis=-1))


@dataclass(frozen=True, eq=False)
class Transform:
    """``y = fn(x) + r`` with ``r ~ N(noise_mean, noise_cov(x))``.

    ``noise_cov`` may be a constant matrix or a callable evaluated at the
    linearization point. ``jacobian`` and ``hessians`` default to finite
    differences when omitted. ``angular`` lists output components that are
    angles, whose residuals are wrapped.
    """

    fn: ArrayFn
    noise_cov: Union[np.ndarray, ArrayFn]
    jacobian: Optional[ArrayFn] = None
    hessians: Optional[ArrayFn] = None
    noise_mean: Optional[np.ndarray] = None
    angular: tuple[int, ...] = ()

    def mean(self, x: np.ndarray) -> np.ndarray:
        out = self.fn(np.asarray(x, dtype=float))
        if self.noise_mean is not None:
            out = out + self.noise_mean
        return out

    def jac(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.jacobian is not None:
            return self.jacobian(x)
        return fd_jacobian(self.fn, x)

    def hess(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.hessians is not None:
            return self.hessians(x)
        return fd_hessians(self.jac, x)

    def cov(self, x: np.ndarray) -> np.ndarray:
        """Noise covariance at ``x``, broadcast to ``x``'s batch shape."""
        x = np.asarray(x, dtype=float)
        r = self.noise_cov(x) if callable(self.noise_cov) else np.asarray(self.noise_cov, dtype=float)
        return np.broadcast_to(r, x.shape[:-1] + r.shape[-2:])


@dataclass(frozen=True)
class UnscentedConfig:
    """Sigma-point spread parameters.

    ``kappa=None`` means ``3 - d`` floored at zero.
    """

    alpha: float = 1.0
    beta: float = 2.0
    kappa: Optional[float] = None

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")

    def kappa_for(self, d: int) -> float:
        return max(3.0 - d, 0.0) if self.kappa is None else float(self.kappa)

    def lam(self, d: int) -> float:
        return self.alpha**2 * (d + self.kappa_for(d)) - d

    def weights(self, d: int) -> tuple[np.ndarray, np.ndarray]:
        """Mean and covariance weights, ordered ``(0, +1..+d, -1..-d)``."""
        lam = self.lam(d)
        if d + lam <= 0:
            raise ValueError(f"d + lambda must be positive (d={d}, lambda={lam})")
        wm = np.full(2 * d + 1, 1.0 / (2.0 * (d + lam)))
        wc = wm.copy()
        wm[0] = lam / (d + lam)
        wc[0] = wm[0] + (1.0 - self.alpha**2 + self.beta)
        return wm, wc


_DEFAULT_UT = UnscentedConfig()


def _sigma_point_array(mean: np.ndarray, cov: np.ndarray, cfg: UnscentedConfig) -> np.ndarray:
    d = mean.shape[-1]
    spread = np.sqrt(d + cfg.lam(d)) * psd_sqrt(cov)
    cols = np.swapaxes(spread, -1, -2)  # rows are the columns of sqrt(cov)
    return np.concatenate([mean[..., None, :], mean[..., None, :] + cols, mean[..., None, :] - cols], axis=-2)


def sigma_points(prior: Gaussian, cfg: UnscentedConfig = _DEFAULT_UT) -> list[tuple[np.ndarray, float, float]]:
    """The ``2d+1`` sigma points with their mean and covariance weights."""
    pts = _sigma_point_array(prior.mean, prior.cov, cfg)
    wm, wc = cfg.weights(prior.dim)
    return [(p, float(a), float(b)) for p, a, b in zip(pts, wm, wc)]


def linear_moments_batch(mean: np.ndarray, cov: np.ndarray, t: Transform) -> JointGaussian:
    """First-order Taylor joint moments for every ``N(mean[k], cov[k])``."""
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    jac = t.jac(mean)
    cross = cov @ np.swapaxes(jac, -1, -2)
    s = symmetrize(jac @ cross + t.cov(mean))
    return JointGaussian(mean, t.mean(mean), cov, cross, s)


def unscented_moments_batch(
    mean: np.ndarray, cov: np.ndarray, t: Transform, cfg: UnscentedConfig = _DEFAULT_UT
) -> JointGaussian:
    """Unscented joint moments for every ``N(mean[k], cov[k])``.

    Noise covariance is additive and evaluated at the centre point.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    d = mean.shape[-1]
    wm, wc = cfg.weights(d)
    pts = _sigma_point_array(mean, cov, cfg)
    fx = t.mean(pts)
    if t.angular:
        # unwrap angles relative to the centre point before averaging
        idx = list(t.angular)
        centre = fx[..., :1, idx]
        fx[..., idx] = centre + wrap_angle(fx[..., idx] - centre)
    mu_y = np.einsum("i,...ij->...j", wm, fx)
    dy = fx - mu_y[..., None, :]
    dx = pts - mean[..., None, :]
    s = np.einsum("i,...ij,...ik->...jk", wc, dy, dy) + t.cov(mean)
    cross = np.einsum("i,...ij,...ik->...jk", wc, dx, dy)
    return JointGaussian(mean, mu_y, cov, cross, symmetrize(s))


def linear_moments(prior: Gaussian, t: Transform) -> JointGaussian:
    return linear_moments_batch(prior.mean, prior.cov, t)


def unscented_moments(prior: Gaussian, t: Transform, cfg: UnscentedConfig = _DEFAULT_UT) -> JointGaussian:
    return unscented_moments_batch(prior.mean, prior.cov, t, cfg)


def moments_batch(
    mean: np.ndarray, cov: np.ndarray, t: Transform, method: str, cfg: UnscentedConfig = _DEFAULT_UT
) -> JointGaussian:
    if method == "linear":
        return linear_moments_batch(mean, cov, t)
    if method == "unscented":
        return unscented_moments_batch(mean, cov, t, cfg)
    raise ValueError(f"unknown moment-matching method {method!r}")


def kalman_condition(joint: JointGaussian, y: np.ndarray, angular=()) -> tuple[Gaussian, float]:
    """Condition a single joint Gaussian on ``y``.

    Returns the posterior of ``x`` and ``log N(y | mu_y, S_y)``.
    """
    means, covs, log_ev = condition_batch(joint, y, angular)
    return Gaussian(means, covs), float(log_ev)
