"""Accuracy metrics over a filtered trajectory."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from agsf.gaussian import GaussianMixture, is_zero_cov, mixture_log_pdf

# Smallest log density kept per step; anything below (including -inf) is clamped.
LOG_DENSITY_FLOOR = -745.0


def mse(estimates: Sequence[np.ndarray], truth: Sequence[np.ndarray]) -> float:
    """Time average of ``||x_t - xhat_t||^2``."""
    est = np.asarray(estimates, dtype=float)
    ref = np.asarray(truth, dtype=float)
    if est.shape != ref.shape:
        raise ValueError(f"length mismatch: estimates {est.shape} vs truth {ref.shape}")
    return float(np.mean(np.sum((est - ref) ** 2, axis=-1)))


def log_density(m: GaussianMixture, x: np.ndarray) -> tuple[float, bool]:
    """``log p(x)`` under ``m`` clamped at the floor; the flag reports clamping.

    Zero-covariance components (particles) carry no density and are skipped.
    """
    live = ~is_zero_cov(m.covs)
    if not np.any(live):
        return LOG_DENSITY_FLOOR, True
    if np.all(live):
        value = mixture_log_pdf(m, x)
    else:
        w = m.weights[live]
        value = mixture_log_pdf(GaussianMixture(w / w.sum(), m.means[live], m.covs[live]), x) + np.log(w.sum())
    if not np.isfinite(value) or value < LOG_DENSITY_FLOOR:
        return LOG_DENSITY_FLOOR, True
    return float(value), False


def lpe_terms(densities: Sequence[GaussianMixture], truth: Sequence[np.ndarray]) -> tuple[np.ndarray, int]:
    """Per-step negative log densities and the number of clamped steps."""
    if len(densities) != len(truth):
        raise ValueError(f"length mismatch: {len(densities)} densities vs {len(truth)} states")
    terms, clamped = [], 0
    for m, x in zip(densities, truth):
        value, flag = log_density(m, np.asarray(x, dtype=float))
        terms.append(-value)
        clamped += flag
    return np.array(terms), clamped


def lpe(densities: Sequence[GaussianMixture], truth: Sequence[np.ndarray]) -> float:
    """Time-averaged negative log density of the true state."""
    terms, _ = lpe_terms(densities, truth)
    return float(np.mean(terms))
