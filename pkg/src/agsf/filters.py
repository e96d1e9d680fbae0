"""The filter bank: Gaussian filters, Gaussian sum filters, particle filters and AGSF.

Every filter keeps its belief as a :class:`~agsf.gaussian.GaussianMixture`
(particles are components with zero covariance) and emits, per time step, the
predictive mixture over ``x_t`` given ``y_{1:t-1}``, the weighted posterior
mixture before any resampling, and the belief carried to the next step.

Seed discipline: one ``numpy`` generator per run, consumed in a fixed order
(initial split, prediction splits, update splits, resampling). Zero-covariance
draws consume nothing, which makes the AGSF limits reproduce the GSF and the
BPF draw for draw.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from agsf.augmentation import (
    AdaptiveProportional,
    AugmentationPolicy,
    augment_split,
    resolve_batch,
    split_batch,
)
from agsf.errors import ConfigError, DegenerateWeightsError, FilterRunError
from agsf.gaussian import (
    Gaussian,
    GaussianMixture,
    condition_batch,
    ess,
    mixture_mean,
    multinomial_resample,
    normalize_log_weights,
    sample_batch,
    systematic_resample,
)
from agsf.models import StateSpaceModel, Trajectory
from agsf.moments import UnscentedConfig, moments_batch

GAUSSIAN_FILTERS = ("EKF", "UKF", "L-GSF", "U-GSF")
PARTICLE_FILTERS = ("BPF", "APF")
AGSF_FILTERS = ("L-AGSF", "U-AGSF")
ALGORITHMS = GAUSSIAN_FILTERS + PARTICLE_FILTERS + AGSF_FILTERS

RESAMPLERS = {"systematic": systematic_resample, "multinomial": multinomial_resample}


@dataclass(frozen=True)
class FilterConfig:
    """Which filter to run and with what sizes.

    ``M`` is the component or particle count, ``N`` and ``L`` the AGSF
    prediction and update split counts. Particle filters resample when
    ``ESS < ess_threshold * M``; ``ess_threshold = 1`` resamples every step.
    ``init_rho`` sets the initial mixture: ``M`` draws from the split of the
    prior with ``Delta = init_rho * P0`` (None picks 0 for particle filters,
    1 when ``M == 1`` and 0.5 otherwise). ``agsf_resample=False`` keeps the
    full AGSF posterior instead of resampling back to ``M``, which is only
    sensible when ``N == L == 1``.
    """

    algorithm: str
    M: int = 1
    N: int = 1
    L: int = 1
    predict_policy: AugmentationPolicy = AdaptiveProportional()
    update_policy: AugmentationPolicy = AdaptiveProportional()
    ess_threshold: float = 0.5
    unscented: UnscentedConfig = UnscentedConfig()
    resampling: str = "systematic"
    init_rho: Optional[float] = None
    agsf_resample: bool = True

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.M < 1 or self.N < 1 or self.L < 1:
            raise ConfigError("M, N and L must be at least 1")
        if self.algorithm in ("EKF", "UKF") and self.M != 1:
            raise ConfigError(f"{self.algorithm} is a single-component filter (M must be 1)")
        if not 0.0 < self.ess_threshold <= 1.0:
            raise ConfigError("ess_threshold must lie in (0, 1]")
        if self.resampling not in RESAMPLERS:
            raise ConfigError(f"unknown resampling scheme {self.resampling!r}")
        if self.init_rho is not None and not 0.0 <= self.init_rho <= 1.0:
            raise ConfigError("init_rho must lie in [0, 1]")

    @property
    def method(self) -> str:
        """Moment-matching rule used by Gaussian-type components."""
        return "unscented" if self.algorithm in ("UKF", "U-GSF", "U-AGSF") else "linear"

    @property
    def initial_rho(self) -> float:
        if self.init_rho is not None:
            return self.init_rho
        if self.algorithm in PARTICLE_FILTERS:
            return 0.0
        return 1.0 if self.M == 1 else 0.5

    @property
    def label(self) -> str:
        if self.algorithm in ("EKF", "UKF"):
            return self.algorithm
        if self.algorithm in AGSF_FILTERS:
            return f"{self.algorithm}(M={self.M},N={self.N},L={self.L})"
        return f"{self.algorithm}(M={self.M})"


@dataclass
class StepDiagnostics:
    ess: float
    predict_rho: np.ndarray = field(default_factory=lambda: np.zeros(0))
    update_rho: np.ndarray = field(default_factory=lambda: np.zeros(0))
    degenerate_update: bool = False
    resampled: bool = False

    @property
    def adaptive_rho(self) -> list[float]:
        return np.concatenate([self.predict_rho, self.update_rho]).tolist()


@dataclass
class FilterStepOutput:
    """Per-step result; ``posterior`` is weighted and taken before resampling."""

    t: int
    predictive: GaussianMixture
    posterior: GaussianMixture
    belief: GaussianMixture
    diagnostics: StepDiagnostics

    @property
    def posterior_mean(self) -> np.ndarray:
        return mixture_mean(self.posterior)


def _reweight(log_w: np.ndarray) -> tuple[np.ndarray, bool]:
    """Normalized weights, falling back to uniform when everything underflows."""
    try:
        w, _ = normalize_log_weights(log_w)
        return w, False
    except DegenerateWeightsError:
        return np.full(log_w.size, 1.0 / log_w.size), True


def _log(w: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(w)


def initial_mixture(prior: Gaussian, M: int, rho: float, rng: np.random.Generator) -> GaussianMixture:
    """``M`` equally weighted components drawn from the split of ``prior``."""
    return augment_split(prior, rho * prior.cov, M, rng)


# ---------------------------------------------------------------------------
# Gaussian filters and Gaussian sum filters


def gsf_step(
    belief: GaussianMixture,
    model: StateSpaceModel,
    t: int,
    y: np.ndarray,
    method: str = "linear",
    unscented: UnscentedConfig = UnscentedConfig(),
) -> FilterStepOutput:
    """One step of a bank of Gaussian filters, reweighted by component evidence."""
    dyn, obs = model.dynamics(t), model.observation(t)
    pred = moments_batch(belief.means, belief.covs, dyn, method, unscented)
    predictive = GaussianMixture(belief.weights, pred.mean_y, pred.cov_y)
    joint = moments_batch(predictive.means, predictive.covs, obs, method, unscented)
    means, covs, log_ev = condition_batch(joint, y, obs.angular)
    w, degenerate = _reweight(_log(belief.weights) + log_ev)
    posterior = GaussianMixture(w, means, covs)
    diag = StepDiagnostics(ess=ess(w), degenerate_update=degenerate)
    return FilterStepOutput(t, predictive, posterior, posterior, diag)


def gaussian_filter_step(
    belief: Gaussian,
    model: StateSpaceModel,
    t: int,
    y: np.ndarray,
    method: str = "linear",
    unscented: UnscentedConfig = UnscentedConfig(),
) -> FilterStepOutput:
    """EKF (``method="linear"``) or UKF (``method="unscented"``) step."""
    return gsf_step(GaussianMixture.single(belief), model, t, y, method, unscented)


# ---------------------------------------------------------------------------
# Particle filters


def _particles(weights: np.ndarray, points: np.ndarray) -> GaussianMixture:
    k, d = points.shape
    return GaussianMixture(weights, points, np.zeros((k, d, d)))


def _needs_resample(cfg: FilterConfig, w: np.ndarray) -> bool:
    return cfg.ess_threshold >= 1.0 or ess(w) < cfg.ess_threshold * w.size


def bpf_step(
    particles: GaussianMixture,
    model: StateSpaceModel,
    t: int,
    y: np.ndarray,
    cfg: FilterConfig,
    rng: np.random.Generator,
) -> FilterStepOutput:
    """Bootstrap PF: transition proposal, likelihood weights, ESS-triggered resampling.

    The predictive mixture is the transition density around each propagated
    particle, ``sum_m w_m N(f(x_m), Q)``.
    """
    dyn = model.dynamics(t)
    w = particles.weights
    centres = dyn.mean(particles.means)
    noise = dyn.cov(particles.means)
    predictive = GaussianMixture(w, centres, noise)
    moved = sample_batch(centres, noise, rng)
    w_post, degenerate = _reweight(_log(w) + model.obs_loglik(t, moved, y))
    posterior = _particles(w_post, moved)
    diag = StepDiagnostics(ess=ess(w_post), degenerate_update=degenerate)
    resampler = RESAMPLERS[cfg.resampling]
    if degenerate:
        idx = resampler(w, w.size, rng)
    elif _needs_resample(cfg, w_post):
        idx = resampler(w_post, w.size, rng)
    else:
        return FilterStepOutput(t, predictive, posterior, posterior, diag)
    diag.resampled = True
    belief = _particles(np.full(w.size, 1.0 / w.size), moved[idx])
    return FilterStepOutput(t, predictive, posterior, belief, diag)


def apf_step(
    particles: GaussianMixture,
    model: StateSpaceModel,
    t: int,
    y: np.ndarray,
    cfg: FilterConfig,
    rng: np.random.Generator,
) -> FilterStepOutput:
    """Auxiliary PF with first-stage weights from the likelihood at ``f(x_m)``."""
    dyn = model.dynamics(t)
    w = particles.weights
    centres = dyn.mean(particles.means)
    noise = dyn.cov(particles.means)
    predictive = GaussianMixture(w, centres, noise)
    look_ahead = model.obs_loglik(t, centres, y)
    first, degenerate = _reweight(_log(w) + look_ahead)
    parents = RESAMPLERS[cfg.resampling](first, w.size, rng)
    moved = sample_batch(centres[parents], noise[parents], rng)
    if degenerate:
        log_w = model.obs_loglik(t, moved, y)
    else:
        log_w = model.obs_loglik(t, moved, y) - look_ahead[parents]
    w_post, degenerate_second = _reweight(log_w)
    posterior = _particles(w_post, moved)
    diag = StepDiagnostics(ess=ess(w_post), degenerate_update=degenerate or degenerate_second, resampled=True)
    return FilterStepOutput(t, predictive, posterior, posterior, diag)


# ---------------------------------------------------------------------------
# Augmented Gaussian sum filter


def agsf_predict(
    belief: GaussianMixture,
    model: StateSpaceModel,
    t: int,
    cfg: FilterConfig,
    rng: np.random.Generator,
) -> tuple[GaussianMixture, np.ndarray]:
    """Split every component ``N`` ways and moment match each piece through the dynamics.

    Returns the ``M*N`` component predictive mixture (component-major order)
    and the resolved proportionality per input component (nan for fixed).
    """
    dyn = model.dynamics(t)
    n = cfg.N
    deltas, rhos = resolve_batch(cfg.predict_policy, belief.covs, dyn, belief.means, n)
    centres = split_batch(belief.means, belief.covs, deltas, n, rng)
    joint = moments_batch(centres, np.repeat(deltas, n, axis=0), dyn, cfg.method, cfg.unscented)
    weights = np.repeat(belief.weights / n, n)
    return GaussianMixture(weights, joint.mean_y, joint.cov_y), rhos


def agsf_update(
    predictive: GaussianMixture,
    model: StateSpaceModel,
    t: int,
    y: np.ndarray,
    cfg: FilterConfig,
    rng: np.random.Generator,
) -> tuple[GaussianMixture, np.ndarray, bool]:
    """Split every predictive component ``L`` ways, condition each piece on ``y``.

    Returns the ``M*N*L`` posterior, the resolved update proportionality per
    predictive component and the degenerate-update flag.
    """
    obs = model.observation(t)
    n = cfg.L
    lams, rhos = resolve_batch(cfg.update_policy, predictive.covs, obs, predictive.means, n)
    centres = split_batch(predictive.means, predictive.covs, lams, n, rng)
    joint = moments_batch(centres, np.repeat(lams, n, axis=0), obs, cfg.method, cfg.unscented)
    means, covs, log_ev = condition_batch(joint, y, obs.angular)
    prior_w = np.repeat(predictive.weights / n, n)
    w, degenerate = _reweight(_log(prior_w) + log_ev)
    return GaussianMixture(w, means, covs), rhos, degenerate


def agsf_resample(posterior: GaussianMixture, M: int, rng: np.random.Generator) -> GaussianMixture:
    """Multinomial draw of ``M`` full components; output weights are uniform."""
    idx = multinomial_resample(posterior.weights, M, rng)
    return GaussianMixture(np.full(M, 1.0 / M), posterior.means[idx], posterior.covs[idx])


def agsf_step(
    belief: GaussianMixture,
    model: StateSpaceModel,
    t: int,
    y: np.ndarray,
    cfg: FilterConfig,
    rng: np.random.Generator,
) -> FilterStepOutput:
    predictive, rho_pred = agsf_predict(belief, model, t, cfg, rng)
    posterior, rho_upd, degenerate = agsf_update(predictive, model, t, y, cfg, rng)
    diag = StepDiagnostics(
        ess=ess(posterior.weights), predict_rho=rho_pred, update_rho=rho_upd, degenerate_update=degenerate
    )
    if cfg.agsf_resample:
        diag.resampled = True
        new_belief = agsf_resample(posterior, cfg.M, rng)
    else:
        new_belief = posterior
    return FilterStepOutput(t, predictive, posterior, new_belief, diag)


# ---------------------------------------------------------------------------
# Drivers


def step(
    belief: GaussianMixture,
    model: StateSpaceModel,
    t: int,
    y: np.ndarray,
    cfg: FilterConfig,
    rng: np.random.Generator,
) -> FilterStepOutput:
    """Dispatch one step of the configured filter."""
    if cfg.algorithm in GAUSSIAN_FILTERS:
        return gsf_step(belief, model, t, y, cfg.method, cfg.unscented)
    if cfg.algorithm == "BPF":
        return bpf_step(belief, model, t, y, cfg, rng)
    if cfg.algorithm == "APF":
        return apf_step(belief, model, t, y, cfg, rng)
    return agsf_step(belief, model, t, y, cfg, rng)


def iter_filter(
    model: StateSpaceModel,
    trajectory: Trajectory,
    cfg: FilterConfig,
    seed,
) -> Iterator[FilterStepOutput]:
    """Run the filter lazily; ``seed`` is an int or a ``numpy`` generator.

    Any exception inside step ``t`` is re-raised as :class:`FilterRunError`.
    """
    if trajectory.observations.shape[1] != model.obs_dim:
        raise ConfigError("trajectory observation dimension does not match the model")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    belief = initial_mixture(model.initial_belief, cfg.M, cfg.initial_rho, rng)
    for k, y in enumerate(trajectory.observations):
        t = k + 1
        try:
            out = step(belief, model, t, y, cfg, rng)
        except Exception as exc:  # noqa: BLE001  (re-raised with the failing step)
            raise FilterRunError(t, exc) from exc
        belief = out.belief
        yield out


def run_filter(model: StateSpaceModel, trajectory: Trajectory, cfg: FilterConfig, seed) -> list[FilterStepOutput]:
    return list(iter_filter(model, trajectory, cfg, seed))


def diagnostics_record(cfg: FilterConfig, out: FilterStepOutput) -> dict:
    """JSON-serializable per-step summary."""
    d = out.diagnostics
    moments_cov = np.einsum("k,kii->", out.posterior.weights, out.posterior.covs)
    mean = out.posterior_mean
    spread = out.posterior.means - mean
    trace = float(moments_cov + np.einsum("k,ki,ki->", out.posterior.weights, spread, spread))
    return {
        "t": out.t,
        "algorithm": cfg.label,
        "ess": d.ess,
        "predict_rho": [None if np.isnan(r) else float(r) for r in d.predict_rho],
        "update_rho": [None if np.isnan(r) else float(r) for r in d.update_rho],
        "degenerate_update": d.degenerate_update,
        "resampled": d.resampled,
        "posterior_mean": mean.tolist(),
        "posterior_cov_trace": trace,
    }


def write_diagnostics(cfg: FilterConfig, outputs, path) -> None:
    with open(path, "w") as fh:
        for out in outputs:
            fh.write(json.dumps(diagnostics_record(cfg, out)) + "\n")
