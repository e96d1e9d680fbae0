"""JSON experiment configuration with strict key checking.

Schema (every key except ``model`` and ``filters`` is optional)::

    {
      "model": {"kind": "tracking" | "switching" | "linear" | "scalar-nonlinear",
                "params": {...model-specific fields...}},
      "filters": [
        {"algorithm": "L-AGSF", "M": 100, "N": 5, "L": 5,
         "predict_policy": {"kind": "adaptive"},
         "update_policy": {"kind": "proportional", "rho": 0.9},
         "ess_threshold": 0.5, "resampling": "systematic",
         "init_rho": null, "agsf_resample": true,
         "unscented": {"alpha": 1.0, "beta": 2.0, "kappa": null}}
      ],
      "sweep": {"base": {...filter...}, "grid": {"M": [10, 100], "N": [1, 5]}},
      "T": 200, "n_sims": 10, "base_seed": 0,
      "metrics": ["MSE", "LPE"], "lpe_density": "predictive" | "posterior"
    }

Policy kinds: ``adaptive`` (optional ``sample_count_hint``), ``proportional``
(``rho``) and ``fixed`` (``delta``, a matrix). Tracking params are the fields of
:class:`~agsf.models.TrackingModelConfig` except ``T``, which always follows the
experiment horizon. Linear params are ``F, Q, H, R, prior_mean, prior_cov``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

import numpy as np

from agsf.augmentation import AdaptiveProportional, AugmentationPolicy, Fixed, Proportional
from agsf.errors import ConfigError
from agsf.filters import FilterConfig
from agsf.gaussian import Gaussian
from agsf.models import (
    LinearGaussianModel,
    ScalarNonlinearModel,
    StateSpaceModel,
    SwitchingModel,
    SwitchingModelConfig,
    TrackingModel,
    TrackingModelConfig,
)
from agsf.moments import UnscentedConfig

MODEL_KINDS = ("tracking", "switching", "linear", "scalar-nonlinear")
METRICS = ("MSE", "LPE")
LPE_DENSITIES = ("predictive", "posterior")

_TOP_KEYS = {"model", "filters", "sweep", "T", "n_sims", "base_seed", "metrics", "lpe_density"}
_FILTER_KEYS = {f.name for f in fields(FilterConfig)}


def _check_keys(obj: Any, allowed: set, where: str) -> None:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object, got {type(obj).__name__}")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}; allowed {sorted(allowed)}")


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")

    def build(self, T: int) -> StateSpaceModel:
        p = dict(self.params)
        try:
            if self.kind == "tracking":
                if "T" in p and p["T"] != T:
                    raise ConfigError("tracking params.T must equal the experiment horizon")
                p["T"] = T
                for key in ("initial_state", "initial_cov_diag"):
                    if key in p:
                        p[key] = tuple(p[key])
                return TrackingModel(TrackingModelConfig(**p))
            if self.kind == "switching":
                return SwitchingModel(SwitchingModelConfig(**p))
            if self.kind == "scalar-nonlinear":
                return ScalarNonlinearModel(**p)
            _check_keys(p, {"F", "Q", "H", "R", "prior_mean", "prior_cov"}, "model.params")
            prior = Gaussian(np.asarray(p.pop("prior_mean"), float), np.atleast_2d(p.pop("prior_cov")))
            return LinearGaussianModel(p["F"], p["Q"], p["H"], p["R"], prior)
        except ConfigError:
            raise
        except (TypeError, KeyError, ValueError) as exc:
            raise ConfigError(f"invalid {self.kind} model params: {exc}") from exc


@dataclass(frozen=True)
class ExperimentConfig:
    """Model, filter bank and seeding for a multi-seed experiment."""

    model: ModelSpec
    filters: tuple[FilterConfig, ...]
    T: int = 200
    n_sims: int = 10
    base_seed: int = 0
    metrics: tuple[str, ...] = METRICS
    lpe_density: str = "predictive"

    def __post_init__(self):
        if self.n_sims < 1:
            raise ConfigError("n_sims must be at least 1")
        if self.T < 1:
            raise ConfigError("T must be at least 1")
        if not self.filters:
            raise ConfigError("at least one filter config is required")
        bad = set(self.metrics) - set(METRICS)
        if bad:
            raise ConfigError(f"unknown metrics {sorted(bad)}")
        if self.lpe_density not in LPE_DENSITIES:
            raise ConfigError(f"lpe_density must be one of {LPE_DENSITIES}")

    def build_model(self) -> StateSpaceModel:
        return self.model.build(self.T)


def policy_from_dict(obj: Any, where: str) -> AugmentationPolicy:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ConfigError(f"{where}: expected an object with a 'kind' key")
    kind = obj["kind"]
    if kind == "adaptive":
        _check_keys(obj, {"kind", "sample_count_hint"}, where)
        return AdaptiveProportional(obj.get("sample_count_hint"))
    if kind == "proportional":
        _check_keys(obj, {"kind", "rho"}, where)
        try:
            return Proportional(float(obj["rho"]))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    if kind == "fixed":
        _check_keys(obj, {"kind", "delta"}, where)
        if "delta" not in obj:
            raise ConfigError(f"{where}: fixed policy needs 'delta'")
        return Fixed(np.atleast_2d(np.asarray(obj["delta"], dtype=float)))
    raise ConfigError(f"{where}: unknown policy kind {kind!r}")


def policy_to_dict(policy: AugmentationPolicy) -> dict:
    if isinstance(policy, AdaptiveProportional):
        out: dict = {"kind": "adaptive"}
        if policy.sample_count_hint is not None:
            out["sample_count_hint"] = policy.sample_count_hint
        return out
    if isinstance(policy, Proportional):
        return {"kind": "proportional", "rho": policy.rho}
    return {"kind": "fixed", "delta": np.asarray(policy.delta).tolist()}


def filter_from_dict(obj: Any, where: str = "filter") -> FilterConfig:
    _check_keys(obj, _FILTER_KEYS, where)
    if "algorithm" not in obj:
        raise ConfigError(f"{where}: 'algorithm' is required")
    kw = dict(obj)
    for key in ("predict_policy", "update_policy"):
        if key in kw:
            kw[key] = policy_from_dict(kw[key], f"{where}.{key}")
    if "unscented" in kw:
        _check_keys(kw["unscented"], {"alpha", "beta", "kappa"}, f"{where}.unscented")
        try:
            kw["unscented"] = UnscentedConfig(**kw["unscented"])
        except ValueError as exc:
            raise ConfigError(f"{where}.unscented: {exc}") from exc
    try:
        return FilterConfig(**kw)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def filter_to_dict(cfg: FilterConfig) -> dict:
    return {
        "algorithm": cfg.algorithm,
        "M": cfg.M,
        "N": cfg.N,
        "L": cfg.L,
        "predict_policy": policy_to_dict(cfg.predict_policy),
        "update_policy": policy_to_dict(cfg.update_policy),
        "ess_threshold": cfg.ess_threshold,
        "resampling": cfg.resampling,
        "init_rho": cfg.init_rho,
        "agsf_resample": cfg.agsf_resample,
        "unscented": {"alpha": cfg.unscented.alpha, "beta": cfg.unscented.beta, "kappa": cfg.unscented.kappa},
    }


def expand_sweep(obj: Any) -> list[FilterConfig]:
    """Cartesian product of ``grid`` values applied on top of ``base``."""
    _check_keys(obj, {"base", "grid"}, "sweep")
    base = obj.get("base")
    grid = obj.get("grid", {})
    if base is None:
        raise ConfigError("sweep: 'base' filter is required")
    _check_keys(grid, _FILTER_KEYS - {"algorithm"}, "sweep.grid")
    keys = sorted(grid)
    for k in keys:
        if not isinstance(grid[k], list) or not grid[k]:
            raise ConfigError(f"sweep.grid.{k}: expected a non-empty list")
    out = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        merged = dict(base)
        merged.update(zip(keys, combo))
        out.append(filter_from_dict(merged, "sweep"))
    return out


def config_from_dict(obj: Any, use_sweep: bool = False) -> ExperimentConfig:
    _check_keys(obj, _TOP_KEYS, "config")
    if "model" not in obj:
        raise ConfigError("config: 'model' is required")
    model_obj = obj["model"]
    _check_keys(model_obj, {"kind", "params"}, "config.model")
    if "kind" not in model_obj:
        raise ConfigError("config.model: 'kind' is required")
    model = ModelSpec(model_obj["kind"], dict(model_obj.get("params", {})))
    if use_sweep:
        if "sweep" not in obj:
            raise ConfigError("config: 'sweep' section is required for a sweep")
        filters = expand_sweep(obj["sweep"])
    else:
        if "filters" not in obj or not isinstance(obj["filters"], list):
            raise ConfigError("config: 'filters' must be a list")
        filters = [filter_from_dict(f, f"filters[{i}]") for i, f in enumerate(obj["filters"])]
    kw: dict = {}
    for key in ("T", "n_sims", "base_seed"):
        if key in obj:
            if not isinstance(obj[key], int) or isinstance(obj[key], bool):
                raise ConfigError(f"config: {key} must be an integer")
            kw[key] = obj[key]
    if "metrics" in obj:
        kw["metrics"] = tuple(obj["metrics"])
    if "lpe_density" in obj:
        kw["lpe_density"] = obj["lpe_density"]
    return ExperimentConfig(model=model, filters=tuple(filters), **kw)


def load_config(path, use_sweep: bool = False, seed_override: Optional[int] = None) -> ExperimentConfig:
    """Read a JSON config; missing files raise ``FileNotFoundError``."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    cfg = config_from_dict(obj, use_sweep=use_sweep)
    if seed_override is not None:
        cfg = replace(cfg, base_seed=seed_override)
    return cfg
