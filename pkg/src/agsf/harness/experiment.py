"""Multi-seed experiment runner.

Seed ``i`` of an experiment draws its trajectory from the stream
``[base_seed, i, 0]`` and runs filter ``j`` on the stream ``[base_seed, i, 1 + j]``,
so results do not depend on how seeds are scheduled across workers.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from agsf.errors import FilterRunError
from agsf.filters import FilterConfig, iter_filter
from agsf.harness.config import ExperimentConfig, policy_to_dict
from agsf.harness.metrics import log_density
from agsf.models import StateSpaceModel, Trajectory, simulate


def trajectory_rng(base_seed: int, sim: int) -> np.random.Generator:
    return np.random.default_rng([base_seed, sim, 0])


def filter_rng(base_seed: int, sim: int, index: int) -> np.random.Generator:
    return np.random.default_rng([base_seed, sim, 1 + index])


def describe_params(cfg: FilterConfig) -> str:
    parts = [f"M={cfg.M}"]
    if cfg.algorithm in ("L-AGSF", "U-AGSF"):
        def policy(p):
            d = policy_to_dict(p)
            return f"{d['kind']}:{d['rho']}" if "rho" in d else d["kind"]

        parts += [f"N={cfg.N}", f"L={cfg.L}", f"predict={policy(cfg.predict_policy)}", f"update={policy(cfg.update_policy)}"]
    if cfg.algorithm in ("BPF", "APF"):
        parts += [f"ess={cfg.ess_threshold:g}", cfg.resampling]
    return ",".join(parts)


@dataclass
class RunResult:
    """Metrics of one filter on one trajectory."""

    mse: float
    lpe: float
    runtime: float
    diverged: bool
    degenerate_steps: int = 0
    clamped_steps: int = 0
    error: Optional[str] = None


def run_single(
    model: StateSpaceModel,
    trajectory: Trajectory,
    cfg: FilterConfig,
    rng: np.random.Generator,
    lpe_density: str = "predictive",
) -> RunResult:
    """Filter one trajectory; failures are recorded as divergence, not raised."""
    start = time.perf_counter()
    sq_err, neg_log, degenerate, clamped = [], [], 0, 0
    try:
        for out in iter_filter(model, trajectory, cfg, rng):
            x = trajectory.states[out.t - 1]
            sq_err.append(float(np.sum((out.posterior_mean - x) ** 2)))
            density = out.predictive if lpe_density == "predictive" else out.posterior
            value, flag = log_density(density, x)
            neg_log.append(-value)
            clamped += flag
            degenerate += out.diagnostics.degenerate_update
    except FilterRunError as exc:
        return RunResult(np.nan, np.nan, time.perf_counter() - start, True, degenerate, clamped, str(exc))
    runtime = time.perf_counter() - start
    mse_value, lpe_value = float(np.mean(sq_err)), float(np.mean(neg_log))
    diverged = not np.isfinite(mse_value)
    return RunResult(mse_value, lpe_value, runtime, diverged, degenerate, clamped)


@dataclass
class ResultRecord:
    """Per-seed results of one filter configuration, with summary statistics.

    Means and sample standard deviations (``ddof=1``) are taken over the seeds
    that did not diverge.
    """

    algorithm: str
    params: str
    mse: list[float]
    lpe: list[float]
    runtime: list[float]
    diverged: list[bool]
    degenerate_steps: list[int] = field(default_factory=list)
    clamped_steps: list[int] = field(default_factory=list)

    def _ok(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        return v[~np.asarray(self.diverged, dtype=bool)] if len(v) else v

    @staticmethod
    def _mean(v: np.ndarray) -> float:
        return float(np.mean(v)) if v.size else float("nan")

    @staticmethod
    def _std(v: np.ndarray) -> float:
        return float(np.std(v, ddof=1)) if v.size > 1 else float("nan")

    @property
    def n_sims(self) -> int:
        return len(self.mse)

    @property
    def mse_mean(self) -> float:
        return self._mean(self._ok(self.mse))

    @property
    def mse_std(self) -> float:
        return self._std(self._ok(self.mse))

    @property
    def lpe_mean(self) -> float:
        return self._mean(self._ok(self.lpe))

    @property
    def lpe_std(self) -> float:
        return self._std(self._ok(self.lpe))

    @property
    def runtime_mean(self) -> float:
        return self._mean(np.asarray(self.runtime, dtype=float))

    @property
    def diverged_frac(self) -> float:
        return float(np.mean(self.diverged)) if self.diverged else float("nan")


def _run_seed(cfg: ExperimentConfig, sim: int, trajectory_dir: Optional[str]) -> list[RunResult]:
    model = cfg.build_model()
    trajectory = simulate(model, cfg.T, trajectory_rng(cfg.base_seed, sim))
    if trajectory_dir is not None:
        trajectory.to_csv(Path(trajectory_dir) / f"trajectory_seed{sim}.csv")
    return [
        run_single(model, trajectory, f, filter_rng(cfg.base_seed, sim, j), cfg.lpe_density)
        for j, f in enumerate(cfg.filters)
    ]


def resolve_jobs(jobs: Optional[int]) -> int:
    """Explicit ``jobs``, else the ``AGSF_JOBS`` environment variable, else 1."""
    if jobs is None:
        jobs = int(os.environ.get("AGSF_JOBS", "1"))
    if jobs < 1:
        raise ValueError("jobs must be at least 1")
    return jobs


def run_experiment(
    cfg: ExperimentConfig, jobs: Optional[int] = None, trajectory_dir=None
) -> list[ResultRecord]:
    """Run every filter on ``n_sims`` shared trajectories.

    ``trajectory_dir``, when given, receives one CSV per seed.
    """
    jobs = resolve_jobs(jobs)
    tdir = None if trajectory_dir is None else str(trajectory_dir)
    sims = range(cfg.n_sims)
    if jobs == 1:
        per_seed = [_run_seed(cfg, i, tdir) for i in sims]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_seed = list(pool.map(_run_seed, [cfg] * cfg.n_sims, sims, [tdir] * cfg.n_sims))
    records = []
    for j, f in enumerate(cfg.filters):
        runs = [seed_runs[j] for seed_runs in per_seed]
        records.append(
            ResultRecord(
                algorithm=f.algorithm,
                params=describe_params(f),
                mse=[r.mse for r in runs],
                lpe=[r.lpe for r in runs],
                runtime=[r.runtime for r in runs],
                diverged=[r.diverged for r in runs],
                degenerate_steps=[r.degenerate_steps for r in runs],
                clamped_steps=[r.clamped_steps for r in runs],
            )
        )
    return records


def rho_trace(model: StateSpaceModel, trajectory: Trajectory, cfg: FilterConfig, seed) -> list[dict]:
    """Per-step mean of the resolved prediction and update proportionalities."""
    rows = []
    for out in iter_filter(model, trajectory, cfg, seed):
        d = out.diagnostics

        def avg(r):
            return float(np.nanmean(r)) if r.size and not np.all(np.isnan(r)) else float("nan")

        u = model.input(out.t)
        rows.append({"t": out.t, "u": u, "rho_predict": avg(d.predict_rho), "rho_update": avg(d.update_rho)})
    return rows
