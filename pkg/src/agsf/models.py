"""State-space models, simulation and trajectory files.

Time runs ``t = 1..T``: ``dynamics(t)`` maps ``x_{t-1}`` to ``x_t`` and
``observation(t)`` generates ``y_t``. Both return :class:`~agsf.moments.Transform`
objects describing the model *as the filters see it*; simulation may use a
different (exact) noise mechanism, e.g. the rank-2 process noise ``G q`` of
the tracking model.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from agsf.errors import ModelError
from agsf.gaussian import Gaussian, mvn_logpdf, sample, sample_batch, symmetrize, wrap_residual
from agsf.moments import Transform


class StateSpaceModel:
    """Base class for additive-noise state-space models.

    Subclasses set ``state_dim``, ``obs_dim``, ``initial_belief`` and implement
    :meth:`dynamics` and :meth:`observation`.
    """

    state_dim: int
    obs_dim: int
    initial_belief: Gaussian

    def dynamics(self, t: int) -> Transform:
        raise NotImplementedError

    def observation(self, t: int) -> Transform:
        raise NotImplementedError

    def input(self, t: int) -> Optional[float]:
        """Known exogenous input at time ``t`` (None for autonomous models)."""
        return None

    def sample_transition(self, t: int, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        tr = self.dynamics(t)
        x = np.atleast_2d(x)
        return sample_batch(tr.mean(x), tr.cov(x), rng)

    def sample_observation(self, t: int, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        tr = self.observation(t)
        x = np.atleast_2d(x)
        return sample_batch(tr.mean(x), tr.cov(x), rng)

    def obs_loglik(self, t: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Exact ``log p(y_t | x_t)`` for a batch of states."""
        tr = self.observation(t)
        res = wrap_residual(np.asarray(y, dtype=float) - tr.mean(x), tr.angular)
        return mvn_logpdf(res, 0.0, tr.cov(x))


@dataclass
class Trajectory:
    """Simulated states ``x_{1:T}``, observations ``y_{1:T}`` and inputs ``u_{1:T}``."""

    states: np.ndarray
    observations: np.ndarray
    inputs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    initial_state: Optional[np.ndarray] = None

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.observations = np.asarray(self.observations, dtype=float)
        self.inputs = np.asarray(self.inputs, dtype=float).reshape(-1)
        if len(self.states) != len(self.observations):
            raise ValueError("states and observations must have equal length")
        if self.inputs.size not in (0, len(self.states)):
            raise ValueError("inputs must be empty or match the trajectory length")

    def __len__(self) -> int:
        return len(self.states)

    def to_csv(self, path) -> None:
        dx, dy = self.states.shape[1], self.observations.shape[1]
        header = ["t"] + [f"x{i + 1}" for i in range(dx)] + [f"y{i + 1}" for i in range(dy)] + ["u"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for k in range(len(self)):
                u = repr(float(self.inputs[k])) if self.inputs.size else ""
                row = [str(k + 1)] + [repr(float(v)) for v in self.states[k]]
                row += [repr(float(v)) for v in self.observations[k]] + [u]
                writer.writerow(row)

    @classmethod
    def from_csv(cls, path) -> Trajectory:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
        xs = [i for i, h in enumerate(header) if h.startswith("x")]
        ys = [i for i, h in enumerate(header) if h.startswith("y")]
        ui = header.index("u")
        states = np.array([[float(r[i]) for i in xs] for r in rows]).reshape(len(rows), len(xs))
        obs = np.array([[float(r[i]) for i in ys] for r in rows]).reshape(len(rows), len(ys))
        inputs = [float(r[ui]) for r in rows if r[ui] != ""]
        return cls(states, obs, np.array(inputs))

    def to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for k in range(len(self)):
                rec = {"t": k + 1, "x": self.states[k].tolist(), "y": self.observations[k].tolist()}
                rec["u"] = float(self.inputs[k]) if self.inputs.size else None
                fh.write(json.dumps(rec) + "\n")

    @classmethod
    def from_jsonl(cls, path) -> Trajectory:
        recs = [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
        inputs = [r["u"] for r in recs if r.get("u") is not None]
        return cls(np.array([r["x"] for r in recs]), np.array([r["y"] for r in recs]), np.array(inputs))


def simulate(m: StateSpaceModel, T: int, rng: np.random.Generator) -> Trajectory:
    """Draw ``x_0`` from the initial belief, then ``T`` transitions and observations."""
    if T < 1:
        raise ValueError("T must be at least 1")
    x = sample(m.initial_belief, rng, 1)
    x0 = x[0].copy()
    states, obs, inputs = [], [], []
    for t in range(1, T + 1):
        x = m.sample_transition(t, x, rng)
        y = m.sample_observation(t, x, rng)
        states.append(x[0])
        obs.append(y[0])
        u = m.input(t)
        if u is not None:
            inputs.append(u)
    return Trajectory(np.array(states), np.array(obs), np.array(inputs), initial_state=x0)


# ---------------------------------------------------------------------------
# Generic test models


class LinearGaussianModel(StateSpaceModel):
    """``x_t = F x_{t-1} + q``, ``y_t = H x_t + r``."""

    def __init__(self, F, Q, H, R, initial_belief: Gaussian):
        self.F = np.atleast_2d(np.asarray(F, dtype=float))
        self.Q = np.atleast_2d(np.asarray(Q, dtype=float))
        self.H = np.atleast_2d(np.asarray(H, dtype=float))
        self.R = np.atleast_2d(np.asarray(R, dtype=float))
        self.state_dim = self.F.shape[0]
        self.obs_dim = self.H.shape[0]
        self.initial_belief = initial_belief
        F_, H_ = self.F, self.H
        self._dyn = Transform(
            fn=lambda x: x @ F_.T,
            noise_cov=self.Q,
            jacobian=lambda x: np.broadcast_to(F_, x.shape[:-1] + F_.shape),
            hessians=lambda x: np.zeros(x.shape[:-1] + (F_.shape[0],) + F_.shape[1:] * 2),
        )
        self._obs = Transform(
            fn=lambda x: x @ H_.T,
            noise_cov=self.R,
            jacobian=lambda x: np.broadcast_to(H_, x.shape[:-1] + H_.shape),
            hessians=lambda x: np.zeros(x.shape[:-1] + (H_.shape[0],) + (H_.shape[1],) * 2),
        )

    def dynamics(self, t):
        return self._dyn

    def observation(self, t):
        return self._obs


class ScalarNonlinearModel(StateSpaceModel):
    """``x_t = 0.5 x + sin(x) + q``, ``y_t = x^2 / 20 + r`` (stability benchmark).

    The prior is centred off zero by default: ``x = 0`` is a fixed point of the
    dynamics where the observation gradient vanishes, so a linearized filter
    started there never moves and its variance grows geometrically.
    """

    def __init__(self, q_var: float = 1.0, r_var: float = 1.0, prior_var: float = 1.0, prior_mean: float = 1.0):
        self.state_dim = self.obs_dim = 1
        self.initial_belief = Gaussian(np.array([prior_mean]), np.array([[prior_var]]))
        self._dyn = Transform(
            fn=lambda x: 0.5 * x + np.sin(x),
            noise_cov=np.array([[q_var]]),
            jacobian=lambda x: (0.5 + np.cos(x))[..., None],
            hessians=lambda x: (-np.sin(x))[..., None, None],
        )
        self._obs = Transform(
            fn=lambda x: x**2 / 20.0,
            noise_cov=np.array([[r_var]]),
            jacobian=lambda x: (x / 10.0)[..., None],
            hessians=lambda x: np.full(x.shape[:-1] + (1, 1, 1), 0.1),
        )

    def dynamics(self, t):
        return self._dyn

    def observation(self, t):
        return self._obs


# ---------------------------------------------------------------------------
# Maneuvering-target tracking (range and bearing)

PROCESS_GAIN = np.array([[0.5, 1.0], [1.0, 0.0], [0.0, 0.5], [0.0, 1.0]])


@dataclass(frozen=True)
class TrackingModelConfig:
    """Parameters of the range-bearing tracking benchmark.

    ``initial_state`` is the prior mean (state order ``x1, v1, x2, v2``);
    the true ``x_0`` is drawn from the prior. ``full_jacobian=False`` freezes
    the turn rate when linearizing the dynamics.
    """

    a: float = 0.5
    sigma2: float = 25e-3
    dt: float = 1.0
    T: int = 500
    q_var: float = 1e-6
    initial_state: tuple[float, ...] = (30.0, 1.0, 30.0, 0.0)
    initial_cov_diag: tuple[float, ...] = (1.0, 0.1, 1.0, 0.1)
    full_jacobian: bool = True
    filter_noise_jitter: float = 1e-12

    def __post_init__(self):
        if self.a <= 0 or self.sigma2 <= 0:
            raise ValueError("a and sigma2 must be positive")
        if self.dt <= 0 or self.T < 1:
            raise ValueError("dt must be positive and T at least 1")


def cv_matrix(dt: float) -> np.ndarray:
    F = np.eye(4)
    F[0, 1] = F[2, 3] = dt
    return F


def _ct_coefficients(omega, dt):
    omega = np.asarray(omega, dtype=float)
    small = np.abs(omega) < 1e-8
    safe = np.where(small, 1.0, omega)
    s, c = np.sin(omega * dt), np.cos(omega * dt)
    a1 = np.where(small, dt - omega**2 * dt**3 / 6.0, s / safe)
    b1 = np.where(small, omega * dt**2 / 2.0, (1.0 - c) / safe)
    return s, c, a1, b1


def ct_matrix(omega: float, dt: float) -> np.ndarray:
    """Constant-turn transition matrix; ``omega -> 0`` recovers :func:`cv_matrix`."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    s, c, a1, b1 = (float(v) for v in _ct_coefficients(omega, dt))
    return np.array(
        [
            [1.0, a1, 0.0, -b1],
            [0.0, c, 0.0, -s],
            [0.0, b1, 1.0, a1],
            [0.0, s, 0.0, c],
        ]
    )


def tracking_regime(t: int, T: int) -> int:
    """+1 (turn with positive rate), 0 (constant velocity) or -1."""
    if t <= 2 * T / 5:
        return 1
    if t <= 3 * T / 5:
        return 0
    return -1


def turn_rate(x: np.ndarray, a: float, sign: int) -> np.ndarray:
    speed = np.hypot(x[..., 1], x[..., 3])
    if np.any(speed == 0):
        raise ModelError("zero speed: turn rate undefined in a constant-turn phase")
    return sign * a / speed


def tracking_dynamics(x: np.ndarray, t: int, cfg: TrackingModelConfig) -> np.ndarray:
    """Noise-free ``F_t(x) x`` with the turn rate computed from ``x``'s velocity."""
    x = np.asarray(x, dtype=float)
    regime = tracking_regime(t, cfg.T)
    if regime == 0:
        return x @ cv_matrix(cfg.dt).T
    omega = turn_rate(x, cfg.a, regime)
    s, c, a1, b1 = _ct_coefficients(omega, cfg.dt)
    p1, v1, p2, v2 = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
    return np.stack(
        [p1 + a1 * v1 - b1 * v2, c * v1 - s * v2, p2 + b1 * v1 + a1 * v2, s * v1 + c * v2], axis=-1
    )


def _frozen_jacobian(x: np.ndarray, t: int, cfg: TrackingModelConfig) -> np.ndarray:
    regime = tracking_regime(t, cfg.T)
    if regime == 0:
        return np.broadcast_to(cv_matrix(cfg.dt), x.shape[:-1] + (4, 4))
    omega = turn_rate(x, cfg.a, regime)
    s, c, a1, b1 = _ct_coefficients(omega, cfg.dt)
    zero, one = np.zeros_like(s), np.ones_like(s)
    rows = [
        [one, a1, zero, -b1],
        [zero, c, zero, -s],
        [zero, b1, one, a1],
        [zero, s, zero, c],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def range_bearing(x: np.ndarray) -> np.ndarray:
    """``(sqrt(x1^2 + x2^2), atan2(x2, x1))`` for state order ``x1, v1, x2, v2``."""
    x = np.asarray(x, dtype=float)
    p1, p2 = x[..., 0], x[..., 2]
    r = np.hypot(p1, p2)
    if np.any(r == 0):
        raise ModelError("range-bearing undefined at the sensor origin")
    return np.stack([r, np.arctan2(p2, p1)], axis=-1)


def range_bearing_jacobian(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    p1, p2 = x[..., 0], x[..., 2]
    r2 = p1**2 + p2**2
    if np.any(r2 == 0):
        raise ModelError("range-bearing undefined at the sensor origin")
    r = np.sqrt(r2)
    zero = np.zeros_like(r)
    row_r = np.stack([p1 / r, zero, p2 / r, zero], axis=-1)
    row_b = np.stack([-p2 / r2, zero, p1 / r2, zero], axis=-1)
    return np.stack([row_r, row_b], axis=-2)


class TrackingModel(StateSpaceModel):
    """Maneuvering target: turn / straight / turn, observed in range and bearing."""

    def __init__(self, cfg: TrackingModelConfig = TrackingModelConfig()):
        self.cfg = cfg
        self.state_dim, self.obs_dim = 4, 2
        self.initial_belief = Gaussian(np.array(cfg.initial_state, float), np.diag(cfg.initial_cov_diag))
        self.process_cov = cfg.q_var * np.eye(2)
        gqg = PROCESS_GAIN @ self.process_cov @ PROCESS_GAIN.T
        self.filter_process_cov = symmetrize(gqg + cfg.filter_noise_jitter * np.eye(4))
        self.R = cfg.sigma2 * np.eye(2)
        self._obs = Transform(fn=range_bearing, noise_cov=self.R, jacobian=range_bearing_jacobian, angular=(1,))
        self._dyn = {}

    def dynamics(self, t: int) -> Transform:
        regime = tracking_regime(t, self.cfg.T)
        if regime not in self._dyn:
            cfg = self.cfg
            fn = lambda x: tracking_dynamics(x, t, cfg)  # noqa: E731  (regime fixed per t)
            jac = None if cfg.full_jacobian else (lambda x: _frozen_jacobian(x, t, cfg))
            self._dyn[regime] = Transform(fn=fn, noise_cov=self.filter_process_cov, jacobian=jac)
        return self._dyn[regime]

    def observation(self, t: int) -> Transform:
        return self._obs

    def sample_transition(self, t, x, rng):
        x = np.atleast_2d(x)
        q = rng.standard_normal((x.shape[0], 2)) * np.sqrt(self.cfg.q_var)
        return tracking_dynamics(x, t, self.cfg) + q @ PROCESS_GAIN.T


# ---------------------------------------------------------------------------
# Linear-Gaussian / stochastic-volatility switching model


@dataclass(frozen=True)
class SwitchingModelConfig:
    """Parameters of the switching LG/MSV benchmark (diagonal-isotropic defaults)."""

    dim: int = 4
    phi: float = 0.8
    beta: float = 0.5
    sigma: float = 4.0
    q_var: float = 10.0
    r_var: float = 0.1
    r0: float = 1e-4
    switch_period: int = 20

    @property
    def Phi(self) -> np.ndarray:
        return self.phi * np.eye(self.dim)

    @property
    def H(self) -> np.ndarray:
        return np.eye(self.dim)

    @property
    def Q(self) -> np.ndarray:
        return self.q_var * np.eye(self.dim)

    @property
    def R(self) -> np.ndarray:
        return self.r_var * np.eye(self.dim)

    @property
    def r0_vec(self) -> np.ndarray:
        return np.full(self.dim, self.r0)


def switching_input(t: int, period: int = 20) -> float:
    """0 for the first ``period`` steps, then alternating 1 / 0 blocks."""
    return float(((t - 1) // period) % 2)


def volatility(x: np.ndarray, cfg: SwitchingModelConfig) -> np.ndarray:
    """Diagonal of ``V = beta diag(exp(x / sigma))``."""
    return cfg.beta * np.exp(np.asarray(x, dtype=float) / cfg.sigma)


def switching_observation(x: np.ndarray, u: float, r: np.ndarray, cfg: SwitchingModelConfig) -> np.ndarray:
    """``y = u V(x) r + (1 - u)(H x + r)``."""
    x = np.asarray(x, dtype=float)
    r = np.asarray(r, dtype=float)
    return u * volatility(x, cfg) * r + (1.0 - u) * (x @ cfg.H.T + r)


class SwitchingModel(StateSpaceModel):
    """Linear dynamics; observations alternate between LG and MSV regimes.

    Given ``x``, ``y`` is exactly Gaussian with mean ``(1-u) H x + A(x) r0`` and
    covariance ``A(x) R A(x)^T`` where ``A(x) = u V(x) + (1-u) I``; filters use
    that conditional law with the covariance evaluated at the centre point.
    """

    def __init__(self, cfg: SwitchingModelConfig = SwitchingModelConfig()):
        self.cfg = cfg
        d = cfg.dim
        self.state_dim = self.obs_dim = d
        self.initial_belief = Gaussian(np.zeros(d), cfg.Q / (1.0 - cfg.phi**2))
        Phi = cfg.Phi
        self._dyn = Transform(
            fn=lambda x: x @ Phi.T,
            noise_cov=cfg.Q,
            jacobian=lambda x: np.broadcast_to(Phi, x.shape[:-1] + (d, d)),
            hessians=lambda x: np.zeros(x.shape[:-1] + (d, d, d)),
        )
        self._obs = {u: self._make_observation(u) for u in (0.0, 1.0)}

    def input(self, t: int) -> float:
        return switching_input(t, self.cfg.switch_period)

    def dynamics(self, t):
        return self._dyn

    def observation(self, t):
        u = self.input(t)
        if u not in self._obs:
            self._obs[u] = self._make_observation(u)
        return self._obs[u]

    def _make_observation(self, u: float) -> Transform:
        cfg = self.cfg
        H, R, r0 = cfg.H, cfg.R, cfg.r0_vec
        d = cfg.dim
        eye = np.eye(d)

        def scale(x):
            return u * volatility(x, cfg) + (1.0 - u)

        def fn(x):
            return (1.0 - u) * (x @ H.T) + scale(x) * r0

        def jac(x):
            slope = u * volatility(x, cfg) / cfg.sigma * r0
            return (1.0 - u) * np.broadcast_to(H, x.shape[:-1] + H.shape) + slope[..., None] * eye

        def hess(x):
            curv = u * volatility(x, cfg) / cfg.sigma**2 * r0
            out = np.zeros(x.shape[:-1] + (d, d, d))
            idx = np.arange(d)
            out[..., idx, idx, idx] = curv
            return out

        def cov(x):
            a = scale(x)
            return R * a[..., :, None] * a[..., None, :]

        return Transform(fn=fn, noise_cov=cov, jacobian=jac, hessians=hess)

    def sample_observation(self, t, x, rng):
        x = np.atleast_2d(x)
        r = self.cfg.r0_vec + rng.standard_normal(x.shape) @ np.linalg.cholesky(self.cfg.R).T
        return switching_observation(x, self.input(t), r, self.cfg)
