"""Predictor-corrector reverse sampler with exact cost accounting.

One reverse pass runs N predictor steps on the grid t_n = n*T/N (n = N..1),
each followed by ``corrector_steps`` annealed Langevin refinements evaluated at
the new time (clamped to t_eps) and sharing the predictor's guidance branch.
The prior is x_T ~ N(y, variance(T) * I); the returned state sits at t_eps.

Every score-model forward, denoiser forward, branch decision and analytic MAC
count lands in a ``CostLedger``; for the hybrid provider the totals obey

    score_net_forwards = (1 + corrector_steps) * (N - n_guided)
    denoiser_forwards  = 1
    mac_total          affine in n_guided with slope -(1+corrector_steps)*score_macs
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigError, DimensionError, DivergenceError, DomainError
from .sde import SdeParams, diffusion_coeff, drift, std, variance

__all__ = [
    "SamplerConfig",
    "CostLedger",
    "DiffusionState",
    "predictor_step",
    "corrector_step",
    "reverse_process",
]


@dataclass
class SamplerConfig:
    """Reverse-pass knobs. ``n_steps=None`` falls back to SdeParams.N."""

    n_steps: int | None = None
    corrector_steps: int = 1
    corrector_snr: float = 0.5
    seed: int = 0
    final_denoise: bool = False  # optional terminal mean projection (ablation)

    def __post_init__(self):
        if self.n_steps is not None and self.n_steps < 1:
            raise ConfigError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.corrector_steps < 0:
            raise ConfigError("corrector_steps must be >= 0")
        if self.corrector_snr <= 0.0:
            raise ConfigError("corrector_snr must be positive")

    def resolve_steps(self, params: SdeParams) -> int:
        return params.N if self.n_steps is None else self.n_steps


@dataclass
class CostLedger:
    """Additive run-cost counters."""

    score_net_forwards: int = 0
    denoiser_forwards: int = 0
    mac_total: int = 0
    steps_guided: int = 0
    steps_learned: int = 0
    corrector_evals: int = 0
    corrector_skips: int = 0

    def record_branch(self, guided: bool) -> None:
        if guided:
            self.steps_guided += 1
        else:
            self.steps_learned += 1

    def __add__(self, other: "CostLedger") -> "CostLedger":
        return CostLedger(
            **{f.name: getattr(self, f.name) + getattr(other, f.name) for f in fields(self)}
        )

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class DiffusionState:
    x: np.ndarray
    t: float


def predictor_step(
    state: DiffusionState,
    y: np.ndarray,
    score: np.ndarray,
    params: SdeParams,
    dt: float,
    rng: np.random.Generator,
) -> DiffusionState:
    """One reverse Euler-Maruyama step from t to t - dt:

        x <- x + [-f(x, y) + g(t)^2 * score] * dt + g(t) * sqrt(dt) * z

    With score = 0 and g = 0 this is pure drift reversal (x moves away from y).
    """
    t = state.t
    if dt <= 0.0 or t - dt < -1e-12:
        raise DomainError(f"cannot step by dt={dt} from t={t}")
    x = state.x
    if x.shape != np.shape(y) or x.shape != np.shape(score):
        raise DimensionError("state, condition and score must share one shape")
    g = diffusion_coeff(t, params)
    x_new = (
        x
        + (-drift(x, y, params) + g * g * score) * dt
        + g * math.sqrt(dt) * rng.standard_normal(x.shape)
    )
    return DiffusionState(x_new, max(t - dt, 0.0))


def corrector_step(
    state: DiffusionState,
    y: np.ndarray,
    score_fn,
    r: float,
    rng: np.random.Generator,
    ledger: CostLedger | None = None,
) -> DiffusionState:
    """Annealed Langevin refinement at fixed time:

        eps = 2 * (r * ||z|| / ||s||)^2,   x <- x + eps * s + sqrt(2 eps) * z

    A zero score skips the step (identity), recorded in the ledger.
    """
    s = np.asarray(score_fn(state.x, state.t), dtype=np.float64)
    if ledger is not None:
        ledger.corrector_evals += 1
    s_norm = float(np.linalg.norm(s))
    if s_norm == 0.0:
        if ledger is not None:
            ledger.corrector_skips += 1
        return DiffusionState(state.x.copy(), state.t)
    z = rng.standard_normal(state.x.shape)
    eps = 2.0 * (r * float(np.linalg.norm(z)) / s_norm) ** 2
    return DiffusionState(state.x + eps * s + math.sqrt(2.0 * eps) * z, state.t)


def reverse_process(
    y: np.ndarray,
    provider,
    schedule,
    config: SamplerConfig,
    params: SdeParams,
    rng: np.random.Generator,
    bank=None,
    ledger: CostLedger | None = None,
) -> tuple[np.ndarray, CostLedger]:
    """Full reverse pass conditioned on y; returns (x_out, ledger).

    When a history bank is supplied, the score-net state consumed at grid step n
    is the bank's entry for n and the predictor's evaluation (only) writes the
    updated state back; the denoiser state is threaded through the bank as well.
    """
    y = np.asarray(y, dtype=np.float64)
    if ledger is None:
        ledger = CostLedger()
    n_steps = config.resolve_steps(params)
    if schedule is not None and schedule.n_steps != n_steps:
        raise ConfigError(
            f"schedule built for N={schedule.n_steps}, sampler runs N={n_steps}"
        )
    den_state = None if bank is None else bank.denoiser_state
    bound, den_state = provider.bind(y, ledger, den_state)
    if bank is not None:
        bank.denoiser_state = den_state

    dt = params.T / n_steps
    x = y + std(params.T, params) * rng.standard_normal(y.shape)
    state = DiffusionState(x, params.T)
    t_floor = params.t_eps
    last_t_eval = params.T

    for n in range(n_steps, 0, -1):
        t_n = (n * params.T) / n_steps
        guided = bound.guided_for_step(n, schedule)
        ledger.record_branch(guided)
        step_state_in = bank.score_states[n] if bank is not None else None
        score, new_net_state = bound.evaluate(state.x, t_n, step_state_in, guided)
        if bank is not None and new_net_state is not None:
            bank.score_states[n] = new_net_state
        state = predictor_step(DiffusionState(state.x, t_n), y, score, params, dt, rng)
        if not np.all(np.isfinite(state.x)):
            raise DivergenceError(f"non-finite state after predictor step n={n}")
        t_eval = max(state.t, t_floor)
        last_t_eval = t_eval
        for _ in range(config.corrector_steps):
            # corrector re-reads the pre-update state; its end state is discarded
            def corr_score(x_cur, _t, _state=step_state_in, _g=guided, _te=t_eval):
                s, _ = bound.evaluate(x_cur, _te, _state, _g)
                return s

            state = corrector_step(
                DiffusionState(state.x, t_eval), y, corr_score, config.corrector_snr,
                rng, ledger,
            )
            if not np.all(np.isfinite(state.x)):
                raise DivergenceError(f"non-finite state after corrector at step n={n}")

    x_out = state.x
    if config.final_denoise:
        # Tweedie-style mean projection at the terminal time (not a grid step:
        # branch counters stay untouched)
        guided = bound.guided_for_step(1, schedule)
        score, _ = bound.evaluate(x_out, last_t_eval, None, guided)
        mu_hat = x_out + variance(last_t_eval, params) * score
        a = math.exp(-params.gamma * last_t_eval)
        x_out = (mu_hat - (1.0 - a) * y) / a
    return x_out, ledger
