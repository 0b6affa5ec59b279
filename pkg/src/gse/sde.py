"""Closed forms of the mean-reverting variance-exploding diffusion.

The forward process relaxes a signal x toward the observed noisy signal y
with stiffness ``gamma`` while injecting noise on a geometric scale ladder:

    dx_t = gamma * (y - x_t) dt + g(t) dw_t
    g(t) = sigma_min * (sigma_max / sigma_min)**t * sqrt(2 * ln(sigma_max / sigma_min))

With that g(t) the perturbation kernel is Gaussian with

    mean(x0, y, t) = exp(-gamma t) * x0 + (1 - exp(-gamma t)) * y
    variance(t)    = sigma_min^2 * ((sigma_max/sigma_min)^(2t) - exp(-2 gamma t))
                     * ln(sigma_max/sigma_min) / (gamma + ln(sigma_max/sigma_min))

which is the unique variance satisfying d/dt var = -2*gamma*var + g(t)^2 with
var(0) = 0.  All state vectors are 1-D float64 arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError, DomainError

__all__ = [
    "SdeParams",
    "make_rng",
    "drift",
    "diffusion_coeff",
    "mean",
    "variance",
    "std",
    "perturb",
    "sample_perturbed",
    "euler_maruyama_forward",
    "forward_ensemble_moments",
]


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator; a fixed seed reproduces every draw bit-exactly."""
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class SdeParams:
    """Process constants. ``sigma_max == sigma_min`` degenerates to a noise-free ODE."""

    gamma: float = 1.5
    sigma_min: float = 1e-4
    sigma_max: float = 1e-1
    T: float = 1.0
    N: int = 30
    t_eps: float = 0.03

    def __post_init__(self):
        if not (self.gamma > 0.0):
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if not (0.0 < self.sigma_min <= self.sigma_max):
            raise ConfigError(
                f"need 0 < sigma_min <= sigma_max, got {self.sigma_min}, {self.sigma_max}"
            )
        if not (self.T > 0.0):
            raise ConfigError(f"T must be positive, got {self.T}")
        if self.N < 1:
            raise ConfigError(f"N must be >= 1, got {self.N}")
        if not (0.0 < self.t_eps < self.T):
            raise ConfigError(f"t_eps must lie in (0, T), got {self.t_eps}")

    @cached_property
    def log_ratio(self) -> float:
        return math.log(self.sigma_max / self.sigma_min)

    def grid_time(self, n: int) -> float:
        """Time of grid node n in 0..N; node times are (n*T)/N, strictly increasing."""
        if not 0 <= n <= self.N:
            raise DomainError(f"grid index {n} outside 0..{self.N}")
        return (n * self.T) / self.N

    @property
    def dt(self) -> float:
        return self.T / self.N

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    # -- flat key=value config round-trip -------------------------------------
    def to_file(self, path: str | Path) -> None:
        lines = [f"{f.name} = {getattr(self, f.name)!r}" for f in fields(self)]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_file(cls, path: str | Path) -> "SdeParams":
        kwargs = {}
        casts = {f.name: (int if f.name == "N" else float) for f in fields(cls)}
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in casts:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                kwargs[key] = casts[key](value.strip())
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
        return cls(**kwargs)


def _check_t(t: float, params: SdeParams, lo: float = 0.0) -> float:
    t = float(t)
    if not (lo <= t <= params.T):
        raise DomainError(f"t={t} outside [{lo}, {params.T}]")
    return t


def _check_pair(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionError(f"shape mismatch: {x.shape} vs {y.shape}")
    return x, y


def drift(x: np.ndarray, y: np.ndarray, params: SdeParams) -> np.ndarray:
    """f(x, y) = gamma * (y - x); antisymmetric under swapping x and y."""
    x, y = _check_pair(x, y)
    return params.gamma * (y - x)


def diffusion_coeff(t: float, params: SdeParams) -> float:
    """g(t) on the geometric ladder; zero for the degenerate sigma_max == sigma_min."""
    t = _check_t(t, params)
    lr = params.log_ratio
    if lr == 0.0:
        return 0.0
    return params.sigma_min * math.exp(t * lr) * math.sqrt(2.0 * lr)


def mean(x0: np.ndarray, y: np.ndarray, t: float, params: SdeParams) -> np.ndarray:
    """Kernel mean: exponential relaxation from x0 toward y at rate gamma."""
    x0, y = _check_pair(x0, y)
    a = math.exp(-params.gamma * _check_t(t, params))
    return a * x0 + (1.0 - a) * y


def variance(t: float, params: SdeParams) -> float:
    """Kernel variance; the unique solution of dv/dt = -2*gamma*v + g(t)^2, v(0)=0."""
    t = _check_t(t, params)
    lr = params.log_ratio
    if lr == 0.0:
        return 0.0
    grow = math.exp(2.0 * t * lr)
    decay = math.exp(-2.0 * params.gamma * t)
    return params.sigma_min**2 * (grow - decay) * lr / (params.gamma + lr)


def std(t: float, params: SdeParams) -> float:
    return math.sqrt(variance(t, params))


def perturb(
    x0: np.ndarray, y: np.ndarray, t: float, z: np.ndarray, params: SdeParams
) -> np.ndarray:
    """x_t = mean(x0, y, t) + std(t) * z for a caller-chosen z."""
    x0, y = _check_pair(x0, y)
    z = np.asarray(z, dtype=np.float64)
    if z.shape != x0.shape:
        raise DimensionError(f"noise shape {z.shape} != signal shape {x0.shape}")
    return mean(x0, y, t, params) + std(t, params) * z


def sample_perturbed(
    x0: np.ndarray,
    y: np.ndarray,
    t: float,
    params: SdeParams,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw (x_t, z) from the kernel at training time t in [t_eps, T]."""
    _check_t(t, params, lo=params.t_eps)
    x0, y = _check_pair(x0, y)
    z = rng.standard_normal(x0.shape)
    return perturb(x0, y, t, z, params), z


def euler_maruyama_forward(
    x0: np.ndarray,
    y: np.ndarray,
    params: SdeParams,
    steps: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Integrate the forward process from 0 to T on a uniform grid; returns x_T.

    Supports stacked paths: x0/y may be (paths, L) arrays, noise is drawn per path.
    """
    if steps < 100:
        raise DomainError(f"need steps >= 100 for a trustworthy path, got {steps}")
    x0, y = _check_pair(x0, y)
    dt = params.T / steps
    sq = math.sqrt(dt)
    x = x0.copy()
    for k in range(steps):
        g = diffusion_coeff(k * dt, params)
        x += params.gamma * (y - x) * dt + g * sq * rng.standard_normal(x.shape)
    return x


def forward_ensemble_moments(
    x0: np.ndarray,
    y: np.ndarray,
    params: SdeParams,
    paths: int,
    steps: int,
    grid: np.ndarray,
    rng: np.random.Generator,
) -> list[dict]:
    """Monte-Carlo moments of the forward process captured at the requested times.

    Each grid time must sit on the integration grid (a multiple of T/steps).
    Returns one dict per grid point with empirical mean/variance next to the
    closed-form values.
    """
    x0, y = _check_pair(x0, y)
    if x0.ndim != 1:
        raise DimensionError("x0 must be 1-D; paths are stacked internally")
    dt = params.T / steps
    snap = {}
    for t in np.asarray(grid, dtype=np.float64):
        k = round(float(t) / dt)
        if abs(k * dt - t) > 1e-9 * params.T or not 0 <= k <= steps:
            raise DomainError(f"grid time {t} is not a multiple of T/steps")
        snap[k] = float(t)
    xs = np.broadcast_to(x0, (paths, x0.size)).copy()
    ys = np.broadcast_to(y, (paths, y.size))
    sq = math.sqrt(dt)
    rows = []

    def record(k: int, x: np.ndarray):
        t = snap[k]
        emp_mean = x.mean(axis=0)
        emp_var = float(x.var(axis=0, ddof=1).mean())
        model_mean = mean(x0, y, t, params)
        denom = np.linalg.norm(model_mean)
        err = float(np.linalg.norm(emp_mean - model_mean) / denom) if denom > 0 else float(
            np.linalg.norm(emp_mean)
        )
        rows.append(
            {
                "t": t,
                "mean_rel_err": err,
                "empirical_var": emp_var,
                "model_var": variance(t, params),
            }
        )

    if 0 in snap:
        record(0, xs)
    for k in range(steps):
        g = diffusion_coeff(k * dt, params)
        xs += params.gamma * (ys - xs) * dt + g * sq * rng.standard_normal(xs.shape)
        if k + 1 in snap:
            record(k + 1, xs)
    rows.sort(key=lambda r: r["t"])
    return rows
