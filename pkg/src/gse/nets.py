"""Hand-rolled differentiable nets for score and one-shot denoiser models.

Both nets share one structure: the signal is cut into fixed frames, a framewise
affine encoder embeds each frame, a single gated recurrent memory cell carries
context across frames (and across chunk boundaries when its state is threaded),
and a framewise affine decoder maps back to samples.  Processing is therefore
non-causal only *within* a frame; the recurrence is strictly left-to-right,
which is what makes chunked and whole-signal forwards bit-identical when the
cell state is carried over.

All gradients are computed by hand (reverse-mode, backprop through time); the
test-suite checks every layer against central finite differences.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError, DivergenceError, DomainError
from .sde import SdeParams, make_rng, sample_perturbed, std

__all__ = [
    "TimeEmbedding",
    "ScoreNet",
    "DenoiserNet",
    "TrainConfig",
    "TrainResult",
    "score_matching_loss",
    "draw_matching_samples",
    "matching_loss_from_draws",
    "weighted_matching_loss_from_draws",
    "snr_loss",
    "denoiser_loss_and_grads",
    "train_score",
    "train_denoiser",
    "save_checkpoint",
    "load_checkpoint",
]

SNR_LOSS_FLOOR_DB = -120.0
SNR_LOSS_EPS = 1e-12


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form is overflow-safe for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class TimeEmbedding:
    """Geometric sinusoidal embedding of the diffusion time, t in [0, T]."""

    def __init__(self, dim: int = 32, omega_min: float = 1.0, omega_max: float = 1000.0):
        if dim % 2 != 0 or dim < 2:
            raise ConfigError(f"embedding dim must be even and >= 2, got {dim}")
        half = dim // 2
        self.dim = dim
        self.omegas = omega_min * (omega_max / omega_min) ** (np.arange(half) / max(half - 1, 1))

    def embed(self, t: float) -> np.ndarray:
        phase = self.omegas * float(t)
        return np.concatenate([np.sin(phase), np.cos(phase)])


class _FrameNet:
    """Encoder -> gated recurrent cell -> decoder, on (batch, frames, features)."""

    #: parameter name -> layer name, the unit of the per-layer gradient checks
    LAYERS = {
        "enc_w": "encoder",
        "enc_b": "encoder",
        "gate_u_w": "memory_update_gate",
        "gate_u_u": "memory_update_gate",
        "gate_u_b": "memory_update_gate",
        "gate_c_w": "memory_candidate",
        "gate_c_u": "memory_candidate",
        "gate_c_b": "memory_candidate",
        "dec_w": "decoder",
        "dec_b": "decoder",
    }

    def __init__(self, d_in: int, frame_size: int, hidden: int, seed: int):
        if frame_size < 1 or hidden < 1:
            raise ConfigError("frame_size and hidden must be positive")
        self.d_in = d_in
        self.frame_size = frame_size
        self.hidden = hidden
        rng = make_rng(seed)

        def mat(rows, cols, scale):
            return rng.standard_normal((rows, cols)) * scale

        h = hidden
        self.params: dict[str, np.ndarray] = {
            "enc_w": mat(h, d_in, 1.0 / math.sqrt(d_in)),
            "enc_b": np.zeros(h),
            "gate_u_w": mat(h, h, 1.0 / math.sqrt(h)),
            "gate_u_u": mat(h, h, 1.0 / math.sqrt(h)),
            "gate_u_b": np.zeros(h),
            "gate_c_w": mat(h, h, 1.0 / math.sqrt(h)),
            "gate_c_u": mat(h, h, 1.0 / math.sqrt(h)),
            "gate_c_b": np.zeros(h),
            "dec_w": mat(frame_size, 2 * h, 0.5 / math.sqrt(2 * h)),
            "dec_b": np.zeros(frame_size),
        }

    @property
    def state_dim(self) -> int:
        return self.hidden

    def zero_state(self, batch: int = 1) -> np.ndarray:
        return np.zeros((batch, self.hidden))

    def macs_per_frame(self) -> int:
        """Multiply-accumulates of the affine blocks for one frame."""
        h, f, d = self.hidden, self.frame_size, self.d_in
        return h * d + 4 * h * h + f * 2 * h

    def forward(self, inp: np.ndarray, state: np.ndarray, need_cache: bool):
        """inp: (B, R, d_in), state: (B, H) -> (out (B, R, F), state (B, H), cache).

        Two arithmetically equivalent paths:

        * ``need_cache=False`` (enhancement / streaming): every projection runs
          per frame on (B, .) operands, so the arithmetic for frame k never
          depends on how many frames surround it.  That is what makes a chunked
          forward with threaded state bit-identical to the whole-signal forward:
          same frames, same op shapes, same rounding.
        * ``need_cache=True`` (training): the frame-parallel projections are
          hoisted into batched matmuls for throughput.  Training never threads
          state across chunk boundaries, so it does not need the bit-exactness
          property, only agreement with the other path to rounding error.
        """
        p = self.params
        B, R, _ = inp.shape
        H = self.hidden
        if need_cache:
            h = np.tanh(inp @ p["enc_w"].T + p["enc_b"])
            hu = h @ p["gate_u_w"].T
            hc = h @ p["gate_c_w"].T
            s = state
            S = np.empty((B, R, H))
            S_prev = np.empty_like(S)
            U = np.empty_like(S)
            C = np.empty_like(S)
            for k in range(R):
                u = _sigmoid(hu[:, k] + s @ p["gate_u_u"].T + p["gate_u_b"])
                c = np.tanh(hc[:, k] + s @ p["gate_c_u"].T + p["gate_c_b"])
                S_prev[:, k] = s
                U[:, k] = u
                C[:, k] = c
                s = (1.0 - u) * s + u * c
                S[:, k] = s
            cat = np.concatenate([h, S], axis=-1)
            out = cat @ p["dec_w"].T + p["dec_b"]
            return out, s.copy(), (inp, h, S_prev, U, C, cat)

        w_enc, b_enc = p["enc_w"].T, p["enc_b"]
        w_u, u_u, b_u = p["gate_u_w"].T, p["gate_u_u"].T, p["gate_u_b"]
        w_c, u_c, b_c = p["gate_c_w"].T, p["gate_c_u"].T, p["gate_c_b"]
        w_dec, b_dec = p["dec_w"].T, p["dec_b"]
        s = state
        out = np.empty((B, R, self.frame_size))
        buf = np.empty((B, 2 * H))
        for k in range(R):
            h = np.tanh(inp[:, k] @ w_enc + b_enc)
            u = _sigmoid(h @ w_u + s @ u_u + b_u)
            c = np.tanh(h @ w_c + s @ u_c + b_c)
            s = (1.0 - u) * s + u * c
            buf[:, :H] = h
            buf[:, H:] = s
            out[:, k] = buf @ w_dec + b_dec
        return out, s.copy(), None

    def backward(self, cache, d_out: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of a scalar loss given d_loss/d_out; state input treated constant."""
        p = self.params
        inp, h, S_prev, U, C, cat = cache
        B, R, F = d_out.shape
        H = self.hidden
        flat = lambda a: a.reshape(-1, a.shape[-1])

        grads = {}
        grads["dec_w"] = flat(d_out).T @ flat(cat)
        grads["dec_b"] = d_out.sum(axis=(0, 1))
        d_cat = d_out @ p["dec_w"]
        dh = d_cat[..., :H].copy()
        dS = d_cat[..., H:]

        DA = np.empty((B, R, H))  # d(update-gate preactivation)
        DB = np.empty((B, R, H))  # d(candidate preactivation)
        carry = np.zeros((B, H))
        for k in range(R - 1, -1, -1):
            g = dS[:, k] + carry
            u, c, sp = U[:, k], C[:, k], S_prev[:, k]
            da = g * (c - sp) * u * (1.0 - u)
            db = g * u * (1.0 - c * c)
            DA[:, k] = da
            DB[:, k] = db
            carry = g * (1.0 - u) + da @ p["gate_u_u"] + db @ p["gate_c_u"]
        grads["gate_u_w"] = flat(DA).T @ flat(h)
        grads["gate_u_u"] = flat(DA).T @ flat(S_prev)
        grads["gate_u_b"] = DA.sum(axis=(0, 1))
        grads["gate_c_w"] = flat(DB).T @ flat(h)
        grads["gate_c_u"] = flat(DB).T @ flat(S_prev)
        grads["gate_c_b"] = DB.sum(axis=(0, 1))
        dh += DA @ p["gate_u_w"] + DB @ p["gate_c_w"]
        de = dh * (1.0 - h * h)
        grads["enc_w"] = flat(de).T @ flat(inp)
        grads["enc_b"] = de.sum(axis=(0, 1))
        return grads


def _frames(x: np.ndarray, frame_size: int) -> np.ndarray:
    if x.shape[-1] % frame_size != 0:
        raise DimensionError(
            f"signal length {x.shape[-1]} is not a multiple of frame_size {frame_size}"
        )
    return x.reshape(*x.shape[:-1], x.shape[-1] // frame_size, frame_size)


class ScoreNet:
    """Conditional score model s(x_t, y, t); recurrent state threads across chunks.

    The decoder output is divided by std(t): the trainable part regresses the
    O(1) noise while the public output is the score itself.
    """

    kind = "score"

    def __init__(
        self,
        sde_params: SdeParams,
        frame_size: int = 80,
        hidden: int = 96,
        emb_dim: int = 32,
        seed: int = 0,
    ):
        self.sde_params = sde_params
        self.frame_size = frame_size
        self.hidden = hidden
        self.emb = TimeEmbedding(emb_dim)
        self.core = _FrameNet(2 * frame_size + emb_dim, frame_size, hidden, seed)
        self.seed = seed

    @property
    def params(self) -> dict[str, np.ndarray]:
        return self.core.params

    @property
    def state_dim(self) -> int:
        return self.core.state_dim

    def zero_state(self) -> np.ndarray:
        return np.zeros(self.state_dim)

    def macs_per_forward(self, n_samples: int) -> int:
        if n_samples % self.frame_size != 0:
            raise DimensionError(
                f"length {n_samples} not a multiple of frame_size {self.frame_size}"
            )
        return (n_samples // self.frame_size) * self.core.macs_per_frame()

    def _clamp_t(self, t: float) -> float:
        return min(max(float(t), self.sde_params.t_eps), self.sde_params.T)

    def gain(self, t: float) -> float:
        return 1.0 / std(self._clamp_t(t), self.sde_params)

    def _assemble(self, x_t: np.ndarray, y: np.ndarray, ts: np.ndarray) -> np.ndarray:
        xf = _frames(x_t, self.frame_size)
        yf = _frames(y, self.frame_size)
        B, R, _ = xf.shape
        te = np.stack([self.emb.embed(self._clamp_t(t)) for t in ts])
        te = np.broadcast_to(te[:, None, :], (B, R, te.shape[-1]))
        return np.concatenate([xf, yf, te], axis=-1)

    def raw_batch(self, x_t, y, ts, states=None, need_cache=False):
        """Pre-gain output on a (B, L) batch; returns (raw, states, cache)."""
        x_t = np.atleast_2d(np.asarray(x_t, dtype=np.float64))
        y = np.atleast_2d(np.asarray(y, dtype=np.float64))
        if x_t.shape != y.shape:
            raise DimensionError(f"x_t shape {x_t.shape} != y shape {y.shape}")
        ts = np.atleast_1d(np.asarray(ts, dtype=np.float64))
        if ts.shape[0] != x_t.shape[0]:
            raise DimensionError("one time per batch item required")
        inp = self._assemble(x_t, y, ts)
        if states is None:
            states = self.core.zero_state(x_t.shape[0])
        out, new_states, cache = self.core.forward(inp, np.atleast_2d(states), need_cache)
        return out.reshape(x_t.shape), new_states, cache

    def forward(self, x_t: np.ndarray, y: np.ndarray, t: float, state=None):
        """Score of a single signal; returns (score, new_state)."""
        x_t = np.asarray(x_t, dtype=np.float64)
        st = None if state is None else np.atleast_2d(state)
        raw, new_states, _ = self.raw_batch(x_t[None, :], np.asarray(y)[None, :], [t], st)
        return raw[0] * self.gain(t), new_states[0]

    def hyperparams(self) -> dict:
        return {
            "frame_size": self.frame_size,
            "hidden": self.hidden,
            "emb_dim": self.emb.dim,
            "seed": self.seed,
        }


class DenoiserNet:
    """One-shot signal estimator x_d = D(y); same family, no time conditioning."""

    kind = "denoiser"

    def __init__(self, frame_size: int = 80, hidden: int = 96, seed: int = 0):
        self.frame_size = frame_size
        self.hidden = hidden
        self.core = _FrameNet(frame_size, frame_size, hidden, seed)
        self.seed = seed

    @property
    def params(self) -> dict[str, np.ndarray]:
        return self.core.params

    @property
    def state_dim(self) -> int:
        return self.core.state_dim

    def zero_state(self) -> np.ndarray:
        return np.zeros(self.state_dim)

    def macs_per_forward(self, n_samples: int) -> int:
        if n_samples % self.frame_size != 0:
            raise DimensionError(
                f"length {n_samples} not a multiple of frame_size {self.frame_size}"
            )
        return (n_samples // self.frame_size) * self.core.macs_per_frame()

    def raw_batch(self, y, states=None, need_cache=False):
        y = np.atleast_2d(np.asarray(y, dtype=np.float64))
        inp = _frames(y, self.frame_size)
        if states is None:
            states = self.core.zero_state(y.shape[0])
        out, new_states, cache = self.core.forward(inp, np.atleast_2d(states), need_cache)
        return out.reshape(y.shape), new_states, cache

    def forward(self, y: np.ndarray, state=None):
        y = np.asarray(y, dtype=np.float64)
        st = None if state is None else np.atleast_2d(state)
        out, new_states, _ = self.raw_batch(y[None, :], st)
        return out[0], new_states[0]

    def hyperparams(self) -> dict:
        return {"frame_size": self.frame_size, "hidden": self.hidden, "seed": self.seed}


# --------------------------------------------------------------------------
# Losses
# --------------------------------------------------------------------------


@dataclass
class MatchingDraws:
    """Frozen perturbation draws so a loss evaluation is a pure function of params."""

    x_t: np.ndarray  # (B, L)
    y: np.ndarray  # (B, L)
    z: np.ndarray  # (B, L)
    ts: np.ndarray  # (B,)
    stds: np.ndarray  # (B,)


def draw_matching_samples(batch, params: SdeParams, rng: np.random.Generator) -> MatchingDraws:
    """t ~ U[t_eps, T] and one kernel draw per (x0, y) pair."""
    if len(batch) == 0:
        raise DomainError("empty batch")
    x0s = np.stack([np.asarray(p[0], dtype=np.float64) for p in batch])
    ys = np.stack([np.asarray(p[1], dtype=np.float64) for p in batch])
    ts = rng.uniform(params.t_eps, params.T, size=len(batch))
    xts = np.empty_like(x0s)
    zs = np.empty_like(x0s)
    for i, t in enumerate(ts):
        xts[i], zs[i] = sample_perturbed(x0s[i], ys[i], float(t), params, rng)
    stds = np.array([std(float(t), params) for t in ts])
    return MatchingDraws(xts, ys, zs, ts, stds)


def matching_loss_from_draws(net: ScoreNet, draws: MatchingDraws):
    """Batch mean of || s(x_t, y, t) + z / std(t) ||^2 and its parameter gradient."""
    B = draws.x_t.shape[0]
    raw, _, cache = net.raw_batch(draws.x_t, draws.y, draws.ts, need_cache=True)
    gains = (1.0 / draws.stds)[:, None]
    resid = raw * gains + draws.z * gains  # score + z/std
    loss = float(np.mean(np.sum(resid * resid, axis=1)))
    d_raw = 2.0 * resid * gains / B
    grads = net.core.backward(cache, _frames(d_raw, net.frame_size))
    return loss, grads


def score_matching_loss(net: ScoreNet, batch, params: SdeParams, rng: np.random.Generator):
    """Draw perturbations and return (loss, grads) of the matching objective."""
    return matching_loss_from_draws(net, draw_matching_samples(batch, params, rng))


def weighted_matching_loss_from_draws(net: ScoreNet, draws: MatchingDraws):
    """Variance-weighted objective (noise-prediction MSE): mean (raw + z)^2.

    Same minimizer as the literal matching loss; conditioning is flat in t,
    which is what makes small-scale training converge.
    """
    B, L = draws.x_t.shape
    raw, _, cache = net.raw_batch(draws.x_t, draws.y, draws.ts, need_cache=True)
    resid = raw + draws.z
    loss = float(np.mean(resid * resid))
    d_raw = 2.0 * resid / (B * L)
    grads = net.core.backward(cache, _frames(d_raw, net.frame_size))
    return loss, grads


def snr_loss(x_hat: np.ndarray, x0: np.ndarray) -> float:
    """Negative SNR in dB: -10*log10(||x0||^2 / (||x0 - x_hat||^2 + 1e-12)), floored at -120."""
    x_hat = np.asarray(x_hat, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    if x_hat.shape != x0.shape:
        raise DimensionError(f"shape mismatch: {x_hat.shape} vs {x0.shape}")
    p_ref = float(np.sum(x0 * x0))
    if p_ref == 0.0:
        raise DomainError("reference signal has zero energy")
    p_err = float(np.sum((x0 - x_hat) ** 2)) + SNR_LOSS_EPS
    return max(-10.0 * math.log10(p_ref / p_err), SNR_LOSS_FLOOR_DB)


def denoiser_loss_and_grads(net: DenoiserNet, batch):
    """Batch-mean SNR loss of the denoiser and its parameter gradient."""
    x0s = np.stack([np.asarray(p[0], dtype=np.float64) for p in batch])
    ys = np.stack([np.asarray(p[1], dtype=np.float64) for p in batch])
    B = x0s.shape[0]
    x_hat, _, cache = net.raw_batch(ys, need_cache=True)
    losses = np.empty(B)
    d_out = np.zeros_like(x_hat)
    scale = 10.0 / math.log(10.0)
    for i in range(B):
        r = x0s[i] - x_hat[i]
        p_ref = float(np.sum(x0s[i] ** 2))
        if p_ref == 0.0:
            raise DomainError("reference signal has zero energy")
        p_err = float(np.sum(r * r)) + SNR_LOSS_EPS
        raw = -10.0 * math.log10(p_ref / p_err)
        if raw <= SNR_LOSS_FLOOR_DB:
            losses[i] = SNR_LOSS_FLOOR_DB  # flat region: zero gradient
        else:
            losses[i] = raw
            d_out[i] = scale * (-2.0 * r) / p_err / B
    grads = net.core.backward(cache, _frames(d_out, net.frame_size))
    return float(losses.mean()), grads


# --------------------------------------------------------------------------
# Optimizers and the training loop
# --------------------------------------------------------------------------


class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


class _Momentum:
    def __init__(self, params, lr, mu=0.9):
        self.lr, self.mu = lr, mu
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads):
        for k, g in grads.items():
            self.v[k] = self.mu * self.v[k] - self.lr * g
            params[k] += self.v[k]


@dataclass
class TrainConfig:
    steps: int = 500
    batch_size: int = 8
    learning_rate: float = 1e-3
    seed: int = 0
    optimizer: str = "adam"  # adam | momentum
    probe_every: int = 25
    probe_size: int = 8
    # "weighted" is the noise-prediction form (flat conditioning across t, the
    # default); "matching" is the literal score-space objective, useful as a
    # low-lr polish when accuracy at small noise scales matters.
    objective: str = "weighted"

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1:
            raise ConfigError("steps must be >= 0 and batch_size >= 1")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.optimizer not in ("adam", "momentum"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.objective not in ("weighted", "matching"):
            raise ConfigError(f"unknown objective {self.objective!r}")


@dataclass
class TrainResult:
    curve: list = field(default_factory=list)  # rows: (step, train_loss, probe_loss|None)
    final_probe_loss: float = math.nan

    def probe_losses(self) -> list[float]:
        return [row[2] for row in self.curve if row[2] is not None]

    def save_curve_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "train_loss", "probe_loss"])
            for step, train, probe in self.curve:
                w.writerow([step, f"{train:.10g}", "" if probe is None else f"{probe:.10g}"])


def _make_optimizer(cfg: TrainConfig, params):
    if cfg.optimizer == "adam":
        return _Adam(params, cfg.learning_rate)
    return _Momentum(params, cfg.learning_rate)


def _fit(net, pairs, cfg: TrainConfig, batch_loss_fn, probe_loss_fn) -> TrainResult:
    if len(pairs) == 0:
        raise DomainError("training set is empty")
    rng = make_rng(cfg.seed)
    opt = _make_optimizer(cfg, net.params)
    result = TrainResult()
    probe = probe_loss_fn()
    result.curve.append((0, probe, probe))
    for step in range(1, cfg.steps + 1):
        idx = rng.integers(0, len(pairs), size=cfg.batch_size)
        loss, grads = batch_loss_fn([pairs[i] for i in idx], rng)
        if not math.isfinite(loss) or any(not np.all(np.isfinite(g)) for g in grads.values()):
            raise DivergenceError(f"non-finite loss/gradient at step {step} (loss={loss})")
        opt.step(net.params, grads)
        probe = probe_loss_fn() if step % cfg.probe_every == 0 or step == cfg.steps else None
        result.curve.append((step, loss, probe))
    result.final_probe_loss = probe_loss_fn()
    return result


def train_score(net: ScoreNet, pairs, params: SdeParams, cfg: TrainConfig) -> TrainResult:
    """Fit the score net on (x0, y) pairs with the objective named in the config."""
    loss_fn = (
        weighted_matching_loss_from_draws if cfg.objective == "weighted" else matching_loss_from_draws
    )
    probe_rng = make_rng(cfg.seed + 104729)
    probe_pairs = [pairs[i] for i in probe_rng.integers(0, len(pairs), size=cfg.probe_size)]
    probe_draws = draw_matching_samples(probe_pairs, params, probe_rng)

    def batch_loss(batch, rng):
        return loss_fn(net, draw_matching_samples(batch, params, rng))

    def probe_loss():
        return loss_fn(net, probe_draws)[0]

    return _fit(net, pairs, cfg, batch_loss, probe_loss)


def train_denoiser(net: DenoiserNet, pairs, cfg: TrainConfig) -> TrainResult:
    """Fit the one-shot denoiser on (x0, y) pairs with the SNR loss."""
    probe_rng = make_rng(cfg.seed + 104729)
    probe_pairs = [pairs[i] for i in probe_rng.integers(0, len(pairs), size=cfg.probe_size)]

    def batch_loss(batch, rng):
        return denoiser_loss_and_grads(net, batch)

    def probe_loss():
        return denoiser_loss_and_grads(net, probe_pairs)[0]

    return _fit(net, pairs, cfg, batch_loss, probe_loss)


# --------------------------------------------------------------------------
# Checkpoints: versioned npz with config echo, seed, and all parameters
# --------------------------------------------------------------------------

CHECKPOINT_FORMAT = 1


def save_checkpoint(path: str | Path, net, train_seed: int | None = None) -> None:
    meta = {
        "format": CHECKPOINT_FORMAT,
        "kind": net.kind,
        "hyperparams": net.hyperparams(),
        "train_seed": train_seed,
    }
    if net.kind == "score":
        p = net.sde_params
        meta["sde_params"] = {
            "gamma": p.gamma, "sigma_min": p.sigma_min, "sigma_max": p.sigma_max,
            "T": p.T, "N": p.N, "t_eps": p.t_eps,
        }
    arrays = {f"param_{k}": v for k, v in net.params.items()}
    np.savez(path, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path: str | Path):
    """Rebuild a net from a checkpoint; returns (net, meta)."""
    with np.load(path) as data:
        if "meta" not in data:
            raise ConfigError(f"{path}: not a checkpoint (missing meta)")
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ConfigError(f"{path}: unsupported checkpoint format {meta.get('format')}")
        hp = meta["hyperparams"]
        if meta["kind"] == "score":
            net = ScoreNet(SdeParams(**meta["sde_params"]), **hp)
        elif meta["kind"] == "denoiser":
            net = DenoiserNet(**hp)
        else:
            raise ConfigError(f"{path}: unknown net kind {meta['kind']!r}")
        for k in net.params:
            key = f"param_{k}"
            if key not in data:
                raise ConfigError(f"{path}: missing parameter array {k}")
            net.params[k] = data[key].astype(np.float64)
    return net, meta
