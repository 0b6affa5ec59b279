"""Chunked enhancement with recurrent history across chunk boundaries.

Each incoming chunk runs its own full reverse diffusion conditioned on the
chunk's noisy samples; what ties consecutive chunks together is the history
bank: one score-net recurrent state per grid step index (written only by the
predictor's evaluation) plus one denoiser state.  Output for chunk c therefore
depends on chunks 1..c only, and the algorithmic latency is exactly one chunk.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, DomainError
from .sampler import CostLedger, SamplerConfig, reverse_process
from .sde import SdeParams, make_rng

__all__ = [
    "StreamConfig",
    "HistoryBank",
    "LatencyReport",
    "process_chunk",
    "enhance_offline",
    "enhance_stream",
    "StreamEnhancer",
    "realtime_factor",
]

PEAK_TARGET = 0.9
_PEAK_FLOOR = 1e-8


@dataclass(frozen=True)
class StreamConfig:
    chunk_ms: float = 50.0
    sample_rate: int = 16000

    def __post_init__(self):
        if self.chunk_ms <= 0.0:
            raise ConfigError(f"chunk_ms must be positive, got {self.chunk_ms}")
        if self.sample_rate < 1:
            raise ConfigError(f"sample_rate must be >= 1, got {self.sample_rate}")
        if self.chunk_size < 1:
            raise ConfigError("chunk shorter than one sample")

    @property
    def chunk_size(self) -> int:
        """Samples per chunk, K = round(chunk_ms * sample_rate / 1000)."""
        return round(self.chunk_ms * self.sample_rate / 1000.0)


@dataclass
class HistoryBank:
    """Recurrent state for every grid step plus the denoiser; fresh = all zeros."""

    n_steps: int
    score_states: dict[int, np.ndarray]
    denoiser_state: np.ndarray | None

    @classmethod
    def fresh(cls, n_steps: int, score_state_dim: int, denoiser_state_dim: int | None = None):
        if n_steps < 1:
            raise ConfigError(f"n_steps must be >= 1, got {n_steps}")
        states = {n: np.zeros(score_state_dim) for n in range(1, n_steps + 1)}
        den = None if denoiser_state_dim is None else np.zeros(denoiser_state_dim)
        return cls(n_steps, states, den)

    @classmethod
    def for_provider(cls, provider, config: SamplerConfig, params: SdeParams):
        n_steps = config.resolve_steps(params)
        return cls.fresh(n_steps, max(provider.state_dim, 1), provider.denoiser_state_dim)


def process_chunk(
    y_chunk: np.ndarray,
    bank: HistoryBank,
    provider,
    schedule,
    config: SamplerConfig,
    params: SdeParams,
    rng: np.random.Generator,
    ledger: CostLedger | None = None,
) -> tuple[np.ndarray, HistoryBank]:
    """Run the reverse pass for one chunk, threading the bank; returns (x_c, bank)."""
    y_chunk = np.asarray(y_chunk, dtype=np.float64)
    if y_chunk.ndim != 1 or y_chunk.size < 1:
        raise DimensionError("chunk must be a non-empty 1-D array")
    if bank.n_steps != config.resolve_steps(params):
        raise ConfigError(
            f"history bank built for N={bank.n_steps}, sampler runs N={config.resolve_steps(params)}"
        )
    x, _ = reverse_process(y_chunk, provider, schedule, config, params, rng, bank=bank,
                           ledger=ledger)
    return x, bank


@dataclass
class LatencyReport:
    """Algorithmic latency is the chunk duration; wall times are measured per chunk."""

    chunk_ms: float
    chunk_size: int
    wall_times_s: list = field(default_factory=list)

    @property
    def algorithmic_latency_ms(self) -> float:
        return self.chunk_ms

    def as_dict(self) -> dict:
        return {
            "algorithmic_latency_ms": self.algorithmic_latency_ms,
            "chunk_size": self.chunk_size,
            "n_chunks": len(self.wall_times_s),
            "wall_times_s": list(self.wall_times_s),
        }


def realtime_factor(report: LatencyReport) -> float:
    """Mean per-chunk wall time over the chunk duration; < 1 means faster than input."""
    if not report.wall_times_s:
        raise DomainError("no chunks processed; realtime factor undefined")
    chunk_s = report.chunk_ms / 1000.0
    return float(np.mean(report.wall_times_s)) / chunk_s


def _normalizer(peak: float) -> float:
    return PEAK_TARGET / max(peak, _PEAK_FLOOR)


def _pad_to_multiple(x: np.ndarray, m: int) -> np.ndarray:
    rem = x.size % m
    return x if rem == 0 else np.concatenate([x, np.zeros(m - rem)])


def enhance_offline(
    y: np.ndarray,
    provider,
    schedule,
    config: SamplerConfig,
    params: SdeParams,
    seed: int,
    frame_size: int = 1,
    sample_rate: int = 16000,
) -> tuple[np.ndarray, CostLedger, LatencyReport]:
    """Whole-utterance enhancement: one chunk, fresh zero history, peak-normalized."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.size < 1:
        raise DimensionError("signal must be a non-empty 1-D array")
    rng = make_rng(seed)
    scale = _normalizer(float(np.max(np.abs(y))))
    padded = _pad_to_multiple(y * scale, frame_size)
    bank = HistoryBank.for_provider(provider, config, params)
    ledger = CostLedger()
    report = LatencyReport(chunk_ms=1000.0 * padded.size / sample_rate, chunk_size=padded.size)
    t0 = time.perf_counter()
    x, _ = process_chunk(padded, bank, provider, schedule, config, params, rng, ledger)
    report.wall_times_s.append(time.perf_counter() - t0)
    return x[: y.size] / scale, ledger, report


def enhance_stream(
    y: np.ndarray,
    stream_config: StreamConfig,
    provider,
    schedule,
    config: SamplerConfig,
    params: SdeParams,
    seed: int,
) -> tuple[np.ndarray, CostLedger, LatencyReport]:
    """Chunked enhancement of a full utterance; returns (x, total ledger, report)."""
    enhancer = StreamEnhancer(stream_config, provider, schedule, config, params, seed)
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.size < 1:
        raise DimensionError("signal must be a non-empty 1-D array")
    K = stream_config.chunk_size
    outs = []
    for start in range(0, y.size, K):
        enhancer.push(y[start : start + K])
        outs.append(enhancer.pull())
    x = np.concatenate(outs)[: y.size]
    return x, enhancer.ledger, enhancer.report


class StreamEnhancer:
    """Push/pull interface: push one chunk of noisy samples, pull the enhanced chunk.

    The enhanced chunk for input chunk c is available right after push(c) — one
    chunk of algorithmic delay.  Short final chunks are zero-padded internally
    and trimmed on output.  Chunk outputs are causal in the input chunks.
    """

    def __init__(
        self,
        stream_config: StreamConfig,
        provider,
        schedule,
        config: SamplerConfig,
        params: SdeParams,
        seed: int,
    ):
        self.stream_config = stream_config
        self.provider = provider
        self.schedule = schedule
        self.config = config
        self.params = params
        self.rng = make_rng(seed)
        self.bank = HistoryBank.for_provider(provider, config, params)
        self.ledger = CostLedger()  # running total over chunks
        self.chunk_ledgers: list[CostLedger] = []
        self.report = LatencyReport(stream_config.chunk_ms, stream_config.chunk_size)
        self._outbox: list[np.ndarray] = []
        self._peak = 0.0

    def push(self, chunk: np.ndarray) -> None:
        chunk = np.asarray(chunk, dtype=np.float64)
        K = self.stream_config.chunk_size
        if chunk.ndim != 1 or not 1 <= chunk.size <= K:
            raise DimensionError(f"chunk must be 1-D with 1..{K} samples, got {chunk.shape}")
        n = chunk.size
        if n < K:
            chunk = np.concatenate([chunk, np.zeros(K - n)])
        # causal per-utterance normalization: running peak of everything seen so far
        self._peak = max(self._peak, float(np.max(np.abs(chunk))))
        scale = _normalizer(self._peak)
        chunk_ledger = CostLedger()
        t0 = time.perf_counter()
        x, _ = process_chunk(
            chunk * scale, self.bank, self.provider, self.schedule, self.config,
            self.params, self.rng, chunk_ledger,
        )
        self.report.wall_times_s.append(time.perf_counter() - t0)
        self.chunk_ledgers.append(chunk_ledger)
        self.ledger = self.ledger + chunk_ledger
        self._outbox.append(x[:n] / scale)

    def pull(self) -> np.ndarray | None:
        """Enhanced chunk in arrival order, or None when nothing is pending."""
        return self._outbox.pop(0) if self._outbox else None
