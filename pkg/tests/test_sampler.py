"""Reverse predictor-corrector sampler: step algebra, cost accounting, toy recovery."""

import math

import numpy as np
import pytest

from gse.errors import ConfigError, DimensionError, DivergenceError, DomainError
from gse.nets import DenoiserNet, ScoreNet
from gse.sampler import (
    CostLedger,
    DiffusionState,
    SamplerConfig,
    corrector_step,
    predictor_step,
    reverse_process,
)
from gse.score import (
    AnalyticGaussianScore,
    DiscriminativeScore,
    GaussianPrior,
    GuidanceSchedule,
    HybridScore,
    LearnedScore,
    analytic_gaussian_score,
)
from gse.sde import SdeParams, drift, make_rng, mean, std, variance

P = SdeParams()
WIDE = SdeParams(sigma_min=0.05, sigma_max=0.5)
# sigma_max == sigma_min kills the diffusion coefficient identically
FROZEN = SdeParams(sigma_min=0.1, sigma_max=0.1)


class _ZeroNoise:
    """Stands in for a Generator when a test wants the z draw pinned to zero."""

    def standard_normal(self, shape):
        return np.zeros(shape)


class _OracleDenoiser:
    """Duck-typed denoiser that returns a fixed clean signal regardless of input."""

    def __init__(self, x0: np.ndarray):
        self.x0 = np.asarray(x0, dtype=np.float64)

    def forward(self, y, state=None):
        return self.x0.copy(), state

    def macs_per_forward(self, n_samples: int) -> int:
        return 0


class TestPredictorStep:
    def test_zero_score_zero_noise_is_pure_drift_reversal(self):
        rng = make_rng(0)
        x = rng.normal(size=12)
        y = rng.normal(size=12)
        dt = 0.05
        out = predictor_step(DiffusionState(x, 0.5), y, np.zeros(12), FROZEN, dt, rng)
        expected = x + (-drift(x, y, FROZEN) + 0.0) * dt
        np.testing.assert_array_equal(out.x, expected)
        assert out.t == 0.45

    def test_reversed_drift_moves_away_from_condition(self):
        x = np.array([1.0, -2.0, 0.3])
        y = np.array([0.2, 0.2, 0.2])
        out = predictor_step(DiffusionState(x, 0.9), y, np.zeros(3), FROZEN, 0.1, make_rng(1))
        assert np.all(np.abs(out.x - y) > np.abs(x - y))

    def test_time_hits_zero_exactly_from_final_grid_step(self):
        x = np.zeros(4)
        out = predictor_step(DiffusionState(x, 1.0 / 30.0), x, x, P, 1.0 / 30.0, make_rng(0))
        assert out.t == 0.0

    def test_bad_dt_rejected(self):
        st = DiffusionState(np.zeros(4), 0.5)
        with pytest.raises(DomainError):
            predictor_step(st, np.zeros(4), np.zeros(4), P, 0.0, make_rng(0))
        with pytest.raises(DomainError):
            predictor_step(st, np.zeros(4), np.zeros(4), P, 0.6, make_rng(0))

    def test_shape_mismatch_rejected(self):
        st = DiffusionState(np.zeros(4), 0.5)
        with pytest.raises(DimensionError):
            predictor_step(st, np.zeros(5), np.zeros(4), P, 0.1, make_rng(0))


class TestCorrectorStep:
    def test_zero_noise_draw_is_identity(self):
        x = make_rng(2).normal(size=6)
        ledger = CostLedger()
        out = corrector_step(
            DiffusionState(x, 0.4), x, lambda xc, t: np.ones_like(xc), 0.5, _ZeroNoise(), ledger
        )
        np.testing.assert_array_equal(out.x, x)
        assert out.t == 0.4
        assert ledger.corrector_evals == 1 and ledger.corrector_skips == 0

    def test_zero_score_skips_and_leaves_rng_untouched(self):
        x = make_rng(3).normal(size=6)
        rng = make_rng(4)
        ledger = CostLedger()
        out = corrector_step(
            DiffusionState(x, 0.4), x, lambda xc, t: np.zeros_like(xc), 0.5, rng, ledger
        )
        np.testing.assert_array_equal(out.x, x)
        assert out.x is not x  # a copy, not an alias
        assert ledger.corrector_skips == 1
        # the skip happened before any draw: the stream continues from the start
        np.testing.assert_array_equal(rng.standard_normal(3), make_rng(4).standard_normal(3))

    def test_langevin_iterations_improve_marginal_fit(self):
        """Corrections pull a mis-centered ensemble toward the analytic marginal.

        One long vector state is a Langevin chain on the product density, so each
        coordinate's marginal relaxes to the scalar marginal; the fit is measured
        with a KS statistic against the exact normal CDF.
        """
        prior = GaussianPrior(m0=1.0, var0=0.04)
        y_c, t = 0.4, 0.5
        n = 4000
        m = float(mean(np.array([prior.m0]), np.array([y_c]), t, WIDE)[0])
        var_m = math.exp(-2.0 * WIDE.gamma * t) * prior.var0 + variance(t, WIDE)
        rng = make_rng(5)
        x = rng.normal(m + 0.3, math.sqrt(var_m), size=n)  # mis-centered start
        y = np.full(n, y_c)

        def ks(samples):
            xs = np.sort(samples)
            cdf = 0.5 * (1.0 + np.vectorize(math.erf)((xs - m) / math.sqrt(2.0 * var_m)))
            emp_hi = np.arange(1, n + 1) / n
            emp_lo = np.arange(0, n) / n
            return float(max(np.max(np.abs(emp_hi - cdf)), np.max(np.abs(emp_lo - cdf))))

        score_fn = lambda xc, tc: analytic_gaussian_score(xc, y, tc, prior, WIDE)
        before = ks(x)
        state = DiffusionState(x, t)
        for _ in range(20):
            state = corrector_step(state, y, score_fn, 0.5, rng)
        after = ks(state.x)
        assert after < before
        assert after < 0.1


class TestReverseProcess:
    def make_hybrid(self, frame_size=4, hidden=6):
        score_net = ScoreNet(P, frame_size=frame_size, hidden=hidden, seed=3)
        denoiser = DenoiserNet(frame_size=frame_size, hidden=hidden, seed=4)
        return HybridScore(score_net, denoiser, P)

    def test_hybrid_cost_identities(self):
        y = make_rng(6).normal(size=32)
        provider = self.make_hybrid()
        schedule = GuidanceSchedule.from_guided_steps(12, P)
        cfg = SamplerConfig(corrector_steps=1, seed=0)
        _, ledger = reverse_process(y, provider, schedule, cfg, P, make_rng(7))
        assert ledger.score_net_forwards == (1 + 1) * (30 - 12)
        assert ledger.denoiser_forwards == 1
        assert ledger.steps_guided == 12
        assert ledger.steps_learned == 18
        assert ledger.corrector_evals == 30

    def test_analytic_provider_costs_nothing(self):
        y = np.full(8, 0.4)
        provider = AnalyticGaussianScore(GaussianPrior(1.0, 0.04), P)
        _, ledger = reverse_process(y, provider, None, SamplerConfig(seed=1), P, make_rng(8))
        assert ledger.score_net_forwards == 0
        assert ledger.denoiser_forwards == 0
        assert ledger.mac_total == 0
        assert ledger.steps_learned == 30 and ledger.steps_guided == 0

    def test_mac_total_affine_in_guided_count(self):
        y = make_rng(9).normal(size=32)
        provider = self.make_hybrid()
        cfg = SamplerConfig(corrector_steps=1, seed=0)
        macs = []
        forwards = []
        for n_phi in (0, 6, 12):
            schedule = GuidanceSchedule.from_guided_steps(n_phi, P)
            _, ledger = reverse_process(y, provider, schedule, cfg, P, make_rng(10))
            macs.append(ledger.mac_total)
            forwards.append(ledger.score_net_forwards)
        assert macs[0] - macs[1] == macs[1] - macs[2]  # exact affine law
        assert forwards == [60, 48, 36]

    def test_same_seed_bitwise_reproducible(self):
        y = make_rng(11).normal(size=32)
        provider = self.make_hybrid()
        schedule = GuidanceSchedule.from_guided_steps(10, P)
        cfg = SamplerConfig(corrector_steps=1, seed=0)
        a, _ = reverse_process(y, provider, schedule, cfg, P, make_rng(42))
        b, _ = reverse_process(y, provider, schedule, cfg, P, make_rng(42))
        c, _ = reverse_process(y, provider, schedule, cfg, P, make_rng(43))
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_divergence_reports_step_index(self):
        class ExplodingProvider(AnalyticGaussianScore):
            def bind(self, y, ledger, denoiser_state=None):
                bound, st = super().bind(y, ledger, denoiser_state)
                bound.evaluate = lambda x, t, s, g: (np.full_like(x, np.inf), s)
                return bound, st

        provider = ExplodingProvider(GaussianPrior(1.0, 0.04), P)
        with np.errstate(all="ignore"), pytest.raises(DivergenceError, match="n="):
            reverse_process(
                np.zeros(4), provider, None, SamplerConfig(seed=0), P, make_rng(12)
            )

    def test_schedule_grid_mismatch_rejected(self):
        y = np.zeros(8)
        provider = AnalyticGaussianScore(GaussianPrior(1.0, 0.04), P)
        schedule = GuidanceSchedule.from_guided_steps(5, SdeParams(N=15))
        with pytest.raises(ConfigError):
            reverse_process(y, provider, schedule, SamplerConfig(), P, make_rng(0))

    def test_final_denoise_changes_output_not_counters(self):
        y = np.full(8, 0.4)
        provider = AnalyticGaussianScore(GaussianPrior(1.0, 0.04), P)
        plain, led_plain = reverse_process(
            y, provider, None, SamplerConfig(seed=5), P, make_rng(20)
        )
        projected, led_proj = reverse_process(
            y, provider, None, SamplerConfig(seed=5, final_denoise=True), P, make_rng(20)
        )
        assert not np.array_equal(plain, projected)
        assert led_plain.steps_learned == led_proj.steps_learned == 30
        assert led_plain.steps_guided == led_proj.steps_guided == 0


class TestToyRecovery:
    def test_terminal_moments_match_gaussian_prior(self):
        """Analytic-score reverse runs land on the clean prior's moments.

        The schedule must actually be variance-exploding relative to the prior
        (sigma(T) well above sqrt(var0)), otherwise the N(y, sigma(T)^2) start
        misses most of the signal spread.  Runs are batched as one iid vector
        per pass: the corrector's shared step size couples coordinates weakly
        (a (L+2)/L variance factor) and is outright unstable for scalar states,
        so a production-sized L is part of the contract, not a shortcut.
        """
        params = SdeParams(sigma_min=0.05, sigma_max=0.5, t_eps=1e-3)
        prior = GaussianPrior(m0=1.0, var0=0.04)
        y = np.full(128, 0.4)
        provider = AnalyticGaussianScore(prior, params)
        cfg = SamplerConfig(n_steps=200, corrector_steps=1, corrector_snr=0.1, seed=0)
        rng = make_rng(100)
        finals = []
        for _ in range(200):
            x_out, _ = reverse_process(y, provider, None, cfg, params, rng)
            finals.append(x_out)
        samples = np.concatenate(finals)
        assert abs(float(np.mean(samples)) - prior.m0) < 0.02 * prior.m0
        assert abs(float(np.var(samples)) - prior.var0) < 0.10 * prior.var0

    def test_more_guided_steps_track_denoiser_target_closer(self):
        """With an oracle denoiser and an untrained score net, guidance wins."""
        rng = make_rng(200)
        x0 = rng.normal(size=32)
        y = x0 + 0.3 * rng.normal(size=32)
        score_net = ScoreNet(P, frame_size=4, hidden=6, seed=9)  # untrained: noise
        provider = HybridScore(score_net, _OracleDenoiser(x0), P)
        cfg = SamplerConfig(corrector_steps=1, seed=0)
        errs = []
        for n_phi in (0, 15, 30):
            schedule = GuidanceSchedule.from_guided_steps(n_phi, P)
            run_errs = []
            for seed in range(5):
                x_out, _ = reverse_process(y, provider, schedule, cfg, P, make_rng(300 + seed))
                run_errs.append(float(np.linalg.norm(x_out - x0)))
            errs.append(float(np.median(run_errs)))
        assert errs[0] > errs[1] > errs[2]


class TestSamplerConfig:
    def test_validation(self):
        with pytest.raises(ConfigError):
            SamplerConfig(n_steps=0)
        with pytest.raises(ConfigError):
            SamplerConfig(corrector_steps=-1)
        with pytest.raises(ConfigError):
            SamplerConfig(corrector_snr=0.0)

    def test_resolve_steps_fallback(self):
        assert SamplerConfig().resolve_steps(P) == 30
        assert SamplerConfig(n_steps=200).resolve_steps(P) == 200

    def test_ledger_addition(self):
        a = CostLedger(score_net_forwards=2, mac_total=10, steps_learned=1)
        b = CostLedger(score_net_forwards=3, denoiser_forwards=1, steps_guided=4)
        c = a + b
        assert c.score_net_forwards == 5
        assert c.denoiser_forwards == 1
        assert c.mac_total == 10
        assert c.steps_guided == 4 and c.steps_learned == 1
