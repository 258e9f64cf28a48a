import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats
from scipy.integrate import quad, trapezoid

from frigibbs import AcquisitionConfig, FriSignal, GibbsState, synthesize_samples
from frigibbs.distributions import (
    RejectionPlan,
    SamplerStats,
    SqrtInvGammaParams,
    build_rejection_plan,
    grid_choice,
    grid_sample,
    plan_from_grid,
    rejection_sample,
    sample_gaussian,
    sample_sqrt_inv_gamma,
    uniform_grid,
)
from frigibbs.errors import InvalidConfigError, InvalidInputError
from frigibbs.gibbs import t_log_conditional


def draws(fn, n, seed=0):
    rng = np.random.default_rng(seed)
    return np.array([fn(rng) for _ in range(n)])


class TestGaussian:
    def test_zero_variance(self):
        assert sample_gaussian(1.25, 0.0, np.random.default_rng(0)) == 1.25

    def test_negative_variance(self):
        with pytest.raises(InvalidInputError):
            sample_gaussian(0.0, -1e-12, np.random.default_rng(0))

    def test_moments(self):
        x = draws(lambda r: sample_gaussian(0.0, 1.0, r), 100_000)
        assert abs(x.mean()) < 0.02
        assert abs(x.var() - 1.0) < 0.05

    @given(st.integers(0, 2**63), st.floats(-5, 5), st.floats(0, 4))
    def test_deterministic(self, seed, m, v):
        a = sample_gaussian(m, v, np.random.default_rng(seed))
        assert a == sample_gaussian(m, v, np.random.default_rng(seed))


class TestSqrtInvGamma:
    @pytest.mark.parametrize("kw", [dict(varphi=0, lam=1), dict(varphi=1, lam=0),
                                    dict(varphi=1, lam=math.inf), dict(varphi=-2, lam=1)])
    def test_invalid(self, kw):
        with pytest.raises(InvalidConfigError):
            SqrtInvGammaParams(**kw)

    @pytest.mark.parametrize("phi,lam", [(2.0, 1.0), (15.0, 90.0), (0.7, 0.01)])
    def test_density_normalized(self, phi, lam):
        p = SqrtInvGammaParams(phi, lam)
        mode = p.mode()
        total = quad(lambda x: math.exp(p.logpdf(x)), 0, mode, limit=200)[0] + \
            quad(lambda x: math.exp(p.logpdf(x)), mode, math.inf, limit=200)[0]
        assert total == pytest.approx(1.0, abs=1e-7)

    def test_mode_maximizes_density(self):
        p = SqrtInvGammaParams(15.0, 90.0)
        x = np.linspace(0.5, 10, 20001)
        assert x[np.argmax(p.logpdf(x))] == pytest.approx(p.mode(), abs=1e-3)

    def test_positive(self):
        x = draws(lambda r: sample_sqrt_inv_gamma(SqrtInvGammaParams(0.5, 1e-30), r), 2000)
        assert np.all(x > 0)

    def test_gamma_mean(self):
        x = draws(lambda r: sample_sqrt_inv_gamma(SqrtInvGammaParams(2.0, 1.0), r), 100_000)
        assert abs(np.mean(x**-2.0) / 2.0 - 1) < 0.03

    def test_gamma_goodness_of_fit(self):
        p = SqrtInvGammaParams(15.0, 90.0)
        x = draws(lambda r: sample_sqrt_inv_gamma(p, r), 100_000, seed=7)
        res = stats.kstest(x**-2.0, stats.gamma(a=p.varphi, scale=1.0 / p.lam).cdf)
        assert res.pvalue > 0.01

    def test_histogram_matches_density(self):
        p = SqrtInvGammaParams(2.0, 1.0)
        x = draws(lambda r: sample_sqrt_inv_gamma(p, r), 100_000, seed=3)
        edges = np.linspace(0.2, 3.0, 57)
        hist, _ = np.histogram(x, bins=edges)
        dens = hist / (x.size * np.diff(edges))
        mids = 0.5 * (edges[1:] + edges[:-1])
        grid = np.linspace(1e-3, 60, 600_001)
        w = np.exp(p.logpdf(grid))
        norm = trapezoid(w, grid)
        ref = np.exp(p.logpdf(mids)) / norm
        assert np.max(np.abs(dens - ref)) < 0.05


class TestRejection:
    def test_plan_invariants(self):
        with pytest.raises(InvalidConfigError):
            RejectionPlan(0.0, 0.0, 0.0, (0.0, 1.0))
        with pytest.raises(InvalidConfigError):
            RejectionPlan(0.0, 1.0, 0.0, (1.0, 0.0))
        with pytest.raises(InvalidConfigError):
            RejectionPlan(0.0, 1.0, 0.0, (0.0, 1.0), max_attempts=0)
        with pytest.raises(InvalidConfigError):
            RejectionPlan(0.0, 1.0, 0.0, (0.0, 1.0), uniform_weight=1.0)

    def test_self_rejection_accepts_first_attempt(self):
        plan = RejectionPlan(0.5, 1.5, 0.0, (-60.0, 60.0))
        st_ = SamplerStats()
        rng = np.random.default_rng(1)
        x = np.array([rejection_sample(plan.log_proposal, plan, rng, st_) for _ in range(20_000)])
        assert st_.attempts == st_.calls == 20_000
        assert st_.fallbacks == 0
        assert stats.kstest(x, stats.norm(0.5, 1.5).cdf).pvalue > 0.01

    def test_acceptance_rate_is_one_over_c(self):
        # N(0,1) target with a N(0, 2^2) proposal: sup of the ratio is 2
        log_target = lambda x: stats.norm.logpdf(x)
        plan = RejectionPlan(0.0, 2.0, math.log(2.0), (-60.0, 60.0))
        st_ = SamplerStats()
        rng = np.random.default_rng(2)
        x = np.array([rejection_sample(log_target, plan, rng, st_) for _ in range(20_000)])
        assert st_.acceptance_rate == pytest.approx(0.5, abs=0.015)
        assert stats.kstest(x, stats.norm.cdf).pvalue > 0.01

    def test_fallback_after_max_attempts(self):
        plan = RejectionPlan(0.0, 1.0, 1000.0, (-5.0, 5.0), max_attempts=3, grid_points=11)
        st_ = SamplerStats()
        x = rejection_sample(lambda x: -0.5 * np.asarray(x) ** 2, plan, np.random.default_rng(0), st_)
        assert st_.fallbacks == 1 and st_.attempts == 3
        assert x in uniform_grid((-5.0, 5.0), 11)

    def test_envelope_holds_on_grid(self):
        f = lambda x: -0.5 * ((np.asarray(x) - 3.0) / 0.4) ** 2 + np.log1p(np.asarray(x) ** 2)
        plan = build_rejection_plan(f, (0.0, 29.0))
        g = uniform_grid((0.0, 29.0), plan.grid_points)
        assert np.all(f(g) <= plan.log_envelope + plan.log_proposal(g) - math.log(1.1) + 1e-12)

    def test_plan_rejects_all_minus_inf(self):
        with pytest.raises(InvalidInputError):
            plan_from_grid(np.linspace(0, 1, 5), np.full(5, -np.inf))

    def test_location_conditional_matches_grid_sampler(self):
        # bimodal conditional: with the other weight at zero, component 0
        # can explain either of two equal Diracs
        acq = AcquisitionConfig(2.0, 1.0, 30)
        truth = FriSignal([3.0, 3.0], [8.0, 20.0])
        y = synthesize_samples(truth, acq).values + 0.4 * np.random.default_rng(0).standard_normal(30)
        state = GibbsState([3.0, 0.0], [14.0, 0.0], 1.5)
        f = lambda t: t_log_conditional(0, t, state, y, acq)
        fine = uniform_grid(acq.window, 20_001)
        w = np.exp(f(fine) - f(fine).max())
        assert w[fine < 14].sum() > 0.05 * w.sum() and w[fine > 14].sum() > 0.05 * w.sum()

        plan = build_rejection_plan(f, acq.window)
        rng = np.random.default_rng(5)
        a = np.array([rejection_sample(f, plan, rng) for _ in range(4000)])
        b = np.array([grid_sample(f, acq.window, 20_001, rng) for _ in range(4000)])
        assert stats.ks_2samp(a, b).pvalue > 0.01


class TestGrid:
    def test_needs_two_points(self):
        with pytest.raises(InvalidConfigError):
            uniform_grid((0, 1), 1)

    def test_constant_target_is_uniform(self):
        rng = np.random.default_rng(0)
        grid = uniform_grid((0.0, 1.0), 8)
        x = np.array([grid_choice(grid, np.zeros(8), rng) for _ in range(16_000)])
        counts = np.array([(x == g).sum() for g in grid])
        assert counts.sum() == x.size
        assert stats.chisquare(counts).pvalue > 0.01

    def test_point_mass(self):
        rng = np.random.default_rng(0)
        grid = uniform_grid((0.0, 1.0), 8)
        logv = np.zeros(8)
        logv[5] = 30.0
        x = np.array([grid_choice(grid, logv, rng) for _ in range(10_000)])
        assert np.mean(x == grid[5]) > 0.999

    def test_gaussian_moments(self):
        rng = np.random.default_rng(0)
        f = lambda x: -0.5 * ((np.asarray(x) - 4.0) / 1.5) ** 2
        x = np.array([grid_sample(f, (-10.0, 20.0), 512, rng) for _ in range(40_000)])
        h = 30.0 / 511
        assert abs(x.mean() - 4.0) < 0.03 + h
        assert abs(x.std() - 1.5) < 0.03 + h

    def test_all_minus_inf(self):
        with pytest.raises(InvalidInputError):
            grid_choice(np.arange(3.0), np.full(3, -np.inf), np.random.default_rng(0))

    def test_huge_log_values_are_stable(self):
        rng = np.random.default_rng(0)
        x = grid_choice(np.arange(3.0), np.array([1e300, 1e300 - 1e290, -1e300]), rng)
        assert x in (0.0, 1.0)
