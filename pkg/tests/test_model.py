import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import trapezoid

from frigibbs import (
    INFINITE_SNR,
    AcquisitionConfig,
    FriSignal,
    NoiseSpec,
    SampleVector,
    add_noise,
    reconstruction_error,
    signal_inner_product,
    snr_db,
    synthesize_samples,
)
from frigibbs.errors import InvalidConfigError, InvalidInputError
from frigibbs.model import gaussian_kernel, random_signal

finite = st.floats(-50, 50, allow_nan=False)
weights = st.floats(-10, 10, allow_nan=False).filter(lambda v: abs(v) > 1e-3)


@st.composite
def signals(draw, K_max=4):
    K = draw(st.integers(1, K_max))
    c = draw(st.lists(weights, min_size=K, max_size=K))
    t = draw(st.lists(st.floats(0, 30), min_size=K, max_size=K))
    return FriSignal(c, t)


def quad_inner(a, b, sigma_h):
    lo = min(a.t.min(), b.t.min()) - 8 * sigma_h
    hi = max(a.t.max(), b.t.max()) + 8 * sigma_h
    x = np.linspace(lo, hi, 40001)
    za = gaussian_kernel(x[:, None] - a.t[None, :], sigma_h) @ a.c
    zb = gaussian_kernel(x[:, None] - b.t[None, :], sigma_h) @ b.c
    return trapezoid(za * zb, x)


class TestTypes:
    def test_signal_length_mismatch(self):
        with pytest.raises(InvalidInputError):
            FriSignal([1.0, 2.0], [0.0])

    def test_signal_rejects_empty_and_nonfinite(self):
        with pytest.raises(InvalidInputError):
            FriSignal([], [])
        with pytest.raises(InvalidInputError):
            FriSignal([1.0], [np.inf])

    def test_signal_is_immutable(self):
        s = FriSignal([1.0], [2.0])
        with pytest.raises(ValueError):
            s.c[0] = 3.0

    def test_canonical_sorts_pairs(self):
        s = FriSignal([1.0, 2.0, 3.0], [5.0, 1.0, 3.0]).canonical()
        assert s.t.tolist() == [1.0, 3.0, 5.0]
        assert s.c.tolist() == [2.0, 3.0, 1.0]

    @pytest.mark.parametrize("kw", [dict(sigma_h=0, T=1, N=3), dict(sigma_h=1, T=-1, N=3),
                                    dict(sigma_h=1, T=1, N=0), dict(sigma_h=1, T=1, N=2.5)])
    def test_acquisition_invariants(self, kw):
        with pytest.raises(InvalidConfigError):
            AcquisitionConfig(**kw)

    def test_window(self):
        assert AcquisitionConfig(1.0, 0.5, 11).window == (0.0, 5.0)

    def test_noise_spec_rejects_negative(self):
        with pytest.raises(InvalidConfigError):
            NoiseSpec(-1.0)


class TestKernel:
    def test_peak_and_width(self):
        assert gaussian_kernel(0.0, 3.7) == 1.0
        assert gaussian_kernel(2.0, 2.0) == pytest.approx(math.exp(-0.5), abs=1e-15)

    @given(st.floats(-100, 100), st.floats(0.1, 10))
    def test_even_and_bounded(self, a, s):
        v = gaussian_kernel(a, s)
        assert v == gaussian_kernel(-a, s)
        assert 0.0 <= v <= 1.0

    def test_rejects_bad_width(self):
        with pytest.raises(InvalidConfigError):
            gaussian_kernel(1.0, 0.0)


class TestSynthesize:
    def test_single_dirac(self):
        z = synthesize_samples(FriSignal([1.0], [0.0]), AcquisitionConfig(1.0, 1.0, 3))
        np.testing.assert_allclose(z.values, [1.0, math.exp(-0.5), math.exp(-2.0)], rtol=0, atol=1e-15)
        assert z.kind == "noiseless"

    def test_zero_weights(self):
        z = synthesize_samples(FriSignal([0.0, 0.0], [1.0, 2.0]), AcquisitionConfig(1.0, 1.0, 5))
        assert not np.any(z.values)

    def test_matches_scalar_loop(self, table1_signal, table1_acq):
        z = synthesize_samples(table1_signal, table1_acq).values
        ref = []
        for n in range(table1_acq.N):
            acc = 0.0
            for c, t in zip(table1_signal.c, table1_signal.t):
                acc += c * math.exp(-((n * table1_acq.T - t) ** 2) / (2 * table1_acq.sigma_h**2))
            ref.append(acc)
        np.testing.assert_allclose(z, ref, rtol=1e-14, atol=1e-14)

    def test_injected_kernel(self):
        acq = AcquisitionConfig(1.0, 1.0, 4)
        box = lambda tau, s: (np.abs(tau) <= s).astype(float)
        z = synthesize_samples(FriSignal([2.0], [1.0]), acq, kernel=box)
        assert z.values.tolist() == [2.0, 2.0, 2.0, 0.0]

    @given(st.lists(weights, min_size=3, max_size=3), st.lists(weights, min_size=3, max_size=3))
    def test_linear_in_weights(self, c1, c2):
        t = [2.0, 7.5, 13.0]
        acq = AcquisitionConfig(2.0, 1.0, 20)
        lhs = synthesize_samples(FriSignal(np.add(c1, c2), t), acq).values
        rhs = synthesize_samples(FriSignal(c1, t), acq).values + synthesize_samples(FriSignal(c2, t), acq).values
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)

    @given(st.integers(1, 5))
    def test_shift_by_whole_samples(self, m):
        acq = AcquisitionConfig(1.5, 0.5, 40)
        s = FriSignal([1.0, -2.0], [3.2, 6.1])
        z = synthesize_samples(s, acq).values
        zs = synthesize_samples(FriSignal(s.c, s.t + m * acq.T), acq).values
        np.testing.assert_allclose(zs[m:], z[:-m], rtol=1e-12, atol=1e-14)


class TestNoise:
    def test_zero_sigma_passes_through(self):
        z = np.array([1.0, 2.0, 3.0])
        y = add_noise(z, NoiseSpec(0.0, 5))
        assert np.array_equal(y.values, z)
        assert y.kind == "noisy"

    def test_deterministic(self):
        z = np.zeros(30)
        a = add_noise(z, NoiseSpec(2.5, 99)).values
        b = add_noise(z, NoiseSpec(2.5, 99)).values
        assert np.array_equal(a, b)
        assert not np.array_equal(a, add_noise(z, NoiseSpec(2.5, 100)).values)

    def test_variance(self):
        z = np.zeros(30)
        e = np.concatenate([add_noise(z, NoiseSpec(2.5, s)).values for s in range(2000)])
        assert abs(e.var() / 6.25 - 1) < 0.1


class TestSnr:
    def test_infinite_when_noiseless(self):
        z = np.array([1.0, 2.0])
        assert snr_db(z, z) == INFINITE_SNR
        assert math.isinf(INFINITE_SNR)

    def test_scaling_signal_by_ten_adds_twenty_db(self):
        z = np.array([1.0, -2.0, 3.0])
        e = np.array([0.1, 0.2, -0.1])
        assert snr_db(10 * z, 10 * z + e) - snr_db(z, z + e) == pytest.approx(20.0, abs=1e-12)

    @given(st.floats(0.01, 100))
    def test_joint_scale_invariance(self, a):
        z = np.array([1.0, -2.0, 3.0])
        e = np.array([0.1, 0.2, -0.1])
        assert snr_db(a * z, a * (z + e)) == pytest.approx(snr_db(z, z + e), abs=1e-9)

    def test_length_mismatch(self):
        with pytest.raises(InvalidInputError):
            snr_db([1.0, 2.0], [1.0])

    def test_table1_noisy_row(self, table1_signal, table1_acq):
        # the quoted 137 dB and 10.2 dB are 1.2 dB apart from the exact
        # 20 log10(2.5 / 1e-6) gap, so each is matched to within 2 dB
        z = synthesize_samples(table1_signal, table1_acq)
        snrs = [snr_db(z, add_noise(z, NoiseSpec(1e-6, s))) for s in range(25)]
        assert abs(np.mean(snrs) - 137.0) < 2.0
        low = snr_db(z, add_noise(z, NoiseSpec(2.5, 0)))
        assert snrs[0] - low == pytest.approx(20 * math.log10(2.5e6), abs=1e-6)

    def test_fig4_scenario(self, table1_signal, table1_acq):
        z = synthesize_samples(table1_signal, table1_acq)
        snrs = [snr_db(z, add_noise(z, NoiseSpec(2.5, s))) for s in range(200)]
        assert abs(np.mean(snrs) - 10.2) < 0.5

    def test_accepts_sample_vectors(self):
        z = SampleVector([1.0, 1.0], "noiseless")
        assert snr_db(z, SampleVector([1.0, 0.0])) == pytest.approx(10 * math.log10(2))


class TestInnerProduct:
    def test_self_energy_of_unit_dirac(self):
        assert signal_inner_product(FriSignal([1.0], [3.0]), FriSignal([1.0], [3.0]), 2.0) == pytest.approx(
            2.0 * math.sqrt(math.pi), rel=1e-15)

    def test_far_apart_diracs(self):
        s = FriSignal([1.0, 1.0], [0.0, 1000.0])
        assert signal_inner_product(s, s, 1.0) == pytest.approx(2 * math.sqrt(math.pi), rel=1e-12)

    def test_quadrature_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            a = random_signal(rng, 3, (0, 20), 0.0, (-3, 3))
            b = random_signal(rng, 3, (0, 20), 0.0, (-3, 3))
            closed = signal_inner_product(a, b, 1.7)
            assert abs(closed - quad_inner(a, b, 1.7)) <= 1e-6 * max(abs(closed), 1e-12) + 1e-12

    @given(signals(), signals(), st.floats(0.3, 5))
    def test_symmetric(self, a, b, s):
        assert signal_inner_product(a, b, s) == pytest.approx(signal_inner_product(b, a, s), rel=1e-12, abs=1e-12)

    @given(signals(), st.floats(0.3, 5))
    def test_positive_semidefinite(self, a, s):
        assert signal_inner_product(a, a, s) >= -1e-9 * np.sum(np.abs(a.c)) ** 2

    @given(signals(K_max=3), signals(K_max=3), signals(K_max=3), st.floats(-3, 3))
    def test_bilinear(self, a, b, c, alpha):
        ab = FriSignal(np.concatenate([alpha * a.c, b.c]), np.concatenate([a.t, b.t]))
        lhs = signal_inner_product(ab, c, 2.0)
        rhs = alpha * signal_inner_product(a, c, 2.0) + signal_inner_product(b, c, 2.0)
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)


class TestReconstructionError:
    def test_identity(self, table1_signal):
        assert reconstruction_error(table1_signal, table1_signal, 5.0) == 0.0

    def test_doubled_weights(self, table1_signal):
        assert reconstruction_error(table1_signal.scaled(2.0), table1_signal, 5.0) == pytest.approx(1.0, rel=1e-12)

    def test_zero_energy_truth(self):
        with pytest.raises(InvalidInputError):
            reconstruction_error(FriSignal([1.0], [0.0]), FriSignal([0.0], [0.0]), 1.0)

    @given(signals(), st.randoms(use_true_random=False))
    def test_permutation_invariant(self, est, r):
        truth = FriSignal([1.0, 2.0, -1.0], [3.0, 9.0, 14.0])
        perm = list(range(est.K))
        r.shuffle(perm)
        shuffled = FriSignal(est.c[perm], est.t[perm])
        e1 = reconstruction_error(est, truth, 2.0)
        assert reconstruction_error(shuffled, truth, 2.0) == pytest.approx(e1, rel=1e-9, abs=1e-12)
        assert e1 >= 0

    def test_different_K(self):
        truth = FriSignal([1.0, 1.0], [0.0, 100.0])
        assert reconstruction_error(FriSignal([1.0], [0.0]), truth, 1.0) == pytest.approx(0.5, rel=1e-12)


class TestRandomSignal:
    @given(st.integers(1, 8), st.floats(0, 3), st.integers(0, 2**32 - 1))
    def test_separation_and_support(self, K, sep, seed):
        hi = 30.0
        if (K - 1) * sep > hi:
            return
        s = random_signal(np.random.default_rng(seed), K, (0.0, hi), sep, (2, 6))
        assert np.all(np.diff(s.t) >= sep - 1e-9)
        assert s.t.min() >= 0 and s.t.max() <= hi
        assert np.all((s.c >= 2) & (s.c <= 6))

    def test_infeasible(self):
        with pytest.raises(InvalidConfigError):
            random_signal(np.random.default_rng(0), 5, (0.0, 3.0), 1.0)
