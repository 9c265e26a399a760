import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wdmlab.analysis import ber_count, evm_db
from wdmlab.constants import angular_grid, dispersion_phase
from wdmlab.dsp import (
    AdaptiveEqConfig,
    DbpConfig,
    LinearMimoEqualizer,
    RxChain,
    StepSizeError,
    adaptive_equalize,
    carrier_sync,
    channel_select,
    dbp,
    dbp_sample_rate,
    fde,
    linreg_mimo,
    matched_downsample,
    resample_spectrum,
)
from wdmlab.fiber import FiberSpec, LinkSpec, SsfmConfig, propagate_link, step_lengths
from wdmlab.sigkit import QAM16, QPSK, DualPolField, add_awgn, make_rng, prng_symbols, set_power
from wdmlab.transmitter import ConfigurationError, TxSpec, WdmGrid, frequency_shift, shape_dual_pol, wdm_mux


def shaped(seed, n, tx, const=QAM16):
    sx, sy = prng_symbols(seed, n, const), prng_symbols(seed + 1, n, const)
    return np.vstack([sx, sy]), shape_dual_pol(sx, sy, tx)


def disperse(fld, beta2_ps2):
    omega = angular_grid(fld.n_samples, fld.sample_rate) + 2 * np.pi * fld.center_offset
    return fld.with_samples(np.fft.ifft(np.fft.fft(fld.samples) * dispersion_phase(omega, beta2_ps2)))


class TestChannelSelect:
    def test_pass_through(self):
        tx = TxSpec(16e9, 0.1, 4)
        sym, f = shaped(1, 4096, tx)
        rx = RxChain(16e9, 0.1, target_sps=4)
        out = matched_downsample(channel_select(f, 0.0, rx), rx)
        ref = matched_downsample(f, rx)
        assert evm_db(out, ref) < -40

    def test_far_tone_suppressed(self):
        fs, n = 256e9, 4096
        df = fs / n
        t1 = frequency_shift(np.ones((2, n), complex), round(75e9 / df) * df, fs)
        two = DualPolField(np.ones((2, n)) + t1, fs)
        rx = RxChain(64e9, 0.1, target_sps=2)
        out = channel_select(two, 0.0, rx)
        spec = np.abs(np.fft.fft(out.samples[0]))
        residual = np.delete(spec, 0)
        assert 20 * np.log10(spec[0] / max(residual.max(), 1e-300)) > 60

    def test_mux_demux_round_trip(self):
        baud, spacing = 16e9, 20e9
        tx = TxSpec(baud, 0.1, 8)
        lanes, chans = zip(*(shaped(10 + 2 * i, 2048, tx) for i in range(3)))
        grid = WdmGrid(3, spacing)
        mux = wdm_mux(chans, grid, 0.0, channel_bandwidth=1.1 * baud)
        rx = RxChain(baud, 0.1, target_sps=2)
        for sym, off in zip(lanes, grid.offsets):
            got = carrier_sync(matched_downsample(channel_select(mux, off, rx), rx), sym)
            assert evm_db(got, sym) < -35

    def test_offset_outside_band(self):
        f = DualPolField(np.zeros((2, 64)), 64e9)
        with pytest.raises(ConfigurationError):
            channel_select(f, 40e9, RxChain(16e9))

    def test_narrow_select_rejected(self):
        with pytest.raises(ConfigurationError):
            RxChain(16e9, 0.1, select_bw=10e9)

    @given(st.integers(4, 64), st.integers(4, 64))
    def test_resample_preserves_shared_bins(self, n, m):
        x = make_rng(n * 100 + m).standard_normal(n) + 0j
        y = resample_spectrum(np.fft.fft(x), m)
        k = (min(n, m) - 1) // 2
        np.testing.assert_allclose(y[: k + 1] * n / m, np.fft.fft(x)[: k + 1], atol=1e-9)


class TestFde:
    def test_zero_dispersion_identity(self):
        f = DualPolField(np.ones((2, 8)), 1.0)
        assert fde(f, 0.0) is f

    @given(st.floats(-30000, 30000).filter(lambda b: abs(b) > 1))
    @settings(max_examples=20, deadline=None)
    def test_inverse_pair(self, beta2):
        a = make_rng(5).standard_normal((2, 512)) + 1j * make_rng(6).standard_normal((2, 512))
        f = DualPolField(a, 64e9, center_offset=20e9)
        back = fde(disperse(f, beta2), beta2)
        assert np.max(np.abs(back.samples - a)) / np.max(np.abs(a)) < 1e-9

    def test_all_pass(self, rng):
        f = DualPolField(rng.standard_normal((2, 1024)) + 0j, 64e9)
        out = fde(f, -24000.0)
        assert np.sum(np.abs(out.samples) ** 2) == pytest.approx(np.sum(np.abs(f.samples) ** 2), rel=1e-12)

    def test_gaussian_width_restored_after_1200km(self):
        fs, n, t0 = 1e12, 1 << 15, 10e-12
        t = (np.arange(n) - n // 2) / fs
        a = np.exp(-t**2 / (2 * t0**2))
        f = DualPolField(np.vstack([a, a]), fs)
        link = LinkSpec(FiberSpec(0.0, -20.0, 0.0, 50.0), n_spans=24)
        out = fde(propagate_link(f, link, noiseless=True), link.total_beta2_ps2)
        w = lambda x: np.sqrt(np.sum(t**2 * np.abs(x) ** 2) / np.sum(np.abs(x) ** 2))
        assert w(out.samples[0]) == pytest.approx(w(a), rel=0.005)


class TestDbp:
    link = LinkSpec(FiberSpec(0.2, -20.0, 1.3, 50.0), n_spans=1)

    def test_exact_inverse_single_channel(self):
        tx = TxSpec(16e9, 0.1, 4)
        sym, f = shaped(3, 2048, tx)
        f = set_power(f, 10e-3)
        steps = step_lengths(50.0, 0.5)
        out = propagate_link(f, self.link, SsfmConfig(0.5), noiseless=True)
        back = dbp(out, self.link, DbpConfig(100, 4), steps=steps)
        assert evm_db(back.samples, f.samples) < -40

    def test_linear_reduction(self, rng):
        link = LinkSpec(FiberSpec(0.2, -20.0, 0.0, 50.0), n_spans=4)
        f = DualPolField(rng.standard_normal((2, 1024)) + 1j * rng.standard_normal((2, 1024)), 64e9)
        a = dbp(f, link, DbpConfig(20, 4)).samples
        # amplifier gain removal and fiber-loss inversion cancel span by span
        b = fde(f, link.total_beta2_ps2).samples
        np.testing.assert_allclose(a, b, atol=1e-9 * np.max(np.abs(b)))

    def test_dbp_rate(self):
        assert dbp_sample_rate(64e9, 75e9, 1, 4) == 256e9
        assert dbp_sample_rate(16e9, 20e9, 3, 4, max_rate=128e9) == 128e9

    @pytest.mark.parametrize("kw", [{"steps_per_span": 0}, {"sps": 1}])
    def test_invalid_config(self, kw):
        with pytest.raises(ValueError):
            DbpConfig(**kw)


class TestMatchedDownsample:
    tx = TxSpec(16e9, 0.1, 4)
    rx = RxChain(16e9, 0.1, target_sps=4)

    def test_back_to_back_error_free(self):
        sym, f = shaped(21, 100_000, self.tx)
        out = matched_downsample(f, self.rx)
        assert ber_count(out, sym, QAM16).bit_errors == 0

    def test_timing_guard(self):
        sym, f = shaped(22, 4096, self.tx)
        good = evm_db(matched_downsample(f, self.rx), sym)
        bad = evm_db(matched_downsample(f, self.rx, timing_offset=1), sym)
        assert bad - good > 10

    @pytest.mark.parametrize("snr_db", [10.0, 15.0, 20.0])
    def test_noise_bandwidth(self, snr_db):
        # white noise of variance N over the sampled band; the matched filter
        # passes N / sps, so the symbol SNR is snr_db with N = sps / 10^(snr/10)
        sym, f = shaped(23, 50_000, self.tx)
        sps = self.tx.sps_sim
        var = sps * 10 ** (-snr_db / 10)
        g = make_rng(24)
        noise = np.sqrt(var / 2) * (g.standard_normal(f.samples.shape) + 1j * g.standard_normal(f.samples.shape))
        out = matched_downsample(f.with_samples(f.samples + noise), self.rx)
        assert evm_db(out, sym) == pytest.approx(-snr_db, abs=0.5)

    def test_non_integer_rate(self):
        f = DualPolField(np.zeros((2, 64)), 40e9)
        with pytest.raises(ConfigurationError):
            matched_downsample(f, RxChain(16e9))


class TestAdaptive:
    def test_identity_no_adaptation(self, qam16_symbols):
        s = qam16_symbols[None]
        out, w = adaptive_equalize(s, s, AdaptiveEqConfig(21, 1e-2), return_taps=True)
        np.testing.assert_allclose(out, s, atol=1e-15)
        assert np.count_nonzero(w) == w.shape[0]

    def test_lms_inverts_isi(self):
        s = prng_symbols(31, 20_000, QPSK)
        ch = np.array([0.2, 1.0, -0.3])
        r = np.convolve(np.concatenate([s[-1:], s, s[:1]]), ch, mode="valid")
        cfg = AdaptiveEqConfig(21, 5e-3)
        out, w = adaptive_equalize(r, s, cfg, n_train=10_000, return_taps=True)
        # residual ISI of the combined response channel * equalizer (I rail)
        comb = np.convolve(ch, w[0][::-1])  # the taps act as a correlator
        peak = np.argmax(np.abs(comb))
        isi = (np.sum(comb**2) - comb[peak] ** 2) / comb[peak] ** 2
        assert 10 * np.log10(isi) < -25
        assert evm_db(out[10_000:], s[10_000:]) < -20

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_lms_diverges_with_huge_step(self):
        s = prng_symbols(32, 4000, QAM16)
        with pytest.raises(StepSizeError):
            adaptive_equalize(5 * s, s, AdaptiveEqConfig(21, 10.0))

    def test_cma_cost_decreases(self):
        s = prng_symbols(33, 20_000, QPSK)
        r = np.convolve(s * np.exp(0.4j), [0.15, 1.0, 0.25], mode="same")
        r = r / np.sqrt(np.mean(np.abs(r) ** 2))
        out = adaptive_equalize(r, None, AdaptiveEqConfig(15, 1e-3, mode="cma"), n_train=None)
        # outputs while adapting: reproduce the causal trajectory with short runs
        costs = []
        for n_train in (0, 2000, 5000, 10_000, 20_000):
            y = adaptive_equalize(r, None, AdaptiveEqConfig(15, 1e-3, mode="cma"), n_train=n_train)
            costs.append(np.mean((np.abs(y) ** 2 - 1) ** 2))
        assert all(b < a for a, b in zip(costs, costs[1:]))
        assert np.mean((np.abs(out) ** 2 - 1) ** 2) == pytest.approx(costs[-1])

    def test_even_taps_rejected(self):
        with pytest.raises(ValueError):
            AdaptiveEqConfig(20)


class TestLinreg:
    def test_center_selector(self, rng):
        x = rng.standard_normal((2, 3000)) + 1j * rng.standard_normal((2, 3000))
        model, out = linreg_mimo(x, x[0], window=11)
        assert np.mean(np.abs(out - x[0]) ** 2) < 1e-10
        w = model.weights[:, 0]  # I output of lane 0
        features = 2 * 2 * 11
        center = np.zeros(features + 1)
        center[5] = 1.0  # lane 0 I rail, middle tap
        np.testing.assert_allclose(w, center, atol=1e-8)

    def test_awgn_gives_no_gain(self):
        s = prng_symbols(41, 60_000, QAM16)
        r = add_awgn(s, 14.0, seed=42)
        _, out = linreg_mimo(r, s, window=21, train=slice(0, 30_000))
        test = slice(30_000, None)
        plain = ber_count(r[test], s[test], QAM16)
        eq = ber_count(out[0, test], s[test], QAM16)
        sigma = np.sqrt(plain.bit_errors)
        assert abs(eq.bit_errors - plain.bit_errors) < 3 * sigma

    def test_rank_deficient_warns(self):
        x = np.ones((1, 200), complex)
        with pytest.warns(RuntimeWarning, match="rank-deficient"):
            m = LinearMimoEqualizer(5).fit(x, x)
        assert m.regularized

    def test_even_window(self):
        with pytest.raises(ValueError):
            LinearMimoEqualizer(4)


def test_carrier_sync_removes_rotation(qam16_symbols):
    r = 0.7 * np.exp(1.1j) * qam16_symbols
    np.testing.assert_allclose(carrier_sync(r, qam16_symbols), qam16_symbols, atol=1e-12)
