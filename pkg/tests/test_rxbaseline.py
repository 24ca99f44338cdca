"""Tests for the FFT front end, LS/LMMSE estimation, and log-MAP demapping."""

import numpy as np
import pytest
from scipy.interpolate import interp1d
from scipy.special import erfc

from wavelink.channel import ChannelRealization, NoiseSpec, apply_channel
from wavelink.grid import Numerology, build_qam_constellation, index_to_bits, map_bits
from wavelink.rxbaseline import (
    ber,
    cp_remove_fft,
    genie_receive,
    lmmse_equalize,
    logmap_demap,
    ls_estimate_interpolate,
    post_eq_stats,
    practical_receive,
)
from wavelink.txchain import PilotConfig, add_cp, normalize_unit_power, ofdm_modulate

NUM = Numerology.desk()


def qfunc(x):
    return 0.5 * erfc(x / np.sqrt(2))


def flat_channel(num, gain=1.0):
    return ChannelRealization(np.full((1, num.n_symbols), gain, dtype=complex), (0,))


def random_grid(num, seed):
    rng = np.random.default_rng(seed)
    shape = (num.n_subcarriers, num.n_symbols)
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def test_tx_rx_loopback():
    grid = random_grid(NUM, 0)
    wave = add_cp(ofdm_modulate(grid, NUM), NUM)
    back = cp_remove_fft(wave, NUM)
    assert np.max(np.abs(back - grid)) < 1e-10


def test_cp_absorbs_intersymbol_leakage():
    # a delayed tap must come out as a pure per-subcarrier phase, no ISI
    grid = random_grid(NUM, 1)
    wave = add_cp(ofdm_modulate(grid, NUM), NUM)
    taps = np.full((1, NUM.n_symbols), 1.0, dtype=complex)
    chan = ChannelRealization(taps, (NUM.cp_samples - 1,))
    rx = apply_channel(wave, chan, NoiseSpec.noiseless(), NUM)
    back = cp_remove_fft(rx, NUM)
    k = np.arange(NUM.n_subcarriers) - NUM.n_subcarriers // 2
    phase = np.exp(-2j * np.pi * k * (NUM.cp_samples - 1) / NUM.ifft_size)
    assert np.max(np.abs(back - grid * phase[:, None])) < 1e-9


class TestLmmse:
    def test_scalar_formula(self):
        rng = np.random.default_rng(2)
        y = rng.normal(size=10) + 1j * rng.normal(size=10)
        h = rng.normal(size=10) + 1j * rng.normal(size=10)
        s2 = 0.37
        out = lmmse_equalize(y, h, s2)
        expect = np.conj(h) * y / (np.abs(h) ** 2 + s2)
        assert np.max(np.abs(out - expect)) < 1e-12

    def test_zero_noise_inverts(self):
        rng = np.random.default_rng(3)
        s = rng.normal(size=20) + 1j * rng.normal(size=20)
        h = rng.normal(size=20) + 1j * rng.normal(size=20)
        out = lmmse_equalize(h * s, h, 0.0)
        assert np.max(np.abs(out - s)) < 1e-12

    def test_all_zero_degenerate(self):
        out = lmmse_equalize(np.ones(4, dtype=complex), np.zeros(4, dtype=complex), 0.0)
        assert np.array_equal(out, np.zeros(4, dtype=complex))

    def test_post_eq_stats(self):
        h = np.array([1.0 + 0j])
        rho, nu = post_eq_stats(h, 1.0)
        assert rho[0] == pytest.approx(0.5)
        assert nu[0] == pytest.approx(0.25)
        rho, nu = post_eq_stats(h, 0.0)
        assert rho[0] == 1.0 and nu[0] == 1e-30


class TestLogmap:
    def brute_force(self, s, const, nv, gain):
        out = np.zeros(const.q_m)
        labels = const.bit_labels()
        metric = np.exp(-np.abs(s - gain * const.points) ** 2 / nv)
        for i in range(const.q_m):
            p1 = metric[labels[:, i] == 1].sum()
            p0 = metric[labels[:, i] == 0].sum()
            out[i] = np.log(p1) - np.log(p0)
        return np.clip(out, -40, 40)

    def test_against_brute_force(self):
        rng = np.random.default_rng(4)
        for q_m in (2, 4, 6):
            const = build_qam_constellation(q_m)
            s = rng.normal(size=30) + 1j * rng.normal(size=30)
            llrs = logmap_demap(s, const, 0.5, gain=0.9)
            for i in range(s.size):
                expect = self.brute_force(s[i], const, 0.5, 0.9)
                assert np.allclose(llrs[i], expect, atol=1e-9)

    def test_qpsk_closed_form(self):
        const = build_qam_constellation(2)
        rng = np.random.default_rng(5)
        s = 0.3 * (rng.normal(size=50) + 1j * rng.normal(size=50))
        nv, g = 0.8, 0.7
        llrs = logmap_demap(s, const, nv, gain=g)
        # per-axis factorization: llr(b0) = -4 g s_re / (sqrt(2) nv)
        expect0 = -4 * g * s.real / (np.sqrt(2) * nv)
        expect1 = -4 * g * s.imag / (np.sqrt(2) * nv)
        assert np.allclose(llrs[:, 0], expect0, atol=1e-9)
        assert np.allclose(llrs[:, 1], expect1, atol=1e-9)

    def test_scale_invariance(self):
        const = build_qam_constellation(4)
        rng = np.random.default_rng(6)
        s = rng.normal(size=20) + 1j * rng.normal(size=20)
        a = logmap_demap(s, const, 0.3, gain=1.0)
        b = logmap_demap(2.5 * s, const, 0.3 * 2.5 ** 2, gain=2.5)
        assert np.allclose(a, b, atol=1e-9)

    def test_clamp_and_noiseless_signs(self):
        const = build_qam_constellation(2)
        pts = const.points
        llrs = logmap_demap(pts, const, 1e-30)
        labels = const.bit_labels()
        assert np.all(np.abs(llrs) == 40.0)
        assert np.array_equal(llrs > 0, labels.astype(bool))

    def test_lmmse_pairing_equals_direct_demap(self):
        # demapping the equalized symbol with (rho, nu) must equal demapping
        # the raw observation with the true gain and noise
        rng = np.random.default_rng(7)
        const = build_qam_constellation(4)
        n = 100
        h = rng.normal(size=n) + 1j * rng.normal(size=n)
        s = map_bits(rng.integers(0, 2, size=(n, 4)), const)
        s2 = 0.2
        y = h * s + np.sqrt(s2 / 2) * (rng.normal(size=n) + 1j * rng.normal(size=n))
        direct = logmap_demap(y, const, s2, gain=h)
        s_hat = lmmse_equalize(y, h, s2)
        rho, nu = post_eq_stats(h, s2)
        paired = logmap_demap(s_hat, const, nu, gain=rho)
        assert np.max(np.abs(direct - paired)) < 1e-9


class TestLsEstimate:
    def test_flat_channel_exact(self):
        pilots = PilotConfig()
        grid = pilots.pilot_values(NUM).astype(complex)
        h = 0.8 - 0.6j
        h_hat = ls_estimate_interpolate(h * grid, pilots, NUM)
        assert np.max(np.abs(h_hat - h)) < 1e-12

    def test_linear_frequency_profile(self):
        pilots = PilotConfig()
        k = np.arange(NUM.n_subcarriers)
        h = (0.5 + 0.01 * k) + 1j * (1.0 - 0.005 * k)
        rx = h[:, None] * pilots.pilot_values(NUM)
        h_hat = ls_estimate_interpolate(rx, pilots, NUM)
        # exact on the pilot span; the last subcarrier is held, not extrapolated
        for l in pilots.symbol_indices:
            assert np.max(np.abs(h_hat[:-1, l] - h[:-1])) < 1e-12
            assert h_hat[-1, l] == pytest.approx(h[-2], abs=1e-12)

    def test_time_interpolation_and_clamping(self):
        pilots = PilotConfig(symbol_indices=(2, 11))
        h2, h11 = 1.0 + 0.5j, 2.0 - 0.25j
        rx = np.zeros((NUM.n_subcarriers, NUM.n_symbols), dtype=complex)
        vals = pilots.pilot_values(NUM)
        rx[:, 2] = h2 * vals[:, 2]
        rx[:, 11] = h11 * vals[:, 11]
        h_hat = ls_estimate_interpolate(rx, pilots, NUM)
        for l in range(NUM.n_symbols):
            if l <= 2:
                expect = h2
            elif l >= 11:
                expect = h11
            else:
                expect = h2 + (h11 - h2) * (l - 2) / 9
            assert np.max(np.abs(h_hat[:, l] - expect)) < 1e-12

    def test_matches_independent_interpolator(self):
        rng = np.random.default_rng(8)
        pilots = PilotConfig()
        k = np.arange(NUM.n_subcarriers)
        h = np.exp(-2j * np.pi * k * 3 / NUM.ifft_size) \
            + 0.4 * np.exp(-2j * np.pi * k * 7 / NUM.ifft_size)
        rx = h[:, None] * pilots.pilot_values(NUM) \
            + 0.01 * (rng.normal(size=(NUM.n_subcarriers, NUM.n_symbols))
                      + 1j * rng.normal(size=(NUM.n_subcarriers, NUM.n_symbols)))
        mine = ls_estimate_interpolate(rx, pilots, NUM)
        sc = np.arange(0, NUM.n_subcarriers, 2)
        per_sym = []
        for l in (2, 11):
            raw = rx[sc, l] / pilots.pilot_values(NUM)[sc, l]
            f = interp1d(sc, raw, kind="linear", bounds_error=False,
                         fill_value=(raw[0], raw[-1]))
            per_sym.append(f(k))
        ft = interp1d([2, 11], np.stack(per_sym, axis=-1), kind="linear",
                      bounds_error=False,
                      fill_value=(per_sym[0], per_sym[1]), axis=-1)
        oracle = ft(np.arange(NUM.n_symbols))
        assert np.max(np.abs(mine - oracle)) < 1e-12

    def test_empty_pilots_rejected(self):
        with pytest.raises(ValueError, match="pilots"):
            ls_estimate_interpolate(np.zeros((72, 14), dtype=complex),
                                    PilotConfig.none(), NUM)


class TestEndToEnd:
    def test_genie_noiseless_zero_errors(self):
        rng = np.random.default_rng(9)
        const = build_qam_constellation(NUM.bits_per_symbol)
        bits = rng.integers(0, 2, size=(NUM.n_subcarriers, NUM.n_symbols,
                                        NUM.bits_per_symbol))
        grid = map_bits(bits, const)
        wave, scale = normalize_unit_power(
            add_cp(ofdm_modulate(grid, NUM), NUM), return_scale=True)
        chan = flat_channel(NUM, gain=0.7 + 0.2j)
        rx = apply_channel(wave, chan, NoiseSpec.noiseless(), NUM)
        llrs = genie_receive(cp_remove_fft(rx, NUM), chan, 1e-12, NUM, const,
                             tx_gain=scale)
        assert ber(llrs, bits) == 0.0

    def test_qpsk_awgn_anchor_quick(self):
        # ~1e5 bits at 7 dB; the full-precision anchor lives in the
        # acceptance suite
        num = Numerology(n_subcarriers=72, n_symbols=14, bits_per_symbol=2)
        const = build_qam_constellation(2)
        rng = np.random.default_rng(10)
        n_slots = 50
        bits = rng.integers(0, 2, size=(n_slots, num.n_subcarriers,
                                        num.n_symbols, 2))
        grid = map_bits(bits, const)
        wave, scale = normalize_unit_power(
            add_cp(ofdm_modulate(grid, num), num), return_scale=True)
        chan = ChannelRealization(
            np.ones((n_slots, 1, num.n_symbols), dtype=complex), (0,))
        noise = NoiseSpec.from_snr(7.0, num)
        rx = apply_channel(wave, chan, noise, num, rng)
        llrs = genie_receive(cp_remove_fft(rx, num), chan, noise.sigma2, num,
                             const, tx_gain=scale[:, None, None])
        expect = qfunc(np.sqrt(10 ** 0.7))
        assert ber(llrs, bits) == pytest.approx(expect, rel=0.10)

    def test_practical_flat_high_snr(self):
        rng = np.random.default_rng(11)
        const = build_qam_constellation(NUM.bits_per_symbol)
        pilots = PilotConfig()
        mask = pilots.pilot_mask(NUM)
        n_data = NUM.n_subcarriers * NUM.n_symbols - int(mask.sum())
        bits = rng.integers(0, 2, size=(n_data, NUM.bits_per_symbol))
        from wavelink.txchain import assemble_slot
        grid = assemble_slot(map_bits(bits, const), pilots, NUM)
        wave, scale = normalize_unit_power(
            add_cp(ofdm_modulate(grid.values, NUM), NUM), return_scale=True)
        noise = NoiseSpec.from_snr(25.0, NUM)
        rx = apply_channel(wave, flat_channel(NUM), noise, NUM, rng)
        llrs = practical_receive(cp_remove_fft(rx, NUM), pilots, noise.sigma2,
                                 NUM, const)
        truth = np.zeros((NUM.n_subcarriers, NUM.n_symbols,
                          NUM.bits_per_symbol), dtype=int)
        truth.transpose(1, 0, 2)[grid.data_mask.T] = bits
        assert ber(llrs, truth, grid.data_mask) < 1e-3


class TestBer:
    def test_counts(self):
        llrs = np.array([[[[1.0, -1.0], [1.0, 1.0]]]])
        truth = np.array([[[[1, 0], [0, 1]]]])
        assert ber(llrs, truth) == 0.25

    def test_mask(self):
        llrs = np.ones((2, 3, 2))
        truth = np.zeros((2, 3, 2), dtype=int)
        mask = np.zeros((2, 3), dtype=bool)
        mask[0, 0] = True
        assert ber(llrs, truth, mask) == 1.0
        with pytest.raises(ValueError, match="selects no"):
            ber(llrs, truth, np.zeros((2, 3), dtype=bool))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="matching"):
            ber(np.ones((2, 2)), np.ones((2, 3)))
