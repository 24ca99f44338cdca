"""Doubly selective fading: delay spread across frequency, Doppler across time."""
import numpy as np

from wavelink import grid, txchain
from wavelink.channel import (NoiseSpec, apply_channel, genie_frequency_response,
                              nlos_profile, sample_channel)

num = grid.Numerology(n_subcarriers=72, n_symbols=14, oversampling=2,
                      scs_hz=30e3, bits_per_symbol=4)
profile = nlos_profile(num)
print("profile delays", profile.tap_delays, "powers", profile.tap_powers)

rng = np.random.default_rng(7)
chan = sample_channel(profile, num, velocity_mps=25.0, carrier_hz=3.5e9, rng=rng)
h = genie_frequency_response(chan, num)
print("H grid", h.shape)
print("|H| spread over frequency %.2f dB" %
      (20 * np.log10(np.abs(h[:, 0]).max() / np.abs(h[:, 0]).min())))
drift = np.abs(np.angle(h[:, -1] * np.conj(h[:, 0]))).mean()
print("mean phase drift first->last symbol %.3f rad (25 m/s Doppler)" % drift)

# the cyclic prefix turns the tapped-delay channel into a per-bin scalar
const = grid.normalize_constellation(grid.build_qam_constellation(4))
bits = rng.integers(0, 2, (num.n_subcarriers, num.n_symbols, 4))
values = grid.map_bits(bits, const)
wave = txchain.add_cp(txchain.ofdm_modulate(values, num), num)
y = apply_channel(wave, chan, NoiseSpec.noiseless(), num)
rx = txchain.ofdm_demodulate(txchain.remove_cp(y, num), num)
print("rx == H * tx (no noise): %.2e" % np.max(np.abs(rx - h * values)))
