"""OFDM grid round trip: bits -> QAM grid -> waveform -> grid -> bits."""
import numpy as np

from wavelink import grid, txchain

num = grid.Numerology(n_subcarriers=72, n_symbols=14, oversampling=2,
                      scs_hz=30e3, bits_per_symbol=4)
print("ifft size", num.ifft_size, "cp", num.cp_samples, "slot samples",
      num.slot_samples)

rng = np.random.default_rng(0)
const = grid.normalize_constellation(grid.build_qam_constellation(4))
bits = rng.integers(0, 2, (num.n_subcarriers, num.n_symbols, 4))
values = grid.map_bits(bits, const)

wave = txchain.add_cp(txchain.ofdm_modulate(values, num), num)
print("waveform shape", wave.shape, "mean power %.3f" % txchain.mean_power(wave))

back = txchain.ofdm_demodulate(txchain.remove_cp(wave, num), num)
print("grid error %.2e" % np.max(np.abs(back - values)))

hard = grid.hard_demap(back, const)
print("bit errors", int(np.sum(hard != bits)), "of", bits.size)
