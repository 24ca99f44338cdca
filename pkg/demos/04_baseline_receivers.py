"""LS+LMMSE (pilot) vs genie LMMSE receiver BER over a fading channel."""
import numpy as np

from wavelink import grid, rxbaseline, txchain
from wavelink.channel import (NoiseSpec, apply_channel, default_profiles,
                              sample_channel, sigma2_for_snr)

num = grid.Numerology(n_subcarriers=72, n_symbols=14, oversampling=2,
                      scs_hz=30e3, bits_per_symbol=4)
const = grid.normalize_constellation(grid.build_qam_constellation(4))
pilots = txchain.PilotConfig()
profiles = default_profiles(num)
data_mask = ~pilots.pilot_mask(num)
n_data = int(data_mask.sum())
slots = 300

print("data REs per slot", n_data, "of", num.n_subcarriers * num.n_symbols)
print("%6s %12s %12s" % ("SNR", "practical", "genie"))
for snr_db in (8.0, 14.0, 20.0):
    rng = np.random.default_rng(int(snr_db))
    sigma2 = float(sigma2_for_snr(snr_db, num))
    errs = {"practical": 0, "genie": 0}
    bits_total = 0
    for _ in range(slots):
        bits = rng.integers(0, 2, (n_data, 4))
        slot = txchain.assemble_slot(grid.map_bits(bits, const), pilots, num)
        wave, scale = txchain.normalize_unit_power(
            txchain.add_cp(txchain.ofdm_modulate(slot.values, num), num),
            return_scale=True)
        prof = profiles[rng.integers(0, len(profiles))]
        chan = sample_channel(prof, num, rng.uniform(0, 25), 3.5e9, rng)
        y = apply_channel(wave, chan, NoiseSpec(snr_db, sigma2), num, rng)
        rx = rxbaseline.cp_remove_fft(y, num)
        llr_p = rxbaseline.practical_receive(rx, pilots, sigma2, num, const)
        llr_g = rxbaseline.genie_receive(rx, chan, sigma2, num, const,
                                         tx_gain=float(scale))
        for name, llr in (("practical", llr_p), ("genie", llr_g)):
            # data symbols were consumed subcarrier-fastest; read back the same way
            soft = np.swapaxes(llr, 0, 1)[data_mask.T]
            errs[name] += int(((soft > 0) != (bits > 0)).sum())
        bits_total += bits.size
    print("%6.1f %12.3e %12.3e" % (snr_db, errs["practical"] / bits_total,
                                   errs["genie"] / bits_total))
