"""Amplifier nonlinearity: AM-AM curve, spectral regrowth, backoff trade-off."""
import numpy as np

from wavelink import grid, txchain
from wavelink.evalcli import measure_aclr
from wavelink.pa import amam, fit_default_pa, pa_apply
from wavelink.training import OobSpec, TrainConfig

pa = fit_default_pa()
r = np.array([0.1, 0.3, 0.6, 0.9, 1.2])
print("AM-AM  in :", np.round(r, 2))
print("AM-AM  out:", np.round(amam(pa, r), 3))

cfg = TrainConfig()
num = cfg.numerology()
spec = OobSpec.for_numerology(num)
rng = np.random.default_rng(1)
const = grid.normalize_constellation(grid.build_qam_constellation(4))

for backoff_db in (6.0, 10.0, 14.0):
    bits = rng.integers(0, 2, (num.n_subcarriers, num.n_symbols, 4))
    wave = txchain.add_cp(txchain.ofdm_modulate(grid.map_bits(bits, const), num), num)
    wave = txchain.apply_backoff(txchain.normalize_unit_power(wave), backoff_db)
    out = txchain.normalize_unit_power(pa_apply(pa, wave))
    report = measure_aclr(out[None], spec, num)
    print("backoff %4.1f dB -> ACLR %6.2f dB" % (backoff_db, report.aclr_db))
