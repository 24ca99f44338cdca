"""Seeded Monte-Carlo sweeps writing the experiment CSVs; CLI equivalents shown."""
import tempfile
from pathlib import Path

from wavelink.evalcli import SweepSpec, run_backoff_sweep, run_ber_snr_sweep
from wavelink.training import TrainConfig

cfg = TrainConfig(batch_size=16)
spec = SweepSpec(snr_points_db=(6.0, 12.0, 18.0), slots_per_point=48,
                 backoff_points_db=(10.0, 16.0, 22.0), fixed_snr_db=18.0,
                 schemes=("practical", "genie"))

out = Path(tempfile.mkdtemp())
run_ber_snr_sweep(spec, {}, cfg, out, seed=0)
run_backoff_sweep(spec, {}, cfg, out, seed=0)

for name in ("bers.csv", "bers.meta.csv", "aclrs.csv", "ber_backoff.csv"):
    print("--", name)
    print((out / name).read_text().rstrip())

# the same artifacts via the command line (learned schemes need checkpoints):
#   wavelink eval-ber       --scheme practical --scheme genie --slots 48 --out runs/
#   wavelink sweep-backoff  --scheme practical --scheme genie --slots 48 --out runs/
#   wavelink export-const   --checkpoint runs/train/model_final.ckpt --out const.csv
#   wavelink selftest
