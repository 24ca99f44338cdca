import dataclasses
import sys
from pathlib import Path

from wavelink.training import TrainConfig, config_hash, train

cfg = TrainConfig()
out = Path(__file__).parent / f"train_{config_hash(cfg)}"
print(f"[probe] {out}", flush=True)
train(cfg, out, n_iters=int(sys.argv[1]) if len(sys.argv) > 1 else 1300,
      verbose=True)
