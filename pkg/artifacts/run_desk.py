"""Sequential desk-scale training for both learned schemes, cached by config hash."""
import dataclasses
from pathlib import Path

from wavelink.training import TrainConfig, config_hash, train

for use_tx in (True, False):
    cfg = dataclasses.replace(TrainConfig(), use_tx_cnn=use_tx)
    out = Path(__file__).parent / f"train_{config_hash(cfg)}"
    tag = "txcnn" if use_tx else "no_txcnn"
    if (out / "model_final.ckpt").exists():
        print(f"[{tag}] cached at {out}", flush=True)
        continue
    print(f"[{tag}] training into {out}", flush=True)
    train(cfg, out, verbose=True)
    print(f"[{tag}] done", flush=True)
