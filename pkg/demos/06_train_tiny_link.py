"""Joint TX/RX training on a reduced numerology; runs in well under a minute."""
import numpy as np

from wavelink.channel import ChannelProfile
from wavelink.evalcli import rotation_matching_distance
from wavelink.neural.optim import AdamState, adam_step
from wavelink.pa import fit_default_pa
from wavelink.training import (TrainConfig, init_link, link_forward,
                               sample_batch, total_loss)

cfg = TrainConfig(n_subcarriers=24, n_symbols=6, q_m=2, rx_schedule="desk",
                  batch_size=8, iterations=120, warmup_iters=10, decay_start=80,
                  snr_min_db=10.0, snr_max_db=25.0, seed=9)
rng = np.random.default_rng(cfg.seed)
link = init_link(cfg, rng)
params = link.tensors()
print("trainable tensors", len(params), "parameters",
      sum(t.data.size for t in params.values()))

base_pa = fit_default_pa()
# the default profiles are built for >= 72 subcarriers; use a short pair here
profiles = (ChannelProfile("los", (0, 1), (0.85, 0.15), rician_k=10.0),
            ChannelProfile("nlos", (0, 2), (0.7, 0.3)))
adam = AdamState.for_params(params)
sched = cfg.lr_schedule()
start_pts = link.constellation().points.copy()

for it in range(cfg.iterations):
    batch = sample_batch(cfg, rng, base_pa, profiles=profiles)
    for t in params.values():
        t.zero_grad()
    out = link_forward(link, batch, cfg)
    loss, bd = total_loss(out.logits, batch.bits, batch.snr_db,
                          out.emissions, cfg.w_e)
    loss.backward()
    adam_step(adam, params, sched.lr_at(it))
    if it % 30 == 0 or it == cfg.iterations - 1:
        print("iter %4d  ce %.4f  emission %.3e" %
              (it, bd.mean_ce, bd.emission_sum))

pts = link.constellation().points
print("constellation moved %.3f (rms), rotation asymmetry %.3f" %
      (np.sqrt(np.mean(np.abs(pts - start_pts) ** 2)),
       rotation_matching_distance(pts)))
