"""Joint training of the learned constellation, TX shaping net, and receiver.

The differentiable chain mirrors the plain-numpy simulation modules exactly:
bits are mapped through the (normalized) learned constellation onto the
oversampled grid, IFFT'd, shaped by the pointwise TX net, prefixed, power
normalized, backed off, amplified, normalized again (the emission reference
point), sent through a fixed per-slot channel plus noise, and demodulated
into the receiver net. The loss couples bit cross-entropy, SNR weighting,
and out-of-band emission energy.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import grid
from .channel import (
    ChannelRealization,
    default_profiles,
    sample_channel,
    sigma2_for_snr,
)
from .grid import Numerology
from .neural import Tensor, concat, gather, no_grad, scatter, stack_pair, take
from .neural.checkpoint import load_checkpoint, save_checkpoint
from .neural.nets import RX_SCHEDULE_DESK, RX_SCHEDULE_FULL, DeepRx, TxCnn
from .neural.optim import AdamState, LrSchedule, adam_step
from .neural.signal import channel_pair, fft_pair, ifft_pair, pa_pair
from .pa import DitherSpec, PaModel, fit_default_pa, pa_dither

EMISSION_FLOOR = 1e-30
ACLR_CAP_DB = 100.0

# disjoint seed streams derived from the config seed
_STREAM_INIT = 0
_STREAM_TRAIN = 1
_STREAM_VAL = 2


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters; defaults give the desk-scale preset."""

    n_subcarriers: int = 72
    n_symbols: int = 14
    oversampling: int = 2
    scs_hz: float = 30e3
    q_m: int = 4
    rx_schedule: str = "desk"
    batch_size: int = 32
    iterations: int = 5000
    w_e: float = 1.0
    snr_min_db: float = 0.0
    snr_max_db: float = 30.0
    backoff_db: float = 10.0
    velocity_min_mps: float = 0.0
    velocity_max_mps: float = 25.0
    carrier_hz: float = 3.5e9
    seed: int = 0
    lr: float = 1e-3
    warmup_iters: int = 100
    decay_start: int = 2000
    use_tx_cnn: bool = True
    use_emission_loss: bool = True
    tx_scale: float = 0.25
    const_init: str = "shell"
    const_jitter: float = 0.0
    dither_sigma: float = 0.01
    checkpoint_every: int = 1000

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.w_e < 0:
            raise ValueError("w_e must be >= 0")
        if self.const_jitter < 0:
            raise ValueError("const_jitter must be >= 0")
        if self.const_init not in ("shell", "spiral", "qam"):
            raise ValueError("const_init must be 'shell', 'spiral', or 'qam'")
        if self.snr_max_db < self.snr_min_db:
            raise ValueError("empty SNR range")
        if self.velocity_max_mps < self.velocity_min_mps:
            raise ValueError("empty velocity range")
        if self.rx_schedule not in ("desk", "full"):
            raise ValueError(f"unknown rx_schedule {self.rx_schedule!r}")

    @classmethod
    def full(cls) -> "TrainConfig":
        """Full-scale settings (144 subcarriers, 64-QAM, 11 blocks)."""
        return cls(n_subcarriers=144, q_m=6, rx_schedule="full",
                   batch_size=100, iterations=120000, warmup_iters=800,
                   decay_start=36000)

    def numerology(self) -> Numerology:
        return Numerology(self.n_subcarriers, self.n_symbols,
                          self.oversampling, self.scs_hz, self.q_m)

    def lr_schedule(self) -> LrSchedule:
        return LrSchedule(self.lr, self.warmup_iters, self.decay_start,
                          self.iterations)

    def rx_blocks(self):
        return RX_SCHEDULE_DESK if self.rx_schedule == "desk" else RX_SCHEDULE_FULL


_CONFIG_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}
_DEFAULT_CONFIG = TrainConfig()


def _config_lines(cfg: TrainConfig) -> list:
    lines = []
    for f in dataclasses.fields(TrainConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{f.name}={v}")
    return lines


def save_train_config(cfg: TrainConfig, path: str | Path) -> None:
    """Write the config as flat key=value lines."""
    Path(path).write_text("\n".join(_config_lines(cfg)) + "\n")


def config_hash(cfg: TrainConfig) -> str:
    """Short digest of every config field; keys cached training artifacts."""
    blob = "\n".join(_config_lines(cfg)).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def load_train_config(path: str | Path) -> TrainConfig:
    """Parse a key=value config; unknown keys are errors, missing keys default."""
    kwargs = {}
    for ln, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{ln}: expected key=value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        field = _CONFIG_FIELDS.get(key)
        if field is None:
            raise ValueError(f"{path}:{ln}: unknown config key {key!r}")
        kind = type(getattr(_DEFAULT_CONFIG, key))
        if kind is bool:
            if val not in ("true", "false"):
                raise ValueError(f"{path}:{ln}: {key} must be true or false")
            kwargs[key] = val == "true"
        elif kind is int:
            kwargs[key] = int(val)
        elif kind is float:
            kwargs[key] = float(val)
        else:
            kwargs[key] = val
    return TrainConfig(**kwargs)


@dataclass(frozen=True)
class OobSpec:
    """Index set of the unused band-edge bins of the oversampled FFT."""

    oob_bins: tuple
    m_oob: int

    def __post_init__(self):
        if self.m_oob != len(self.oob_bins):
            raise ValueError("m_oob must match the index count")

    @classmethod
    def for_numerology(cls, num: Numerology) -> "OobSpec":
        bins = grid.oob_bins(num)
        return cls(tuple(int(b) for b in bins), int(bins.size))


@dataclass(frozen=True)
class LossBreakdown:
    ce_terms: np.ndarray  # per-slot cross entropy, (Q,)
    weights: np.ndarray  # log2(1 + snr_linear) per slot, (Q,)
    emission_terms: np.ndarray  # per-slot mean OOB bin power, (Q,)
    emission_sum: float
    total: float

    @property
    def mean_ce(self) -> float:
        return float(self.ce_terms.mean())


def ce_loss(logits: Tensor, truth: np.ndarray) -> Tensor:
    """Mean binary cross entropy over a slot's bits, in log-sigmoid form.

    logits follow the llr>0 <=> bit 1 convention; the softplus form
    softplus(l) - l*b never evaluates log(0). Leading axes are kept, so a
    batched (Q, n_f, n_s, q_m) input yields per-slot values of shape (Q,).
    """
    truth = np.asarray(truth)
    if truth.shape != logits.shape:
        raise ValueError("logits and truth shapes differ")
    bce = logits.softplus() - logits * truth.astype(logits.dtype)
    axes = tuple(range(logits.ndim - 3, logits.ndim))
    return bce.mean(axis=axes)


def emission_energy(x_pa: Tensor, oob: OobSpec, num: Numerology) -> Tensor:
    """Mean out-of-band bin power of a (..., n_symbols, symbol_samples, 2) slot.

    Per symbol: drop the prefix, unitary FFT, keep the OOB bins; the result
    averages |X|^2 over the n_symbols * m_oob bins of each slot.
    """
    if oob.m_oob != num.ifft_size - num.n_subcarriers:
        raise ValueError("OOB bin set does not match the numerology")
    if x_pa.shape[-2] != num.symbol_samples or x_pa.shape[-1] != 2:
        raise ValueError("expected (..., n_symbols, symbol_samples, 2)")
    body = x_pa[..., num.cp_samples:, :]
    spec = fft_pair(body, axis=x_pa.ndim - 2)
    oob_x = take(spec, np.asarray(oob.oob_bins), axis=x_pa.ndim - 2)
    power = (oob_x * oob_x).sum(axis=-1)
    return power.mean(axis=(-2, -1))


def total_loss(logits: Tensor, truth: np.ndarray, snr_db: np.ndarray,
               emissions: Tensor | None, w_e: float):
    """SNR-weighted CE sum plus the log of the summed emission energy.

    Returns the scalar loss tensor and a detached LossBreakdown. With
    emissions None or w_e == 0 the emission term is dropped (CE-only mode).
    """
    ce = ce_loss(logits, truth)
    weights = np.log2(1.0 + 10.0 ** (np.asarray(snr_db, dtype=np.float64) / 10.0))
    loss = (ce * weights.astype(ce.dtype)).sum()
    e_terms = np.zeros(ce.shape)
    e_sum = 0.0
    if emissions is not None:
        e_terms = emissions.data.astype(np.float64).reshape(ce.shape).copy()
        e_sum = float(e_terms.sum())
        if w_e > 0:
            loss = loss + emissions.sum().clip_min(EMISSION_FLOOR).log() * w_e
    return loss, LossBreakdown(
        ce_terms=ce.data.astype(np.float64).copy(),
        weights=weights,
        emission_terms=e_terms,
        emission_sum=e_sum,
        total=float(loss.data),
    )


@dataclass
class LinkParams:
    """Trainable state of the learned link, keyed for checkpoints."""

    const_re: Tensor
    const_im: Tensor
    txcnn: TxCnn | None
    deeprx: DeepRx

    def tensors(self) -> dict[str, Tensor]:
        out = {"const.re": self.const_re, "const.im": self.const_im}
        if self.txcnn is not None:
            out.update(self.txcnn.tensors())
        out.update(self.deeprx.tensors())
        return out

    @property
    def dtype(self):
        return self.const_re.dtype

    def constellation(self) -> grid.Constellation:
        """Normalized numpy snapshot of the learned constellation."""
        raw = grid.Constellation(self.const_re.data.astype(np.float64),
                                 self.const_im.data.astype(np.float64))
        return grid.normalize_constellation(raw)


_GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


def spiral_constellation(q_m: int, r0: float = 4.0) -> np.ndarray:
    """Amplitude-Gray spiral: every bit of the label is readable from |s| alone.

    Points sit on 2**q_m distinct radii r0, r0+1, ... with labels Gray-coded
    along the radius ladder (adjacent radii differ in exactly one bit) and
    phases stepped by the golden angle so no rotation maps the set near
    itself. Alternating projections pin the exact radius ladder to the
    zero-mean constraint the normalizer enforces, so normalization leaves
    the geometry intact. Returned at zero mean and unit average power.
    """
    m = 1 << q_m
    codes = np.arange(m) ^ (np.arange(m) >> 1)
    rank = np.empty(m, dtype=np.int64)
    rank[codes] = np.arange(m)
    ladder = (r0 + rank).astype(np.float64)
    pts = ladder * np.exp(1j * rank * _GOLDEN_ANGLE)
    return _pin_ladder_zero_mean(pts, ladder)


def shell_constellation(q_m: int, r0: float = 1.2) -> np.ndarray:
    """Amplitude-Gray shells with phase-Gray points inside each shell.

    The high half of the label picks one of 2**ceil(q_m/2) radius shells
    (Gray-coded over radius, so adjacent shells differ in one bit); the low
    half picks one of m_p angular positions inside the shell (Gray-coded
    over angle). Shells are far apart, so the coarse bits decode from
    amplitude — a rotation-invariant statistic — from the very first
    training step. In-shell angles step by 2*pi/(m_p+1), deliberately not
    dividing the circle, so no rotation maps the set to itself: once the
    shells lock, the angular pattern pins the channel phase and the fine
    bits ride on chords of order the shell radius. Golden-angle offsets
    between shells keep the whole set rotation-asymmetric. Returned at zero
    mean and unit average power with exact per-shell radii.
    """
    half = q_m // 2
    m_p = 1 << half
    m_a = 1 << (q_m - half)
    gray_a = np.arange(m_a) ^ (np.arange(m_a) >> 1)
    gray_p = np.arange(m_p) ^ (np.arange(m_p) >> 1)
    step = 2.0 * np.pi / (m_p + 1)
    pts = np.empty(1 << q_m, dtype=complex)
    ladder = np.empty(1 << q_m)
    for k in range(m_a):
        for j in range(m_p):
            label = (int(gray_a[k]) << half) | int(gray_p[j])
            pts[label] = (r0 + k) * np.exp(1j * (k * _GOLDEN_ANGLE + j * step))
            ladder[label] = r0 + k
    return _pin_ladder_zero_mean(pts, ladder)


def _pin_ladder_zero_mean(pts: np.ndarray, ladder: np.ndarray) -> np.ndarray:
    """Alternating projections: exact per-point radii and zero mean.

    Plain mean removal would distort the designed amplitudes; projecting
    back and forth converges to a nearby set that the power/mean normalizer
    maps onto itself, so normalization preserves the geometry.
    """
    for _ in range(64):
        pts = pts - pts.mean()
        pts = ladder * np.exp(1j * np.angle(pts))
    pts = pts - pts.mean()
    return pts / np.sqrt(np.mean(np.abs(pts) ** 2))


def init_link(cfg: TrainConfig, rng: np.random.Generator,
              dtype=np.float32) -> LinkParams:
    """Shell/spiral/QAM constellation, passthrough TX net, fresh receiver.

    Without pilots the constellation shape is the receiver's only phase
    reference. Square QAM is invariant under 90-degree rotations, so the
    sign bits of a fading symbol are undecodable at the start of training:
    the receiver settles on all-zero logits and with zero logits no useful
    gradient reaches the transmit side either. The default shell start
    instead encodes the coarse half of the label in amplitude — a
    rotation-invariant statistic — so those bits carry cross-entropy signal
    from the first iteration, and the locked shells then expose the channel
    phase that the in-shell (fine) bits need. The spiral start pushes the
    same idea to all bits (every label has its own radius) at the cost of
    much smaller amplitude margins. const_jitter adds an optional small
    seeded displacement per point. These are plain initial values of the
    trainable constellation, free to move during training.
    """
    if cfg.const_init == "shell":
        pts = shell_constellation(cfg.q_m)
    elif cfg.const_init == "spiral":
        pts = spiral_constellation(cfg.q_m)
    else:
        pts = grid.normalize_constellation(grid.build_qam_constellation(cfg.q_m)).points
    noise = rng.standard_normal((2, pts.size)) * cfg.const_jitter / np.sqrt(2)
    const_re = Tensor((pts.real + noise[0]).astype(dtype), requires_grad=True)
    const_im = Tensor((pts.imag + noise[1]).astype(dtype), requires_grad=True)
    txcnn = None
    if cfg.use_tx_cnn:
        txcnn = TxCnn.passthrough(scale=cfg.tx_scale, rng=rng, dtype=dtype)
    deeprx = DeepRx.init(rng, cfg.q_m, cfg.rx_blocks(), dtype=dtype)
    return LinkParams(const_re, const_im, txcnn, deeprx)


def save_link(path: str | Path, link: LinkParams) -> None:
    save_checkpoint(path, {k: t.data for k, t in link.tensors().items()})


def load_link(cfg: TrainConfig, path: str | Path, dtype=np.float32) -> LinkParams:
    """Rebuild a LinkParams with shapes from cfg and values from a checkpoint."""
    arrays = load_checkpoint(path)
    link = init_link(cfg, np.random.default_rng(0), dtype=dtype)
    tensors = link.tensors()
    if set(arrays) != set(tensors):
        missing = sorted(set(tensors) - set(arrays))
        extra = sorted(set(arrays) - set(tensors))
        raise ValueError(f"checkpoint/config mismatch: missing {missing}, "
                         f"unexpected {extra}")
    for name, t in tensors.items():
        if arrays[name].shape != t.data.shape:
            raise ValueError(f"shape mismatch for {name}: checkpoint "
                             f"{arrays[name].shape}, config {t.data.shape}")
        t.data = arrays[name].astype(dtype)
    return link


@dataclass
class Batch:
    """One sampled training batch; all randomness is drawn up front."""

    bits: np.ndarray  # (Q, n_f, n_s, q_m) in {0,1}
    snr_db: np.ndarray  # (Q,)
    sigma2: np.ndarray  # (Q,)
    velocities: np.ndarray  # (Q,)
    taps: np.ndarray  # (Q, n_taps, n_s) on the merged delay grid
    delays: tuple
    noise: np.ndarray  # (Q, n_s, symbol_samples, 2)
    pa_model: PaModel
    realizations: list

    @property
    def size(self) -> int:
        return self.bits.shape[0]


def _merge_taps(realizations: list, n_symbols: int):
    """Embed per-slot tap sets into one shared, zero-padded delay grid."""
    union = sorted({int(d) for r in realizations for d in r.delays})
    pos = {d: i for i, d in enumerate(union)}
    taps = np.zeros((len(realizations), len(union), n_symbols),
                    dtype=np.complex128)
    for i, r in enumerate(realizations):
        for t, d in enumerate(r.delays):
            taps[i, pos[int(d)]] = r.taps[t]
    return taps, tuple(union)


def sample_batch(cfg: TrainConfig, rng: np.random.Generator,
                 base_pa: PaModel, dtype=np.float32,
                 profiles=None) -> Batch:
    """Draw bits, channels, SNRs, one dithered PA, and noise (fixed order).

    profiles defaults to the LOS/NLOS pair of the numerology; pass a custom
    sequence to sample from other tap layouts (kept uniform over the list).
    """
    num = cfg.numerology()
    q = cfg.batch_size
    if profiles is None:
        profiles = default_profiles(num)
    bits = rng.integers(0, 2, (q, num.n_subcarriers, num.n_symbols, num.bits_per_symbol))
    kinds = rng.integers(0, len(profiles), q)
    velocities = rng.uniform(cfg.velocity_min_mps, cfg.velocity_max_mps, q)
    snr_db = rng.uniform(cfg.snr_min_db, cfg.snr_max_db, q)
    realizations = []
    for i in range(q):
        realizations.append(sample_channel(profiles[kinds[i]], num,
                                           float(velocities[i]),
                                           cfg.carrier_hz, rng))
    pa_model = pa_dither(base_pa, DitherSpec(sigma=cfg.dither_sigma), rng)
    sigma2 = sigma2_for_snr(snr_db, num)
    scale = np.sqrt(sigma2 / 2.0)[:, None, None, None]
    noise = (rng.normal(size=(q, num.n_symbols, num.symbol_samples, 2)) * scale)
    taps, delays = _merge_taps(realizations, num.n_symbols)
    return Batch(bits=bits.astype(np.int8), snr_db=snr_db, sigma2=sigma2,
                 velocities=velocities, taps=taps, delays=delays,
                 noise=noise.astype(dtype), pa_model=pa_model,
                 realizations=realizations)


def normalized_constellation_pair(link: LinkParams):
    """Zero-mean, unit-power constellation tensors, normalized in-graph."""
    cre, cim = link.const_re, link.const_im
    mu_re, mu_im = cre.mean(), cim.mean()
    second = (cre * cre + cim * cim).mean()
    var = second - mu_re * mu_re - mu_im * mu_im
    scale = var.clip_min(1e-24).sqrt()
    return (cre - mu_re) / scale, (cim - mu_im) / scale


def normalize_slot_power(x: Tensor) -> Tensor:
    """Scale each slot of (..., n_symbols, samples, 2) to unit mean power."""
    sq = (x * x).sum(axis=-1)
    lead = x.ndim - 3
    p = sq.mean(axis=tuple(range(lead, x.ndim - 1)))
    scale = p.clip_min(EMISSION_FLOOR).sqrt()
    return x / scale.reshape(scale.shape + (1, 1, 1))


@dataclass
class ChainOutputs:
    logits: Tensor  # (Q, n_f, n_s, q_m)
    emissions: Tensor | None  # (Q,) per-slot OOB energy
    x_pa: Tensor  # (Q, n_s, symbol_samples, 2) normalized PA output
    pa_in: Tensor  # PA input (after backoff), for power audits
    rx_grid: Tensor  # (Q, n_f, n_s, 2) receiver-net input


def link_forward(link: LinkParams, batch: Batch, cfg: TrainConfig,
                 measure_emissions: bool = True) -> ChainOutputs:
    """Run the full differentiable transmit/channel/receive chain."""
    num = cfg.numerology()
    n, cp = num.ifft_size, num.cp_samples
    nre, nim = normalized_constellation_pair(link)
    idx = grid.bits_to_index(batch.bits)
    sym = stack_pair(gather(nre, idx), gather(nim, idx))  # (Q, n_f, n_s, 2)
    spec = scatter(sym, grid.inband_bins(num), axis=1, size=n)
    time = ifft_pair(spec, axis=1)  # (Q, n, n_s, 2)
    time = time.transpose((0, 2, 1, 3))  # (Q, n_s, n, 2)
    if link.txcnn is not None:
        time = link.txcnn(time)
    wave = concat([time[:, :, n - cp:, :], time], axis=2)  # prefix added
    wave = normalize_slot_power(wave)
    pa_in = wave * float(10.0 ** (-cfg.backoff_db / 20.0))
    x_pa = normalize_slot_power(pa_pair(pa_in, batch.pa_model))
    emissions = None
    if measure_emissions:
        emissions = emission_energy(x_pa, OobSpec.for_numerology(num), num)
    y = channel_pair(x_pa, batch.taps, batch.delays) + Tensor(batch.noise)
    body = y[:, :, cp:, :]  # (Q, n_s, n, 2)
    rx = take(fft_pair(body, axis=2), grid.inband_bins(num), axis=2)
    rx_grid = rx.transpose((0, 2, 1, 3))
    logits = link.deeprx(rx_grid)
    return ChainOutputs(logits=logits, emissions=emissions, x_pa=x_pa,
                        pa_in=pa_in, rx_grid=rx_grid)


@dataclass
class TrainState:
    link: LinkParams
    adam: AdamState
    schedule: LrSchedule
    base_pa: PaModel
    iteration: int = 0


def init_train_state(cfg: TrainConfig, dtype=np.float32) -> TrainState:
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, _STREAM_INIT)))
    link = init_link(cfg, rng, dtype=dtype)
    return TrainState(link=link, adam=AdamState.for_params(link.tensors()),
                      schedule=cfg.lr_schedule(), base_pa=fit_default_pa())


def train_step(state: TrainState, cfg: TrainConfig,
               rng: np.random.Generator) -> LossBreakdown:
    """One sampled batch, one backward pass, one Adam update."""
    batch = sample_batch(cfg, rng, state.base_pa, dtype=state.link.dtype)
    params = state.link.tensors()
    for t in params.values():
        t.zero_grad()
    out = link_forward(state.link, batch, cfg,
                       measure_emissions=cfg.use_emission_loss)
    w_e = cfg.w_e if cfg.use_emission_loss else 0.0
    loss, breakdown = total_loss(out.logits, batch.bits, batch.snr_db,
                                 out.emissions, w_e)
    if not np.isfinite(breakdown.total):
        raise FloatingPointError(
            f"non-finite loss {breakdown.total} at iteration {state.iteration}")
    loss.backward()
    adam_step(state.adam, params, state.schedule.lr_at(state.iteration))
    state.iteration += 1
    return breakdown


def train(cfg: TrainConfig, out_dir: str | Path, dtype=np.float32,
          n_iters: int | None = None, verbose: bool = False) -> TrainState:
    """Full training loop with CSV logging and periodic checkpoints.

    Writes train_log.csv (`iter,lr,ce,emission,total`), model_latest.ckpt
    every cfg.checkpoint_every iterations, and model_final.ckpt at the end.
    A non-finite loss aborts after snapshotting model_diverged.ckpt.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_train_config(cfg, out / "train_config.txt")
    state = init_train_state(cfg, dtype=dtype)
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, _STREAM_TRAIN)))
    total = cfg.iterations if n_iters is None else min(n_iters, cfg.iterations)
    with open(out / "train_log.csv", "w", newline="") as log:
        log.write("iter,lr,ce,emission,total\n")
        for it in range(total):
            lr = state.schedule.lr_at(it)
            try:
                bd = train_step(state, cfg, rng)
            except FloatingPointError:
                save_link(out / "model_diverged.ckpt", state.link)
                raise
            log.write(f"{it},{lr:.9e},{bd.mean_ce:.9e},"
                      f"{bd.emission_sum:.9e},{bd.total:.9e}\n")
            if verbose and (it % 50 == 0 or it == total - 1):
                print(f"iter {it:6d} lr {lr:.3e} ce {bd.mean_ce:.4f} "
                      f"emission {bd.emission_sum:.3e} total {bd.total:.4f}",
                      flush=True)
            if (it + 1) % cfg.checkpoint_every == 0:
                save_link(out / "model_latest.ckpt", state.link)
    save_link(out / "model_final.ckpt", state.link)
    return state


def band_powers(x_pa: np.ndarray, num: Numerology):
    """Per-slot mean in-band and out-of-band FFT bin powers.

    Accepts complex slots shaped (..., n_symbols, symbol_samples) or flat
    (..., slot_samples). Returns two arrays of shape ``x_pa.shape[:-2]``.
    """
    x = np.asarray(x_pa)
    if x.shape[-1] == num.slot_samples:
        x = x.reshape(x.shape[:-1] + (num.n_symbols, num.symbol_samples))
    elif x.shape[-2:] != (num.n_symbols, num.symbol_samples):
        raise ValueError("waveform shape does not match the numerology")
    body = x[..., num.cp_samples:]
    spec = np.fft.fft(body, axis=-1) / np.sqrt(num.ifft_size)
    power = np.abs(spec) ** 2
    inband = power[..., grid.inband_bins(num)].mean(axis=(-2, -1))
    oob = power[..., grid.oob_bins(num)].mean(axis=(-2, -1))
    return inband, oob


def aclr_db(x_pa: np.ndarray, num: Numerology) -> np.ndarray:
    """Per-slot in-band to out-of-band power ratio in dB, capped at 100."""
    inband, oob = band_powers(x_pa, num)
    floor = inband * 10.0 ** (-ACLR_CAP_DB / 10.0)
    return 10.0 * np.log10(inband / np.maximum(oob, np.maximum(floor, EMISSION_FLOOR)))


def pair_to_complex(data: np.ndarray) -> np.ndarray:
    """(..., 2) float pairs to a complex array."""
    return data[..., 0].astype(np.float64) + 1j * data[..., 1].astype(np.float64)


def validate(link: LinkParams, cfg: TrainConfig, n_slots: int,
             seed: int | None = None, base_pa: PaModel | None = None) -> dict:
    """BER per 5 dB SNR bucket plus mean ACLR over fresh validation slots.

    Uses a seed stream disjoint from training; no gradients are recorded.
    """
    if base_pa is None:
        base_pa = fit_default_pa()
    rng = np.random.default_rng(np.random.SeedSequence(
        (cfg.seed if seed is None else seed, _STREAM_VAL)))
    edges = np.arange(cfg.snr_min_db, cfg.snr_max_db + 5.0, 5.0)
    n_buckets = max(len(edges) - 1, 1)
    errors = np.zeros(n_buckets, dtype=np.int64)
    counts = np.zeros(n_buckets, dtype=np.int64)
    aclrs = []
    num = cfg.numerology()
    done = 0
    with no_grad():
        while done < n_slots:
            q = min(cfg.batch_size, n_slots - done)
            chunk_cfg = dataclasses.replace(cfg, batch_size=q)
            batch = sample_batch(chunk_cfg, rng, base_pa, dtype=link.dtype)
            out = link_forward(link, batch, chunk_cfg, measure_emissions=False)
            hard = out.logits.data > 0
            errs = (hard != (batch.bits > 0)).sum(axis=(1, 2, 3))
            bucket = np.clip(((batch.snr_db - cfg.snr_min_db) // 5.0).astype(int),
                             0, n_buckets - 1)
            np.add.at(errors, bucket, errs)
            np.add.at(counts, bucket, batch.bits[0].size)
            aclrs.append(aclr_db(pair_to_complex(out.x_pa.data), num))
            done += q
    ber_buckets = {}
    for i in range(n_buckets):
        key = (float(edges[i]), float(edges[i + 1]))
        ber_buckets[key] = float(errors[i] / counts[i]) if counts[i] else float("nan")
    total_bits = int(counts.sum())
    return {
        "ber_buckets": ber_buckets,
        "ber": float(errors.sum() / total_bits) if total_bits else float("nan"),
        "mean_aclr_db": float(np.concatenate(aclrs).mean()),
        "n_bits": total_bits,
    }
