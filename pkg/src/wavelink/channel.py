"""Time-varying tapped delay line channels with AWGN.

Each tap carries a fixed complex gain for the slot plus a single Doppler
rotation whose rate depends on a random arrival angle, so taps stay constant
within one OFDM symbol (block fading) and rotate from symbol to symbol. Tap
delays are integer samples and must fit inside the cyclic prefix, which makes
the per-symbol linear convolution equal to a circular one after CP removal
and gives the receiver an exact per-subcarrier frequency response.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from wavelink.grid import Numerology, inband_bins

SPEED_OF_LIGHT = 299792458.0

# full-scale tap layouts (ifft_size 288); delays scale with the FFT size
_LOS_DELAYS = (0, 2, 5)
_LOS_POWERS = (0.8, 0.15, 0.05)
_LOS_K = 10.0
_NLOS_DELAYS = (0, 3, 7, 11, 16)
_NLOS_POWERS = (0.45, 0.25, 0.15, 0.10, 0.05)
_REF_IFFT = 288


@dataclass(frozen=True)
class ChannelProfile:
    """Static description of a tapped delay line.

    kind is "los" (first tap Rician with factor rician_k) or "nlos" (all taps
    Rayleigh). Powers are average per-tap energies and must sum to one so the
    channel neither amplifies nor attenuates on average.
    """

    kind: str
    tap_delays: tuple[int, ...]
    tap_powers: tuple[float, ...]
    rician_k: float = 0.0

    def __post_init__(self):
        if self.kind not in ("los", "nlos"):
            raise ValueError(f"unknown profile kind {self.kind!r}")
        delays = tuple(int(d) for d in self.tap_delays)
        powers = tuple(float(p) for p in self.tap_powers)
        if len(delays) != len(powers) or not delays:
            raise ValueError("tap_delays and tap_powers must be non-empty and match")
        if delays[0] < 0 or any(b <= a for a, b in zip(delays, delays[1:])):
            raise ValueError("tap delays must be non-negative and strictly increasing")
        if any(p <= 0 for p in powers) or abs(sum(powers) - 1.0) > 1e-9:
            raise ValueError("tap powers must be positive and sum to 1")
        if self.rician_k < 0:
            raise ValueError("rician_k must be >= 0")
        if self.kind == "nlos" and self.rician_k != 0:
            raise ValueError("nlos profiles are Rayleigh only (rician_k = 0)")
        object.__setattr__(self, "tap_delays", delays)
        object.__setattr__(self, "tap_powers", powers)

    @property
    def n_taps(self) -> int:
        return len(self.tap_delays)

    @property
    def max_delay(self) -> int:
        return self.tap_delays[-1]


def _scaled_delays(delays, num: Numerology) -> tuple[int, ...]:
    out = tuple(int(round(d * num.ifft_size / _REF_IFFT)) for d in delays)
    if any(b <= a for a, b in zip(out, out[1:])):
        raise ValueError(f"scaled tap delays collide at ifft_size={num.ifft_size}")
    return out


def los_profile(num: Numerology) -> ChannelProfile:
    """Short LOS-dominated profile, delays scaled to the numerology."""
    return ChannelProfile("los", _scaled_delays(_LOS_DELAYS, num), _LOS_POWERS,
                          rician_k=_LOS_K)


def nlos_profile(num: Numerology) -> ChannelProfile:
    """Longer Rayleigh profile, delays scaled to the numerology."""
    return ChannelProfile("nlos", _scaled_delays(_NLOS_DELAYS, num), _NLOS_POWERS)


def default_profiles(num: Numerology) -> tuple[ChannelProfile, ChannelProfile]:
    return los_profile(num), nlos_profile(num)


@dataclass(frozen=True)
class ChannelRealization:
    """Per-symbol tap gains for one or more slots.

    taps has shape ``(..., n_taps, n_symbols)``; leading axes batch slots.
    """

    taps: np.ndarray
    delays: tuple[int, ...]
    doppler_hz: float | np.ndarray = 0.0

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.complex128)
        if taps.ndim < 2 or taps.shape[-2] != len(self.delays):
            raise ValueError("taps must be (..., n_taps, n_symbols)")
        object.__setattr__(self, "taps", taps)
        object.__setattr__(self, "delays", tuple(int(d) for d in self.delays))


@dataclass(frozen=True)
class NoiseSpec:
    """Complex AWGN level expressed as a per-data-subcarrier SNR.

    The time-domain variance is ``oversampling * 10^(-snr_db/10)``: a
    unit-power waveform concentrates its energy on ``n_subcarriers`` of the
    ``ifft_size`` FFT bins, so each data bin carries ``oversampling`` units of
    signal power and sigma2 must be scaled up by the same factor for the
    post-FFT SNR to hit the target.
    """

    snr_db: float
    sigma2: float

    @classmethod
    def from_snr(cls, snr_db: float, num: Numerology) -> "NoiseSpec":
        if np.isposinf(snr_db):
            return cls(snr_db=float("inf"), sigma2=0.0)
        if not np.isfinite(snr_db):
            raise ValueError("snr_db must be finite or +inf")
        return cls(snr_db=float(snr_db),
                   sigma2=float(num.oversampling) * 10.0 ** (-snr_db / 10.0))

    @classmethod
    def noiseless(cls) -> "NoiseSpec":
        return cls(snr_db=float("inf"), sigma2=0.0)


def sigma2_for_snr(snr_db: np.ndarray, num: Numerology) -> np.ndarray:
    """Vector form of the NoiseSpec conversion for per-slot SNR draws."""
    snr_db = np.asarray(snr_db, dtype=np.float64)
    return num.oversampling * 10.0 ** (-snr_db / 10.0)


def sample_channel(profile: ChannelProfile, num: Numerology,
                   velocity_mps: float | np.ndarray, carrier_hz: float,
                   rng: np.random.Generator, size: tuple = ()) -> ChannelRealization:
    """Draw per-symbol tap gains for ``size`` independent slots.

    Each tap gets a unit-power complex Gaussian gain (plus a deterministic
    component on tap 0 for LOS profiles) and a Doppler phase ramp
    ``exp(j 2 pi f_D cos(theta) l T_sym)`` across the symbol index l, with an
    independent arrival angle theta per tap.

    Args:
        profile: tap layout to draw from.
        num: numerology; sets the symbol duration and validates delays.
        velocity_mps: UE speed, scalar or one value per slot (shape ``size``).
        carrier_hz: carrier frequency for the Doppler rate.
        rng: source of randomness; fixed state gives fixed output.
        size: leading batch shape (default single slot, no batch axes).

    Returns:
        ChannelRealization with taps of shape ``size + (n_taps, n_symbols)``.
    """
    if profile.max_delay >= max(num.cp_samples, 1):
        raise ValueError(
            f"profile max delay {profile.max_delay} does not fit the cyclic "
            f"prefix ({num.cp_samples} samples)"
        )
    velocity = np.broadcast_to(np.asarray(velocity_mps, dtype=np.float64), size)
    if np.any(velocity < 0):
        raise ValueError("velocity must be >= 0")
    if carrier_hz <= 0:
        raise ValueError("carrier_hz must be positive")
    t = profile.n_taps
    shape = size + (t,)
    doppler = (velocity * carrier_hz / SPEED_OF_LIGHT)[..., None]  # (size, 1)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=shape)
    gains = (rng.normal(size=shape) + 1j * rng.normal(size=shape)) / np.sqrt(2.0)
    l_idx = np.arange(num.n_symbols)
    phase = (2.0 * np.pi * doppler[..., None] * np.cos(theta)[..., None]
             * l_idx * num.symbol_duration_s)
    ramps = np.exp(1j * phase)  # (size, t, n_symbols)
    powers = np.sqrt(np.asarray(profile.tap_powers))
    taps = powers[:, None] * gains[..., None] * ramps
    if profile.kind == "los" and profile.rician_k > 0:
        k = profile.rician_k
        # tap 0 splits into a deterministic ray and the diffuse part, each
        # with its own arrival angle
        psi = rng.uniform(0.0, 2.0 * np.pi, size=size)
        theta_los = rng.uniform(0.0, 2.0 * np.pi, size=size)
        ramp_los = np.exp(1j * (psi[..., None] + 2.0 * np.pi * doppler
                                * np.cos(theta_los)[..., None]
                                * l_idx * num.symbol_duration_s))
        det = np.sqrt(k / (1.0 + k)) * ramp_los
        diffuse = np.sqrt(1.0 / (1.0 + k)) * gains[..., 0, None] * ramps[..., 0, :]
        taps = taps.copy()
        taps[..., 0, :] = powers[0] * (det + diffuse)
    doppler_out = np.squeeze(doppler, axis=-1)
    return ChannelRealization(taps, profile.tap_delays,
                              doppler_out if doppler_out.ndim else float(doppler_out))


def apply_channel(wave: np.ndarray, chan: ChannelRealization, noise: NoiseSpec,
                  num: Numerology, rng: np.random.Generator | None = None) -> np.ndarray:
    """Convolve a CP-in waveform with the channel and add AWGN.

    The convolution runs independently per OFDM symbol (block fading) and
    keeps the first ``symbol_samples`` outputs, discarding the tail that
    spills past the symbol; with delays inside the CP the discarded part
    never reaches the post-CP-removal samples.

    Args:
        wave: ``(..., slot_samples)`` transmit waveform with CPs.
        chan: tap realization, batch shape broadcastable to the wave's.
        noise: AWGN level; sigma2 == 0 adds nothing and needs no rng.
        num: slot layout.
        rng: noise source, required when sigma2 > 0.

    Returns:
        Received waveform, same shape as the input.
    """
    wave = np.asarray(wave, dtype=np.complex128)
    if wave.shape[-1] != num.slot_samples:
        raise ValueError(
            f"expected {num.slot_samples} samples per slot, got {wave.shape[-1]}"
        )
    if chan.taps.shape[-1] != num.n_symbols:
        raise ValueError("channel realization does not match the numerology")
    x = wave.reshape(wave.shape[:-1] + (num.n_symbols, num.symbol_samples))
    y = np.zeros(np.broadcast_shapes(x.shape[:-2], chan.taps.shape[:-2])
                 + (num.n_symbols, num.symbol_samples), dtype=np.complex128)
    for t, d in enumerate(chan.delays):
        h = chan.taps[..., t, :, None]  # (..., n_symbols, 1)
        if d == 0:
            y += h * x
        else:
            y[..., d:] += h * x[..., :-d]
    if noise.sigma2 > 0:
        if rng is None:
            raise ValueError("rng is required to draw noise")
        w = rng.normal(size=y.shape + (2,), scale=np.sqrt(noise.sigma2 / 2.0))
        y = y + w[..., 0] + 1j * w[..., 1]
    return y.reshape(y.shape[:-2] + (num.slot_samples,))


def genie_frequency_response(chan: ChannelRealization, num: Numerology) -> np.ndarray:
    """Exact per-RE response ``H[k, l]`` on the data subcarriers.

    Returns ``(..., n_subcarriers, n_symbols)``; row k corresponds to grid
    row k (subcarrier offset ``k - n_subcarriers//2``).
    """
    offsets = np.arange(num.n_subcarriers) - num.n_subcarriers // 2
    delays = np.asarray(chan.delays)
    phase = np.exp(-2j * np.pi * offsets[:, None] * delays[None, :] / num.ifft_size)
    # (..., t, l) x (k, t) -> (..., k, l)
    return np.einsum("kt,...tl->...kl", phase, chan.taps)


def save_profile(profile: ChannelProfile, path: str | Path) -> None:
    """Write a profile as key=value lines."""
    lines = [
        f"kind={profile.kind}",
        "delays=" + ",".join(str(d) for d in profile.tap_delays),
        "powers=" + ",".join(f"{p:.17g}" for p in profile.tap_powers),
        f"rician_k={profile.rician_k:.17g}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def load_profile(path: str | Path) -> ChannelProfile:
    """Inverse of :func:`save_profile`."""
    fields = {}
    for line in Path(path).read_text().strip().splitlines():
        if not line or line.startswith("#"):
            continue
        key, _, val = line.partition("=")
        fields[key.strip()] = val.strip()
    try:
        return ChannelProfile(
            kind=fields["kind"],
            tap_delays=tuple(int(v) for v in fields["delays"].split(",")),
            tap_powers=tuple(float(v) for v in fields["powers"].split(",")),
            rician_k=float(fields.get("rician_k", "0")),
        )
    except KeyError as missing:
        raise ValueError(f"profile file {path} is missing field {missing}") from None
