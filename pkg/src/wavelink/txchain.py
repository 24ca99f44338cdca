"""Transmit chain: slot assembly, OFDM modulation, CP handling, power control.

Waveforms are flat complex vectors, one slot per row for batched shapes:
``(..., n_symbols * ifft_size)`` before the cyclic prefix and
``(..., n_symbols * (ifft_size + cp_samples))`` after. All transforms are
unitary (scaled by ``1/sqrt(ifft_size)``), so Parseval holds exactly and the
modulate/demodulate pair is an isometry on the data bins.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from wavelink.grid import Numerology, ResourceGrid, inband_bins


@dataclass(frozen=True)
class PilotConfig:
    """Known QPSK reference symbols on a fixed comb.

    Pilots occupy every ``subcarrier_stride``-th subcarrier (starting at 0) of
    the listed OFDM symbols. Values are drawn once from ``seed`` and are the
    same for every slot, so the receiver can regenerate them. ``none()`` gives
    the empty layout used by the learned link.
    """

    symbol_indices: tuple[int, ...] = (2, 11)
    subcarrier_stride: int = 2
    seed: int = 2025

    def __post_init__(self):
        if len(set(self.symbol_indices)) != len(self.symbol_indices):
            raise ValueError("pilot symbol indices must be unique")
        if self.symbol_indices and self.subcarrier_stride < 1:
            raise ValueError("subcarrier_stride must be >= 1")

    @classmethod
    def none(cls) -> "PilotConfig":
        return cls(symbol_indices=(), subcarrier_stride=1)

    @property
    def is_empty(self) -> bool:
        return not self.symbol_indices

    def pilot_mask(self, num: Numerology) -> np.ndarray:
        """Boolean (n_subcarriers, n_symbols) map of pilot REs."""
        mask = np.zeros((num.n_subcarriers, num.n_symbols), dtype=bool)
        for l in self.symbol_indices:
            if not 0 <= l < num.n_symbols:
                raise ValueError(f"pilot symbol index {l} outside the slot")
            mask[:: self.subcarrier_stride, l] = True
        return mask

    def pilot_values(self, num: Numerology) -> np.ndarray:
        """Unit-power QPSK pilot grid, zero on non-pilot REs."""
        mask = self.pilot_mask(num)
        rng = np.random.default_rng(self.seed)
        quad = rng.integers(0, 4, size=mask.shape)
        vals = (1 - 2 * (quad & 1) + 1j * (1 - 2 * (quad >> 1))) / np.sqrt(2)
        return np.where(mask, vals, 0.0)


def assemble_slot(data_symbols: np.ndarray, pilots: PilotConfig,
                  num: Numerology) -> ResourceGrid:
    """Fill a slot grid with data symbols around the pilot comb.

    Args:
        data_symbols: complex vector, one value per data RE, consumed in
            column-major order (subcarrier fastest, then OFDM symbol).
        pilots: pilot layout; pilot REs take their fixed QPSK values.
        num: slot dimensions.

    Returns:
        ResourceGrid whose data_mask marks where the inputs went.
    """
    mask = pilots.pilot_mask(num)
    data_mask = ~mask
    data_symbols = np.asarray(data_symbols, dtype=np.complex128).ravel()
    n_data = int(data_mask.sum())
    if data_symbols.size != n_data:
        raise ValueError(f"expected {n_data} data symbols, got {data_symbols.size}")
    values = pilots.pilot_values(num).astype(np.complex128)
    # column-major fill: transpose so ravel order walks subcarriers first
    vt = values.T
    mt = data_mask.T
    vt[mt] = data_symbols
    return ResourceGrid(vt.T, data_mask)


def _check_grid(values: np.ndarray, num: Numerology) -> np.ndarray:
    values = np.asarray(values, dtype=np.complex128)
    if values.shape[-2:] != (num.n_subcarriers, num.n_symbols):
        raise ValueError(
            f"grid shape {values.shape[-2:]} does not match numerology "
            f"({num.n_subcarriers}, {num.n_symbols})"
        )
    return values


def ofdm_modulate(values: np.ndarray, num: Numerology) -> np.ndarray:
    """Unitary IFFT per OFDM symbol with the grid on the central bins.

    Args:
        values: complex grid ``(..., n_subcarriers, n_symbols)``.
        num: slot dimensions.

    Returns:
        Waveform ``(..., n_symbols * ifft_size)`` without cyclic prefixes.
    """
    values = _check_grid(values, num)
    shape = values.shape[:-2] + (num.ifft_size, num.n_symbols)
    spec = np.zeros(shape, dtype=np.complex128)
    spec[..., inband_bins(num), :] = values
    x = np.fft.ifft(spec, axis=-2) * np.sqrt(num.ifft_size)
    x = np.moveaxis(x, -1, -2)  # (..., n_symbols, ifft)
    return x.reshape(values.shape[:-2] + (num.n_symbols * num.ifft_size,))


def ofdm_demodulate(wave: np.ndarray, num: Numerology) -> np.ndarray:
    """Inverse of :func:`ofdm_modulate` for CP-free waveforms."""
    wave = np.asarray(wave, dtype=np.complex128)
    n = num.n_symbols * num.ifft_size
    if wave.shape[-1] != n:
        raise ValueError(f"expected {n} samples per slot, got {wave.shape[-1]}")
    x = wave.reshape(wave.shape[:-1] + (num.n_symbols, num.ifft_size))
    spec = np.fft.fft(np.moveaxis(x, -1, -2), axis=-2) / np.sqrt(num.ifft_size)
    return spec[..., inband_bins(num), :]


def add_cp(wave: np.ndarray, num: Numerology) -> np.ndarray:
    """Prepend the last cp_samples of each OFDM symbol to itself."""
    wave = np.asarray(wave)
    n = num.n_symbols * num.ifft_size
    if wave.shape[-1] != n:
        raise ValueError(f"expected {n} samples per slot, got {wave.shape[-1]}")
    x = wave.reshape(wave.shape[:-1] + (num.n_symbols, num.ifft_size))
    out = np.concatenate([x[..., num.ifft_size - num.cp_samples:], x], axis=-1)
    return out.reshape(wave.shape[:-1] + (num.slot_samples,))


def remove_cp(wave: np.ndarray, num: Numerology) -> np.ndarray:
    """Drop the first cp_samples of each OFDM symbol."""
    wave = np.asarray(wave)
    if wave.shape[-1] != num.slot_samples:
        raise ValueError(
            f"expected {num.slot_samples} samples per slot, got {wave.shape[-1]}"
        )
    x = wave.reshape(wave.shape[:-1] + (num.n_symbols, num.symbol_samples))
    return x[..., num.cp_samples:].reshape(
        wave.shape[:-1] + (num.n_symbols * num.ifft_size,))


def mean_power(wave: np.ndarray) -> np.ndarray:
    """Average |x|^2 over the last axis (per slot for batched input)."""
    wave = np.asarray(wave)
    return np.mean(np.abs(wave) ** 2, axis=-1)


def normalize_unit_power(wave: np.ndarray, return_scale: bool = False):
    """Scale each slot to unit average sample power.

    Args:
        wave: complex waveform, slots along the last axis.
        return_scale: also return the applied real scale factor per slot.

    Returns:
        The scaled waveform, optionally with the scale (shape ``wave.shape[:-1]``).
    """
    wave = np.asarray(wave, dtype=np.complex128)
    p = mean_power(wave)
    if np.any(p <= 0):
        raise ValueError("cannot normalize an all-zero waveform")
    scale = 1.0 / np.sqrt(p)
    out = wave * scale[..., None]
    if return_scale:
        return out, scale
    return out


def apply_backoff(wave: np.ndarray, backoff_db: float) -> np.ndarray:
    """Attenuate a unit-power waveform by ``backoff_db`` decibels.

    The input must already be normalized; driving the amplifier at a known
    distance below saturation is the whole point of the scale, so a
    non-normalized input is an upstream bug and is rejected.
    """
    if not np.isfinite(backoff_db):
        raise ValueError("backoff_db must be finite")
    wave = np.asarray(wave, dtype=np.complex128)
    p = mean_power(wave)
    if np.any(np.abs(p - 1.0) > 1e-6):
        raise ValueError("apply_backoff expects unit average power input")
    return wave * 10.0 ** (-backoff_db / 20.0)


def save_waveform_csv(wave: np.ndarray, path: str | Path) -> None:
    """Dump one slot as ``n,re,im`` rows for offline inspection."""
    wave = np.asarray(wave, dtype=np.complex128).ravel()
    lines = ["n,re,im"]
    for n, v in enumerate(wave):
        lines.append(f"{n},{v.real:.9g},{v.imag:.9g}")
    Path(path).write_text("\n".join(lines) + "\n")
