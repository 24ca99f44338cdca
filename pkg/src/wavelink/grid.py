"""Numerology, resource grids, and bit/constellation mapping.

Conventions used across the package:

* A slot grid is a complex array of shape ``(n_subcarriers, n_symbols)``;
  batched variants prepend leading axes.
* Bit words are big endian: the first bit of a label is the most significant
  bit of the constellation point index.
* Data subcarriers occupy the central bins of the oversampled FFT, symmetric
  around DC (DC itself carries data): grid row ``i`` maps to FFT bin
  ``(i - n_subcarriers//2) mod ifft_size``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

# default CP duration; at 30 kHz SCS and 2x oversampling this rounds to 23 samples
CP_DURATION_S = 2.7e-6


@dataclass(frozen=True)
class Numerology:
    """OFDM slot dimensions and sampling parameters.

    The default values correspond to the full-scale link (144 subcarriers,
    64-QAM); ``Numerology.desk()`` gives the reduced configuration used for
    fast end-to-end runs.
    """

    n_subcarriers: int = 144
    n_symbols: int = 14
    oversampling: int = 2
    scs_hz: float = 30e3
    bits_per_symbol: int = 6
    cp_samples: int = -1  # -1 means "derive from CP_DURATION_S"

    def __post_init__(self):
        if self.n_subcarriers <= 0 or self.n_subcarriers % 2:
            raise ValueError("n_subcarriers must be positive and even")
        if self.n_symbols <= 0:
            raise ValueError("n_symbols must be positive")
        if self.oversampling < 1:
            raise ValueError("oversampling must be >= 1")
        if self.scs_hz <= 0:
            raise ValueError("scs_hz must be positive")
        if self.bits_per_symbol < 1:
            raise ValueError("bits_per_symbol must be >= 1")
        if self.cp_samples == -1:
            cp = int(round(CP_DURATION_S * self.ifft_size * self.scs_hz))
            object.__setattr__(self, "cp_samples", cp)
        if not 0 <= self.cp_samples < self.ifft_size:
            raise ValueError("cp_samples must lie in [0, ifft_size)")

    @classmethod
    def desk(cls) -> "Numerology":
        """Reduced numerology for desk-scale training and tests."""
        return cls(n_subcarriers=72, bits_per_symbol=4)

    @property
    def ifft_size(self) -> int:
        return self.oversampling * self.n_subcarriers

    @property
    def sample_rate_hz(self) -> float:
        return self.ifft_size * self.scs_hz

    @property
    def symbol_samples(self) -> int:
        """Samples per OFDM symbol including the cyclic prefix."""
        return self.ifft_size + self.cp_samples

    @property
    def slot_samples(self) -> int:
        return self.n_symbols * self.symbol_samples

    @property
    def symbol_duration_s(self) -> float:
        return self.symbol_samples / self.sample_rate_hz

    @property
    def n_bits(self) -> int:
        """Bits carried by one slot when every RE is data."""
        return self.n_subcarriers * self.n_symbols * self.bits_per_symbol


def inband_bins(num: Numerology) -> np.ndarray:
    """FFT bin index for every grid row, in row order.

    Row ``i`` (subcarrier offset ``i - n_subcarriers//2`` relative to DC)
    lands on bin ``offset mod ifft_size``, so the first half of the grid sits
    at the top of the FFT output and the second half at the bottom.
    """
    offsets = np.arange(num.n_subcarriers) - num.n_subcarriers // 2
    return offsets % num.ifft_size


def oob_bins(num: Numerology) -> np.ndarray:
    """FFT bins not occupied by data subcarriers, ascending."""
    return np.setdiff1d(np.arange(num.ifft_size), inband_bins(num))


@dataclass(frozen=True)
class Constellation:
    """A set of ``2**q_m`` complex points indexed by big-endian bit words."""

    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        re = np.asarray(self.re, dtype=np.float64)
        im = np.asarray(self.im, dtype=np.float64)
        if re.ndim != 1 or re.shape != im.shape:
            raise ValueError("re and im must be 1-D arrays of equal length")
        m = re.size
        if m < 2 or m & (m - 1):
            raise ValueError(f"constellation size must be a power of two >= 2, got {m}")
        object.__setattr__(self, "re", re)
        object.__setattr__(self, "im", im)

    @classmethod
    def from_points(cls, points: np.ndarray) -> "Constellation":
        points = np.asarray(points, dtype=np.complex128)
        return cls(points.real.copy(), points.imag.copy())

    @property
    def points(self) -> np.ndarray:
        return self.re + 1j * self.im

    @property
    def size(self) -> int:
        return self.re.size

    @property
    def q_m(self) -> int:
        return int(self.size).bit_length() - 1

    def bit_labels(self) -> np.ndarray:
        """(size, q_m) array of the bit word for each point index."""
        return index_to_bits(np.arange(self.size), self.q_m)


def bits_to_index(bits: np.ndarray) -> np.ndarray:
    """Collapse a trailing bit axis into integer indices, big endian."""
    bits = np.asarray(bits)
    q_m = bits.shape[-1]
    weights = 1 << np.arange(q_m - 1, -1, -1)
    return bits.astype(np.int64) @ weights


def index_to_bits(idx: np.ndarray, q_m: int) -> np.ndarray:
    """Expand integer indices into a trailing big-endian bit axis."""
    idx = np.asarray(idx, dtype=np.int64)
    shifts = np.arange(q_m - 1, -1, -1)
    return ((idx[..., None] >> shifts) & 1).astype(np.int8)


def _gray_decode(g: np.ndarray, n_bits: int) -> np.ndarray:
    """Inverse of the reflected Gray code ``b ^ (b >> 1)``."""
    b = g.copy()
    for k in range(1, n_bits):
        b ^= g >> k
    return b


def build_qam_constellation(q_m: int) -> Constellation:
    """Gray-labelled square QAM with exactly unit average power.

    The bit word interleaves the two axes: even-position bits Gray-code the
    real level, odd-position bits the imaginary level, so any two points
    adjacent in the I/Q plane differ in exactly one bit.
    """
    if q_m < 2 or q_m % 2:
        raise ValueError(f"square QAM needs an even number of bits per symbol, got {q_m}")
    k = q_m // 2
    levels = 1 << k
    labels = index_to_bits(np.arange(1 << q_m), q_m)
    gray_i = bits_to_index(labels[:, 0::2])
    gray_q = bits_to_index(labels[:, 1::2])
    # Gray value -> level rank -> symmetric odd-integer amplitude; the all-zero
    # word lands on the most positive corner so QPSK follows the 1-2b rule
    amp_i = (levels - 1) - 2 * _gray_decode(gray_i, k)
    amp_q = (levels - 1) - 2 * _gray_decode(gray_q, k)
    scale = 1.0 / np.sqrt(2.0 * (levels * levels - 1) / 3.0)
    return Constellation(amp_i * scale, amp_q * scale)


def normalize_constellation(const: Constellation) -> Constellation:
    """Remove the mean and scale to unit average power.

    The scale uses the centered second moment, so the output has zero mean
    and ``mean(|c|^2) == 1``. Affine maps of the input change the output only
    by the input scaling's phase.
    """
    points = const.points
    mean = points.mean()
    var = np.mean(np.abs(points) ** 2) - np.abs(mean) ** 2
    if var < 1e-24:
        raise ValueError("degenerate constellation: all points (nearly) coincide")
    out = (points - mean) / np.sqrt(var)
    return Constellation.from_points(out)


def map_bits(bits: np.ndarray, const: Constellation) -> np.ndarray:
    """Map a ``(..., q_m)`` bit array onto constellation points.

    Args:
        bits: 0/1 integers; the trailing axis is one symbol's bit word.
        const: the constellation to index.

    Returns:
        Complex array with the trailing bit axis removed.
    """
    bits = np.asarray(bits)
    if bits.shape[-1] != const.q_m:
        raise ValueError(
            f"bit word length {bits.shape[-1]} does not match constellation q_m={const.q_m}"
        )
    if bits.size and (bits.min() < 0 or bits.max() > 1):
        raise ValueError("bits must be 0 or 1")
    return const.points[bits_to_index(bits)]


def hard_demap(values: np.ndarray, const: Constellation) -> np.ndarray:
    """Nearest-point decision; returns the ``(..., q_m)`` bit array."""
    values = np.asarray(values, dtype=np.complex128)
    idx = np.abs(values[..., None] - const.points).argmin(axis=-1)
    return index_to_bits(idx, const.q_m)


@dataclass(frozen=True)
class ResourceGrid:
    """Complex symbol values for one slot plus a data/pilot marker per RE."""

    values: np.ndarray
    data_mask: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        mask = np.asarray(self.data_mask, dtype=bool)
        if values.ndim != 2 or values.shape != mask.shape:
            raise ValueError("values and data_mask must be 2-D with matching shape")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "data_mask", mask)

    @property
    def n_data(self) -> int:
        return int(self.data_mask.sum())


def save_constellation_csv(const: Constellation, path: str | Path) -> None:
    """Write ``x,y,label`` rows, label being the big-endian bit string."""
    labels = const.bit_labels()
    lines = ["x,y,label"]
    for i in range(const.size):
        word = "".join(str(int(b)) for b in labels[i])
        lines.append(f"{const.re[i]:.9g},{const.im[i]:.9g},{word}")
    Path(path).write_text("\n".join(lines) + "\n")
