"""Memoryless polynomial power amplifier and its analytic gradient.

The amplifier acts samplewise as ``phi(x) = sum_p f_p |x|^(p-1) x`` over odd
powers ``p = 1, 3, ..., order``, i.e. ``phi(x) = x * g(|x|^2)`` with ``g`` a
complex polynomial. The default model is a least-squares fit of that
polynomial to a Rapp soft limiter, which gives a smooth compressive AM-AM
curve with no AM-PM. Coefficient dithering generates families of slightly
different amplifiers for training and validation.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class PaModel:
    """Odd-order polynomial amplifier ``x -> x * g(|x|^2)``.

    coeffs[j] multiplies ``|x|^(2j) x``, so coeffs[0] is the linear gain and
    the represented order is ``2 * (len(coeffs) - 1) + 1``.
    """

    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.atleast_1d(np.asarray(self.coeffs, dtype=np.complex128))
        if coeffs.ndim != 1 or coeffs.size == 0:
            raise ValueError("coeffs must be a non-empty 1-D array")
        if coeffs[0] == 0:
            raise ValueError("linear coefficient must be nonzero")
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def order(self) -> int:
        return 2 * (self.coeffs.size - 1) + 1

    @classmethod
    def identity(cls) -> "PaModel":
        return cls(np.array([1.0 + 0.0j]))


@dataclass(frozen=True)
class DitherSpec:
    """Relative complex Gaussian perturbation of the PA coefficients."""

    sigma: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")


def rapp_am(r: np.ndarray, saturation: float = 1.0, smoothness: float = 2.0) -> np.ndarray:
    """Rapp soft-limiter AM-AM curve for non-negative input amplitude."""
    r = np.asarray(r, dtype=np.float64)
    return r / (1.0 + (r / saturation) ** (2 * smoothness)) ** (1.0 / (2 * smoothness))


def fit_default_pa(order: int = 17, saturation: float = 1.0,
                   smoothness: float = 2.0, fit_max: float = 1.2) -> PaModel:
    """Least-squares odd-polynomial fit to the Rapp limiter.

    Args:
        order: highest odd power kept in the model.
        saturation: Rapp saturation amplitude.
        smoothness: Rapp knee sharpness parameter.
        fit_max: amplitude range [0, fit_max] covered by the fit.

    Returns:
        PaModel whose AM-AM curve tracks the limiter to better than 1e-3
        (relative to the saturation amplitude) over the fitted range.
    """
    if order < 1 or order % 2 == 0:
        raise ValueError("order must be a positive odd integer")
    r = np.linspace(0.0, fit_max, 601)
    target = rapp_am(r, saturation, smoothness)
    n_terms = (order + 1) // 2
    # fit in the scaled variable u = r / fit_max to keep the basis conditioned
    u = r / fit_max
    powers = 2 * np.arange(n_terms) + 1
    a = u[:, None] ** powers[None, :]
    c, *_ = np.linalg.lstsq(a, target, rcond=None)
    rms = np.sqrt(np.mean((a @ c - target) ** 2)) / saturation
    if rms > 1e-3:
        raise RuntimeError(
            f"polynomial fit residual {rms:.2e} exceeds 1e-3; "
            "raise the order or shrink the fitted range"
        )
    return PaModel(c / fit_max ** powers.astype(np.float64))


def _gain_and_slope(model: PaModel, s: np.ndarray):
    """Evaluate g(s) and g'(s) by Horner's rule, s = |x|^2."""
    c = model.coeffs
    g = np.full_like(s, c[-1], dtype=np.complex128)
    for k in range(c.size - 2, -1, -1):
        g = g * s + c[k]
    if c.size == 1:
        return g, np.zeros_like(g)
    d = c[1:] * np.arange(1, c.size)
    gp = np.full_like(s, d[-1], dtype=np.complex128)
    for k in range(d.size - 2, -1, -1):
        gp = gp * s + d[k]
    return g, gp


def pa_apply(model: PaModel, wave: np.ndarray) -> np.ndarray:
    """Push a waveform through the amplifier samplewise."""
    wave = np.asarray(wave, dtype=np.complex128)
    if not np.all(np.isfinite(wave)):
        raise ValueError("waveform contains non-finite samples")
    s = (wave.real * wave.real + wave.imag * wave.imag)
    g, _ = _gain_and_slope(model, s)
    return wave * g


def pa_gradient(model: PaModel, wave: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Backpropagate through the amplifier, treating C as R^2.

    Args:
        model: the amplifier the forward pass used.
        wave: the forward-pass input samples.
        upstream: loss gradient at the output, packed as
            ``d/d(out.re) + 1j * d/d(out.im)``.

    Returns:
        Gradient with respect to the input, packed the same way. For the map
        ``phi = x g(s)`` with ``s = |x|^2`` the real-pair chain rule collapses
        to ``w * conj(g + s g') + conj(w) * x^2 g'``.
    """
    x = np.asarray(wave, dtype=np.complex128)
    w = np.asarray(upstream, dtype=np.complex128)
    s = x.real * x.real + x.imag * x.imag
    g, gp = _gain_and_slope(model, s)
    return w * np.conj(g + s * gp) + np.conj(w) * (x * x) * gp


def pa_dither(base: PaModel, spec: DitherSpec, rng: np.random.Generator | None = None) -> PaModel:
    """Randomly perturb each coefficient by a relative complex deviation."""
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    eps = rng.normal(size=base.coeffs.size) + 1j * rng.normal(size=base.coeffs.size)
    return PaModel(base.coeffs * (1.0 + spec.sigma * eps))


def amam(model: PaModel, r: np.ndarray) -> np.ndarray:
    """|phi(r)| for real non-negative input amplitude r."""
    r = np.asarray(r, dtype=np.float64)
    return np.abs(pa_apply(model, r.astype(np.complex128)))


def save_pa_csv(model: PaModel, path: str | Path) -> None:
    """Write the coefficients as ``p,re,im`` rows (p the odd power)."""
    lines = ["p,re,im"]
    for j, c in enumerate(model.coeffs):
        lines.append(f"{2 * j + 1},{c.real:.17g},{c.imag:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_pa_csv(path: str | Path) -> PaModel:
    """Inverse of :func:`save_pa_csv`."""
    lines = Path(path).read_text().strip().splitlines()
    if not lines or lines[0] != "p,re,im":
        raise ValueError(f"{path} is not a PA coefficient file")
    coeffs = {}
    for line in lines[1:]:
        p_s, re_s, im_s = line.split(",")
        p = int(p_s)
        if p < 1 or p % 2 == 0:
            raise ValueError(f"invalid power {p} in PA file")
        coeffs[(p - 1) // 2] = float(re_s) + 1j * float(im_s)
    n = max(coeffs) + 1
    out = np.zeros(n, dtype=np.complex128)
    for j, c in coeffs.items():
        out[j] = c
    return PaModel(out)
