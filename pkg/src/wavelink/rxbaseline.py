"""Conventional receiver: FFT front end, LS/LMMSE estimation, log-MAP bits.

The soft demapper follows the logit convention ``llr = log P(b=1|y) / P(b=0|y)``,
so a positive LLR votes for bit 1. After single-tap LMMSE equalization the
residual statistics per RE are fully described by the channel-and-noise ratio
``rho = |h|^2 / (|h|^2 + sigma2)``: the equalized symbol is the true symbol
scaled by rho plus an error of variance ``rho * (1 - rho)``, and demapping
against the rho-scaled constellation reproduces the optimal per-RE posterior
exactly.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from wavelink.channel import ChannelRealization, genie_frequency_response
from wavelink.grid import Constellation, Numerology, inband_bins
from wavelink.txchain import PilotConfig

LLR_CLAMP = 40.0
_VAR_FLOOR = 1e-30


def cp_remove_fft(wave: np.ndarray, num: Numerology) -> np.ndarray:
    """CP removal plus unitary FFT, keeping only the data subcarriers.

    Args:
        wave: received waveform ``(..., slot_samples)``.
        num: slot layout.

    Returns:
        Complex grid ``(..., n_subcarriers, n_symbols)``.
    """
    wave = np.asarray(wave, dtype=np.complex128)
    if wave.shape[-1] != num.slot_samples:
        raise ValueError(
            f"expected {num.slot_samples} samples per slot, got {wave.shape[-1]}"
        )
    x = wave.reshape(wave.shape[:-1] + (num.n_symbols, num.symbol_samples))
    body = x[..., num.cp_samples:]
    spec = np.fft.fft(body, axis=-1) / np.sqrt(num.ifft_size)
    spec = np.moveaxis(spec, -1, -2)  # (..., ifft, n_symbols)
    return spec[..., inband_bins(num), :]


def ls_estimate_interpolate(rx_grid: np.ndarray, pilots: PilotConfig,
                            num: Numerology) -> np.ndarray:
    """Least-squares channel estimate on the pilot comb, interpolated.

    Divides the received pilot REs by the known pilot values, interpolates
    linearly across frequency within each pilot symbol, then linearly across
    time between pilot symbols; outside the pilot span the nearest estimate
    is held (both directions via np.interp's clamping). Real and imaginary
    parts are interpolated independently.

    Args:
        rx_grid: ``(..., n_subcarriers, n_symbols)`` post-FFT grid.
        pilots: pilot layout; must be non-empty.
        num: slot layout.

    Returns:
        Channel estimate grid, same shape as the input.
    """
    if pilots.is_empty:
        raise ValueError("cannot estimate a channel without pilots")
    rx_grid = np.asarray(rx_grid, dtype=np.complex128)
    if rx_grid.shape[-2:] != (num.n_subcarriers, num.n_symbols):
        raise ValueError("rx_grid shape does not match the numerology")
    values = pilots.pilot_values(num)
    sym_idx = np.asarray(sorted(pilots.symbol_indices))
    sc_idx = np.arange(0, num.n_subcarriers, pilots.subcarrier_stride)
    all_sc = np.arange(num.n_subcarriers)

    batch = rx_grid.shape[:-2]
    flat = rx_grid.reshape((-1,) + rx_grid.shape[-2:])
    out = np.empty_like(flat)
    for b in range(flat.shape[0]):
        # frequency interpolation within each pilot symbol
        per_sym = np.empty((num.n_subcarriers, sym_idx.size), dtype=np.complex128)
        for i, l in enumerate(sym_idx):
            raw = flat[b, sc_idx, l] / values[sc_idx, l]
            per_sym[:, i] = (np.interp(all_sc, sc_idx, raw.real)
                             + 1j * np.interp(all_sc, sc_idx, raw.imag))
        # time interpolation between pilot symbols, clamped at the slot edges
        t = np.arange(num.n_symbols, dtype=np.float64)
        for k in range(num.n_subcarriers):
            out[b, k] = (np.interp(t, sym_idx, per_sym[k].real)
                         + 1j * np.interp(t, sym_idx, per_sym[k].imag))
    return out.reshape(batch + rx_grid.shape[-2:])


def lmmse_equalize(rx_grid: np.ndarray, h_hat: np.ndarray,
                   sigma2: float | np.ndarray) -> np.ndarray:
    """Single-tap LMMSE: ``s_hat = conj(h) y / (|h|^2 + sigma2)``.

    sigma2 may be scalar or broadcastable per slot (e.g. ``(batch, 1, 1)``).
    Where both h and sigma2 vanish the output is zero.
    """
    rx_grid = np.asarray(rx_grid, dtype=np.complex128)
    h_hat = np.asarray(h_hat, dtype=np.complex128)
    denom = np.abs(h_hat) ** 2 + sigma2
    safe = np.where(denom > 0, denom, 1.0)
    return np.where(denom > 0, np.conj(h_hat) * rx_grid / safe, 0.0)


def post_eq_stats(h_hat: np.ndarray, sigma2: float | np.ndarray):
    """Effective gain and residual variance of the LMMSE output.

    Returns ``(rho, nu)`` with ``rho = |h|^2 / (|h|^2 + sigma2)`` and
    ``nu = rho * (1 - rho)`` floored away from zero so the demapper stays
    finite in the noiseless limit.
    """
    mag2 = np.abs(np.asarray(h_hat)) ** 2
    denom = mag2 + sigma2
    rho = np.where(denom > 0, mag2 / np.where(denom > 0, denom, 1.0), 0.0)
    nu = np.maximum(rho * (1.0 - rho), _VAR_FLOOR)
    return rho, nu


def logmap_demap(s_hat: np.ndarray, const: Constellation,
                 noise_var: float | np.ndarray,
                 gain: float | np.ndarray = 1.0) -> np.ndarray:
    """Exact max-log-free bit LLRs for a Gaussian channel.

    Args:
        s_hat: observed symbols, any shape.
        const: candidate points.
        noise_var: complex Gaussian error variance per observation
            (broadcastable to s_hat's shape).
        gain: scale applied to the constellation before matching
            (broadcastable likewise); the LMMSE path passes rho here.

    Returns:
        ``s_hat.shape + (q_m,)`` array of LLRs, clamped to +-40, with
        ``llr > 0`` meaning bit 1.
    """
    s_hat = np.asarray(s_hat, dtype=np.complex128)
    nv = np.maximum(np.asarray(noise_var, dtype=np.float64), _VAR_FLOOR)
    g = np.asarray(gain)
    d2 = np.abs(s_hat[..., None] - g[..., None] * const.points) ** 2
    metric = -d2 / nv[..., None]
    labels = const.bit_labels()  # (m, q_m)
    ones = labels.T.astype(bool)  # (q_m, m)
    num = logsumexp(metric[..., None, :], axis=-1, b=ones)
    den = logsumexp(metric[..., None, :], axis=-1, b=~ones)
    return np.clip(num - den, -LLR_CLAMP, LLR_CLAMP)


def practical_receive(rx_grid: np.ndarray, pilots: PilotConfig, sigma2,
                      num: Numerology, const: Constellation) -> np.ndarray:
    """LS estimation, LMMSE equalization, and log-MAP demapping in one go."""
    h_hat = ls_estimate_interpolate(rx_grid, pilots, num)
    s_hat = lmmse_equalize(rx_grid, h_hat, sigma2)
    rho, nu = post_eq_stats(h_hat, sigma2)
    return logmap_demap(s_hat, const, nu, gain=rho)


def genie_receive(rx_grid: np.ndarray, chan: ChannelRealization, sigma2,
                  num: Numerology, const: Constellation,
                  tx_gain: float | np.ndarray = 1.0) -> np.ndarray:
    """Demap with perfect knowledge of the channel and the TX scaling.

    tx_gain is the net complex scalar between the constellation symbol and
    the channel input spectrum (normalization, backoff, and the amplifier's
    correlation gain); scalar or per-slot ``(batch, 1, 1)``.
    """
    h = genie_frequency_response(chan, num) * tx_gain
    s_hat = lmmse_equalize(rx_grid, h, sigma2)
    rho, nu = post_eq_stats(h, sigma2)
    return logmap_demap(s_hat, const, nu, gain=rho)


def ber(llrs: np.ndarray, truth_bits: np.ndarray,
        data_mask: np.ndarray | None = None) -> float:
    """Hard-decision bit error rate, optionally restricted to data REs.

    Args:
        llrs: ``(..., n_subcarriers, n_symbols, q_m)`` soft bits.
        truth_bits: transmitted bits, same shape.
        data_mask: optional ``(n_subcarriers, n_symbols)`` RE selector.

    Returns:
        Errors divided by counted bits.
    """
    llrs = np.asarray(llrs)
    truth_bits = np.asarray(truth_bits)
    if llrs.shape != truth_bits.shape:
        raise ValueError("llrs and truth_bits must have matching shapes")
    wrong = (llrs > 0) != truth_bits.astype(bool)
    if data_mask is not None:
        mask = np.broadcast_to(np.asarray(data_mask, dtype=bool)[..., None],
                               llrs.shape)
        total = int(mask.sum())
        if total == 0:
            raise ValueError("data_mask selects no resource elements")
        return float((wrong & mask).sum() / total)
    if llrs.size == 0:
        raise ValueError("no bits to count")
    return float(wrong.mean())
