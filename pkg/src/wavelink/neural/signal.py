"""Differentiable signal ops on re/im pair tensors.

Complex signals travel through the graph as real arrays with a trailing axis
of length 2. The unitary FFT pair are exact adjoints of each other, so each
op's backward pass is simply the opposite transform; the amplifier op reuses
the analytic gradient from :mod:`wavelink.pa`; the channel op backpropagates
through the fixed tap values (conjugate taps, reversed shifts) while treating
the taps themselves as constants.
"""

from __future__ import annotations

import numpy as np

from wavelink.neural.tensor import Tensor, _node, _PENDING, _accum
from wavelink.pa import PaModel, pa_apply, pa_gradient


def to_pair(x: np.ndarray, dtype=np.float32) -> np.ndarray:
    """Complex ndarray -> trailing re/im axis."""
    x = np.asarray(x)
    return np.stack([x.real, x.imag], axis=-1).astype(dtype)


def from_pair(x: np.ndarray) -> np.ndarray:
    """Trailing re/im axis -> complex ndarray (float32 pairs -> complex64)."""
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    return data[..., 0] + 1j * data[..., 1]


def _pack(c: np.ndarray, dtype) -> np.ndarray:
    return np.stack([c.real, c.imag], axis=-1).astype(dtype, copy=False)


def _complex_view(data: np.ndarray) -> np.ndarray:
    return data[..., 0] + 1j * data[..., 1]


def fft_pair(x: Tensor, axis: int) -> Tensor:
    """Unitary FFT along a signal axis of a (..., 2) pair tensor."""
    return _fourier(x, axis, forward=True)


def ifft_pair(x: Tensor, axis: int) -> Tensor:
    """Unitary inverse FFT along a signal axis of a (..., 2) pair tensor."""
    return _fourier(x, axis, forward=False)


def _fourier(x: Tensor, axis: int, forward: bool) -> Tensor:
    if axis == x.ndim - 1 or x.shape[-1] != 2:
        raise ValueError("expected a (..., 2) pair tensor and a non-pair axis")
    c = _complex_view(x.data)
    n = c.shape[axis]
    root = np.sqrt(np.asarray(n, dtype=x.data.dtype))
    if forward:
        y = np.fft.fft(c, axis=axis) / root
    else:
        y = np.fft.ifft(c, axis=axis) * root
    out = _node(_pack(y, x.data.dtype), (x,))
    if out._backward is _PENDING:
        def _bw(g):
            gc = _complex_view(g)
            # the adjoint of a unitary transform is its inverse
            if forward:
                b = np.fft.ifft(gc, axis=axis) * root
            else:
                b = np.fft.fft(gc, axis=axis) / root
            _accum(x, _pack(b, x.data.dtype))
        out._backward = _bw
    return out


def pa_pair(x: Tensor, model: PaModel) -> Tensor:
    """Apply the polynomial amplifier samplewise to a pair tensor."""
    if x.shape[-1] != 2:
        raise ValueError("expected a (..., 2) pair tensor")
    c = _complex_view(x.data)
    y = pa_apply(model, c)
    out = _node(_pack(y, x.data.dtype), (x,))
    if out._backward is _PENDING:
        def _bw(g):
            up = _complex_view(g)
            grad = pa_gradient(model, c, up)
            _accum(x, _pack(grad, x.data.dtype))
        out._backward = _bw
    return out


def channel_pair(x: Tensor, taps: np.ndarray, delays: tuple) -> Tensor:
    """Per-symbol tapped delay line on a (..., n_symbols, L, 2) pair tensor.

    taps is a constant complex array ``(..., n_taps, n_symbols)``; gradients
    flow through the signal only. The convolution keeps the first L outputs
    of each symbol, matching the simulation channel.
    """
    if x.shape[-1] != 2 or x.ndim < 3:
        raise ValueError("expected a (..., n_symbols, L, 2) pair tensor")
    c = _complex_view(x.data)  # (..., n_symbols, L)
    taps = np.asarray(taps, dtype=np.complex128)
    y = np.zeros(np.broadcast_shapes(c.shape[:-2], taps.shape[:-2])
                 + c.shape[-2:], dtype=c.dtype)
    for t, d in enumerate(delays):
        h = taps[..., t, :, None].astype(c.dtype)
        if d == 0:
            y += h * c
        else:
            y[..., d:] += h * c[..., :-d]
    out = _node(_pack(y, x.data.dtype), (x,))
    if out._backward is _PENDING:
        def _bw(g):
            gc = _complex_view(g)
            back = np.zeros_like(c)
            for t, d in enumerate(delays):
                h = np.conj(taps[..., t, :, None]).astype(c.dtype)
                if d == 0:
                    back += h * gc
                else:
                    back[..., :-d] += h * gc[..., d:]
            _accum(x, _pack(back, x.data.dtype))
        out._backward = _bw
    return out
