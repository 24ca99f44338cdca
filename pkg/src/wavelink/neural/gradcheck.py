"""Finite-difference verification of autodiff gradients."""

from __future__ import annotations

import numpy as np

from wavelink.neural.tensor import Tensor


def numeric_grad(f, t: Tensor, indices, eps: float = 1e-6) -> np.ndarray:
    """Central differences of ``f()`` with respect to selected entries of t.

    Args:
        f: zero-argument callable returning a scalar Tensor; reads t.data.
        t: the tensor to perturb.
        indices: flat indices into t.data to probe.
        eps: half step size.

    Returns:
        One finite-difference slope per probed index.
    """
    flat = t.data.reshape(-1)
    out = np.empty(len(indices), dtype=np.float64)
    for n, i in enumerate(indices):
        keep = flat[i]
        flat[i] = keep + eps
        hi = float(f().data)
        flat[i] = keep - eps
        lo = float(f().data)
        flat[i] = keep
        out[n] = (hi - lo) / (2 * eps)
    return out


def check_gradients(f, tensors: dict, rng: np.random.Generator,
                    samples_per_tensor: int = 8, eps: float = 1e-6) -> float:
    """Compare backprop against finite differences on random coordinates.

    Args:
        f: zero-argument callable returning a scalar Tensor, rebuilt on each
            call from the live ``tensors`` data.
        tensors: name -> Tensor, each with requires_grad set.
        rng: picks which coordinates to probe.
        samples_per_tensor: coordinates checked per tensor.
        eps: finite-difference half step.

    Returns:
        The worst relative error max(|fd - an|) / max(1, |fd|, |an|)
        over all probed coordinates.
    """
    for t in tensors.values():
        t.zero_grad()
    loss = f()
    loss.backward()
    worst = 0.0
    for name, t in tensors.items():
        if t.grad is None:
            raise AssertionError(f"{name} received no gradient")
        n = min(samples_per_tensor, t.size)
        idx = rng.choice(t.size, size=n, replace=False)
        fd = numeric_grad(f, t, idx, eps=eps)
        an = t.grad.reshape(-1)[idx].astype(np.float64)
        scale = np.maximum(1.0, np.maximum(np.abs(fd), np.abs(an)))
        worst = max(worst, float(np.max(np.abs(fd - an) / scale)))
    return worst
