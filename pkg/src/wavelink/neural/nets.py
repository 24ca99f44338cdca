"""Network blocks: pointwise TX shaping net and the residual receiver CNN.

Convolutions run channels-last over the resource grid, ``(batch,
n_subcarriers, n_symbols, channels)``, with zero 'same' padding and optional
dilation per axis. There is no normalization anywhere; residual blocks are
pre-activation (relu before each conv) with an identity shortcut, or a 1x1
projection where the channel count changes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from wavelink.neural.tensor import Tensor, _PENDING, _accum, _node, matmul


def he_uniform(rng: np.random.Generator, shape: tuple, dtype=np.float32) -> np.ndarray:
    """He-style uniform init; fan-in is everything but the last axis."""
    fan_in = int(np.prod(shape[:-1]))
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None,
           dilation: tuple[int, int] = (1, 1)) -> Tensor:
    """2-D convolution, channels last, zero 'same' padding.

    Args:
        x: ``(batch, height, width, c_in)`` input.
        w: ``(kh, kw, c_in, c_out)`` kernel; odd spatial dims.
        b: optional ``(c_out,)`` bias.
        dilation: kernel hole spacing per spatial axis.

    Returns:
        ``(batch, height, width, c_out)`` tensor.
    """
    kh, kw, c_in, c_out = w.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError("conv2d expects odd kernel sizes")
    if x.ndim != 4 or x.shape[-1] != c_in:
        raise ValueError(
            f"input shape {x.shape} does not match kernel c_in={c_in}")
    dh, dw = dilation
    ph, pw = (kh - 1) * dh // 2, (kw - 1) * dw // 2
    bsz, h, wdt, _ = x.shape
    xp = np.zeros((bsz, h + 2 * ph, wdt + 2 * pw, c_in), dtype=x.data.dtype)
    xp[:, ph:ph + h, pw:pw + wdt] = x.data
    cols = np.empty((bsz, h, wdt, kh * kw, c_in), dtype=x.data.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, :, i * kw + j] = xp[:, i * dh:i * dh + h, j * dw:j * dw + wdt]
    k = kh * kw * c_in
    flat = cols.reshape(-1, k)
    out_data = (flat @ w.data.reshape(k, c_out)).reshape(bsz, h, wdt, c_out)
    if b is not None:
        out_data = out_data + b.data
    parents = (x, w) if b is None else (x, w, b)
    out = _node(out_data, parents)
    if out._backward is _PENDING:
        def _bw(g):
            gm = g.reshape(-1, c_out)
            if w.requires_grad:
                _accum(w, (flat.T @ gm).reshape(kh, kw, c_in, c_out))
            if b is not None and b.requires_grad:
                _accum(b, g.sum(axis=(0, 1, 2)))
            if x.requires_grad:
                dcols = (gm @ w.data.reshape(k, c_out).T).reshape(
                    bsz, h, wdt, kh * kw, c_in)
                dxp = np.zeros_like(xp)
                for i in range(kh):
                    for j in range(kw):
                        dxp[:, i * dh:i * dh + h, j * dw:j * dw + wdt] += \
                            dcols[:, :, :, i * kw + j]
                _accum(x, dxp[:, ph:ph + h, pw:pw + wdt])
        out._backward = _bw
    return out


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map on the trailing axis: ``x @ w + b``."""
    return matmul(x, w) + b


@dataclass
class TxCnn:
    """Two pointwise layers shaping the time-domain samples before the PA.

    Acts on re/im pairs: 2 -> 8 hidden units with tanh -> 2 linear outputs.
    The init is an analytic near-identity: two tanh units per output
    dimension combined as ``(-tanh(s x) / 3 + 8 tanh(s x / 2) / 3) / s``
    cancel the cubic term, leaving an x^5-order error, so training starts
    from a transparent transmitter. The remaining four hidden units start
    with small random inputs and exactly zero output weights.
    """

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    @classmethod
    def passthrough(cls, scale: float = 0.25, rng: np.random.Generator | None = None,
                    spare: float = 0.05, dtype=np.float32) -> "TxCnn":
        """Identity-like init; smaller ``scale`` tightens the approximation."""
        w1 = np.zeros((2, 8), dtype=dtype)
        w2 = np.zeros((8, 2), dtype=dtype)
        for dim in (0, 1):
            w1[dim, 4 * dim + 0] = scale
            w1[dim, 4 * dim + 1] = scale / 2.0
            w2[4 * dim + 0, dim] = -1.0 / (3.0 * scale)
            w2[4 * dim + 1, dim] = 8.0 / (3.0 * scale)
        if rng is not None and spare > 0:
            w1[:, 2:4] = spare * rng.standard_normal((2, 2))
            w1[:, 6:8] = spare * rng.standard_normal((2, 2))
        return cls(
            w1=Tensor(w1, requires_grad=True),
            b1=Tensor(np.zeros(8, dtype=dtype), requires_grad=True),
            w2=Tensor(w2, requires_grad=True),
            b2=Tensor(np.zeros(2, dtype=dtype), requires_grad=True),
        )

    def __call__(self, x: Tensor) -> Tensor:
        """x: (..., 2) pair tensor; returns the same shape."""
        flat = x.reshape((-1, 2))
        hidden = dense(flat, self.w1, self.b1).tanh()
        out = dense(hidden, self.w2, self.b2)
        return out.reshape(x.shape)

    def tensors(self, prefix: str = "txcnn") -> dict[str, Tensor]:
        return {f"{prefix}.w1": self.w1, f"{prefix}.b1": self.b1,
                f"{prefix}.w2": self.w2, f"{prefix}.b2": self.b2}


@dataclass(frozen=True)
class BlockSpec:
    """Channel width and dilation of one residual block."""

    filters: int
    dilation: tuple[int, int] = (1, 1)


# full-scale receiver: 11 blocks, wider dilated middle
RX_SCHEDULE_FULL = (
    BlockSpec(32), BlockSpec(32), BlockSpec(32),
    BlockSpec(64, (2, 3)), BlockSpec(64, (2, 3)), BlockSpec(64, (3, 6)),
    BlockSpec(64, (2, 3)), BlockSpec(64, (2, 3)),
    BlockSpec(32), BlockSpec(32), BlockSpec(32),
)

# desk-scale receiver: 5 narrow blocks with one dilated bump
RX_SCHEDULE_DESK = (
    BlockSpec(32), BlockSpec(32, (2, 3)), BlockSpec(32, (3, 6)),
    BlockSpec(32, (2, 3)), BlockSpec(32),
)


@dataclass
class ResBlock:
    """Pre-activation residual block with optional 1x1 projection."""

    spec: BlockSpec
    conv1_w: Tensor
    conv1_b: Tensor
    conv2_w: Tensor
    conv2_b: Tensor
    proj_w: Tensor | None = None
    proj_b: Tensor | None = None

    @classmethod
    def init(cls, rng: np.random.Generator, c_in: int, spec: BlockSpec,
             dtype=np.float32) -> "ResBlock":
        c_out = spec.filters
        mk = lambda shape: Tensor(he_uniform(rng, shape, dtype), requires_grad=True)
        zeros = lambda n: Tensor(np.zeros(n, dtype=dtype), requires_grad=True)
        block = cls(
            spec=spec,
            conv1_w=mk((3, 3, c_in, c_out)), conv1_b=zeros(c_out),
            conv2_w=mk((3, 3, c_out, c_out)), conv2_b=zeros(c_out),
        )
        if c_in != c_out:
            block.proj_w = mk((1, 1, c_in, c_out))
            block.proj_b = zeros(c_out)
        return block

    def __call__(self, x: Tensor) -> Tensor:
        h = conv2d(x.relu(), self.conv1_w, self.conv1_b, self.spec.dilation)
        h = conv2d(h.relu(), self.conv2_w, self.conv2_b, self.spec.dilation)
        if self.proj_w is not None:
            x = conv2d(x, self.proj_w, self.proj_b)
        return x + h

    def tensors(self, prefix: str) -> dict[str, Tensor]:
        out = {f"{prefix}.conv1.w": self.conv1_w, f"{prefix}.conv1.b": self.conv1_b,
               f"{prefix}.conv2.w": self.conv2_w, f"{prefix}.conv2.b": self.conv2_b}
        if self.proj_w is not None:
            out[f"{prefix}.proj.w"] = self.proj_w
            out[f"{prefix}.proj.b"] = self.proj_b
        return out


@dataclass
class DeepRx:
    """Residual CNN mapping the received grid to per-bit logits.

    Input is the raw post-FFT grid as re/im channels; output is one logit per
    bit whose sign is the hard decision and whose value is the LLR under the
    ``log P(b=1)/P(b=0)`` convention.
    """

    stem_w: Tensor
    stem_b: Tensor
    blocks: list
    head_w: Tensor
    head_b: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, q_m: int,
             schedule: tuple = RX_SCHEDULE_FULL, c_in: int = 2,
             stem_filters: int = 32, dtype=np.float32) -> "DeepRx":
        mk = lambda shape: Tensor(he_uniform(rng, shape, dtype), requires_grad=True)
        zeros = lambda n: Tensor(np.zeros(n, dtype=dtype), requires_grad=True)
        stem_w = mk((3, 3, c_in, stem_filters))
        stem_b = zeros(stem_filters)
        blocks = []
        ch = stem_filters
        for spec in schedule:
            blocks.append(ResBlock.init(rng, ch, spec, dtype))
            ch = spec.filters
        return cls(stem_w=stem_w, stem_b=stem_b, blocks=blocks,
                   head_w=mk((1, 1, ch, q_m)), head_b=zeros(q_m))

    def __call__(self, grid_pair: Tensor) -> Tensor:
        """grid_pair: (batch, n_subcarriers, n_symbols, 2) -> (..., q_m) logits."""
        h = conv2d(grid_pair, self.stem_w, self.stem_b)
        for block in self.blocks:
            h = block(h)
        return conv2d(h, self.head_w, self.head_b)

    def tensors(self, prefix: str = "deeprx") -> dict[str, Tensor]:
        out = {f"{prefix}.stem.w": self.stem_w, f"{prefix}.stem.b": self.stem_b}
        for i, block in enumerate(self.blocks):
            out.update(block.tensors(f"{prefix}.block{i}"))
        out[f"{prefix}.head.w"] = self.head_w
        out[f"{prefix}.head.b"] = self.head_b
        return out

    def n_params(self) -> int:
        return sum(t.size for t in self.tensors().values())
