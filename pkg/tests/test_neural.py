"""Tests for the autodiff engine core and the signal ops."""

import numpy as np
import pytest

from wavelink.channel import ChannelRealization
from wavelink.grid import Numerology, inband_bins
from wavelink.neural.gradcheck import check_gradients
from wavelink.neural.signal import (
    channel_pair,
    fft_pair,
    from_pair,
    ifft_pair,
    pa_pair,
    to_pair,
)
from wavelink.neural.tensor import (
    Tensor,
    concat,
    gather,
    matmul,
    no_grad,
    scatter,
    stack_pair,
    take,
)
from wavelink.pa import DitherSpec, PaModel, fit_default_pa, pa_apply, pa_dither


def rand_t(rng, *shape, scale=1.0):
    return Tensor(scale * rng.standard_normal(shape), requires_grad=True)


class TestBasicOps:
    def test_add_mul_scalar_chain(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        y = ((x * 3.0 + 1.0) ** 2).sum()
        y.backward()
        # d/dx (3x+1)^2 = 6(3x+1)
        assert np.allclose(x.grad, [24.0, 42.0])

    def test_broadcast_add(self):
        rng = np.random.default_rng(0)
        a = rand_t(rng, 4, 3)
        b = rand_t(rng, 3)
        (a + b).sum().backward()
        assert a.grad.shape == (4, 3)
        assert np.allclose(b.grad, 4.0 * np.ones(3))

    def test_broadcast_mul_keepdims(self):
        rng = np.random.default_rng(1)
        a = rand_t(rng, 5, 2)
        s = rand_t(rng, 5, 1)
        (a * s).sum().backward()
        assert np.allclose(s.grad, a.data.sum(axis=1, keepdims=True))

    def test_div(self):
        rng = np.random.default_rng(2)
        a = rand_t(rng, 6)
        b = Tensor(rng.uniform(0.5, 2.0, 6), requires_grad=True)
        (a / b).sum().backward()
        assert np.allclose(a.grad, 1 / b.data)
        assert np.allclose(b.grad, -a.data / b.data ** 2)

    def test_mean_axis(self):
        rng = np.random.default_rng(3)
        a = rand_t(rng, 3, 4, 5)
        a.mean(axis=(1, 2)).sum().backward()
        assert np.allclose(a.grad, np.full((3, 4, 5), 1 / 20))

    def test_reshape_transpose_slice(self):
        rng = np.random.default_rng(4)
        a = rand_t(rng, 2, 3, 4)
        out = a.transpose((2, 0, 1)).reshape(4, 6)[1:3, ::2]
        out.sum().backward()
        assert a.grad.sum() == out.size
        assert a.grad.max() == 1.0 and set(np.unique(a.grad)) == {0.0, 1.0}

    def test_matmul_batched(self):
        rng = np.random.default_rng(5)
        x = rand_t(rng, 7, 3, 4)
        w = rand_t(rng, 4, 2)
        matmul(x, w).sum().backward()
        assert x.grad.shape == (7, 3, 4)
        assert w.grad.shape == (4, 2)
        ones = np.ones((7, 3, 2))
        assert np.allclose(w.grad, x.data.reshape(-1, 4).T @ ones.reshape(-1, 2))

    def test_second_backward_accumulates(self):
        x = Tensor(np.array([2.0]), requires_grad=True)
        y = (x * x).sum()
        y.backward()
        g1 = x.grad.copy()
        y2 = (x * x).sum()
        y2.backward()
        assert np.allclose(x.grad, 2 * g1)

    def test_diamond_graph(self):
        # the same node feeding two consumers must sum its gradients
        x = Tensor(np.array([3.0]), requires_grad=True)
        a = x * 2.0
        out = (a * a + a).sum()
        out.backward()
        # d/dx (4x^2 + 2x) = 8x + 2
        assert np.allclose(x.grad, [26.0])

    def test_backward_requires_scalar(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            (x * 2.0).backward()

    def test_no_grad_blocks_graph(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with no_grad():
            y = (x * 2.0).sum()
        assert not y.requires_grad and y._parents == ()
        assert x.grad is None


class TestNonlinearities:
    def test_finite_difference_sweep(self):
        rng = np.random.default_rng(6)
        x = rand_t(rng, 40, scale=0.8)
        w = x.data.copy()  # frozen weights: keeps the relu case nonlinear

        cases = {
            "tanh": lambda: x.tanh().sum(),
            "relu": lambda: (x.relu() * w).sum(),
            "exp": lambda: x.exp().sum(),
            "sigmoid": lambda: x.sigmoid().sum(),
            "softplus": lambda: x.softplus().sum(),
            "pow": lambda: ((x * x + 1.0) ** -0.5).sum(),
        }
        for name, f in cases.items():
            err = check_gradients(f, {"x": x}, np.random.default_rng(7))
            assert err < 1e-7, f"{name} gradient off by {err}"

    def test_log_sqrt_positive_domain(self):
        rng = np.random.default_rng(8)
        x = Tensor(rng.uniform(0.5, 3.0, 30), requires_grad=True)
        err = check_gradients(lambda: (x.log() + x.sqrt()).sum(),
                              {"x": x}, np.random.default_rng(9))
        assert err < 1e-7

    def test_clip_min(self):
        x = Tensor(np.array([0.5, 2.0]), requires_grad=True)
        y = x.clip_min(1.0).sum()
        assert y.item() == 3.0
        y.backward()
        assert np.allclose(x.grad, [0.0, 1.0])

    def test_softplus_stable_at_extremes(self):
        x = Tensor(np.array([-500.0, 0.0, 500.0]))
        y = x.softplus()
        assert np.all(np.isfinite(y.data))
        assert y.data[2] == pytest.approx(500.0)


class TestStructuralOps:
    def test_concat_split_grads(self):
        rng = np.random.default_rng(10)
        a = rand_t(rng, 2, 3)
        b = rand_t(rng, 2, 5)
        out = concat([a, b], axis=1)
        (out * out).sum().backward()
        assert np.allclose(a.grad, 2 * a.data)
        assert np.allclose(b.grad, 2 * b.data)

    def test_gather_accumulates_duplicates(self):
        table = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
        idx = np.array([0, 0, 2])
        gather(table, idx).sum().backward()
        assert np.allclose(table.grad, [2.0, 0.0, 1.0])

    def test_take_scatter_are_adjoint(self):
        rng = np.random.default_rng(11)
        x = rand_t(rng, 3, 8, 2)
        idx = np.array([1, 4, 6])
        y = take(x, idx, axis=1)
        assert y.shape == (3, 3, 2)
        y.sum().backward()
        expect = np.zeros_like(x.data)
        expect[:, idx] = 1.0
        assert np.allclose(x.grad, expect)

        z = scatter(y.detach(), idx, axis=1, size=8)
        assert z.shape == (3, 8, 2)
        assert np.allclose(np.take(z.data, idx, axis=1), y.data)

    def test_stack_pair(self):
        rng = np.random.default_rng(12)
        re = rand_t(rng, 4, 5)
        im = rand_t(rng, 4, 5)
        pair = stack_pair(re, im)
        assert pair.shape == (4, 5, 2)
        (pair[..., 0].sum() + (pair[..., 1] * 2.0).sum()).backward()
        assert np.allclose(re.grad, 1.0)
        assert np.allclose(im.grad, 2.0)


class TestSignalOps:
    def test_pair_conversions(self):
        rng = np.random.default_rng(13)
        c = rng.standard_normal(10) + 1j * rng.standard_normal(10)
        assert np.allclose(from_pair(to_pair(c, np.float64)), c)

    def test_fft_matches_numpy(self):
        rng = np.random.default_rng(14)
        c = rng.standard_normal((4, 16)) + 1j * rng.standard_normal((4, 16))
        x = Tensor(to_pair(c, np.float64))
        y = from_pair(fft_pair(x, axis=1))
        assert np.allclose(y, np.fft.fft(c, axis=1) / 4.0, atol=1e-12)
        z = from_pair(ifft_pair(Tensor(to_pair(c, np.float64)), axis=1))
        assert np.allclose(z, np.fft.ifft(c, axis=1) * 4.0, atol=1e-12)

    def test_fft_roundtrip_and_parseval(self):
        rng = np.random.default_rng(15)
        c = rng.standard_normal((3, 8)) + 1j * rng.standard_normal((3, 8))
        x = Tensor(to_pair(c, np.float64), requires_grad=True)
        back = ifft_pair(fft_pair(x, axis=1), axis=1)
        assert np.allclose(back.data, x.data, atol=1e-12)
        energy_t = (x * x).sum().item()
        energy_f = (fft_pair(x, axis=1) ** 2).sum().item()
        assert energy_t == pytest.approx(energy_f)

    def test_fft_adjoint_identity(self):
        # real inner products: <F x, y> == <x, F^-1 y> for the unitary pair
        rng = np.random.default_rng(16)
        x = Tensor(rng.standard_normal((5, 12, 2)), requires_grad=True)
        y = np.random.default_rng(17).standard_normal((5, 12, 2))
        fx = fft_pair(x, axis=1)
        (fx * y).sum().backward()
        expect = ifft_pair(Tensor(y), axis=1).data
        assert np.allclose(x.grad, expect, atol=1e-12)

    def test_fft_gradcheck(self):
        rng = np.random.default_rng(18)
        x = rand_t(rng, 2, 8, 2)
        target = np.random.default_rng(19).standard_normal((2, 8, 2))
        err = check_gradients(
            lambda: ((fft_pair(x, axis=1) - target) ** 2).sum(),
            {"x": x}, np.random.default_rng(20))
        assert err < 1e-8

    def test_pa_pair_forward_and_gradcheck(self):
        model = pa_dither(fit_default_pa(), DitherSpec(sigma=0.05),
                          np.random.default_rng(21))
        rng = np.random.default_rng(22)
        c = 0.5 * (rng.standard_normal(30) + 1j * rng.standard_normal(30))
        x = Tensor(to_pair(c, np.float64), requires_grad=True)
        out = pa_pair(x, model)
        assert np.allclose(from_pair(out), pa_apply(model, c), atol=1e-12)
        weights = np.random.default_rng(23).standard_normal(x.shape)
        err = check_gradients(lambda: (pa_pair(x, model) * weights).sum(),
                              {"x": x}, np.random.default_rng(24))
        assert err < 1e-7

    def test_channel_pair_matches_simulation(self):
        from wavelink.channel import ChannelProfile, NoiseSpec, apply_channel, sample_channel

        num = Numerology(n_subcarriers=12, n_symbols=4, bits_per_symbol=2,
                         cp_samples=9)
        prof = ChannelProfile("nlos", (0, 2, 5), (0.6, 0.3, 0.1))
        rng = np.random.default_rng(25)
        chan = sample_channel(prof, num, 8.0, 3.5e9, rng, size=(2,))
        wave = rng.standard_normal((2, num.slot_samples)) \
            + 1j * rng.standard_normal((2, num.slot_samples))
        ref = apply_channel(wave, chan, NoiseSpec.noiseless(), num)

        x = Tensor(to_pair(wave.reshape(2, num.n_symbols, num.symbol_samples),
                           np.float64))
        y = channel_pair(x, chan.taps, chan.delays)
        got = from_pair(y).reshape(2, num.slot_samples)
        assert np.max(np.abs(got - ref)) < 1e-12

    def test_channel_pair_gradcheck(self):
        rng = np.random.default_rng(26)
        taps = (rng.standard_normal((2, 3, 4)) + 1j * rng.standard_normal((2, 3, 4))) / 2
        delays = (0, 2, 5)
        x = rand_t(rng, 2, 4, 16, 2)
        weights = np.random.default_rng(27).standard_normal(x.shape)
        err = check_gradients(
            lambda: (channel_pair(x, taps, delays) * weights).sum(),
            {"x": x}, np.random.default_rng(28))
        assert err < 1e-7

    def test_channel_pair_adjoint_is_conjugate(self):
        # single tap with gain h: forward multiplies by h, backward by conj(h)
        h = 0.6 - 0.8j
        taps = np.full((1, 1, 2), h)  # batch 1, 1 tap, 2 symbols
        sig = np.array([[[1.0 + 0j, 1j], [2.0 + 0j, -1j]]])  # (1, 2 sym, 2 samp)
        x = Tensor(to_pair(sig, np.float64), requires_grad=True)
        y = channel_pair(x, taps, (0,))
        assert np.allclose(from_pair(y), h * sig)
        up = np.ones_like(x.data)
        y.backward(up)
        got = from_pair(x.grad)
        assert np.allclose(got, np.conj(h) * from_pair(up))
