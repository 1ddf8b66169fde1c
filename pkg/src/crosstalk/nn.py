"""Parameterized layers built on the autodiff primitives.

Initialization follows uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) for linear
and convolution weights and biases; layer norms start at gain 1 / bias 0.
Every layer takes the RNG it should draw from, so a model built twice from
the same seed is parameter-identical.
"""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import autodiff as F
from .autodiff import Tensor
from .errors import ConfigError


class Module:
    """Container base class; walks attributes to enumerate parameters."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for attr, value in vars(self).items():
            name = f"{prefix}.{attr}" if prefix else attr
            yield from _walk(name, value)

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()


def _walk(name: str, value) -> Iterator[tuple[str, Tensor]]:
    if isinstance(value, Tensor):
        if value.requires_grad:
            yield name, value
    elif isinstance(value, Module):
        yield from value.named_parameters(prefix=name)
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk(f"{name}.{i}", item)


def _uniform(rng: np.random.Generator, fan_in: int, shape: tuple[int, ...]) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator,
                 bias: bool = True, zero_init: bool = False):
        if zero_init:
            w = np.zeros((fan_in, fan_out))
            b = np.zeros(fan_out)
        else:
            w = _uniform(rng, fan_in, (fan_in, fan_out))
            b = _uniform(rng, fan_in, (fan_out,))
        self.w = Tensor(w, requires_grad=True)
        self.b = Tensor(b, requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        # Fold leading axes into one matmul; a single big dgemm beats a
        # batched stack of small ones, and its rows are computed
        # independently, so per-row results do not depend on batch makeup.
        lead = x.shape[:-1]
        flat = F.reshape(x, (-1, x.shape[-1])) if x.ndim != 2 else x
        y = F.matmul(flat, self.w)
        if self.b is not None:
            y = y + self.b
        return F.reshape(y, lead + (self.w.shape[1],)) if x.ndim != 2 else y


class LayerNorm(Module):
    def __init__(self, channels: int, eps: float = 1e-5):
        self.gain = Tensor(np.ones(channels), requires_grad=True)
        self.bias = Tensor(np.zeros(channels), requires_grad=True)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.gain, self.bias, self.eps)


class MLP(Module):
    """Two-layer perceptron with ReLU, hidden width = ratio * channels."""

    def __init__(self, channels: int, rng: np.random.Generator, ratio: int = 4,
                 zero_out: bool = False):
        hidden = ratio * channels
        self.lin1 = Linear(channels, hidden, rng)
        self.lin2 = Linear(hidden, channels, rng, zero_init=zero_out)

    def __call__(self, x: Tensor) -> Tensor:
        return self.lin2(F.relu(self.lin1(x)))


class MultiHeadAttention(Module):
    """Scaled dot-product attention with learned q/k/v/output projections.

    Inputs are [B, T, C]; callers fold any extra leading axes into B. The
    per-head scale is 1/sqrt(C / heads).
    """

    def __init__(self, channels: int, heads: int, rng: np.random.Generator):
        if channels % heads != 0:
            raise ConfigError(f"channels {channels} not divisible by heads {heads}")
        self.heads = heads
        self.head_dim = channels // heads
        self.wq = Linear(channels, channels, rng)
        self.wk = Linear(channels, channels, rng)
        self.wv = Linear(channels, channels, rng)
        self.wo = Linear(channels, channels, rng)

    def __call__(self, q: Tensor, k: Tensor, v: Tensor) -> Tensor:
        b, tq, c = q.shape
        tk = k.shape[1]
        h, d = self.heads, self.head_dim

        def split(x: Tensor, t: int) -> Tensor:
            return F.transpose(F.reshape(x, (b, t, h, d)), (0, 2, 1, 3))

        qh = split(self.wq(q), tq)
        kh = split(self.wk(k), tk)
        vh = split(self.wv(v), tk)
        scores = F.scale(F.matmul(qh, F.transpose(kh, (0, 1, 3, 2))), 1.0 / math.sqrt(d))
        attn = F.softmax(scores, axis=-1)
        ctx = F.matmul(attn, vh)
        merged = F.reshape(F.transpose(ctx, (0, 2, 1, 3)), (b, tq, c))
        return self.wo(merged)


class Conv2d(Module):
    """Same-padded NHWC convolution layer (odd kernel)."""

    def __init__(self, kernel: tuple[int, int], cin: int, cout: int,
                 rng: np.random.Generator, stride: int = 1):
        kh, kw = kernel
        fan_in = kh * kw * cin
        self.w = Tensor(_uniform(rng, fan_in, (kh, kw, cin, cout)), requires_grad=True)
        self.b = Tensor(_uniform(rng, fan_in, (cout,)), requires_grad=True)
        self.stride = stride

    def __call__(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.w, self.b, self.stride)


class GridConv(Module):
    """Convolution over the speaker x time grid, kernel (speakers, frames)."""

    def __init__(self, kernel: tuple[int, int], cin: int, cout: int,
                 rng: np.random.Generator, zero_init: bool = False):
        ks, kt = kernel
        if kt % 2 == 0:
            raise ConfigError(f"temporal kernel must be odd, got {kt}")
        fan_in = ks * kt * cin
        w = np.zeros((ks, kt, cin, cout)) if zero_init else _uniform(rng, fan_in, (ks, kt, cin, cout))
        b = np.zeros(cout) if zero_init else _uniform(rng, fan_in, (cout,))
        self.w = Tensor(w, requires_grad=True)
        self.b = Tensor(b, requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return F.conv_grid(x, self.w, self.b)


class TemporalTransposedConv(Module):
    """Transposed convolution along time: [B, T, Cin] -> [B, T*stride, Cout]."""

    def __init__(self, cin: int, cout: int, rng: np.random.Generator,
                 stride: int = 2, kernel: int | None = None):
        k = 2 * stride if kernel is None else kernel
        fan_in = k * cin
        self.w = Tensor(_uniform(rng, fan_in, (k, cin, cout)), requires_grad=True)
        self.b = Tensor(_uniform(rng, fan_in, (cout,)), requires_grad=True)
        self.stride = stride

    def __call__(self, x: Tensor) -> Tensor:
        return F.conv_transpose1d(x, self.w, self.b, self.stride)


class DepthwiseTemporalConv(Module):
    """Per-channel temporal convolution on [B, T, C], same padding."""

    def __init__(self, channels: int, rng: np.random.Generator, kernel: int = 3):
        if kernel % 2 == 0:
            raise ConfigError(f"depthwise kernel must be odd, got {kernel}")
        self.kernel = kernel
        self.w = Tensor(_uniform(rng, kernel, (kernel, channels)), requires_grad=True)
        self.b = Tensor(_uniform(rng, kernel, (channels,)), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        t = x.shape[1]
        half = self.kernel // 2
        xp = F.pad_axis(x, 1, half, half)
        y = None
        for d in range(self.kernel):
            term = xp[:, d:d + t, :] * self.w[d]
            y = term if y is None else y + term
        return y + self.b


def positional_encoding(t: int, channels: int) -> np.ndarray:
    """Sinusoidal position table [t, channels]; channels must be even."""
    if channels % 2 != 0:
        raise ConfigError(f"positional encoding needs an even channel count, got {channels}")
    pos = np.arange(t)[:, None]
    i = np.arange(channels // 2)[None, :]
    angle = pos / np.power(10000.0, 2 * i / channels)
    pe = np.zeros((t, channels))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return pe
