"""Interleaved long/short context modeling over speaker embeddings.

Each block runs two stages on the audio and visual streams [B, S, T, C]:

* long-term intra-speaker stage — temporal self-attention per stream, then
  dual cross-attention between streams, all applied per speaker (speakers
  never mix here). Residuals are post-normalized:
  h = LN(MHA(q, kv, kv) + q); out = LN(MLP(h) + h).
* short-term inter-speaker stage — a convolution over the speaker x time
  grid with a small centered temporal kernel (or, as a variant, windowed
  self-attention over non-overlapping k-frame windows covering all
  speakers): out = MLP(LN(Mix(u))) + u.

A single classification head, shared across blocks, reads the target
speaker's concatenated audio+visual embedding after every block and emits
per-frame two-class logits; training sums the per-block cross-entropies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as F
from .autodiff import Tensor
from .errors import ConfigError, DataError, ShapeError
from .nn import MLP, LayerNorm, Linear, Module, MultiHeadAttention

SIM_CONVOLUTION = "convolution"
SIM_WINDOW_ATTENTION = "window_attention"


@dataclass(frozen=True)
class ContextConfig:
    """Architecture knobs for the context stack."""

    speakers: int = 3
    channels: int = 64
    heads: int = 4
    blocks: int = 3
    sim_temporal_kernel: int = 7
    sim_speaker_kernel: int = 3
    sim_kind: str = SIM_CONVOLUTION
    use_lim: bool = True
    use_sim: bool = True
    mlp_ratio: int = 4

    def validate(self) -> None:
        if self.blocks < 0:
            raise ConfigError(f"blocks must be >= 0, got {self.blocks}")
        if self.sim_temporal_kernel % 2 == 0:
            raise ConfigError(
                f"sim temporal kernel must be odd (centered window), got {self.sim_temporal_kernel}")
        if self.sim_speaker_kernel > self.speakers:
            raise ConfigError(
                f"sim speaker kernel {self.sim_speaker_kernel} exceeds speakers {self.speakers}")
        if self.channels % self.heads != 0:
            raise ConfigError(f"channels {self.channels} not divisible by heads {self.heads}")
        if self.sim_kind not in (SIM_CONVOLUTION, SIM_WINDOW_ATTENTION):
            raise ConfigError(f"unknown sim kind {self.sim_kind!r}")


class AttentionLayer(Module):
    """Post-norm attention + MLP sub-layer shared by self- and cross-attention."""

    def __init__(self, channels: int, heads: int, mlp_ratio: int, rng: np.random.Generator):
        self.mha = MultiHeadAttention(channels, heads, rng)
        self.norm1 = LayerNorm(channels)
        self.mlp = MLP(channels, rng, ratio=mlp_ratio)
        self.norm2 = LayerNorm(channels)

    def __call__(self, q: Tensor, kv: Tensor) -> Tensor:
        h = self.norm1(self.mha(q, kv, kv) + q)
        return self.norm2(self.mlp(h) + h)


class GridConvMixer(Module):
    """Inter-speaker convolution: u -> MLP(LN(Conv(u))) + u."""

    def __init__(self, cfg: ContextConfig, rng: np.random.Generator):
        from .nn import GridConv  # local import keeps nn free of config types

        kernel = (cfg.sim_speaker_kernel, cfg.sim_temporal_kernel)
        self.conv = GridConv(kernel, cfg.channels, cfg.channels, rng)
        self.norm = LayerNorm(cfg.channels)
        self.mlp = MLP(cfg.channels, rng, ratio=cfg.mlp_ratio)

    def __call__(self, u: Tensor) -> Tensor:
        return self.mlp(self.norm(self.conv(u))) + u


class WindowAttentionMixer(Module):
    """Inter-speaker windowed attention over non-overlapping k-frame windows.

    All speakers' tokens inside one window attend to each other; information
    cannot cross window boundaries. Time is zero-padded up to a multiple of
    the window length and cropped afterwards.
    """

    def __init__(self, cfg: ContextConfig, rng: np.random.Generator):
        self.window = cfg.sim_temporal_kernel
        self.mha = MultiHeadAttention(cfg.channels, cfg.heads, rng)
        self.norm = LayerNorm(cfg.channels)
        self.mlp = MLP(cfg.channels, rng, ratio=cfg.mlp_ratio)

    def __call__(self, u: Tensor) -> Tensor:
        b, s, t, c = u.shape
        k = self.window
        padded_t = math.ceil(t / k) * k
        x = F.pad_axis(u, 2, 0, padded_t - t) if padded_t != t else u
        windows = padded_t // k
        x = F.reshape(x, (b, s, windows, k, c))
        x = F.transpose(x, (0, 2, 1, 3, 4))              # [B, W, S, k, C]
        x = F.reshape(x, (b * windows, s * k, c))
        x = self.mha(x, x, x)
        x = F.reshape(x, (b, windows, s, k, c))
        x = F.transpose(x, (0, 2, 1, 3, 4))
        x = F.reshape(x, (b, s, padded_t, c))
        if padded_t != t:
            x = x[:, :, :t, :]
        return self.mlp(self.norm(x)) + u


class ContextBlock(Module):
    """One LIM + SIM block acting on both streams."""

    def __init__(self, cfg: ContextConfig, rng: np.random.Generator):
        if cfg.use_lim:
            self.self_v = AttentionLayer(cfg.channels, cfg.heads, cfg.mlp_ratio, rng)
            self.self_a = AttentionLayer(cfg.channels, cfg.heads, cfg.mlp_ratio, rng)
            self.cross_v = AttentionLayer(cfg.channels, cfg.heads, cfg.mlp_ratio, rng)
            self.cross_a = AttentionLayer(cfg.channels, cfg.heads, cfg.mlp_ratio, rng)
        if cfg.use_sim:
            mixer = GridConvMixer if cfg.sim_kind == SIM_CONVOLUTION else WindowAttentionMixer
            self.sim_v = mixer(cfg, rng)
            self.sim_a = mixer(cfg, rng)
        self.use_lim = cfg.use_lim
        self.use_sim = cfg.use_sim

    def __call__(self, uv: Tensor, ua: Tensor) -> tuple[Tensor, Tensor]:
        if self.use_lim:
            b, s, t, c = uv.shape
            fv = F.reshape(uv, (b * s, t, c))
            fa = F.reshape(ua, (b * s, t, c))
            tv = self.self_v(fv, fv)
            ta = self.self_a(fa, fa)
            cv = self.cross_v(tv, ta)
            ca = self.cross_a(ta, tv)
            uv = F.reshape(cv, (b, s, t, c))
            ua = F.reshape(ca, (b, s, t, c))
        if self.use_sim:
            uv = self.sim_v(uv)
            ua = self.sim_a(ua)
        return uv, ua


class ContextStack(Module):
    """N interleaved blocks plus the shared per-frame classification head.

    The target speaker sits at index 0 of the speaker axis. After each block
    the head maps concat(audio, visual)[:, 0] to [B, T, 2]; all blocks share
    the same head parameters. With zero blocks the head reads the raw
    concatenated encoder embeddings once (no context modeling).
    """

    def __init__(self, cfg: ContextConfig, rng: np.random.Generator):
        cfg.validate()
        self.cfg = cfg
        self.blocks = [ContextBlock(cfg, rng) for _ in range(cfg.blocks)]
        # Zero-init keeps initial logits at exactly zero (uniform class
        # scores), so the reported starting loss is blocks * ln 2.
        self.head = Linear(2 * cfg.channels, 2, rng, zero_init=True)

    def _read_head(self, uv: Tensor, ua: Tensor) -> Tensor:
        u = F.concat([ua, uv], axis=-1)
        return self.head(u[:, 0])

    def __call__(self, fv: Tensor, fa: Tensor) -> list[Tensor]:
        if fv.shape != fa.shape:
            raise ShapeError(f"stream shapes differ: visual {fv.shape} vs audio {fa.shape}")
        if not self.blocks:
            return [self._read_head(fv, fa)]
        logits = []
        uv, ua = fv, fa
        for block in self.blocks:
            uv, ua = block(uv, ua)
            logits.append(self._read_head(uv, ua))
        return logits


def detection_loss(logits: list[Tensor], labels: np.ndarray) -> Tensor:
    """Sum over supervised blocks of mean-over-frames cross-entropy."""
    if not logits:
        raise DataError("need at least one logits array")
    labels = np.asarray(labels)
    total = None
    for block_logits in logits:
        if block_logits.shape[:-1] != labels.shape:
            raise DataError(
                f"labels shape {labels.shape} does not match logits {block_logits.shape}")
        term = F.cross_entropy(block_logits, labels)
        total = term if total is None else total + term
    return total
