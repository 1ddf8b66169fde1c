"""Visual and audio encoders producing per-frame embeddings.

The visual path maps one grayscale face track [T, H, W, 1] to [T, C]: a
temporal-window convolution (5 frames, spatial stride 2), a small residual
2-D trunk with stride-2 stages, global spatial average pooling, and a
temporal convolution network of residual depthwise blocks. Speakers are
encoded independently, so a stacked [S, T, H, W, 1] batch equals the
concatenation of per-speaker passes.

The audio path turns a log-mel spectrogram [4T, M] into [T, C] while keeping
one embedding per video frame: three of its four convolution blocks halve
the temporal axis (4T -> 2T -> T -> T/2), the fourth keeps it, a transposed
convolution doubles T/2 back to T, and the block-3 pre-pool features (also
length T) are concatenated before a linear projection to C.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as F
from .autodiff import Tensor
from .errors import ShapeError
from .nn import (Conv2d, DepthwiseTemporalConv, Linear, Module,
                 TemporalTransposedConv)

TEMPORAL_WINDOW = 5  # frames seen by the visual stem around each position


class ResidualStage(Module):
    """conv3x3(stride 2) -> relu -> conv3x3, plus a 1x1 stride-2 shortcut."""

    def __init__(self, cin: int, cout: int, rng: np.random.Generator):
        self.conv1 = Conv2d((3, 3), cin, cout, rng, stride=2)
        self.conv2 = Conv2d((3, 3), cout, cout, rng)
        self.shortcut = Conv2d((1, 1), cin, cout, rng, stride=2)

    def __call__(self, x: Tensor) -> Tensor:
        h = self.conv2(F.relu(self.conv1(x)))
        return F.relu(h + self.shortcut(x))


class TemporalBlock(Module):
    """Residual depthwise temporal convolution followed by pointwise mixing."""

    def __init__(self, channels: int, rng: np.random.Generator, kernel: int = 3):
        self.dw = DepthwiseTemporalConv(channels, rng, kernel)
        self.pw = Linear(channels, channels, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return x + self.pw(F.relu(self.dw(x)))


class VisualEncoder(Module):
    """Face-track encoder: [B, S, T, H, W, 1] -> [B, S, T, C]."""

    def __init__(self, crop_size: int, stem_width: int, stage_widths: tuple[int, ...],
                 rng: np.random.Generator, temporal_blocks: int = 5):
        self.crop_size = crop_size
        self.channels = stage_widths[-1]
        self.stem = Conv2d((3, 3), TEMPORAL_WINDOW, stem_width, rng, stride=2)
        stages = []
        cin = stem_width
        for cout in stage_widths:
            stages.append(ResidualStage(cin, cout, rng))
            cin = cout
        self.stages = stages
        self.tcn = [TemporalBlock(self.channels, rng) for _ in range(temporal_blocks)]

    def __call__(self, tracks: Tensor) -> Tensor:
        if tracks.ndim != 6 or tracks.shape[-1] != 1:
            raise ShapeError(f"expected tracks [B,S,T,H,W,1], got {tracks.shape}")
        b, s, t, h, w, _ = tracks.shape
        if h != self.crop_size or w != self.crop_size:
            raise ShapeError(f"expected {self.crop_size}x{self.crop_size} crops, got {h}x{w}")
        x = F.reshape(tracks, (b * s, t, h, w, 1))
        half = TEMPORAL_WINDOW // 2
        xp = F.pad_axis(x, 1, half, half)
        window = F.concat([xp[:, d:d + t] for d in range(TEMPORAL_WINDOW)], axis=-1)
        x = F.reshape(window, (b * s * t, h, w, TEMPORAL_WINDOW))
        x = F.relu(self.stem(x))
        for stage in self.stages:
            x = stage(x)
        x = F.tmean(x, axis=(1, 2))
        x = F.reshape(x, (b * s, t, self.channels))
        for block in self.tcn:
            x = block(x)
        return F.reshape(x, (b, s, t, self.channels))


class AudioEncoder(Module):
    """Spectrogram encoder: [B, 4T, M] -> [B, T, C] (one row per video frame)."""

    def __init__(self, mel_bins: int, widths: tuple[int, int, int, int],
                 deconv_width: int, channels: int, rng: np.random.Generator):
        self.mel_bins = mel_bins
        a0, a1, a2, a3 = widths
        self.conv1 = Conv2d((3, 3), 1, a0, rng)
        self.conv2 = Conv2d((3, 3), a0, a1, rng)
        self.conv3 = Conv2d((3, 3), a1, a2, rng)
        self.conv4 = Conv2d((3, 3), a2, a3, rng)
        self.deconv = TemporalTransposedConv(a3, deconv_width, rng, stride=2)
        self.proj = Linear(mel_bins * (a2 + deconv_width), channels, rng)
        self.tap_width = a2
        self.deconv_width = deconv_width
        self.channels = channels

    def __call__(self, spec: Tensor) -> Tensor:
        if spec.ndim != 3 or spec.shape[2] != self.mel_bins:
            raise ShapeError(f"expected spectrogram [B,4T,{self.mel_bins}], got {spec.shape}")
        b, rows, m = spec.shape
        if rows % 8 != 0:
            raise ShapeError(
                f"spectrogram rows ({rows}) must be 4*T with T even; the temporal "
                "ladder halves three times before upsampling")
        t = rows // 4
        x = F.reshape(spec, (b, rows, m, 1))
        x = F.relu(self.conv1(x))
        x = F.max_pool_axis(x, axis=1, size=2)           # 4T -> 2T
        x = F.relu(self.conv2(x))
        x = F.max_pool_axis(x, axis=1, size=2)           # 2T -> T
        x = F.relu(self.conv3(x))
        tap = x                                          # pre-pool, length T
        x = F.max_pool_axis(x, axis=1, size=2)           # T -> T/2
        x = F.relu(self.conv4(x))                        # length kept at T/2

        # transposed conv along time, shared across mel bins
        x = F.transpose(x, (0, 2, 1, 3))                 # [B, M, T/2, a3]
        x = F.reshape(x, (b * m, t // 2, x.shape[-1]))
        x = self.deconv(x)                               # [B*M, T, deconv_width]
        x = F.reshape(x, (b, m, t, self.deconv_width))
        up = F.transpose(x, (0, 2, 1, 3))                # [B, T, M, deconv_width]

        merged = F.concat([tap, up], axis=-1)
        merged = F.reshape(merged, (b, t, m * (self.tap_width + self.deconv_width)))
        return self.proj(merged)

    def temporal_ladder(self, rows: int) -> list[int]:
        """Per-layer temporal lengths for an input with ``rows`` mel frames."""
        t = rows // 4
        return [rows, rows // 2, t, t // 2, t // 2, t]


def broadcast_audio(embedding: Tensor, speakers: int) -> Tensor:
    """Repeat per-frame audio embeddings [B, T, C] across S speaker slots."""
    return F.repeat_new_axis(embedding, speakers, axis=1)
