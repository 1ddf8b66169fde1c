"""The full audio-visual active-speaker model."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as F
from .autodiff import Tensor
from .encoders import AudioEncoder, VisualEncoder, broadcast_audio
from .errors import ConfigError, ShapeError
from .lscm import ContextConfig, ContextStack
from .nn import Module, positional_encoding
from .rng import STREAM_INIT, make_rng


@dataclass(frozen=True)
class ModelConfig:
    """Everything needed to build the network (no training/data knobs)."""

    speakers: int = 3
    channels: int = 64
    heads: int = 4
    blocks: int = 3
    sim_temporal_kernel: int = 7
    sim_speaker_kernel: int = 3
    sim_kind: str = "convolution"
    use_lim: bool = True
    use_sim: bool = True
    use_positional_encoding: bool = True
    mlp_ratio: int = 4
    crop_size: int = 32
    visual_stem_width: int = 16
    visual_widths: tuple[int, ...] = (16, 32, 32, 64)
    audio_widths: tuple[int, ...] = (8, 16, 32, 32)
    audio_deconv_width: int = 32
    mel_bins: int = 40

    def context(self) -> ContextConfig:
        return ContextConfig(
            speakers=self.speakers,
            channels=self.channels,
            heads=self.heads,
            blocks=self.blocks,
            sim_temporal_kernel=self.sim_temporal_kernel,
            sim_speaker_kernel=self.sim_speaker_kernel,
            sim_kind=self.sim_kind,
            use_lim=self.use_lim,
            use_sim=self.use_sim,
            mlp_ratio=self.mlp_ratio,
        )

    def validate(self) -> None:
        if self.visual_widths[-1] != self.channels:
            raise ConfigError(
                f"last visual stage width {self.visual_widths[-1]} must equal channels {self.channels}")
        if len(self.visual_widths) != 4 or len(self.audio_widths) != 4:
            raise ConfigError("visual_widths and audio_widths must have 4 entries")
        if self.crop_size < 8:
            raise ConfigError(f"crop size too small: {self.crop_size}")
        self.context().validate()


class ASDModel(Module):
    """Encoders + context stack; predicts per-frame speaking activity of the
    target speaker (index 0 on the speaker axis)."""

    def __init__(self, cfg: ModelConfig, seed: int):
        cfg.validate()
        self.cfg = cfg
        self.visual = VisualEncoder(
            cfg.crop_size, cfg.visual_stem_width, tuple(cfg.visual_widths),
            make_rng(seed, STREAM_INIT, 0))
        self.audio = AudioEncoder(
            cfg.mel_bins, tuple(cfg.audio_widths), cfg.audio_deconv_width,
            cfg.channels, make_rng(seed, STREAM_INIT, 1))
        self.context = ContextStack(cfg.context(), make_rng(seed, STREAM_INIT, 2))
        self._pe_cache: dict[int, np.ndarray] = {}

    # -- embedding stages (exposed for feature reuse at inference) ----------

    def encode_tracks(self, tracks: Tensor) -> Tensor:
        """[B, S, T, H, W, 1] -> [B, S, T, C]."""
        return self.visual(tracks)

    def encode_spectrogram(self, spec: Tensor) -> Tensor:
        """[B, 4T, M] -> [B, T, C]."""
        return self.audio(spec)

    def _pe(self, t: int) -> np.ndarray:
        if t not in self._pe_cache:
            self._pe_cache[t] = positional_encoding(t, self.cfg.channels)
        return self._pe_cache[t]

    def head_logits(self, fv: Tensor, fa_single: Tensor) -> list[Tensor]:
        """Run the context stack on visual [B,S,T,C] and audio [B,T,C]."""
        b, s, t, c = fv.shape
        if fa_single.shape != (b, t, c):
            raise ShapeError(
                f"audio embeddings {fa_single.shape} do not match visual {fv.shape}")
        fa = broadcast_audio(fa_single, s)
        if self.cfg.use_positional_encoding:
            pe = Tensor(self._pe(t))
            fv = fv + pe
            fa = fa + pe
        return self.context(fv, fa)

    def __call__(self, tracks: Tensor, spec: Tensor) -> list[Tensor]:
        """Full forward pass -> one [B, T, 2] logits tensor per block."""
        fv = self.encode_tracks(tracks)
        fa = self.encode_spectrogram(spec)
        return self.head_logits(fv, fa)
