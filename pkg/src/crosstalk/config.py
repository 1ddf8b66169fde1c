"""Run configuration: defaults, validation, and the key=value file format.

Config files are flat UTF-8 ``key = value`` lines with ``#`` comments.
Unknown keys are hard errors so a typo in an ablation sweep fails loudly
instead of silently training the default.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import get_args, get_origin

from .errors import ConfigError
from .model import ModelConfig


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs: architecture, optimizer, data, paths."""

    # architecture
    frames: int = 64                      # T
    speakers: int = 3                     # S
    channels: int = 64                    # C
    heads: int = 4
    blocks: int = 3                       # N
    sim_temporal_kernel: int = 7          # k
    sim_speaker_kernel: int = 3           # s
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

    # optimizer / schedule
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 10
    batch_size: int = 4
    lr_decay: float = 0.95                # multiplied in after each epoch
    augment: bool = True

    # dataset generation
    scenes_train: int = 200
    scenes_val: int = 50
    people_min: int = 2
    people_max: int = 4
    overlap_prob: float = 0.1
    off_screen_prob: float = 0.05
    silence_prob: float = 0.15
    snr_db_lo: float = 8.0
    snr_db_hi: float = 20.0
    turn_mean_frames: int = 12
    face_size_mix: tuple[float, ...] = (0.25, 0.5, 0.25)

    # run plumbing
    seed: int = 0
    dataset: str = ""
    checkpoint: str = ""

    def validate(self) -> None:
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ConfigError(f"lr_decay must be in (0, 1], got {self.lr_decay}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.frames % 2 != 0:
            raise ConfigError(f"frames must be even (audio ladder), got {self.frames}")
        if self.people_min < 1 or self.people_max < self.people_min:
            raise ConfigError(
                f"invalid people range [{self.people_min}, {self.people_max}]")
        if len(self.face_size_mix) != 3:
            raise ConfigError("face_size_mix needs 3 weights (small, medium, large)")
        self.model().validate()

    def model(self) -> ModelConfig:
        return ModelConfig(
            speakers=self.speakers,
            channels=self.channels,
            heads=self.heads,
            blocks=self.blocks,
            sim_temporal_kernel=self.sim_temporal_kernel,
            sim_speaker_kernel=self.sim_speaker_kernel,
            sim_kind=self.sim_kind,
            use_lim=self.use_lim,
            use_sim=self.use_sim,
            use_positional_encoding=self.use_positional_encoding,
            mlp_ratio=self.mlp_ratio,
            crop_size=self.crop_size,
            visual_stem_width=self.visual_stem_width,
            visual_widths=tuple(self.visual_widths),
            audio_widths=tuple(self.audio_widths),
            audio_deconv_width=self.audio_deconv_width,
            mel_bins=self.mel_bins,
        )


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _parse_value(name: str, raw: str, annotation) -> object:
    raw = raw.strip()
    origin = get_origin(annotation)
    if origin is tuple:
        item_type = get_args(annotation)[0]
        parts = [p for p in raw.replace(",", " ").split() if p]
        return tuple(item_type(p) for p in parts)
    if annotation is bool:
        lowered = raw.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    if annotation is int:
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"{name}: expected an integer, got {raw!r}") from exc
    if annotation is float:
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"{name}: expected a number, got {raw!r}") from exc
    return raw


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base if base is not None else RunConfig()
    updates: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        ann = _FIELDS[key].type
        if isinstance(ann, str):  # from __future__ annotations
            ann = _ANNOTATIONS[key]
        updates[key] = _parse_value(key, raw, ann)
    return replace(cfg, **updates)


# Resolved annotations (dataclass stores them as strings under
# `from __future__ import annotations`).
_ANNOTATIONS = {
    name: typ for name, typ in RunConfig.__init__.__annotations__.items()
    if name != "return"
}
# __init__ annotations are also strings; build the real mapping explicitly.
_ANNOTATIONS = {}
for _f in fields(RunConfig):
    if _f.name in ("sim_kind", "dataset", "checkpoint"):
        _ANNOTATIONS[_f.name] = str
    elif _f.name in ("visual_widths", "audio_widths"):
        _ANNOTATIONS[_f.name] = tuple[int, ...]
    elif _f.name == "face_size_mix":
        _ANNOTATIONS[_f.name] = tuple[float, ...]
    elif isinstance(_f.default, bool):
        _ANNOTATIONS[_f.name] = bool
    elif isinstance(_f.default, int):
        _ANNOTATIONS[_f.name] = int
    elif isinstance(_f.default, float):
        _ANNOTATIONS[_f.name] = float
    else:
        _ANNOTATIONS[_f.name] = str


def load_config(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, base)


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
