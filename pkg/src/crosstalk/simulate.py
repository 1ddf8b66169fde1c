"""Synthetic conversation generator with aligned audio, video, and labels.

A scene holds P people taking turns under a Markov chain (state = current
speaker or silence, geometric holding times, optional overlapping second
speaker). While person p speaks they emit a person-specific carrier tone,
amplitude-modulated at a person-specific syllabic rate, and the mouth band
of their rendered face oscillates with the same envelope — giving the model
a genuine audio-visual synchrony cue. Faces are rendered at a native size
set by their face-size class (small faces keep more sensor noise and jitter
after resizing, which is what makes them hard) and then resized to the
model crop size.

Everything is a pure function of (spec, seed): regenerating a scene yields
bit-identical arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import FPS, SAMPLE_RATE, Waveform
from .errors import ConfigError, DataError
from .rng import STREAM_SCENE, make_rng

# Native render widths per face-size class; evaluation buckets faces by
# width < 64 (small), 64..128 (medium), > 128 (large).
FACE_SIZE_WIDTHS = {"small": 48, "medium": 96, "large": 160}

SPEECH_AMPLITUDE = 0.3
CARRIER_BASE_HZ = 400.0
CARRIER_SPACING_HZ = 350.0   # >= 300 Hz separation survives +/-25 Hz jitter
CARRIER_JITTER_HZ = 25.0
SYLLABIC_RANGE_HZ = (2.5, 5.5)
IDLE_MOUTH_AMPLITUDE = 0.12  # idle micro-motion ceiling
SPEAKING_MOUTH_FLOOR = 0.25  # speaking openness never drops below this


@dataclass(frozen=True)
class SceneSpec:
    """Generator parameters for one scene."""

    seed: int
    num_people: int
    context_size: int = 3
    frames: int = 64
    fps: int = FPS
    crop_size: int = 32
    overlap_prob: float = 0.1
    off_screen_prob: float = 0.05
    silence_prob: float = 0.15
    snr_db: tuple[float, float] = (8.0, 20.0)
    face_sizes: tuple[str, ...] = ()
    turn_mean_frames: int = 12

    def validate(self) -> None:
        if self.num_people < 1:
            raise ConfigError(f"need at least one person, got {self.num_people}")
        if self.frames < 1:
            raise ConfigError(f"need at least one frame, got {self.frames}")
        for name in ("overlap_prob", "off_screen_prob", "silence_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        if self.face_sizes and len(self.face_sizes) != self.num_people:
            raise ConfigError("face_sizes must be empty or have one entry per person")
        for cls in self.face_sizes:
            if cls not in FACE_SIZE_WIDTHS:
                raise ConfigError(f"unknown face size class {cls!r}")
        if self.turn_mean_frames < 1:
            raise ConfigError("turn_mean_frames must be >= 1")
        if self.fps != FPS:
            raise ConfigError(f"only {FPS} fps is supported (4 mel rows per frame)")


@dataclass
class Scene:
    """A full generated scene: every person's track, mixed audio, truth."""

    spec: SceneSpec
    tracks: np.ndarray        # [P, T, H, W, 1] in [0, 1]
    wave: Waveform
    speaking: np.ndarray      # [P, T] bool: emits speech at frame t
    visible: np.ndarray       # [P, T] bool: face on screen at frame t
    labels: np.ndarray        # [P, T] int: speaking AND visible
    face_widths: np.ndarray   # [P] native render width (pixels)
    carrier_hz: np.ndarray    # [P]
    syllabic_hz: np.ndarray   # [P]

    @property
    def num_people(self) -> int:
        return int(self.tracks.shape[0])

    @property
    def frames(self) -> int:
        return int(self.tracks.shape[1])

    @property
    def faces_visible(self) -> np.ndarray:
        return self.visible.sum(axis=0).astype(np.int64)


@dataclass
class SceneSample:
    """A target-centric stack: target track at index 0 plus sampled context."""

    tracks: np.ndarray          # [S, T, H, W, 1]
    wave: Waveform
    labels: np.ndarray          # [T] for the target
    context_labels: np.ndarray  # [S-1, T]
    entity_ids: list[int]       # scene person index per slot
    face_widths: np.ndarray     # [S]
    faces_visible: np.ndarray   # [T]


# ---------------------------------------------------------------------------
# Turn taking
# ---------------------------------------------------------------------------


def _next_state(state: int, people: int, silence_prob: float, rng: np.random.Generator) -> int:
    """Transition of the turn chain; -1 encodes silence."""
    if state == -1:
        return int(rng.integers(people))
    if silence_prob > 0.0 and rng.random() < silence_prob:
        return -1
    if people == 1:
        return 0
    nxt = int(rng.integers(people - 1))
    return nxt if nxt < state else nxt + 1


def _turn_states(spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    """Per-frame primary state sequence (speaker index or -1)."""
    t_total = spec.frames
    states = np.empty(t_total, dtype=np.int64)
    state = -1 if rng.random() < spec.silence_prob else int(rng.integers(spec.num_people))
    t = 0
    while t < t_total:
        hold = int(rng.geometric(1.0 / spec.turn_mean_frames))
        states[t:t + hold] = state
        t += hold
        state = _next_state(state, spec.num_people, spec.silence_prob, rng)
    return states


def _segments(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal [start, end) runs of True."""
    runs = []
    t = 0
    n = mask.size
    while t < n:
        if mask[t]:
            start = t
            while t < n and mask[t]:
                t += 1
            runs.append((start, t))
        else:
            t += 1
    return runs


def _speaking_matrix(spec: SceneSpec, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    p, t = spec.num_people, spec.frames
    speaking = np.zeros((p, t), dtype=bool)
    for person in range(p):
        speaking[person] = states == person
    if spec.overlap_prob > 0.0 and p > 1:
        for person in range(p):
            for start, end in _segments(states == person):
                if rng.random() >= spec.overlap_prob:
                    continue
                other = _next_state(person, p, 0.0, rng)
                offset = int(rng.integers(end - start))
                hold = int(rng.geometric(2.0 / spec.turn_mean_frames))
                speaking[other, start + offset:min(end, start + offset + hold)] = True
    return speaking


def _visibility(spec: SceneSpec, speaking: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    visible = np.ones_like(speaking)
    if spec.off_screen_prob <= 0.0:
        return visible
    for person in range(spec.num_people):
        for start, end in _segments(speaking[person]):
            if rng.random() < spec.off_screen_prob:
                visible[person, start:end] = False
    return visible


# ---------------------------------------------------------------------------
# Audio synthesis
# ---------------------------------------------------------------------------


def _synthesize_audio(spec: SceneSpec, speaking: np.ndarray,
                      carrier_hz: np.ndarray, syllabic_hz: np.ndarray,
                      env_phase: np.ndarray, rng: np.random.Generator) -> Waveform:
    samples_per_frame = SAMPLE_RATE // spec.fps
    n = spec.frames * samples_per_frame
    t_axis = np.arange(n) / SAMPLE_RATE
    speech = np.zeros(n)
    carrier_phase = rng.uniform(0.0, 2.0 * np.pi, spec.num_people)
    for person in range(spec.num_people):
        if not speaking[person].any():
            continue
        gate = np.repeat(speaking[person].astype(np.float64), samples_per_frame)
        envelope = 0.55 + 0.45 * np.sin(
            2.0 * np.pi * syllabic_hz[person] * t_axis + env_phase[person])
        tone = np.sin(2.0 * np.pi * carrier_hz[person] * t_axis + carrier_phase[person])
        speech += SPEECH_AMPLITUDE * gate * envelope * tone
    snr_db = rng.uniform(*spec.snr_db)
    active = np.repeat(speaking.any(axis=0), samples_per_frame)
    nominal_rms = SPEECH_AMPLITUDE / np.sqrt(2.0)
    speech_rms = float(np.sqrt(np.mean(speech[active] ** 2))) if active.any() else nominal_rms
    sigma = max(speech_rms, 1e-6) * 10.0 ** (-snr_db / 20.0)
    noise = rng.normal(0.0, sigma, n)
    return Waveform(np.clip(speech + noise, -1.0, 1.0), SAMPLE_RATE)


# ---------------------------------------------------------------------------
# Face rendering
# ---------------------------------------------------------------------------


def _identity_texture(width: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.meshgrid(np.linspace(0, 1, width), np.linspace(0, 1, width), indexing="ij")
    tex = np.full((width, width), 0.45)
    for _ in range(4):
        fy, fx = rng.uniform(0.5, 3.0, 2)
        phase = rng.uniform(0, 2 * np.pi)
        tex += 0.06 * np.cos(2 * np.pi * (fy * yy + fx * xx) + phase)
    return np.clip(tex, 0.05, 0.95)


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Deterministic bilinear resample of a 2-D image."""
    in_h, in_w = img.shape
    ys = (np.arange(out_h) + 0.5) * in_h / out_h - 0.5
    xs = (np.arange(out_w) + 0.5) * in_w / out_w - 0.5
    ys = np.clip(ys, 0, in_h - 1)
    xs = np.clip(xs, 0, in_w - 1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = img[np.ix_(y0, x0)] * (1 - wx) + img[np.ix_(y0, x1)] * wx
    bot = img[np.ix_(y1, x0)] * (1 - wx) + img[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bot * wy


def _mouth_openness(speaking_row: np.ndarray, syllabic: float, phase: float,
                    frames: int, fps: int) -> np.ndarray:
    """Per-frame openness in [0, 1]; speaking motion clears the idle floor."""
    t = np.arange(frames) / fps
    talk = SPEAKING_MOUTH_FLOOR + (1.0 - SPEAKING_MOUTH_FLOOR) * np.abs(
        np.sin(2.0 * np.pi * syllabic * t + phase))
    idle = IDLE_MOUTH_AMPLITUDE * np.abs(np.sin(2.0 * np.pi * 0.8 * t + phase))
    return np.where(speaking_row, talk, idle)


def _render_track(spec: SceneSpec, width: int, openness: np.ndarray,
                  visible_row: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Render one person's track at native width, then resize to the crop."""
    t_total, crop = spec.frames, spec.crop_size
    margin = 3
    canvas_size = width + 2 * margin
    base = np.full((canvas_size, canvas_size), 0.30)
    face = _identity_texture(width, rng)
    base[margin:margin + width, margin:margin + width] = face

    # facial landmarks in native-face coordinates
    eye = max(2, width // 10)
    ey = margin + int(0.30 * width)
    ex1 = margin + int(0.28 * width)
    ex2 = margin + int(0.66 * width)
    my0 = margin + int(0.60 * width)
    my1 = margin + int(0.78 * width)
    mx0 = margin + int(0.30 * width)
    mx1 = margin + int(0.72 * width)

    track = np.empty((t_total, crop, crop, 1))
    background = 0.35
    noise_sigma = 0.045
    for t in range(t_total):
        if visible_row[t]:
            frame = base.copy()
            frame[ey:ey + eye, ex1:ex1 + eye] = 0.08
            frame[ey:ey + eye, ex2:ex2 + eye] = 0.08
            frame[my0:my1, mx0:mx1] = 0.10 + 0.85 * openness[t]
            dy, dx = rng.integers(-margin, margin + 1, 2)
        else:
            frame = np.full((canvas_size, canvas_size), background)
            dy, dx = 0, 0
        window = frame[margin + dy:margin + dy + width, margin + dx:margin + dx + width]
        window = window + rng.normal(0.0, noise_sigma, (width, width))
        track[t, :, :, 0] = np.clip(resize_bilinear(window, crop, crop), 0.0, 1.0)
    return track


# ---------------------------------------------------------------------------
# Public entry points
# ---------------------------------------------------------------------------


def generate_scene(spec: SceneSpec) -> Scene:
    """Deterministically generate the full scene for ``spec``."""
    spec.validate()
    p = spec.num_people
    rng_turns = make_rng(spec.seed, STREAM_SCENE, 0)
    rng_audio = make_rng(spec.seed, STREAM_SCENE, 1)
    rng_voice = make_rng(spec.seed, STREAM_SCENE, 2)

    states = _turn_states(spec, rng_turns)
    speaking = _speaking_matrix(spec, states, rng_turns)
    visible = _visibility(spec, speaking, rng_turns)
    labels = (speaking & visible).astype(np.int64)

    carrier = (CARRIER_BASE_HZ + CARRIER_SPACING_HZ * np.arange(p)
               + rng_voice.uniform(-CARRIER_JITTER_HZ, CARRIER_JITTER_HZ, p))
    syllabic = rng_voice.uniform(*SYLLABIC_RANGE_HZ, p)
    env_phase = rng_voice.uniform(0.0, 2.0 * np.pi, p)

    wave = _synthesize_audio(spec, speaking, carrier, syllabic, env_phase, rng_audio)

    if spec.face_sizes:
        classes = list(spec.face_sizes)
    else:
        classes = ["medium"] * p
    widths = np.array([FACE_SIZE_WIDTHS[c] for c in classes], dtype=np.int64)

    tracks = np.empty((p, spec.frames, spec.crop_size, spec.crop_size, 1))
    for person in range(p):
        rng_face = make_rng(spec.seed, STREAM_SCENE, 3 + person)
        mouth_visible = speaking[person] & visible[person]
        openness = _mouth_openness(mouth_visible, syllabic[person],
                                   env_phase[person], spec.frames, spec.fps)
        tracks[person] = _render_track(spec, int(widths[person]), openness,
                                       visible[person], rng_face)

    return Scene(spec=spec, tracks=tracks, wave=wave, speaking=speaking,
                 visible=visible, labels=labels, face_widths=widths,
                 carrier_hz=carrier, syllabic_hz=syllabic)


def sample_context(scene: Scene, target: int, context_size: int,
                   rng: np.random.Generator) -> SceneSample:
    """Stack the target (slot 0) with S-1 sampled context speakers.

    Context speakers are drawn uniformly without replacement from the other
    people in the scene; when fewer than S-1 exist the available tracks are
    repeated cyclically (a lone target fills every slot with itself).
    """
    p = scene.num_people
    if not 0 <= target < p:
        raise DataError(f"target {target} out of range for {p} people")
    others = [q for q in range(p) if q != target]
    need = context_size - 1
    if len(others) >= need:
        picks = list(rng.choice(np.array(others), size=need, replace=False)) if need else []
        picks = [int(q) for q in picks]
    else:
        pool = others if others else [target]
        picks = [pool[i % len(pool)] for i in range(need)]
    slots = [target] + picks
    return SceneSample(
        tracks=scene.tracks[slots],
        wave=scene.wave,
        labels=scene.labels[target],
        context_labels=scene.labels[picks] if picks else np.zeros((0, scene.frames), dtype=np.int64),
        entity_ids=slots,
        face_widths=scene.face_widths[slots],
        faces_visible=scene.faces_visible,
    )


# ---------------------------------------------------------------------------
# Training-time augmentation
# ---------------------------------------------------------------------------


def _affine_resample(track: np.ndarray, scale: float, angle_deg: float,
                     flip: bool, cy: float, cx: float) -> np.ndarray:
    """Apply one center-anchored crop/rotate/flip to every frame of a track.

    ``scale`` < 1 zooms in (random resized crop); the transform is identical
    across frames. Bilinear sampling with edge clamping.
    """
    t_total, h, w, _ = track.shape
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    yc, xc = (h - 1) / 2.0, (w - 1) / 2.0
    ys = ys - yc
    xs = xs - xc
    if flip:
        xs = -xs
    theta = np.deg2rad(angle_deg)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    src_y = scale * (cos_t * ys - sin_t * xs) + cy
    src_x = scale * (sin_t * ys + cos_t * xs) + cx
    src_y = np.clip(src_y, 0, h - 1)
    src_x = np.clip(src_x, 0, w - 1)
    y0 = np.floor(src_y).astype(np.int64)
    x0 = np.floor(src_x).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = src_y - y0
    wx = src_x - x0
    out = np.empty_like(track)
    for t in range(t_total):
        img = track[t, :, :, 0]
        top = img[y0, x0] * (1 - wx) + img[y0, x1] * wx
        bot = img[y1, x0] * (1 - wx) + img[y1, x1] * wx
        out[t, :, :, 0] = top * (1 - wy) + bot * wy
    return out


def augment(sample: SceneSample, noise_pool: list[Waveform],
            rng: np.random.Generator, enabled: bool = True) -> SceneSample:
    """Visual crop/flip/rotate per track plus audio mixing from the pool.

    One transform is drawn per track and applied identically to all its
    frames. Audio augmentation mixes another scene's waveform at a random
    gain in [0.1, 0.5].
    """
    if not enabled:
        return sample
    t_total, h = sample.tracks.shape[1], sample.tracks.shape[2]
    tracks = np.empty_like(sample.tracks)
    for slot in range(sample.tracks.shape[0]):
        scale = rng.uniform(0.8, 1.0)
        flip = bool(rng.random() < 0.5)
        angle = rng.uniform(-15.0, 15.0)
        yc, xc = (h - 1) / 2.0, (h - 1) / 2.0
        max_shift = (1.0 - scale) * (h - 1) / 2.0
        cy = yc + rng.uniform(-max_shift, max_shift)
        cx = xc + rng.uniform(-max_shift, max_shift)
        tracks[slot] = _affine_resample(sample.tracks[slot], scale, angle, flip, cy, cx)
    wave = sample.wave
    if noise_pool:
        other = noise_pool[int(rng.integers(len(noise_pool)))]
        gain = rng.uniform(0.1, 0.5)
        n = wave.samples.size
        noise = other.samples
        if noise.size < n:
            noise = np.pad(noise, (0, n - noise.size), mode="wrap")
        wave = Waveform(np.clip(wave.samples + gain * noise[:n], -1.0, 1.0),
                        wave.sample_rate)
    return SceneSample(tracks=tracks, wave=wave, labels=sample.labels,
                       context_labels=sample.context_labels,
                       entity_ids=sample.entity_ids,
                       face_widths=sample.face_widths,
                       faces_visible=sample.faces_visible)
