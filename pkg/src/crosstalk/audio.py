"""Waveform to log-mel spectrogram pipeline, aligned 4-to-1 with video.

25 fps video against a 10 ms mel hop gives exactly 4 spectrogram rows per
video frame, so a track of T frames pairs with a [4T, M] spectrogram. The
DSP defaults (16 kHz, 25 ms Hann window, 10 ms hop, 512-point FFT, 40 HTK
mel bins to 8 kHz) follow the convention of VGG-style audio encoders.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, ShapeError

SAMPLE_RATE = 16_000
WIN_LENGTH = 400        # 25 ms
HOP_LENGTH = 160        # 10 ms
FFT_SIZE = 512
MEL_BINS = 40
F_MIN = 0.0
F_MAX = 8_000.0
LOG_FLOOR = 1e-8
FPS = 25
ROWS_PER_FRAME = 4


@dataclass
class Waveform:
    """Mono audio samples in [-1, 1] at a fixed sample rate."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise DataError(f"sample rate must be positive, got {self.sample_rate}")
        if self.samples.ndim != 1:
            raise DataError(f"waveform must be 1-D, got shape {self.samples.shape}")
        if self.samples.size and not np.isfinite(self.samples).all():
            raise DataError("waveform contains non-finite samples")


@dataclass
class MelSpectrogram:
    """Log-mel energies [rows, mel_bins]; after alignment rows == 4T."""

    frames: np.ndarray
    hop_seconds: float
    mel_bins: int


def _reflect_pad(x: np.ndarray, pad: int) -> np.ndarray:
    """Reflect padding that tolerates pad >= len(x)."""
    n = x.size
    if n == 1:
        return np.full(n + 2 * pad, x[0])
    idx = np.arange(-pad, n + pad)
    period = 2 * n - 2
    idx = np.abs(np.mod(idx, period))
    idx = np.where(idx >= n, period - idx, idx)
    return x[idx]


def stft_magnitude(wave_in: Waveform, win_length: int = WIN_LENGTH,
                   hop_length: int = HOP_LENGTH, fft_size: int = FFT_SIZE) -> np.ndarray:
    """Hann-window STFT magnitudes, [ceil(len/hop), fft_size/2 + 1].

    Frames are centered: the signal is reflect-padded by win_length//2 on
    both sides so frame i covers samples around i*hop.
    """
    if wave_in.samples.size == 0:
        raise DataError("cannot compute a spectrogram of an empty waveform")
    if win_length > fft_size:
        raise ConfigError(f"window {win_length} longer than FFT size {fft_size}")
    if hop_length <= 0:
        raise ConfigError(f"hop must be positive, got {hop_length}")
    x = wave_in.samples
    n_frames = -(-x.size // hop_length)
    pad = win_length // 2
    xp = _reflect_pad(x, pad)
    # periodic Hann
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(win_length) / win_length)
    frames = np.empty((n_frames, win_length))
    for i in range(n_frames):
        frames[i] = xp[i * hop_length: i * hop_length + win_length]
    spec = np.fft.rfft(frames * window, n=fft_size, axis=1)
    return np.abs(spec)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (np.power(10.0, np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(mel_bins: int = MEL_BINS, fft_size: int = FFT_SIZE,
                   sample_rate: int = SAMPLE_RATE, f_min: float = F_MIN,
                   f_max: float = F_MAX) -> np.ndarray:
    """Triangular HTK-mel filterbank, [mel_bins, fft_size/2 + 1]."""
    if f_max > sample_rate / 2:
        raise ConfigError(f"f_max {f_max} exceeds Nyquist {sample_rate / 2}")
    n_bins = fft_size // 2 + 1
    freqs = np.arange(n_bins) * sample_rate / fft_size
    points = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), mel_bins + 2))
    bank = np.zeros((mel_bins, n_bins))
    for i in range(mel_bins):
        lo, mid, hi = points[i], points[i + 1], points[i + 2]
        up = (freqs - lo) / (mid - lo)
        down = (hi - freqs) / (hi - mid)
        bank[i] = np.clip(np.minimum(up, down), 0.0, None)
    if (bank.sum(axis=1) <= 0).any():
        raise ConfigError(
            f"mel filterbank has empty rows; too many bins ({mel_bins}) for fft size {fft_size}")
    return bank


def mel_project(magnitudes: np.ndarray, mel_bins: int = MEL_BINS,
                f_min: float = F_MIN, f_max: float = F_MAX,
                sample_rate: int = SAMPLE_RATE, fft_size: int | None = None) -> np.ndarray:
    """Project STFT magnitudes onto the mel filterbank, floored natural log."""
    if fft_size is None:
        fft_size = 2 * (magnitudes.shape[1] - 1)
    bank = mel_filterbank(mel_bins, fft_size, sample_rate, f_min, f_max)
    energy = (magnitudes ** 2) @ bank.T
    return np.log(np.maximum(energy, LOG_FLOOR))


def align_to_video(mel_frames: np.ndarray, video_frames: int) -> np.ndarray:
    """Force exactly 4 rows per video frame: trim excess, replicate <= 2 missing."""
    want = ROWS_PER_FRAME * video_frames
    have = mel_frames.shape[0]
    if have < want - 2:
        raise ShapeError(
            f"spectrogram has {have} rows but {want} are needed for {video_frames} video "
            "frames; hop length or frame rate is inconsistent")
    if have >= want:
        return mel_frames[:want]
    deficit = want - have
    tail = np.repeat(mel_frames[-1:], deficit, axis=0)
    return np.concatenate([mel_frames, tail], axis=0)


def waveform_to_mel(wave_in: Waveform, video_frames: int, mel_bins: int = MEL_BINS) -> MelSpectrogram:
    """The full pipeline: STFT -> mel -> log -> 4T alignment."""
    if wave_in.sample_rate != SAMPLE_RATE:
        raise DataError(f"expected {SAMPLE_RATE} Hz input, got {wave_in.sample_rate}")
    mags = stft_magnitude(wave_in)
    logmel = mel_project(mags, mel_bins=mel_bins)
    aligned = align_to_video(logmel, video_frames)
    return MelSpectrogram(aligned, HOP_LENGTH / SAMPLE_RATE, mel_bins)


# ---------------------------------------------------------------------------
# WAV I/O (PCM16 mono)
# ---------------------------------------------------------------------------


def save_wav(path: str | Path, wave_out: Waveform) -> None:
    samples = np.clip(wave_out.samples, -1.0, 1.0)
    pcm = np.round(samples * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(wave_out.sample_rate)
        fh.writeframes(pcm.tobytes())


def load_wav(path: str | Path) -> Waveform:
    with wave.open(str(path), "rb") as fh:
        if fh.getnchannels() != 1 or fh.getsampwidth() != 2:
            raise DataError(f"{path}: expected mono PCM16 WAV")
        rate = fh.getframerate()
        raw = fh.readframes(fh.getnframes())
    pcm = np.frombuffer(raw, dtype="<i2")
    return Waveform(pcm.astype(np.float64) / 32767.0, rate)
