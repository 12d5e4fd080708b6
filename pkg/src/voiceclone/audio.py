"""Waveform loading, mel spectrogram extraction and binary feature caches."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import DataError

LOG_FLOOR = 1e-5


@dataclass(frozen=True)
class MelConfig:
    """Parameters of the log-mel spectrogram front end.

    Defaults target 22.05 kHz audio with a 256-sample hop, so one frame
    covers ~11.6 ms and a second of audio yields ~87 frames.
    """

    sample_rate_hz: int = 22050
    n_fft: int = 1024
    hop_length: int = 256
    win_length: int = 1024
    n_mels: int = 80
    fmin_hz: float = 0.0
    fmax_hz: float = 8000.0

    def __post_init__(self) -> None:
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if not (0 < self.hop_length <= self.win_length <= self.n_fft):
            raise ValueError("need 0 < hop_length <= win_length <= n_fft")
        if self.n_mels <= 0:
            raise ValueError("n_mels must be positive")
        if not (0.0 <= self.fmin_hz < self.fmax_hz <= self.sample_rate_hz / 2):
            raise ValueError("need 0 <= fmin_hz < fmax_hz <= Nyquist")


@dataclass
class MelSpectrogram:
    """Log-magnitude mel spectrogram, frames along the first axis."""

    values: np.ndarray  # (n_frames, n_mels) float32
    config: MelConfig

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]


def hz_to_mel(freq_hz):
    """Convert Hz to mels (2595 * log10(1 + f/700) scale)."""
    return 2595.0 * np.log10(1.0 + np.asarray(freq_hz, dtype=np.float64) / 700.0)


def mel_to_hz(mels):
    """Inverse of :func:`hz_to_mel`."""
    return 700.0 * (10.0 ** (np.asarray(mels, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=8)
def _filterbank_cached(config: MelConfig) -> np.ndarray:
    # Triangular filters with unit peak, corner points equally spaced in mels.
    corners = mel_to_hz(
        np.linspace(
            hz_to_mel(config.fmin_hz), hz_to_mel(config.fmax_hz), config.n_mels + 2
        )
    )
    freqs = np.linspace(
        0.0, config.sample_rate_hz / 2.0, config.n_fft // 2 + 1, dtype=np.float64
    )
    bank = np.zeros((config.n_mels, freqs.size), dtype=np.float64)
    for m in range(config.n_mels):
        left, center, right = corners[m], corners[m + 1], corners[m + 2]
        up = (freqs - left) / (center - left)
        down = (right - freqs) / (right - center)
        bank[m] = np.clip(np.minimum(up, down), 0.0, None)
    return bank.astype(np.float32)


def mel_filterbank(config: MelConfig) -> np.ndarray:
    """Return the (n_mels, n_fft // 2 + 1) triangular filter matrix."""
    return _filterbank_cached(config).copy()


@lru_cache(maxsize=8)
def _window_cached(win_length: int, n_fft: int) -> torch.Tensor:
    window = torch.hann_window(win_length, periodic=True, dtype=torch.float32)
    if win_length < n_fft:
        pad_left = (n_fft - win_length) // 2
        window = F.pad(window, (pad_left, n_fft - win_length - pad_left))
    return window


def mel_spectrogram_torch(
    waveform: torch.Tensor, config: MelConfig, center: bool = True
) -> torch.Tensor:
    """Differentiable log-mel spectrogram of a 1-D waveform tensor.

    With ``center=True`` the signal is reflect-padded by n_fft // 2 on both
    sides, giving exactly ``len(waveform) // hop_length + 1`` frames.
    """
    if waveform.dim() != 1:
        raise ValueError("waveform must be 1-D")
    pad = config.n_fft // 2
    if center:
        if waveform.shape[0] <= pad:
            raise ValueError(f"waveform must be longer than {pad} samples")
        waveform = F.pad(waveform[None, None], (pad, pad), mode="reflect")[0, 0]
    elif waveform.shape[0] < config.n_fft:
        raise ValueError("waveform shorter than n_fft with center=False")
    frames = waveform.unfold(0, config.n_fft, config.hop_length)
    window = _window_cached(config.win_length, config.n_fft).to(waveform.dtype)
    spectrum = torch.fft.rfft(frames * window, dim=1).abs()
    bank = torch.from_numpy(_filterbank_cached(config)).to(waveform.dtype)
    mel = spectrum @ bank.T
    return torch.log(torch.clamp(mel, min=LOG_FLOOR))


def compute_mel(waveform: np.ndarray, config: MelConfig | None = None) -> MelSpectrogram:
    """Extract a log-mel spectrogram from a mono float waveform."""
    config = config or MelConfig()
    wave = np.asarray(waveform)
    if wave.ndim != 1 or wave.size == 0:
        raise DataError("waveform must be a non-empty 1-D array")
    if not np.all(np.isfinite(wave)):
        raise DataError("waveform contains non-finite samples")
    if wave.shape[0] <= config.n_fft // 2:
        raise DataError("waveform too short for mel extraction")
    with torch.no_grad():
        mel = mel_spectrogram_torch(
            torch.from_numpy(np.ascontiguousarray(wave, dtype=np.float32)), config
        )
    return MelSpectrogram(values=mel.numpy(), config=config)


def resample(waveform: np.ndarray, orig_sr: int, target_sr: int) -> np.ndarray:
    """Polyphase resampling to ``target_sr``; identity when rates match."""
    if orig_sr == target_sr:
        return np.asarray(waveform, dtype=np.float32)
    g = math.gcd(orig_sr, target_sr)
    out = resample_poly(np.asarray(waveform, dtype=np.float64), target_sr // g, orig_sr // g)
    return out.astype(np.float32)


_PCM_SCALES = {np.dtype(np.int16): 2**15, np.dtype(np.int32): 2**31}


def load_audio(path: str | Path, target_sr: int = 22050) -> np.ndarray:
    """Read a mono wav file as float32 in [-1, 1], resampled to ``target_sr``.

    Raises DataError for multi-channel files, empty files or non-finite data.
    """
    try:
        sr, data = wavfile.read(str(path))
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise DataError(f"cannot read wav file {path}: {exc}") from exc
    if data.ndim != 1:
        raise DataError(f"{path}: expected mono audio, got shape {data.shape}")
    if data.size == 0:
        raise DataError(f"{path}: empty audio")
    if data.dtype in _PCM_SCALES:
        wave = data.astype(np.float32) / _PCM_SCALES[data.dtype]
    elif data.dtype == np.uint8:
        wave = (data.astype(np.float32) - 128.0) / 128.0
    else:
        wave = data.astype(np.float32)
    if not np.all(np.isfinite(wave)):
        raise DataError(f"{path}: audio contains non-finite samples")
    return resample(wave, sr, target_sr)


def write_wav(path: str | Path, waveform: np.ndarray, sample_rate_hz: int) -> None:
    """Write a float waveform as 16-bit PCM, clipping to [-1, 1]."""
    wave = np.clip(np.asarray(waveform, dtype=np.float64), -1.0, 1.0)
    wavfile.write(str(path), sample_rate_hz, (wave * 32767.0).astype(np.int16))


def write_matrix(path: str | Path, values: np.ndarray) -> None:
    """Write a 2-D float matrix: two little-endian int32 dims, then float32 data."""
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError("write_matrix expects a 2-D array")
    with open(path, "wb") as f:
        f.write(np.asarray(values.shape, dtype="<i4").tobytes())
        f.write(np.ascontiguousarray(values, dtype="<f4").tobytes())


def read_matrix(path: str | Path) -> np.ndarray:
    """Read a matrix written by :func:`write_matrix`."""
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise DataError(f"{path}: truncated matrix file")
    rows, cols = (int(v) for v in np.frombuffer(raw[:8], dtype="<i4"))
    if rows < 0 or cols < 0 or len(raw) != 8 + 4 * rows * cols:
        raise DataError(f"{path}: matrix header inconsistent with file size")
    data = np.frombuffer(raw[8:], dtype="<f4").reshape(rows, cols)
    return data.astype(np.float32)
