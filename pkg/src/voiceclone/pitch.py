"""Fundamental frequency estimation with the YIN difference method."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError


@dataclass(frozen=True)
class YinConfig:
    """Frame-synchronous pitch tracker settings.

    The default band (65 Hz to 2093 Hz) spans roughly C2 to C7; the frame
    must hold at least one full period of the lowest frequency, which the
    constructor enforces.
    """

    sample_rate_hz: int = 22050
    frame_length: int = 2048
    hop_length: int = 256
    fmin_hz: float = 65.0
    fmax_hz: float = 2093.0
    threshold: float = 0.15

    def __post_init__(self) -> None:
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if not (0 < self.hop_length <= self.frame_length):
            raise ValueError("need 0 < hop_length <= frame_length")
        if not (0 < self.fmin_hz < self.fmax_hz <= self.sample_rate_hz / 2):
            raise ValueError("need 0 < fmin_hz < fmax_hz <= Nyquist")
        if self.frame_length < self.sample_rate_hz / self.fmin_hz:
            raise ValueError("frame_length must cover one period of fmin_hz")
        if not (0 < self.threshold < 1):
            raise ValueError("threshold must lie in (0, 1)")


@dataclass
class PitchContour:
    """Per-frame f0 with a voicing mask; unvoiced frames carry f0 = 0."""

    f0_hz: np.ndarray  # (n_frames,) float32
    voiced: np.ndarray  # (n_frames,) bool

    def __post_init__(self) -> None:
        if self.f0_hz.shape != self.voiced.shape:
            raise ValueError("f0_hz and voiced must have the same shape")

    def __len__(self) -> int:
        return self.f0_hz.shape[0]


def _difference_rows(frames: np.ndarray, tau_max: int) -> np.ndarray:
    """Squared-difference function for each row of a (n, L) frame matrix.

    d[t, tau] = sum_j (frames[t, j] - frames[t, j + tau])^2 with j running
    over a fixed window of L - tau_max samples, so every lag sums the same
    number of terms.
    """
    n, length = frames.shape
    if tau_max < 1:
        raise ValueError("tau_max must be at least 1")
    window = length - tau_max
    if window < tau_max:
        raise ValueError("frame length must be at least 2 * tau_max")
    d = np.zeros((n, tau_max), dtype=np.float64)
    base = frames[:, :window]
    for tau in range(1, tau_max):
        diff = base - frames[:, tau : tau + window]
        d[:, tau] = np.einsum("ij,ij->i", diff, diff)
    return d


def yin_difference(frame: np.ndarray, tau_max: int) -> np.ndarray:
    """Squared-difference function of a single frame for lags [0, tau_max)."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 1:
        raise ValueError("frame must be 1-D")
    return _difference_rows(frame[None, :], tau_max)[0]


def _cmnd_rows(d: np.ndarray) -> np.ndarray:
    out = np.ones_like(d)
    if d.shape[1] <= 1:
        return out
    taus = np.arange(1, d.shape[1], dtype=np.float64)
    cum = np.cumsum(d[:, 1:], axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = d[:, 1:] * taus / cum
    # cum == 0 implies d == 0 up to this lag: define the 0/0 case as 1
    out[:, 1:] = np.where(cum > 0, ratio, 1.0)
    return out


def cmnd(d: np.ndarray) -> np.ndarray:
    """Cumulative-mean normalized difference: d'(tau) = d(tau) * tau / sum_{j<=tau} d(j).

    d'(0) is defined as 1, and so is any 0/0 lag, which keeps silent frames
    above every sensible voicing threshold.
    """
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 1:
        raise ValueError("d must be 1-D")
    return _cmnd_rows(d[None, :])[0]


def _pick_lag(
    row: np.ndarray, tau_min: int, tau_hi: int, threshold: float
) -> float | None:
    """First lag under the threshold, descended to its local minimum and
    refined with a parabola through the neighboring lags."""
    below = np.nonzero(row[tau_min : tau_hi + 1] < threshold)[0]
    if below.size == 0:
        return None
    tau = tau_min + int(below[0])
    while tau + 1 <= tau_hi and row[tau + 1] < row[tau]:
        tau += 1
    delta = 0.0
    if tau - 1 >= 1 and tau + 1 < row.shape[0]:
        y0, y1, y2 = row[tau - 1], row[tau], row[tau + 1]
        denom = y0 - 2.0 * y1 + y2
        if denom > 0:
            delta = float(np.clip(0.5 * (y0 - y2) / denom, -1.0, 1.0))
    return tau + delta


def estimate_f0(waveform: np.ndarray, config: YinConfig | None = None) -> PitchContour:
    """Track f0 over centered frames of the waveform.

    Returns one value per hop with exactly len(waveform) // hop_length + 1
    frames. Frames whose normalized difference never drops under the
    threshold inside the lag band are marked unvoiced.
    """
    config = config or YinConfig()
    wave = np.asarray(waveform, dtype=np.float64)
    if wave.ndim != 1:
        raise ValueError("waveform must be 1-D")
    if wave.shape[0] < config.frame_length:
        raise ValueError("waveform shorter than one analysis frame")
    if not np.all(np.isfinite(wave)):
        raise ValueError("waveform contains non-finite samples")

    sr = config.sample_rate_hz
    tau_min = max(1, math.ceil(sr / config.fmax_hz))
    # leave two extra lags so the local-minimum descent and the parabola
    # always have a right neighbor inside the array
    tau_max = min(math.floor(sr / config.fmin_hz) + 2, config.frame_length // 2)
    tau_hi = tau_max - 2
    if tau_min > tau_hi:
        raise ValueError("empty lag band for the configured frequency range")

    pad = config.frame_length // 2
    padded = np.pad(wave, pad, mode="reflect")
    frames = sliding_window_view(padded, config.frame_length)[:: config.hop_length]
    dprime = _cmnd_rows(_difference_rows(frames, tau_max))

    n_frames = frames.shape[0]
    f0 = np.zeros(n_frames, dtype=np.float32)
    voiced = np.zeros(n_frames, dtype=bool)
    for t in range(n_frames):
        lag = _pick_lag(dprime[t], tau_min, tau_hi, config.threshold)
        if lag is not None:
            f0[t] = np.clip(sr / lag, config.fmin_hz, config.fmax_hz)
            voiced[t] = True
    return PitchContour(f0_hz=f0, voiced=voiced)


def average_pitch_per_token(contour: PitchContour, durations: np.ndarray) -> np.ndarray:
    """Mean voiced f0 over each token's frame span; 0 for fully unvoiced spans.

    ``durations`` must be non-negative frame counts summing to the contour
    length.
    """
    durations = np.asarray(durations)
    if durations.ndim != 1 or not np.issubdtype(durations.dtype, np.integer):
        raise ValueError("durations must be a 1-D integer array")
    if np.any(durations < 0):
        raise ValueError("durations must be non-negative")
    if int(durations.sum()) != len(contour):
        raise ValueError(
            f"durations sum to {int(durations.sum())}, contour has {len(contour)} frames"
        )
    out = np.zeros(durations.shape[0], dtype=np.float32)
    start = 0
    for i, count in enumerate(durations):
        stop = start + int(count)
        span_f0 = contour.f0_hz[start:stop]
        span_voiced = contour.voiced[start:stop]
        if np.any(span_voiced):
            out[i] = span_f0[span_voiced].mean()
        start = stop
    return out


def write_pitch_cache(path: str | Path, contour: PitchContour) -> None:
    """Write a contour: little-endian int32 length, float32 f0, uint8 voicing."""
    with open(path, "wb") as f:
        f.write(np.asarray([len(contour)], dtype="<i4").tobytes())
        f.write(np.ascontiguousarray(contour.f0_hz, dtype="<f4").tobytes())
        f.write(np.ascontiguousarray(contour.voiced, dtype=np.uint8).tobytes())


def read_pitch_cache(path: str | Path) -> PitchContour:
    """Read a contour written by :func:`write_pitch_cache`."""
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise DataError(f"{path}: truncated pitch cache")
    length = int(np.frombuffer(raw[:4], dtype="<i4")[0])
    if length < 0 or len(raw) != 4 + 5 * length:
        raise DataError(f"{path}: pitch cache header inconsistent with file size")
    f0 = np.frombuffer(raw[4 : 4 + 4 * length], dtype="<f4").astype(np.float32)
    voiced = np.frombuffer(raw[4 + 4 * length :], dtype=np.uint8).astype(bool)
    return PitchContour(f0_hz=f0, voiced=voiced)
