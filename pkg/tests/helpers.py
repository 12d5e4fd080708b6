"""Shared fixtures-in-code for the test suite.

Two kinds of things live here:

* tiny synthetic "voices" (harmonic stacks with a per-character timbre) used
  to build corpora that train in seconds on a laptop CPU, and
* independent oracles for the quantities the library derives in clever ways
  (alignment path enumeration, per-frame pitch-error counting).  The oracles
  are deliberately written as plain loops so they share no code with the
  implementations they check.
"""

from __future__ import annotations

import itertools
import math
from pathlib import Path

import numpy as np

from voiceclone.audio import write_wav
from voiceclone.data import UtteranceRecord, write_manifest

SR = 22050

# Filled by the acceptance tests; conftest prints it as an end-of-run
# summary section so the protocol lines survive output capture.
ACCEPTANCE_LINES: list[str] = []

# One fundamental per toy speaker.  Far enough apart that a 20% pitch
# deviation never confuses them, close enough to stay inside the YIN band.
VOICE_F0 = {0: 110.0, 1: 220.0, 2: 165.0}

_WORDS = [
    "abed", "cafe", "badge", "face", "deaf", "bead",
    "edba", "fade", "cede", "beef", "dace", "abcf",
]


def _char_amplitudes(ch: str, n_harmonics: int = 6) -> np.ndarray:
    """Deterministic per-character harmonic recipe (the toy 'phoneme')."""
    rng = np.random.default_rng(ord(ch))
    amps = rng.uniform(0.2, 1.0, size=n_harmonics)
    amps[0] = 1.0
    return amps / np.sum(amps)


def harmonic_tone(
    f0: float, n_samples: int, amplitudes: np.ndarray, sr: int = SR, phase: float = 0.0
) -> np.ndarray:
    t = np.arange(n_samples, dtype=np.float64) / sr
    wave = np.zeros(n_samples, dtype=np.float64)
    for k, amp in enumerate(amplitudes):
        wave += amp * np.sin(2.0 * math.pi * f0 * (k + 1) * t + phase)
    return wave


def speak(
    text: str,
    f0: float,
    sr: int = SR,
    char_sec: float = 0.05,
    gap_sec: float = 0.04,
) -> np.ndarray:
    """Render text as a sequence of harmonic-stack notes, spaces as silence."""
    pieces = []
    n_char = int(round(char_sec * sr))
    n_gap = int(round(gap_sec * sr))
    fade = np.hanning(2 * min(64, n_char // 4) + 1)
    half = len(fade) // 2
    for ch in text:
        if ch == " ":
            pieces.append(np.zeros(n_gap))
            continue
        tone = harmonic_tone(f0, n_char, _char_amplitudes(ch), sr=sr)
        if half > 0:
            tone[:half] *= fade[:half]
            tone[-half:] *= fade[-half:]
        pieces.append(tone)
    wave = np.concatenate(pieces) if pieces else np.zeros(0)
    peak = np.max(np.abs(wave)) if wave.size else 0.0
    if peak > 0:
        wave = 0.6 * wave / peak
    return wave.astype(np.float32)


def build_corpus(
    root: Path,
    speaker_id: int,
    texts: list[str],
    char_sec: float = 0.05,
    gap_sec: float = 0.04,
    name: str | None = None,
) -> list[UtteranceRecord]:
    """Write wav files plus a manifest for one toy speaker; return records."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    f0 = VOICE_F0[speaker_id]
    records = []
    tag = name or f"spk{speaker_id}"
    for idx, text in enumerate(texts):
        wave = speak(text, f0, char_sec=char_sec, gap_sec=gap_sec)
        path = root / f"{tag}_{idx:03d}.wav"
        write_wav(path, wave, SR)
        records.append(
            UtteranceRecord(
                audio_filepath=str(path),
                text=text,
                speaker_id=speaker_id,
                duration_sec=len(wave) / SR,
            )
        )
    write_manifest(root / f"{tag}.jsonl", records)
    return records


def default_texts(n: int, offset: int = 0) -> list[str]:
    return [
        _WORDS[(offset + i) % len(_WORDS)] + " " + _WORDS[(offset + i + 5) % len(_WORDS)]
        for i in range(n)
    ]


# Small synthesizer shapes: MICRO for unit tests that only need gradients to
# flow, PILOT for the end-to-end runs that must actually learn something.
MICRO_ACOUSTIC = dict(
    n_mels=80,
    embed_dim=16,
    n_layers=1,
    n_heads=2,
    filter_size=32,
    kernel_size=3,
    predictor_size=8,
    predictor_kernel=3,
    dropout=0.0,
    align_dim=8,
)

PILOT_ACOUSTIC = dict(
    n_mels=80,
    embed_dim=32,
    n_layers=2,
    n_heads=2,
    filter_size=64,
    kernel_size=3,
    predictor_size=16,
    predictor_kernel=3,
    dropout=0.1,
    align_dim=16,
)

MICRO_VOCODER = dict(
    n_mels=80,
    upsample_factors=(8, 8, 2, 2),
    base_channels=32,
    resblock_kernels=(3,),
    resblock_dilations=(1, 3),
    mpd_periods=(2, 3, 5),
    msd_scales=2,
)


# ---------------------------------------------------------------------------
# Alignment oracles: enumerate every monotone surjective path explicitly.
# A path over T frames and n tokens is fixed by its n-1 transition frames,
# chosen strictly increasing from {1..T-1}.
# ---------------------------------------------------------------------------

def enumerate_paths(n_frames: int, n_tokens: int) -> list[tuple[int, ...]]:
    paths = []
    for cuts in itertools.combinations(range(1, n_frames), n_tokens - 1):
        path = []
        token = 0
        for t in range(n_frames):
            while token < n_tokens - 1 and t >= cuts[token]:
                token += 1
            path.append(token)
        paths.append(tuple(path))
    return paths


def path_score(log_probs: np.ndarray, path: tuple[int, ...]) -> float:
    return float(sum(log_probs[t, i] for t, i in enumerate(path)))


def forward_sum_oracle(log_probs: np.ndarray) -> float:
    """-logsumexp over all monotone surjective paths, by brute force."""
    n_frames, n_tokens = log_probs.shape
    scores = [path_score(log_probs, p) for p in enumerate_paths(n_frames, n_tokens)]
    m = max(scores)
    return -(m + math.log(sum(math.exp(s - m) for s in scores)))


def viterbi_oracle(log_probs: np.ndarray) -> tuple[int, ...]:
    """Best path; ties broken toward the earliest transitions.

    Among score-tied paths the winner is the one whose reversed tuple is
    largest, i.e. the path that reaches each later token soonest.  That is
    the declared tie-break of the implementation, restated independently.
    """
    n_frames, n_tokens = log_probs.shape
    return max(
        enumerate_paths(n_frames, n_tokens),
        key=lambda p: (path_score(log_probs, p), tuple(reversed(p))),
    )


# ---------------------------------------------------------------------------
# Pitch-metric oracle: one python loop per frame, no vectorization.
# ---------------------------------------------------------------------------

def pitch_metrics_oracle(
    pred_f0, pred_voiced, ref_f0, ref_voiced, deviation: float = 0.2
) -> tuple[float, float, float]:
    """(GPE, VDE, FFE) in percent, counted frame by frame."""
    n = len(ref_f0)
    gross = 0
    both = 0
    decision_err = 0
    ffe_err = 0
    for t in range(n):
        pv = bool(pred_voiced[t])
        rv = bool(ref_voiced[t])
        if pv != rv:
            decision_err += 1
            ffe_err += 1
        if pv and rv:
            both += 1
            if abs(pred_f0[t] - ref_f0[t]) > deviation * ref_f0[t]:
                gross += 1
                ffe_err += 1
    gpe = 100.0 * gross / both if both else 0.0
    return gpe, 100.0 * decision_err / n, 100.0 * ffe_err / n


def random_contour_pair(rng: np.random.Generator, n: int):
    """A (pred, ref) pair of synthetic contours with overlapping voicing."""
    from voiceclone.pitch import PitchContour

    def one():
        voiced = rng.random(n) < 0.6
        f0 = np.where(voiced, rng.uniform(80.0, 400.0, n), 0.0)
        return PitchContour(f0_hz=f0.astype(np.float32), voiced=voiced)

    return one(), one()
