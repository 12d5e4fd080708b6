"""Objective metrics: pitch error rates, speaker verification, speaking rate."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .audio import MelConfig, compute_mel, read_matrix, write_matrix
from .data import TokenSequence
from .pitch import PitchContour


def _check_pair(pred: PitchContour, ref: PitchContour) -> None:
    if len(pred) != len(ref):
        raise ValueError(f"contour lengths differ: {len(pred)} vs {len(ref)}")
    if len(ref) == 0:
        raise ValueError("empty contours")


def gpe(pred: PitchContour, ref: PitchContour, rel_threshold: float = 0.2) -> float:
    """Gross pitch error: share of both-voiced frames whose f0 deviates from
    the reference by more than ``rel_threshold`` of the reference value.

    Returns a percentage; 0 when no frame is voiced in both contours.
    """
    _check_pair(pred, ref)
    both = pred.voiced & ref.voiced
    if not np.any(both):
        return 0.0
    deviation = np.abs(pred.f0_hz[both] - ref.f0_hz[both]) > rel_threshold * ref.f0_hz[both]
    return 100.0 * float(np.mean(deviation))


def vde(pred: PitchContour, ref: PitchContour) -> float:
    """Voicing decision error: percentage of frames whose voicing flag differs."""
    _check_pair(pred, ref)
    return 100.0 * float(np.mean(pred.voiced != ref.voiced))


def ffe(pred: PitchContour, ref: PitchContour, rel_threshold: float = 0.2) -> float:
    """f0 frame error: percentage of frames with either a voicing mismatch or
    a gross pitch error."""
    _check_pair(pred, ref)
    mismatch = pred.voiced != ref.voiced
    both = pred.voiced & ref.voiced
    gross = np.zeros(len(ref), dtype=bool)
    gross[both] = (
        np.abs(pred.f0_hz[both] - ref.f0_hz[both]) > rel_threshold * ref.f0_hz[both]
    )
    return 100.0 * float(np.mean(mismatch | gross))


def pool_contours(pairs: Sequence[tuple[PitchContour, PitchContour]]) -> tuple[PitchContour, PitchContour]:
    """Concatenate (predicted, reference) contour pairs for pooled error rates."""
    if not pairs:
        raise ValueError("no contour pairs to pool")
    for pred, ref in pairs:
        _check_pair(pred, ref)
    pred = PitchContour(
        f0_hz=np.concatenate([p.f0_hz for p, _ in pairs]),
        voiced=np.concatenate([p.voiced for p, _ in pairs]),
    )
    ref = PitchContour(
        f0_hz=np.concatenate([r.f0_hz for _, r in pairs]),
        voiced=np.concatenate([r.voiced for _, r in pairs]),
    )
    return pred, ref


@dataclass(frozen=True)
class TrialPair:
    """One verification trial: does ``test`` come from ``enroll``'s speaker?"""

    enroll: str
    test: str
    label: str  # "same" or "different"
    score: float | None = None


def build_trials(
    utterances_by_speaker: Mapping[int, Sequence[str]], target_speaker: int
) -> list[TrialPair]:
    """Verification trials against one target speaker.

    Positives pair every ordered couple of distinct target utterances;
    negatives pair every target utterance with every utterance of every
    other speaker. With V utterances per speaker and S speakers that is
    V*(V-1) + V*(S-1)*V trials. Utterance ids must be globally unique.
    """
    if target_speaker not in utterances_by_speaker:
        raise ValueError(f"target speaker {target_speaker} not in the pool")
    if len(utterances_by_speaker) < 2:
        raise ValueError("need at least one non-target speaker")
    all_ids = [u for utts in utterances_by_speaker.values() for u in utts]
    if len(set(all_ids)) != len(all_ids):
        raise ValueError("utterance ids must be unique across speakers")
    targets = list(utterances_by_speaker[target_speaker])
    if len(targets) < 2:
        raise ValueError("need at least two target utterances")
    trials = [
        TrialPair(enroll=e, test=t, label="same")
        for e in targets
        for t in targets
        if e != t
    ]
    for speaker in sorted(utterances_by_speaker):
        if speaker == target_speaker:
            continue
        for e in targets:
            for t in utterances_by_speaker[speaker]:
                trials.append(TrialPair(enroll=e, test=t, label="different"))
    return trials


def cosine_score(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity between two embedding vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("embeddings must be 1-D vectors of equal length")
    norm = np.linalg.norm(a) * np.linalg.norm(b)
    if norm == 0:
        raise ValueError("cannot score a zero-norm embedding")
    return float(np.dot(a, b) / norm)


def score_trials(
    trials: Sequence[TrialPair],
    enroll_embeddings: Mapping[str, np.ndarray],
    test_embeddings: Mapping[str, np.ndarray] | None = None,
) -> list[TrialPair]:
    """Fill trial scores with cosine similarities.

    ``test_embeddings`` defaults to the enrollment table; passing a separate
    table lets synthesized test utterances score against real enrollments.
    """
    test_embeddings = enroll_embeddings if test_embeddings is None else test_embeddings
    scored = []
    for trial in trials:
        if trial.enroll not in enroll_embeddings:
            raise ValueError(f"no embedding for enrollment utterance {trial.enroll!r}")
        if trial.test not in test_embeddings:
            raise ValueError(f"no embedding for test utterance {trial.test!r}")
        scored.append(
            replace(
                trial,
                score=cosine_score(
                    enroll_embeddings[trial.enroll], test_embeddings[trial.test]
                ),
            )
        )
    return scored


def _to_positive(label) -> bool:
    if isinstance(label, str):
        if label not in ("same", "different"):
            raise ValueError(f"label must be 'same' or 'different', got {label!r}")
        return label == "same"
    return bool(label)


def eer(scored: Iterable[tuple[float, object]]) -> float:
    """Equal error rate of a scored trial set, as a fraction in [0, 1].

    Sweeps the acceptance threshold over the observed scores and linearly
    interpolates between the two (false-accept, false-reject) points that
    straddle the crossing.
    """
    pos, neg = [], []
    for score, label in scored:
        (pos if _to_positive(label) else neg).append(float(score))
    if not pos or not neg:
        raise ValueError("need at least one positive and one negative trial")
    pos_arr = np.asarray(pos)
    neg_arr = np.asarray(neg)
    points = [(1.0, 0.0)]  # threshold below every score: accept all
    for threshold in np.unique(np.concatenate([pos_arr, neg_arr])):
        far = float(np.mean(neg_arr >= threshold))
        frr = float(np.mean(pos_arr < threshold))
        points.append((far, frr))
    points.append((0.0, 1.0))  # threshold above every score: reject all
    for (far_a, frr_a), (far_b, frr_b) in zip(points, points[1:]):
        diff_a = far_a - frr_a
        diff_b = far_b - frr_b
        if diff_a == 0.0:
            return far_a
        if diff_a > 0.0 and diff_b <= 0.0:
            frac = diff_a / (diff_a - diff_b)
            return far_a + frac * (far_b - far_a)
    return 0.5 * (points[-1][0] + points[-1][1])


def eer_of_trials(trials: Sequence[TrialPair]) -> float:
    """EER over scored TrialPair objects."""
    for t in trials:
        if t.score is None:
            raise ValueError(f"trial {t.enroll!r} vs {t.test!r} has no score")
    return eer((t.score, t.label) for t in trials)


def phoneme_rate(tokens: TokenSequence | Sequence[str], duration_sec: float) -> float:
    """Alphabetic token units per second of audio."""
    if duration_sec <= 0:
        raise ValueError("duration_sec must be positive")
    symbols = tokens.symbols if isinstance(tokens, TokenSequence) else tokens
    count = sum(1 for s in symbols if str(s).isalpha())
    return count / duration_sec


def mel_stats_embedder(waveform: np.ndarray, sample_rate_hz: int) -> np.ndarray:
    """Baseline utterance embedding: per-band mean and deviation of log-mels.

    A stand-in for an external speaker encoder; any callable with this
    signature can replace it in the evaluation entry points.
    """
    config = MelConfig(
        sample_rate_hz=sample_rate_hz,
        fmax_hz=min(8000.0, sample_rate_hz / 2),
    )
    mel = compute_mel(waveform, config).values
    return np.concatenate([mel.mean(axis=0), mel.std(axis=0)]).astype(np.float32)


def export_embeddings(
    prefix: str,
    labels: Sequence[tuple[str, int, str]],
    vectors: np.ndarray,
) -> None:
    """Write embeddings as ``<prefix>.bin`` (dim-header matrix) plus a
    ``<prefix>.labels`` text file of utterance_id, speaker_id, origin rows."""
    vectors = np.asarray(vectors, dtype=np.float32)
    if vectors.ndim != 2 or vectors.shape[0] != len(labels):
        raise ValueError("vectors must be (n_labels, dim)")
    write_matrix(f"{prefix}.bin", vectors)
    with open(f"{prefix}.labels", "w", encoding="utf-8") as f:
        for utt_id, speaker, origin in labels:
            f.write(f"{utt_id}\t{speaker}\t{origin}\n")


def read_embeddings(prefix: str) -> tuple[np.ndarray, list[tuple[str, int, str]]]:
    """Read an embedding table written by :func:`export_embeddings`."""
    vectors = read_matrix(f"{prefix}.bin")
    labels = []
    with open(f"{prefix}.labels", "r", encoding="utf-8") as f:
        for line in f:
            utt_id, speaker, origin = line.rstrip("\n").split("\t")
            labels.append((utt_id, int(speaker), origin))
    if len(labels) != vectors.shape[0]:
        raise ValueError("label count does not match embedding rows")
    return vectors, labels
