"""End-to-end evaluation of a cloned voice against held-out recordings."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .audio import compute_mel, load_audio, write_wav
from .data import Tokenizer, UtteranceRecord
from .errors import DataError
from .metrics import (
    build_trials,
    eer_of_trials,
    export_embeddings,
    ffe,
    gpe,
    mel_stats_embedder,
    phoneme_rate,
    pool_contours,
    score_trials,
    vde,
)
from .pitch import PitchContour, YinConfig, estimate_f0
from .training import AcousticBundle, VocoderBundle

Embedder = Callable[[np.ndarray, int], np.ndarray]


def _group_by_speaker(records: Sequence[UtteranceRecord]) -> dict[int, list[UtteranceRecord]]:
    groups: dict[int, list[UtteranceRecord]] = {}
    for r in records:
        groups.setdefault(r.speaker_id, []).append(r)
    return groups


def _trim(pred: PitchContour, ref: PitchContour) -> tuple[PitchContour, PitchContour]:
    # synthesized audio spans whole frames, so its contour can run one frame
    # past the reference; compare over the shared prefix
    n = min(len(pred), len(ref))
    return (
        PitchContour(f0_hz=pred.f0_hz[:n], voiced=pred.voiced[:n]),
        PitchContour(f0_hz=ref.f0_hz[:n], voiced=ref.voiced[:n]),
    )


def evaluate_synthesized(
    target_records: Sequence[UtteranceRecord],
    other_records: Sequence[UtteranceRecord],
    forced_waves: Mapping[str, np.ndarray],
    free_waves: Mapping[str, np.ndarray],
    *,
    sample_rate_hz: int = 22050,
    yin_config: YinConfig | None = None,
    tokenizer: Tokenizer | None = None,
    embedder: Embedder | None = None,
    output_dir: str | Path | None = None,
) -> dict:
    """Score synthesized target-speaker audio against real recordings.

    ``forced_waves`` maps utterance ids to synthesized audio whose durations
    follow the real recording (for frame-aligned pitch error rates);
    ``free_waves`` holds unconstrained synthesis (for speaking rate and
    speaker verification). Returns the report as a plain dict and, if
    ``output_dir`` is given, writes report.json, report.txt and the
    embedding tables.
    """
    if not target_records:
        raise ValueError("no target utterances to evaluate")
    yin_config = yin_config or YinConfig(sample_rate_hz=sample_rate_hz)
    embedder = embedder or mel_stats_embedder
    tokenizer = tokenizer or Tokenizer.from_texts(
        [r.text for r in target_records] + [r.text for r in other_records]
    )
    target_speaker = target_records[0].speaker_id
    if any(r.speaker_id != target_speaker for r in target_records):
        raise DataError("target manifest must hold exactly one speaker")
    others = _group_by_speaker(other_records)
    if target_speaker in others:
        raise DataError("other-speaker pool contains the target speaker")

    pitch_pairs = []
    per_utterance: dict[str, dict] = {}
    real_embeddings: dict[str, np.ndarray] = {}
    synth_embeddings: dict[str, np.ndarray] = {}
    real_rates, synth_rates = [], []
    labels, vectors = [], []

    for record in target_records:
        utt = record.utterance_id
        for table, name in ((forced_waves, "forced"), (free_waves, "free")):
            if utt not in table:
                raise DataError(f"no {name} synthesis for utterance {utt!r}")
        real_wave = load_audio(record.audio_filepath, sample_rate_hz)
        ref_contour = estimate_f0(real_wave, yin_config)
        pred_contour = estimate_f0(
            np.asarray(forced_waves[utt], dtype=np.float64), yin_config
        )
        pred_c, ref_c = _trim(pred_contour, ref_contour)
        pitch_pairs.append((pred_c, ref_c))
        per_utterance[utt] = {
            "gpe_pct": gpe(pred_c, ref_c),
            "vde_pct": vde(pred_c, ref_c),
            "ffe_pct": ffe(pred_c, ref_c),
            "n_frames": len(ref_c),
        }
        tokens = tokenizer(record.text)
        real_rates.append(phoneme_rate(tokens, record.duration_sec))
        free_wave = np.asarray(free_waves[utt], dtype=np.float32)
        synth_rates.append(phoneme_rate(tokens, free_wave.shape[0] / sample_rate_hz))
        real_embeddings[utt] = embedder(real_wave, sample_rate_hz)
        synth_embeddings[utt] = embedder(free_wave, sample_rate_hz)
        labels.append((utt, target_speaker, "real"))
        vectors.append(real_embeddings[utt])
        labels.append((utt, target_speaker, "synthesized"))
        vectors.append(synth_embeddings[utt])

    ids_by_speaker: dict[int, list[str]] = {
        target_speaker: [r.utterance_id for r in target_records]
    }
    for speaker in sorted(others):
        ids_by_speaker[speaker] = []
        for record in others[speaker]:
            wave = load_audio(record.audio_filepath, sample_rate_hz)
            real_embeddings[record.utterance_id] = embedder(wave, sample_rate_hz)
            ids_by_speaker[speaker].append(record.utterance_id)
            labels.append((record.utterance_id, speaker, "real"))
            vectors.append(real_embeddings[record.utterance_id])

    trials = build_trials(ids_by_speaker, target_speaker)
    real_scored = score_trials(trials, real_embeddings)
    # synthesized test side: target test utterances swap in their clones
    synth_test = dict(real_embeddings)
    synth_test.update(synth_embeddings)
    synth_scored = score_trials(trials, real_embeddings, synth_test)

    pooled_pred, pooled_ref = pool_contours(pitch_pairs)
    report = {
        "target_speaker": target_speaker,
        "validation_utterances": sorted(per_utterance),
        "pitch": {
            "pooled": {
                "gpe_pct": gpe(pooled_pred, pooled_ref),
                "vde_pct": vde(pooled_pred, pooled_ref),
                "ffe_pct": ffe(pooled_pred, pooled_ref),
                "n_frames": len(pooled_ref),
            },
            "per_utterance": {k: per_utterance[k] for k in sorted(per_utterance)},
            "mean_over_utterances": {
                key: float(np.mean([per_utterance[u][key] for u in per_utterance]))
                for key in ("gpe_pct", "vde_pct", "ffe_pct")
            },
        },
        "verification": {
            "real": {
                "eer_pct": 100.0 * eer_of_trials(real_scored),
                "n_trials": len(real_scored),
            },
            "synthesized": {
                "eer_pct": 100.0 * eer_of_trials(synth_scored),
                "n_trials": len(synth_scored),
            },
        },
        "rate": {
            "real_phonemes_per_sec": float(np.mean(real_rates)),
            "synthesized_phonemes_per_sec": float(np.mean(synth_rates)),
        },
    }
    if output_dir is not None:
        _write_report(Path(output_dir), report, labels, vectors)
    return report


def _write_report(out: Path, report: dict, labels, vectors) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "reports").mkdir(exist_ok=True)
    (out / "embeddings").mkdir(exist_ok=True)
    with open(out / "reports" / "report.json", "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
    with open(out / "reports" / "report.txt", "w", encoding="utf-8") as f:
        f.write(render_report(report))
    export_embeddings(str(out / "embeddings" / "evaluation"), labels, np.stack(vectors))


def render_report(report: dict) -> str:
    """Human-readable summary of an evaluation report."""
    pooled = report["pitch"]["pooled"]
    ver = report["verification"]
    rate = report["rate"]
    lines = [
        f"target speaker      : {report['target_speaker']}",
        f"utterances          : {len(report['validation_utterances'])}",
        f"pitch frames pooled : {pooled['n_frames']}",
        f"GPE                 : {pooled['gpe_pct']:.2f}%",
        f"VDE                 : {pooled['vde_pct']:.2f}%",
        f"FFE                 : {pooled['ffe_pct']:.2f}%",
        f"EER real            : {ver['real']['eer_pct']:.2f}%  ({ver['real']['n_trials']} trials)",
        f"EER synthesized     : {ver['synthesized']['eer_pct']:.2f}%  ({ver['synthesized']['n_trials']} trials)",
        f"rate real           : {rate['real_phonemes_per_sec']:.2f} units/s",
        f"rate synthesized    : {rate['synthesized_phonemes_per_sec']:.2f} units/s",
    ]
    return "\n".join(lines) + "\n"


def evaluate_voice(
    acoustic: AcousticBundle,
    vocoder: VocoderBundle,
    target_records: Sequence[UtteranceRecord],
    other_records: Sequence[UtteranceRecord],
    *,
    embedder: Embedder | None = None,
    output_dir: str | Path | None = None,
) -> dict:
    """Synthesize every target utterance (duration-forced and free) with the
    given models, then run the full objective evaluation. Synthesized audio
    is written under ``output_dir``/synth when an output directory is given.
    """
    sr = acoustic.mel_config.sample_rate_hz
    forced, free = {}, {}
    for record in target_records:
        real_wave = load_audio(record.audio_filepath, sr)
        real_mel = compute_mel(real_wave, acoustic.mel_config)
        forced_mel, _ = acoustic.synthesize_with_reference(
            record.text, real_mel, speaker_id=record.speaker_id
        )
        free_mel, _, _ = acoustic.synthesize(record.text, speaker_id=record.speaker_id)
        forced[record.utterance_id] = vocoder.generate(forced_mel)
        free[record.utterance_id] = vocoder.generate(free_mel)
    if output_dir is not None:
        synth_dir = Path(output_dir) / "synth"
        for name, table in (("forced", forced), ("free", free)):
            (synth_dir / name).mkdir(parents=True, exist_ok=True)
            for utt, wave in table.items():
                write_wav(synth_dir / name / f"{utt}.wav", wave, sr)
    return evaluate_synthesized(
        target_records,
        other_records,
        forced,
        free,
        sample_rate_hz=sr,
        yin_config=acoustic.yin_config,
        tokenizer=acoustic.tokenizer,
        embedder=embedder,
        output_dir=output_dir,
    )
