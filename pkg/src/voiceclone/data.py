"""Manifests, tokenization, data subsets and deterministic batch streams."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np

from .audio import MelConfig, compute_mel, load_audio, read_matrix, write_matrix
from .errors import DataError
from .pitch import (
    PitchContour,
    YinConfig,
    estimate_f0,
    read_pitch_cache,
    write_pitch_cache,
)

MANIFEST_KEYS = ("audio_filepath", "text", "speaker_id", "duration")


@dataclass(frozen=True)
class UtteranceRecord:
    """One manifest row: an audio file with its transcript and speaker."""

    audio_filepath: str
    text: str
    speaker_id: int
    duration_sec: float

    @property
    def utterance_id(self) -> str:
        return Path(self.audio_filepath).stem


def read_manifest(path: str | Path) -> list[UtteranceRecord]:
    """Parse a JSON-lines manifest into utterance records.

    Each line must carry audio_filepath, text, speaker_id and duration.
    Raises DataError with the offending line number on malformed input.
    """
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            missing = [k for k in MANIFEST_KEYS if k not in row]
            if missing:
                raise DataError(f"{path}:{lineno}: missing keys {missing}")
            if not str(row["text"]).strip():
                raise DataError(f"{path}:{lineno}: empty text")
            duration = float(row["duration"])
            if duration <= 0:
                raise DataError(f"{path}:{lineno}: non-positive duration")
            records.append(
                UtteranceRecord(
                    audio_filepath=str(row["audio_filepath"]),
                    text=str(row["text"]),
                    speaker_id=int(row["speaker_id"]),
                    duration_sec=duration,
                )
            )
    if not records:
        raise DataError(f"{path}: manifest has no records")
    return records


def write_manifest(path: str | Path, records: Sequence[UtteranceRecord]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(
                json.dumps(
                    {
                        "audio_filepath": r.audio_filepath,
                        "text": r.text,
                        "speaker_id": r.speaker_id,
                        "duration": r.duration_sec,
                    }
                )
                + "\n"
            )


@dataclass(frozen=True)
class TokenSequence:
    """Token ids with the symbols they came from, id 0 is the unknown token."""

    ids: tuple[int, ...]
    symbols: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.ids)


class Tokenizer:
    """Maps text to integer token sequences over a fixed symbol inventory.

    Symbols come from an optional phonemizer hook (text -> list of unit
    strings); without one, text is lowercased and split into characters.
    Unknown units map to the reserved id 0.
    """

    def __init__(
        self,
        symbols: Sequence[str],
        phonemizer: Callable[[str], list[str]] | None = None,
    ) -> None:
        self.symbols = list(symbols)
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("duplicate symbols in vocabulary")
        self.phonemizer = phonemizer
        self._index = {s: i + 1 for i, s in enumerate(self.symbols)}

    @classmethod
    def from_texts(
        cls,
        texts: Sequence[str],
        phonemizer: Callable[[str], list[str]] | None = None,
    ) -> "Tokenizer":
        units: set[str] = set()
        for text in texts:
            units.update(cls._split(text, phonemizer))
        return cls(sorted(units), phonemizer)

    @staticmethod
    def _split(text: str, phonemizer) -> list[str]:
        if not text.strip():
            raise ValueError("cannot tokenize empty text")
        if phonemizer is not None:
            return list(phonemizer(text.lower()))
        return list(text.lower())

    @property
    def vocab_size(self) -> int:
        # +1 for the unknown id
        return len(self.symbols) + 1

    def __call__(self, text: str) -> TokenSequence:
        units = self._split(text, self.phonemizer)
        return TokenSequence(
            ids=tuple(self._index.get(u, 0) for u in units), symbols=tuple(units)
        )


def make_subset(
    records: Sequence[UtteranceRecord], minutes: float, seed: int
) -> list[UtteranceRecord]:
    """Pick a seeded random subset whose total duration reaches ``minutes``.

    Utterances are taken in seeded shuffle order until the cumulative
    duration first reaches the target, so subsets for the same seed are
    nested: the 1-minute subset is a prefix of the 5-minute one.
    """
    if minutes <= 0:
        raise ValueError("minutes must be positive")
    target_sec = minutes * 60.0
    total = sum(r.duration_sec for r in records)
    if total < target_sec:
        raise DataError(
            f"pool holds {total / 60.0:.2f} min, cannot build a {minutes:g} min subset"
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(records))
    chosen: list[UtteranceRecord] = []
    cum = 0.0
    for idx in order:
        chosen.append(records[idx])
        cum += records[idx].duration_sec
        if cum >= target_sec:
            break
    return chosen


def _pool_stream(pool: Sequence, rng: np.random.Generator) -> Iterator:
    # Cycle through seeded epoch permutations so occurrence counts per item
    # never differ by more than one.
    while True:
        for idx in rng.permutation(len(pool)):
            yield pool[idx]


def batch_stream(pool: Sequence, batch_size: int, seed: int) -> Iterator[list]:
    """Endless stream of shuffled batches drawn from a single pool."""
    if batch_size <= 0:
        raise ValueError("batch_size must be positive")
    if not pool:
        raise ValueError("pool is empty")
    stream = _pool_stream(pool, np.random.default_rng(seed))
    while True:
        yield [next(stream) for _ in range(batch_size)]


def balanced_batches(
    pools: Mapping[int, Sequence], batch_size: int, seed: int
) -> Iterator[list]:
    """Endless stream of batches holding batch_size // 2 items per speaker.

    Exactly two pools are required and the batch size must be even; each
    pool is cycled through seeded epoch permutations independently.
    """
    if len(pools) != 2:
        raise ValueError("balanced_batches requires exactly two speaker pools")
    if batch_size <= 0 or batch_size % 2 != 0:
        raise ValueError("batch_size must be a positive even number")
    for speaker, pool in pools.items():
        if not pool:
            raise ValueError(f"speaker {speaker} has an empty pool")
    half = batch_size // 2
    streams = [
        _pool_stream(pools[speaker], np.random.default_rng([seed, k]))
        for k, speaker in enumerate(sorted(pools))
    ]
    while True:
        batch = []
        for stream in streams:
            batch.extend(next(stream) for _ in range(half))
        yield batch


@dataclass
class UtteranceFeatures:
    """Precomputed training features for one utterance."""

    record: UtteranceRecord
    tokens: TokenSequence
    mel: np.ndarray  # (n_frames, n_mels) float32
    contour: PitchContour
    waveform: np.ndarray  # float32 at the mel config sample rate


def _cache_key(record: UtteranceRecord) -> str:
    digest = hashlib.md5(record.audio_filepath.encode("utf-8")).hexdigest()[:10]
    return f"{record.utterance_id}_{digest}"


def prepare_features(
    records: Sequence[UtteranceRecord],
    tokenizer: Tokenizer,
    mel_config: MelConfig | None = None,
    yin_config: YinConfig | None = None,
    cache_dir: str | Path | None = None,
) -> list[UtteranceFeatures]:
    """Load audio and compute (or reread cached) mel and pitch features.

    Mel frames and pitch frames share the hop length, so the two feature
    streams always have matching lengths.
    """
    mel_config = mel_config or MelConfig()
    yin_config = yin_config or YinConfig(sample_rate_hz=mel_config.sample_rate_hz)
    if yin_config.hop_length != mel_config.hop_length:
        raise ValueError("mel and pitch hop lengths must match")
    if cache_dir is not None:
        cache_dir = Path(cache_dir)
        cache_dir.mkdir(parents=True, exist_ok=True)
    out = []
    for record in records:
        wave = load_audio(record.audio_filepath, mel_config.sample_rate_hz)
        mel = None
        contour = None
        if cache_dir is not None:
            mel_path = cache_dir / f"{_cache_key(record)}.mel"
            f0_path = cache_dir / f"{_cache_key(record)}.f0"
            if mel_path.exists() and f0_path.exists():
                mel = read_matrix(mel_path)
                contour = read_pitch_cache(f0_path)
        if mel is None or contour is None:
            mel = compute_mel(wave, mel_config).values
            contour = estimate_f0(wave, yin_config)
            if cache_dir is not None:
                write_matrix(cache_dir / f"{_cache_key(record)}.mel", mel)
                write_pitch_cache(cache_dir / f"{_cache_key(record)}.f0", contour)
        if mel.shape[0] != contour.f0_hz.shape[0]:
            raise DataError(
                f"{record.audio_filepath}: mel frames {mel.shape[0]} != "
                f"pitch frames {contour.f0_hz.shape[0]}"
            )
        out.append(
            UtteranceFeatures(
                record=record,
                tokens=tokenizer(record.text),
                mel=mel,
                contour=contour,
                waveform=wave,
            )
        )
    return out
