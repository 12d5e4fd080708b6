"""Training loops, finetuning schedules and checkpoint handling."""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import torch
from torch import nn

from .align import extract_durations, forward_sum, viterbi
from .audio import (
    MelConfig,
    MelSpectrogram,
    compute_mel,
    load_audio,
    mel_spectrogram_torch,
)
from .data import (
    Tokenizer,
    UtteranceFeatures,
    UtteranceRecord,
    balanced_batches,
    batch_stream,
    prepare_features,
    read_manifest,
)
from .errors import DataError
from .model import (
    AcousticConfig,
    SpectrogramSynthesizer,
    extend_speakers,
    total_loss,
    upsample,
)
from .pitch import YinConfig, average_pitch_per_token
from .vocoder import (
    MultiPeriodDiscriminator,
    MultiScaleDiscriminator,
    VocoderConfig,
    VocoderGenerator,
    discriminator_loss,
    feature_matching_loss,
    generator_adversarial_loss,
)

# Optimizer steps per minute of adaptation data for each strategy.
STEP_RATES = {"direct": 200.0, "mixed": 1000.0}


def finetune_steps(method: str, minutes: float) -> int:
    """Number of finetuning steps for a data budget: 200 steps per minute
    for direct finetuning, 1000 for mixed-speaker finetuning."""
    if method not in STEP_RATES:
        raise ValueError(f"unknown finetuning method {method!r}")
    if minutes <= 0:
        raise ValueError("minutes must be positive")
    steps = int(round(STEP_RATES[method] * minutes))
    if steps < 1:
        raise ValueError(f"{minutes} minutes yields zero {method} steps")
    return steps


@dataclass
class FinetuneSpec:
    """What to adapt on and how.

    ``method`` is "direct" (new-speaker data only, same model shape) or
    "mixed" (balanced batches of original and new speaker through a model
    extended with a two-entry speaker table). ``minutes`` is the nominal
    adaptation data budget and fully determines the step count.
    """

    method: str
    minutes: float
    new_speaker_manifest: str | Path
    original_manifest: str | Path | None = None
    seed: int = 0
    batch_size: int = 8
    learning_rate: float = 1e-4
    original_pool_cap: int = 5000

    def __post_init__(self) -> None:
        finetune_steps(self.method, self.minutes)  # validates method and minutes
        if self.method == "mixed":
            if self.original_manifest is None:
                raise ValueError("mixed finetuning requires the original-speaker manifest")
            if self.batch_size % 2 != 0:
                raise ValueError("mixed finetuning requires an even batch size")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.original_pool_cap < 1:
            raise ValueError("original_pool_cap must be positive")


@dataclass
class AcousticTrainResult:
    payload: dict
    model: SpectrogramSynthesizer
    tokenizer: Tokenizer
    loss_log: list[dict] = field(default_factory=list)


@dataclass
class VocoderTrainResult:
    payload: dict
    generator: VocoderGenerator
    mpd: MultiPeriodDiscriminator
    msd: MultiScaleDiscriminator
    loss_log: list[dict] = field(default_factory=list)


def save_checkpoint(path: str | Path, payload: dict) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path: str | Path) -> dict:
    """Load a checkpoint payload (plain containers and tensors only)."""
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise DataError(f"{path}: cannot read checkpoint: {exc}") from exc
    if not isinstance(payload, dict) or "kind" not in payload:
        raise DataError(f"{path}: not a checkpoint file")
    return payload


def write_loss_log(path: str | Path, log: Sequence[dict]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for row in log:
            f.write(json.dumps(row, sort_keys=True) + "\n")


# -- acoustic model -------------------------------------------------------


def _single_speaker(records: Sequence[UtteranceRecord], role: str) -> int:
    speakers = sorted({r.speaker_id for r in records})
    if len(speakers) != 1:
        raise DataError(f"{role} manifest must hold one speaker, found {speakers}")
    return speakers[0]


def _check_alignable(features: Sequence[UtteranceFeatures]) -> None:
    for f in features:
        if f.mel.shape[0] < len(f.tokens):
            raise DataError(
                f"{f.record.audio_filepath}: {f.mel.shape[0]} mel frames cannot "
                f"cover {len(f.tokens)} tokens"
            )


def _acoustic_item_loss(
    model: SpectrogramSynthesizer, feats: UtteranceFeatures, speaker_row: int | None
) -> tuple[torch.Tensor, dict[str, float]]:
    tokens = torch.tensor(feats.tokens.ids, dtype=torch.long)
    mel = torch.from_numpy(feats.mel)
    log_probs = model.alignment_log_probs(tokens, mel)
    align_loss = forward_sum(log_probs)
    durations = extract_durations(viterbi(log_probs), tokens.shape[0])
    token_pitch = torch.from_numpy(
        average_pitch_per_token(feats.contour, durations)
    )
    h = model.encode(tokens, speaker_row)
    log_dur_pred = model.predict_log_duration(h)
    pitch_pred = model.predict_pitch(h)
    mel_pred = model.decode(upsample(model.add_pitch(h, token_pitch), torch.from_numpy(durations)))
    log_dur_target = torch.log1p(torch.from_numpy(durations).to(mel.dtype))
    cfg = model.config
    return total_loss(
        mel_pred,
        mel,
        pitch_pred,
        token_pitch,
        log_dur_pred,
        log_dur_target,
        align_loss,
        cfg.alpha,
        cfg.beta,
        cfg.gamma,
    )


def _run_acoustic_loop(
    model: SpectrogramSynthesizer,
    batches: Iterator[list[UtteranceFeatures]],
    optimizer: torch.optim.Optimizer,
    first_step: int,
    last_step: int,
    base_lr: float,
    warmup_steps: int,
    speaker_rows: dict[int, int] | None,
) -> list[dict]:
    log = []
    model.train()
    for step in range(first_step, last_step + 1):
        if warmup_steps > 0:
            scale = min(1.0, step / warmup_steps)
            for group in optimizer.param_groups:
                group["lr"] = base_lr * scale
        batch = next(batches)
        totals: dict[str, float] = {}
        loss_sum = None
        for feats in batch:
            row = speaker_rows[feats.record.speaker_id] if speaker_rows else None
            loss, comps = _acoustic_item_loss(model, feats, row)
            loss_sum = loss if loss_sum is None else loss_sum + loss
            for key, value in comps.items():
                totals[key] = totals.get(key, 0.0) + value
        loss_mean = loss_sum / len(batch)
        optimizer.zero_grad()
        loss_mean.backward()
        nn.utils.clip_grad_norm_(model.parameters(), 1.0)
        optimizer.step()
        entry = {"step": step, "lr": optimizer.param_groups[0]["lr"]}
        entry.update({k: v / len(batch) for k, v in sorted(totals.items())})
        if speaker_rows:
            counts: dict[str, int] = {}
            for feats in batch:
                key = str(feats.record.speaker_id)
                counts[key] = counts.get(key, 0) + 1
            entry["speaker_counts"] = counts
        log.append(entry)
    return log


def _acoustic_payload(
    model: SpectrogramSynthesizer,
    tokenizer: Tokenizer,
    mel_config: MelConfig,
    yin_config: YinConfig,
    step: int,
    optimizer: torch.optim.Optimizer,
    speakers: Sequence[int],
) -> dict:
    return {
        "kind": "acoustic",
        "step": step,
        "acoustic_config": asdict(model.config),
        "mel_config": asdict(mel_config),
        "yin_config": asdict(yin_config),
        "symbols": list(tokenizer.symbols),
        "speakers": [int(s) for s in speakers],
        "model_state": model.state_dict(),
        "optimizer_state": optimizer.state_dict(),
    }


def _acoustic_from_payload(payload: dict):
    if payload.get("kind") != "acoustic":
        raise DataError("checkpoint is not an acoustic model checkpoint")
    config = AcousticConfig(**payload["acoustic_config"])
    model = SpectrogramSynthesizer(config)
    model.load_state_dict(payload["model_state"])
    tokenizer = Tokenizer(payload["symbols"])
    mel_config = MelConfig(**payload["mel_config"])
    yin_config = YinConfig(**payload["yin_config"])
    speakers = [int(s) for s in payload["speakers"]]
    return model, tokenizer, config, mel_config, yin_config, speakers


def pretrain_acoustic(
    records: Sequence[UtteranceRecord],
    *,
    steps: int,
    config: AcousticConfig | None = None,
    mel_config: MelConfig | None = None,
    yin_config: YinConfig | None = None,
    batch_size: int = 8,
    learning_rate: float = 1e-3,
    warmup_steps: int = 100,
    seed: int = 0,
    cache_dir: str | Path | None = None,
    resume_from: dict | None = None,
) -> AcousticTrainResult:
    """Train the spectrogram synthesizer from scratch on one speaker.

    The tokenizer vocabulary is built from the manifest texts (or taken from
    ``resume_from``) and then fixed for the lifetime of the model. Training
    is deterministic for a given seed.
    """
    if steps < 1:
        raise ValueError("steps must be positive")
    mel_config = mel_config or MelConfig()
    yin_config = yin_config or YinConfig(
        sample_rate_hz=mel_config.sample_rate_hz, hop_length=mel_config.hop_length
    )
    speaker = _single_speaker(records, "pretraining")

    torch.manual_seed(seed)
    first_step = 1
    if resume_from is not None:
        model, tokenizer, config, mel_config, yin_config, speakers = (
            _acoustic_from_payload(resume_from)
        )
        if speakers != [speaker]:
            raise DataError("resume checkpoint was trained on a different speaker")
        first_step = int(resume_from["step"]) + 1
    else:
        tokenizer = Tokenizer.from_texts([r.text for r in records])
        if config is None:
            config = AcousticConfig(vocab_size=tokenizer.vocab_size)
        elif config.vocab_size != tokenizer.vocab_size:
            raise ValueError(
                f"config vocab_size {config.vocab_size} does not match the "
                f"manifest vocabulary ({tokenizer.vocab_size})"
            )
        model = SpectrogramSynthesizer(config)

    features = prepare_features(records, tokenizer, mel_config, yin_config, cache_dir)
    _check_alignable(features)
    optimizer = torch.optim.Adam(model.parameters(), lr=learning_rate)
    if resume_from is not None:
        optimizer.load_state_dict(resume_from["optimizer_state"])
    log = []
    if first_step <= steps:
        batches = batch_stream(features, batch_size, seed)
        log = _run_acoustic_loop(
            model, batches, optimizer, first_step, steps, learning_rate, warmup_steps, None
        )
    payload = _acoustic_payload(
        model, tokenizer, mel_config, yin_config, max(steps, first_step - 1), optimizer, [speaker]
    )
    return AcousticTrainResult(payload=payload, model=model, tokenizer=tokenizer, loss_log=log)


def _cap_pool(
    records: Sequence[UtteranceRecord], cap: int, seed: int
) -> list[UtteranceRecord]:
    if len(records) <= cap:
        return list(records)
    rng = np.random.default_rng(seed)
    keep = sorted(rng.permutation(len(records))[:cap])
    return [records[i] for i in keep]


def finetune_acoustic(
    payload: dict,
    spec: FinetuneSpec,
    cache_dir: str | Path | None = None,
) -> AcousticTrainResult:
    """Adapt a pretrained synthesizer to a new speaker.

    Direct: keep the architecture, train on new-speaker data alone for
    round(200 * minutes) steps. Mixed: extend with a two-entry speaker
    table (row 0 original, row 1 new), draw every batch half and half from
    both speakers, train for round(1000 * minutes) steps; the original pool
    is capped by a seeded sample. The vocabulary and feature configs of the
    pretrained checkpoint are reused unchanged. All parameters train; the
    learning rate is fixed.
    """
    model, tokenizer, config, mel_config, yin_config, base_speakers = (
        _acoustic_from_payload(payload)
    )
    steps = finetune_steps(spec.method, spec.minutes)
    new_records = read_manifest(spec.new_speaker_manifest)
    new_speaker = _single_speaker(new_records, "new-speaker")

    torch.manual_seed(spec.seed)
    if spec.method == "direct":
        if config.n_speakers != 1:
            raise DataError("direct finetuning expects a single-speaker checkpoint")
        features = prepare_features(new_records, tokenizer, mel_config, yin_config, cache_dir)
        _check_alignable(features)
        batches = batch_stream(features, spec.batch_size, spec.seed)
        speakers = [new_speaker]
        speaker_rows = None
    else:
        original_records = _cap_pool(
            read_manifest(spec.original_manifest), spec.original_pool_cap, spec.seed
        )
        original_speaker = _single_speaker(original_records, "original-speaker")
        if original_speaker == new_speaker:
            raise DataError("original and new speaker ids must differ")
        if config.n_speakers != 1:
            raise DataError("mixed finetuning expects a single-speaker checkpoint")
        model = extend_speakers(model, 2)
        all_features = prepare_features(
            original_records + new_records, tokenizer, mel_config, yin_config, cache_dir
        )
        _check_alignable(all_features)
        pools = {
            original_speaker: [f for f in all_features if f.record.speaker_id == original_speaker],
            new_speaker: [f for f in all_features if f.record.speaker_id == new_speaker],
        }
        batches = balanced_batches(pools, spec.batch_size, spec.seed)
        speakers = [original_speaker, new_speaker]
        speaker_rows = {original_speaker: 0, new_speaker: 1}

    optimizer = torch.optim.Adam(model.parameters(), lr=spec.learning_rate)
    log = _run_acoustic_loop(
        model, batches, optimizer, 1, steps, spec.learning_rate, 0, speaker_rows
    )
    out_payload = _acoustic_payload(
        model, tokenizer, mel_config, yin_config, steps, optimizer, speakers
    )
    return AcousticTrainResult(payload=out_payload, model=model, tokenizer=tokenizer, loss_log=log)


@dataclass
class AcousticBundle:
    """A restored synthesizer with everything needed to run it on text."""

    model: SpectrogramSynthesizer
    tokenizer: Tokenizer
    mel_config: MelConfig
    yin_config: YinConfig
    speakers: list[int]

    @classmethod
    def from_payload(cls, payload: dict) -> "AcousticBundle":
        model, tokenizer, _, mel_config, yin_config, speakers = (
            _acoustic_from_payload(payload)
        )
        model.eval()
        return cls(model, tokenizer, mel_config, yin_config, speakers)

    def _row(self, speaker_id: int | None) -> int | None:
        if self.model.speaker_emb is None:
            if speaker_id is None or (self.speakers and speaker_id == self.speakers[0]):
                return None
            raise ValueError(
                f"speaker {speaker_id} not available; model voices speaker "
                f"{self.speakers[0] if self.speakers else '?'}"
            )
        if speaker_id is None:
            raise ValueError(f"pick a speaker from {self.speakers}")
        if speaker_id not in self.speakers:
            raise ValueError(f"speaker {speaker_id} not in {self.speakers}")
        return self.speakers.index(speaker_id)

    def synthesize(
        self, text: str, speaker_id: int | None = None, pace: float = 1.0
    ) -> tuple[MelSpectrogram, np.ndarray, np.ndarray]:
        """Text to (mel, per-token frame counts, per-token pitch in Hz)."""
        tokens = torch.tensor(self.tokenizer(text).ids, dtype=torch.long)
        mel, durations, pitch = self.model.infer(tokens, self._row(speaker_id), pace)
        return (
            MelSpectrogram(values=mel.numpy().astype(np.float32), config=self.mel_config),
            durations.numpy(),
            pitch.numpy(),
        )

    def synthesize_with_reference(
        self,
        text: str,
        reference: MelSpectrogram | np.ndarray,
        speaker_id: int | None = None,
    ) -> tuple[MelSpectrogram, np.ndarray]:
        """Synthesize with durations pinned to a reference recording's mel,
        so the output is frame-aligned with the reference."""
        ref = reference.values if isinstance(reference, MelSpectrogram) else reference
        tokens = torch.tensor(self.tokenizer(text).ids, dtype=torch.long)
        mel, durations = self.model.infer_with_reference(
            tokens, torch.from_numpy(np.asarray(ref, dtype=np.float32)), self._row(speaker_id)
        )
        return (
            MelSpectrogram(values=mel.numpy().astype(np.float32), config=self.mel_config),
            durations,
        )


# -- vocoder --------------------------------------------------------------


@dataclass
class _VocoderItem:
    waveform: np.ndarray
    mel: np.ndarray
    speaker_id: int


def _vocoder_items(
    records: Sequence[UtteranceRecord], mel_config: MelConfig, min_frames: int
) -> list[_VocoderItem]:
    items = []
    for record in records:
        wave = load_audio(record.audio_filepath, mel_config.sample_rate_hz)
        mel = compute_mel(wave, mel_config).values
        if mel.shape[0] - 1 < min_frames:
            raise DataError(
                f"{record.audio_filepath}: too short for vocoder training "
                f"(needs at least {min_frames + 1} mel frames)"
            )
        items.append(_VocoderItem(waveform=wave, mel=mel, speaker_id=record.speaker_id))
    return items


def _vocoder_payload(
    generator: VocoderGenerator,
    mpd: MultiPeriodDiscriminator,
    msd: MultiScaleDiscriminator,
    mel_config: MelConfig,
    step: int,
    opt_g: torch.optim.Optimizer,
    opt_d: torch.optim.Optimizer,
) -> dict:
    return {
        "kind": "vocoder",
        "step": step,
        "vocoder_config": asdict(generator.config),
        "mel_config": asdict(mel_config),
        "model_state": {
            "generator": generator.state_dict(),
            "mpd": mpd.state_dict(),
            "msd": msd.state_dict(),
        },
        "optimizer_state": {
            "generator": opt_g.state_dict(),
            "discriminator": opt_d.state_dict(),
        },
    }


def _vocoder_from_payload(payload: dict):
    if payload.get("kind") != "vocoder":
        raise DataError("checkpoint is not a vocoder checkpoint")
    config = VocoderConfig(**payload["vocoder_config"])
    mel_config = MelConfig(**payload["mel_config"])
    generator = VocoderGenerator(config)
    mpd = MultiPeriodDiscriminator(config)
    msd = MultiScaleDiscriminator(config)
    generator.load_state_dict(payload["model_state"]["generator"])
    mpd.load_state_dict(payload["model_state"]["mpd"])
    msd.load_state_dict(payload["model_state"]["msd"])
    return generator, mpd, msd, config, mel_config


def _run_vocoder_loop(
    generator: VocoderGenerator,
    mpd: MultiPeriodDiscriminator,
    msd: MultiScaleDiscriminator,
    mel_config: MelConfig,
    batches: Iterator[list[_VocoderItem]],
    opt_g: torch.optim.Optimizer,
    opt_d: torch.optim.Optimizer,
    first_step: int,
    last_step: int,
    segment_frames: int,
    seed: int,
) -> list[dict]:
    config = generator.config
    hop = config.hop_length
    rng = np.random.default_rng([seed, 1])
    log = []
    generator.train()
    mpd.train()
    msd.train()
    for step in range(first_step, last_step + 1):
        batch = next(batches)
        reals, fakes = [], []
        for item in batch:
            max_frames = item.mel.shape[0] - 1  # last frame may overrun the audio
            seg = min(segment_frames, max_frames)
            start = int(rng.integers(0, max_frames - seg + 1))
            mel_seg = torch.from_numpy(item.mel[start : start + seg])
            real = torch.from_numpy(
                item.waveform[start * hop : (start + seg) * hop].copy()
            )
            reals.append(real)
            fakes.append(generator(mel_seg))

        d_loss = sum(
            discriminator_loss(mpd(r), mpd(f.detach()))
            + discriminator_loss(msd(r), msd(f.detach()))
            for r, f in zip(reals, fakes)
        ) / len(batch)
        opt_d.zero_grad()
        d_loss.backward()
        opt_d.step()

        adv = fm = mel_l1 = 0.0
        for r, f in zip(reals, fakes):
            mpd_r, mpd_f = mpd(r), mpd(f)
            msd_r, msd_f = msd(r), msd(f)
            adv = adv + generator_adversarial_loss(mpd_f) + generator_adversarial_loss(msd_f)
            fm = fm + feature_matching_loss(mpd_r, mpd_f) + feature_matching_loss(msd_r, msd_f)
            mel_l1 = mel_l1 + torch.nn.functional.l1_loss(
                mel_spectrogram_torch(f, mel_config), mel_spectrogram_torch(r, mel_config)
            )
        adv, fm, mel_l1 = adv / len(batch), fm / len(batch), mel_l1 / len(batch)
        g_loss = adv + config.lambda_fm * fm + config.lambda_mel * mel_l1
        opt_g.zero_grad()
        g_loss.backward()
        opt_g.step()

        log.append(
            {
                "step": step,
                "generator": float(g_loss.detach()),
                "discriminator": float(d_loss.detach()),
                "adversarial": float(adv.detach()),
                "feature_matching": float(fm.detach()),
                "mel_l1": float(mel_l1.detach()),
            }
        )
    return log


def pretrain_vocoder(
    records: Sequence[UtteranceRecord],
    *,
    steps: int,
    config: VocoderConfig | None = None,
    mel_config: MelConfig | None = None,
    batch_size: int = 8,
    learning_rate: float = 2e-4,
    seed: int = 0,
    segment_frames: int = 32,
    resume_from: dict | None = None,
) -> VocoderTrainResult:
    """Adversarially train the vocoder on ground-truth audio segments."""
    if steps < 1:
        raise ValueError("steps must be positive")
    if segment_frames < 3:
        raise ValueError("segment_frames must be at least 3")
    mel_config = mel_config or MelConfig()
    torch.manual_seed(seed)
    first_step = 1
    if resume_from is not None:
        generator, mpd, msd, config, mel_config = _vocoder_from_payload(resume_from)
        first_step = int(resume_from["step"]) + 1
    else:
        config = config or VocoderConfig(n_mels=mel_config.n_mels)
        if config.hop_length != mel_config.hop_length:
            raise ValueError(
                f"vocoder upsampling {config.hop_length} must equal the mel hop "
                f"{mel_config.hop_length}"
            )
        generator = VocoderGenerator(config)
        mpd = MultiPeriodDiscriminator(config)
        msd = MultiScaleDiscriminator(config)
    items = _vocoder_items(records, mel_config, min_frames=3)
    opt_g = torch.optim.Adam(generator.parameters(), lr=learning_rate, betas=(0.8, 0.99))
    opt_d = torch.optim.Adam(
        itertools.chain(mpd.parameters(), msd.parameters()),
        lr=learning_rate,
        betas=(0.8, 0.99),
    )
    if resume_from is not None:
        opt_g.load_state_dict(resume_from["optimizer_state"]["generator"])
        opt_d.load_state_dict(resume_from["optimizer_state"]["discriminator"])
    log = []
    if first_step <= steps:
        batches = batch_stream(items, batch_size, seed)
        log = _run_vocoder_loop(
            generator, mpd, msd, mel_config, batches, opt_g, opt_d,
            first_step, steps, segment_frames, seed,
        )
    payload = _vocoder_payload(
        generator, mpd, msd, mel_config, max(steps, first_step - 1), opt_g, opt_d
    )
    return VocoderTrainResult(payload=payload, generator=generator, mpd=mpd, msd=msd, loss_log=log)


def finetune_vocoder(
    payload: dict,
    spec: FinetuneSpec,
    *,
    segment_frames: int = 32,
) -> VocoderTrainResult:
    """Adapt a trained vocoder to a new voice with the same step schedules
    as the synthesizer: new-speaker audio only for direct, balanced batches
    of both speakers for mixed. The vocoder has no speaker table, so the
    model shape never changes."""
    generator, mpd, msd, config, mel_config = _vocoder_from_payload(payload)
    steps = finetune_steps(spec.method, spec.minutes)
    new_records = read_manifest(spec.new_speaker_manifest)
    new_speaker = _single_speaker(new_records, "new-speaker")
    torch.manual_seed(spec.seed)
    new_items = _vocoder_items(new_records, mel_config, min_frames=3)
    if spec.method == "direct":
        batches = batch_stream(new_items, spec.batch_size, spec.seed)
    else:
        original_records = _cap_pool(
            read_manifest(spec.original_manifest), spec.original_pool_cap, spec.seed
        )
        original_speaker = _single_speaker(original_records, "original-speaker")
        if original_speaker == new_speaker:
            raise DataError("original and new speaker ids must differ")
        original_items = _vocoder_items(original_records, mel_config, min_frames=3)
        batches = balanced_batches(
            {original_speaker: original_items, new_speaker: new_items},
            spec.batch_size,
            spec.seed,
        )
    opt_g = torch.optim.Adam(generator.parameters(), lr=spec.learning_rate, betas=(0.8, 0.99))
    opt_d = torch.optim.Adam(
        itertools.chain(mpd.parameters(), msd.parameters()),
        lr=spec.learning_rate,
        betas=(0.8, 0.99),
    )
    log = _run_vocoder_loop(
        generator, mpd, msd, mel_config, batches, opt_g, opt_d,
        1, steps, segment_frames, spec.seed,
    )
    out = _vocoder_payload(generator, mpd, msd, mel_config, steps, opt_g, opt_d)
    return VocoderTrainResult(payload=out, generator=generator, mpd=mpd, msd=msd, loss_log=log)


@dataclass
class VocoderBundle:
    """A restored vocoder generator ready for waveform synthesis."""

    generator: VocoderGenerator
    config: VocoderConfig
    mel_config: MelConfig

    @classmethod
    def from_payload(cls, payload: dict) -> "VocoderBundle":
        generator, _, _, config, mel_config = _vocoder_from_payload(payload)
        generator.eval()
        return cls(generator, config, mel_config)

    @torch.no_grad()
    def generate(self, mel: MelSpectrogram | np.ndarray) -> np.ndarray:
        """Log-mel frames to a float32 waveform of n_frames * hop samples."""
        values = mel.values if isinstance(mel, MelSpectrogram) else np.asarray(mel)
        wave = self.generator(torch.from_numpy(values.astype(np.float32)))
        return wave.numpy().astype(np.float32)
