"""Command line entry points for training, adaptation, synthesis and evaluation.

Exit codes: 0 success, 2 usage error, 3 data error, 4 unexpected failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import yaml

from .audio import MelConfig, load_audio, write_matrix, write_wav
from .data import Tokenizer, make_subset, read_manifest, write_manifest
from .errors import DataError
from .evaluation import evaluate_synthesized, evaluate_voice, render_report
from .model import AcousticConfig
from .pitch import YinConfig
from .training import (
    AcousticBundle,
    FinetuneSpec,
    VocoderBundle,
    finetune_acoustic,
    finetune_vocoder,
    load_checkpoint,
    pretrain_acoustic,
    pretrain_vocoder,
    save_checkpoint,
    write_loss_log,
)
from .vocoder import VocoderConfig


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as f:
        loaded = yaml.safe_load(f)
    if loaded is None:
        return {}
    if not isinstance(loaded, dict):
        raise ValueError(f"{path}: config file must hold a mapping")
    return loaded


def _build_section(cls, section: dict, name: str):
    try:
        return cls(**section)
    except TypeError as exc:
        raise ValueError(f"bad {name} config section: {exc}") from exc


def _training_option(args, config: dict, key: str, default):
    """Resolution order: command line flag, config file, built-in default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    training = config.get("training", {})
    if key in training:
        return training[key]
    return default


def _prepare_out_dir(out_dir: str) -> Path:
    out = Path(out_dir)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    (out / "logs").mkdir(parents=True, exist_ok=True)
    return out


def _write_run_record(out: Path, name: str, options: dict) -> None:
    record = {"command": name, "options": {k: str(v) if isinstance(v, Path) else v for k, v in options.items()}}
    with open(out / "logs" / f"{name}_run.json", "w", encoding="utf-8") as f:
        json.dump(record, f, indent=2, sort_keys=True)
        f.write("\n")


def _cmd_pretrain(args) -> int:
    config = _load_config_file(args.config)
    records = read_manifest(args.manifest)
    out = _prepare_out_dir(args.out_dir)
    mel_config = _build_section(MelConfig, config.get("mel", {}), "mel")
    seed = int(_training_option(args, config, "seed", 0))
    steps = int(_training_option(args, config, "steps", 2000))
    batch_size = int(_training_option(args, config, "batch_size", 8))
    resume = load_checkpoint(args.resume) if args.resume else None

    if args.component == "acoustic":
        yin_section = config.get("yin", {})
        yin_config = (
            _build_section(YinConfig, yin_section, "yin") if yin_section else None
        )
        acoustic_section = dict(config.get("acoustic", {}))
        if "vocab_size" in acoustic_section:
            raise ValueError("vocab_size is derived from the manifest, not configured")
        acoustic_config = None
        if acoustic_section:
            vocab = Tokenizer.from_texts([r.text for r in records]).vocab_size
            acoustic_config = _build_section(
                AcousticConfig, {"vocab_size": vocab, **acoustic_section}, "acoustic"
            )
        result = pretrain_acoustic(
            records,
            steps=steps,
            config=acoustic_config,
            mel_config=mel_config,
            yin_config=yin_config,
            batch_size=batch_size,
            learning_rate=float(_training_option(args, config, "learning_rate", 1e-3)),
            warmup_steps=int(_training_option(args, config, "warmup_steps", 100)),
            seed=seed,
            cache_dir=args.cache_dir,
            resume_from=resume,
        )
        ckpt_path = out / "checkpoints" / "acoustic.pt"
        log_path = out / "logs" / "acoustic_loss.jsonl"
    else:
        vocoder_section = config.get("vocoder", {})
        result = pretrain_vocoder(
            records,
            steps=steps,
            config=_build_section(VocoderConfig, vocoder_section, "vocoder")
            if vocoder_section
            else None,
            mel_config=mel_config,
            batch_size=batch_size,
            learning_rate=float(_training_option(args, config, "learning_rate", 2e-4)),
            seed=seed,
            segment_frames=int(_training_option(args, config, "segment_frames", 32)),
            resume_from=resume,
        )
        ckpt_path = out / "checkpoints" / "vocoder.pt"
        log_path = out / "logs" / "vocoder_loss.jsonl"

    save_checkpoint(ckpt_path, result.payload)
    write_loss_log(log_path, result.loss_log)
    _write_run_record(
        out,
        f"pretrain_{args.component}",
        {"manifest": args.manifest, "steps": steps, "seed": seed, "batch_size": batch_size},
    )
    last = result.loss_log[-1] if result.loss_log else {}
    print(f"wrote {ckpt_path} after step {result.payload['step']}")
    if "total" in last:
        print(f"final loss {last['total']:.4f}")
    elif "generator" in last:
        print(f"final generator loss {last['generator']:.4f}")
    return 0


def _cmd_subset(args) -> int:
    records = read_manifest(args.manifest)
    subset = make_subset(records, args.minutes, args.seed)
    write_manifest(args.out, subset)
    total = sum(r.duration_sec for r in subset) / 60.0
    print(f"wrote {len(subset)} utterances ({total:.2f} min) to {args.out}")
    return 0


def _cmd_finetune(args) -> int:
    config = _load_config_file(args.config)
    payload = load_checkpoint(args.checkpoint)
    out = _prepare_out_dir(args.out_dir)
    spec = FinetuneSpec(
        method=args.method,
        minutes=args.minutes,
        new_speaker_manifest=args.new_manifest,
        original_manifest=args.original_manifest,
        seed=int(_training_option(args, config, "seed", 0)),
        batch_size=int(_training_option(args, config, "batch_size", 8)),
        learning_rate=float(_training_option(args, config, "learning_rate", 1e-4)),
        original_pool_cap=int(
            _training_option(args, config, "original_pool_cap", 5000)
        ),
    )
    if args.component == "acoustic":
        result = finetune_acoustic(payload, spec, cache_dir=args.cache_dir)
    else:
        result = finetune_vocoder(
            payload,
            spec,
            segment_frames=int(_training_option(args, config, "segment_frames", 32)),
        )
    tag = f"{args.component}_{args.method}_{args.minutes:g}min"
    ckpt_path = out / "checkpoints" / f"{tag}.pt"
    save_checkpoint(ckpt_path, result.payload)
    write_loss_log(out / "logs" / f"{tag}_loss.jsonl", result.loss_log)
    _write_run_record(
        out,
        f"finetune_{tag}",
        {
            "checkpoint": args.checkpoint,
            "method": args.method,
            "minutes": args.minutes,
            "seed": spec.seed,
            "steps": len(result.loss_log),
        },
    )
    print(f"wrote {ckpt_path} after {len(result.loss_log)} steps")
    return 0


def _cmd_synthesize(args) -> int:
    if (args.text is None) == (args.text_file is None):
        raise ValueError("provide exactly one of --text or --text-file")
    acoustic = AcousticBundle.from_payload(load_checkpoint(args.checkpoint))
    vocoder = VocoderBundle.from_payload(load_checkpoint(args.vocoder_checkpoint))
    sr = acoustic.mel_config.sample_rate_hz

    def run_one(text: str, wav_path: Path) -> None:
        mel, _, _ = acoustic.synthesize(text, speaker_id=args.speaker, pace=args.pace)
        wave = vocoder.generate(mel)
        wav_path.parent.mkdir(parents=True, exist_ok=True)
        write_wav(wav_path, wave, sr)
        if args.save_mel:
            write_matrix(wav_path.with_suffix(".mel"), mel.values)
        print(f"wrote {wav_path} ({wave.shape[0] / sr:.2f} s)")

    if args.text is not None:
        run_one(args.text, Path(args.out))
    else:
        out_dir = Path(args.out)
        with open(args.text_file, "r", encoding="utf-8") as f:
            lines = [line.strip() for line in f if line.strip()]
        if not lines:
            raise DataError(f"{args.text_file}: no text lines")
        for i, line in enumerate(lines):
            run_one(line, out_dir / f"{i:03d}.wav")
    return 0


def _read_synth_dir(synth_dir: Path, kind: str, utterance_ids, sample_rate: int) -> dict:
    table = {}
    for utt in utterance_ids:
        path = synth_dir / kind / f"{utt}.wav"
        if not path.exists():
            raise DataError(f"missing synthesized audio {path}")
        table[utt] = load_audio(path, sample_rate)
    return table


def _cmd_evaluate(args) -> int:
    target_records = read_manifest(args.target_manifest)
    other_records = []
    for manifest in args.others_manifest:
        other_records.extend(read_manifest(manifest))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    if args.synth_dir is not None:
        sr = args.sample_rate
        ids = [r.utterance_id for r in target_records]
        synth_dir = Path(args.synth_dir)
        report = evaluate_synthesized(
            target_records,
            other_records,
            _read_synth_dir(synth_dir, "forced", ids, sr),
            _read_synth_dir(synth_dir, "free", ids, sr),
            sample_rate_hz=sr,
            output_dir=out,
        )
    else:
        if args.checkpoint is None or args.vocoder_checkpoint is None:
            raise ValueError(
                "evaluate needs either --synth-dir or both --checkpoint and "
                "--vocoder-checkpoint"
            )
        acoustic = AcousticBundle.from_payload(load_checkpoint(args.checkpoint))
        vocoder = VocoderBundle.from_payload(load_checkpoint(args.vocoder_checkpoint))
        report = evaluate_voice(
            acoustic, vocoder, target_records, other_records, output_dir=out
        )
    print(render_report(report), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voiceclone",
        description="Train, adapt and evaluate a small voice cloning system.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="train a base model from scratch")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--component", choices=("acoustic", "vocoder"), default="acoustic")
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--warmup-steps", type=int, dest="warmup_steps")
    p.add_argument("--segment-frames", type=int, dest="segment_frames")
    p.add_argument("--seed", type=int)
    p.add_argument("--cache-dir")
    p.add_argument("--config")
    p.add_argument("--resume")
    p.set_defaults(func=_cmd_pretrain)

    p = sub.add_parser("subset", help="draw a seeded subset of a manifest by duration")
    p.add_argument("--manifest", required=True)
    p.add_argument("--minutes", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_subset)

    p = sub.add_parser("finetune", help="adapt a pretrained model to a new speaker")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--method", choices=("direct", "mixed"), required=True)
    p.add_argument("--minutes", type=float, required=True)
    p.add_argument("--new-manifest", required=True, dest="new_manifest")
    p.add_argument("--original-manifest", dest="original_manifest")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--component", choices=("acoustic", "vocoder"), default="acoustic")
    p.add_argument("--seed", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--original-pool-cap", type=int, dest="original_pool_cap")
    p.add_argument("--segment-frames", type=int, dest="segment_frames")
    p.add_argument("--cache-dir")
    p.add_argument("--config")
    p.set_defaults(func=_cmd_finetune)

    p = sub.add_parser("synthesize", help="turn text into a wav file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocoder-checkpoint", required=True, dest="vocoder_checkpoint")
    p.add_argument("--text")
    p.add_argument("--text-file", dest="text_file")
    p.add_argument("--out", required=True, help="wav path, or a directory with --text-file")
    p.add_argument("--speaker", type=int)
    p.add_argument("--pace", type=float, default=1.0, help="duration multiplier, >1 slows down")
    p.add_argument("--save-mel", action="store_true", dest="save_mel")
    p.set_defaults(func=_cmd_synthesize)

    p = sub.add_parser("evaluate", help="score a cloned voice against real recordings")
    p.add_argument("--target-manifest", required=True, dest="target_manifest")
    p.add_argument(
        "--others-manifest",
        required=True,
        dest="others_manifest",
        nargs="+",
        help="validation manifests of the non-target speakers",
    )
    p.add_argument("--out-dir", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--vocoder-checkpoint", dest="vocoder_checkpoint")
    p.add_argument("--synth-dir", dest="synth_dir", help="precomputed forced/ and free/ wavs")
    p.add_argument("--sample-rate", type=int, default=22050, dest="sample_rate")
    p.set_defaults(func=_cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the message
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports anything
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
