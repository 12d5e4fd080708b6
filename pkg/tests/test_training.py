import json
from pathlib import Path

import numpy as np
import pytest
import torch

from voiceclone.audio import MelConfig, write_wav
from voiceclone.data import Tokenizer, UtteranceRecord
from voiceclone.errors import DataError
from voiceclone.model import AcousticConfig
from voiceclone.training import (
    AcousticBundle,
    FinetuneSpec,
    VocoderBundle,
    _cap_pool,
    finetune_acoustic,
    finetune_steps,
    finetune_vocoder,
    load_checkpoint,
    pretrain_acoustic,
    pretrain_vocoder,
    save_checkpoint,
    write_loss_log,
)
from voiceclone.vocoder import VocoderConfig

from helpers import MICRO_ACOUSTIC, MICRO_VOCODER, SR, speak


def micro_pretrain(records, steps=3, seed=0, **overrides):
    vocab = Tokenizer.from_texts([r.text for r in records]).vocab_size
    cfg = AcousticConfig(vocab_size=vocab, **MICRO_ACOUSTIC)
    kwargs = dict(steps=steps, config=cfg, batch_size=2, warmup_steps=2, seed=seed)
    kwargs.update(overrides)
    return pretrain_acoustic(records, **kwargs)


def manifest_of(records) -> Path:
    folder = Path(records[0].audio_filepath).parent
    paths = list(folder.glob("*.jsonl"))
    assert len(paths) == 1
    return paths[0]


def micro_vocoder_pretrain(records, steps=2, seed=0, **overrides):
    kwargs = dict(
        steps=steps,
        config=VocoderConfig(**MICRO_VOCODER),
        batch_size=2,
        segment_frames=8,
        seed=seed,
    )
    kwargs.update(overrides)
    return pretrain_vocoder(records, **kwargs)


class TestFinetuneSteps:
    @pytest.mark.parametrize(
        "method,minutes,expected",
        [
            ("direct", 1, 200),
            ("direct", 5, 1000),
            ("direct", 30, 6000),
            ("direct", 60, 12000),
            ("mixed", 1, 1000),
            ("mixed", 5, 5000),
            ("mixed", 30, 30000),
            ("mixed", 60, 60000),
        ],
    )
    def test_schedule_table(self, method, minutes, expected):
        assert finetune_steps(method, minutes) == expected

    def test_fractional_minutes_round(self):
        assert finetune_steps("direct", 0.5) == 100
        assert finetune_steps("mixed", 0.0035) == 4  # round(3.5) banker's-rounds to 4

    def test_validation(self):
        with pytest.raises(ValueError, match="unknown"):
            finetune_steps("frozen", 1)
        with pytest.raises(ValueError, match="positive"):
            finetune_steps("direct", 0)
        with pytest.raises(ValueError, match="zero"):
            finetune_steps("direct", 0.001)


class TestFinetuneSpec:
    def test_mixed_requires_original_manifest(self):
        with pytest.raises(ValueError, match="original-speaker manifest"):
            FinetuneSpec(method="mixed", minutes=1, new_speaker_manifest="x.jsonl")

    def test_mixed_requires_even_batch(self):
        with pytest.raises(ValueError, match="even"):
            FinetuneSpec(
                method="mixed",
                minutes=1,
                new_speaker_manifest="x.jsonl",
                original_manifest="y.jsonl",
                batch_size=3,
            )

    def test_rejects_bad_rate_and_cap(self):
        with pytest.raises(ValueError):
            FinetuneSpec("direct", 1, "x.jsonl", learning_rate=0.0)
        with pytest.raises(ValueError):
            FinetuneSpec("direct", 1, "x.jsonl", original_pool_cap=0)


class TestCheckpointIO:
    def test_roundtrip(self, short_corpus_a, tmp_path):
        result = micro_pretrain(short_corpus_a, steps=2)
        path = tmp_path / "ck" / "acoustic.pt"
        save_checkpoint(path, result.payload)
        back = load_checkpoint(path)
        assert back["kind"] == "acoustic"
        assert back["step"] == 2
        assert back["symbols"] == result.payload["symbols"]
        assert back["speakers"] == [0]
        for key, tensor in result.payload["model_state"].items():
            assert torch.equal(back["model_state"][key], tensor)

    def test_garbage_file_rejected(self, tmp_path):
        path = tmp_path / "bad.pt"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(DataError):
            load_checkpoint(path)

    def test_wrong_payload_type_rejected(self, tmp_path):
        path = tmp_path / "odd.pt"
        torch.save({"weights": torch.ones(3)}, path)
        with pytest.raises(DataError, match="not a checkpoint"):
            load_checkpoint(path)

    def test_missing_file_raises_file_not_found(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_checkpoint(tmp_path / "absent.pt")

    def test_loss_log_is_json_lines(self, tmp_path):
        path = tmp_path / "log.jsonl"
        write_loss_log(path, [{"step": 1, "total": 2.5}, {"step": 2, "total": 1.5}])
        rows = [json.loads(line) for line in path.read_text().splitlines()]
        assert rows[0]["step"] == 1
        assert rows[1]["total"] == 1.5


class TestPretrainAcoustic:
    def test_runs_and_logs(self, short_corpus_a):
        result = micro_pretrain(short_corpus_a, steps=3)
        assert len(result.loss_log) == 3
        assert [e["step"] for e in result.loss_log] == [1, 2, 3]
        for entry in result.loss_log:
            for key in ("mel", "pitch", "duration", "align", "total", "lr"):
                assert key in entry
            assert "speaker_counts" not in entry
        assert result.payload["step"] == 3

    def test_warmup_ramps_learning_rate(self, short_corpus_a):
        result = micro_pretrain(short_corpus_a, steps=3, warmup_steps=2, learning_rate=1e-3)
        lrs = [e["lr"] for e in result.loss_log]
        assert lrs == [0.5e-3, 1e-3, 1e-3]

    def test_deterministic_for_seed(self, short_corpus_a):
        a = micro_pretrain(short_corpus_a, steps=3, seed=5)
        b = micro_pretrain(short_corpus_a, steps=3, seed=5)
        assert a.loss_log == b.loss_log
        for key, tensor in a.payload["model_state"].items():
            assert torch.equal(tensor, b.payload["model_state"][key])

    def test_different_seeds_differ(self, short_corpus_a):
        a = micro_pretrain(short_corpus_a, steps=3, seed=0)
        b = micro_pretrain(short_corpus_a, steps=3, seed=1)
        assert a.loss_log != b.loss_log

    def test_resume_continues_step_numbering(self, short_corpus_a):
        first = micro_pretrain(short_corpus_a, steps=2)
        resumed = pretrain_acoustic(
            short_corpus_a, steps=4, batch_size=2, warmup_steps=2, resume_from=first.payload
        )
        assert [e["step"] for e in resumed.loss_log] == [3, 4]
        assert resumed.payload["step"] == 4

    def test_resume_past_target_is_a_no_op(self, short_corpus_a):
        first = micro_pretrain(short_corpus_a, steps=2)
        resumed = pretrain_acoustic(
            short_corpus_a, steps=2, batch_size=2, resume_from=first.payload
        )
        assert resumed.loss_log == []
        assert resumed.payload["step"] == 2

    def test_rejects_multi_speaker_pool(self, short_corpus_a, short_corpus_b):
        with pytest.raises(DataError, match="one speaker"):
            micro_pretrain(short_corpus_a + short_corpus_b)

    def test_rejects_vocab_mismatch(self, short_corpus_a):
        cfg = AcousticConfig(vocab_size=50, **MICRO_ACOUSTIC)
        with pytest.raises(ValueError, match="vocab_size"):
            pretrain_acoustic(short_corpus_a, steps=1, config=cfg)

    def test_rejects_zero_steps(self, short_corpus_a):
        with pytest.raises(ValueError):
            micro_pretrain(short_corpus_a, steps=0)

    def test_rejects_text_longer_than_audio(self, tmp_path):
        wave = speak("ab", 110.0, char_sec=0.06)
        path = tmp_path / "tiny.wav"
        write_wav(path, wave, SR)
        record = UtteranceRecord(
            audio_filepath=str(path),
            text="abababababababababababababababababababababababab",
            speaker_id=0,
            duration_sec=len(wave) / SR,
        )
        with pytest.raises(DataError, match="cannot[\\s\\S]*cover"):
            micro_pretrain([record], steps=1)


class TestCapPool:
    def test_caps_deterministically(self):
        records = [
            UtteranceRecord(f"/a/u{i}.wav", "abc", 0, 1.0) for i in range(10)
        ]
        a = _cap_pool(records, 4, seed=3)
        b = _cap_pool(records, 4, seed=3)
        assert a == b
        assert len(a) == 4
        assert all(r in records for r in a)

    def test_no_op_when_under_cap(self):
        records = [UtteranceRecord("/a/u.wav", "abc", 0, 1.0)]
        assert _cap_pool(records, 5, seed=0) == records


class TestFinetuneAcoustic:
    def test_direct_runs_schedule(self, short_corpus_a, short_corpus_b):
        base = micro_pretrain(short_corpus_a, steps=2)
        spec = FinetuneSpec(
            method="direct",
            minutes=0.02,  # 4 steps
            new_speaker_manifest=manifest_of(short_corpus_b),
            batch_size=2,
        )
        result = finetune_acoustic(base.payload, spec)
        assert len(result.loss_log) == 4
        assert result.payload["step"] == 4
        assert result.payload["speakers"] == [1]
        assert result.payload["acoustic_config"]["n_speakers"] == 1
        assert result.payload["symbols"] == base.payload["symbols"]
        assert all(e["lr"] == spec.learning_rate for e in result.loss_log)

    def test_mixed_extends_and_balances(self, short_corpus_a, short_corpus_b):
        base = micro_pretrain(short_corpus_a, steps=2)
        spec = FinetuneSpec(
            method="mixed",
            minutes=0.004,  # 4 steps
            new_speaker_manifest=manifest_of(short_corpus_b),
            original_manifest=manifest_of(short_corpus_a),
            batch_size=2,
        )
        result = finetune_acoustic(base.payload, spec)
        assert len(result.loss_log) == 4
        assert result.payload["speakers"] == [0, 1]
        assert result.payload["acoustic_config"]["n_speakers"] == 2
        assert result.payload["model_state"]["speaker_emb.weight"].shape == (2, 16)
        for entry in result.loss_log:
            assert entry["speaker_counts"] == {"0": 1, "1": 1}

    def test_mixed_rejects_identical_speakers(self, short_corpus_a):
        base = micro_pretrain(short_corpus_a, steps=1)
        spec = FinetuneSpec(
            method="mixed",
            minutes=0.004,
            new_speaker_manifest=manifest_of(short_corpus_a),
            original_manifest=manifest_of(short_corpus_a),
            batch_size=2,
        )
        with pytest.raises(DataError, match="must differ"):
            finetune_acoustic(base.payload, spec)

    def test_direct_rejects_multi_speaker_checkpoint(self, short_corpus_a, short_corpus_b):
        base = micro_pretrain(short_corpus_a, steps=1)
        mixed_spec = FinetuneSpec(
            method="mixed",
            minutes=0.004,
            new_speaker_manifest=manifest_of(short_corpus_b),
            original_manifest=manifest_of(short_corpus_a),
            batch_size=2,
        )
        mixed = finetune_acoustic(base.payload, mixed_spec)
        direct_spec = FinetuneSpec(
            method="direct", minutes=0.02, new_speaker_manifest=manifest_of(short_corpus_b)
        )
        with pytest.raises(DataError, match="single-speaker"):
            finetune_acoustic(mixed.payload, direct_spec)

    def test_rejects_vocoder_checkpoint(self, short_corpus_a, short_corpus_b):
        voc = micro_vocoder_pretrain(short_corpus_a, steps=1)
        spec = FinetuneSpec(
            method="direct", minutes=0.02, new_speaker_manifest=manifest_of(short_corpus_b)
        )
        with pytest.raises(DataError, match="not an acoustic"):
            finetune_acoustic(voc.payload, spec)

    def test_deterministic(self, short_corpus_a, short_corpus_b):
        base = micro_pretrain(short_corpus_a, steps=2)
        spec = FinetuneSpec(
            method="direct",
            minutes=0.02,
            new_speaker_manifest=manifest_of(short_corpus_b),
            batch_size=2,
            seed=4,
        )
        a = finetune_acoustic(base.payload, spec)
        b = finetune_acoustic(base.payload, spec)
        assert a.loss_log == b.loss_log
        for key, tensor in a.payload["model_state"].items():
            assert torch.equal(tensor, b.payload["model_state"][key])


class TestAcousticBundle:
    def test_single_speaker_synthesis(self, short_corpus_a):
        result = micro_pretrain(short_corpus_a, steps=2)
        bundle = AcousticBundle.from_payload(result.payload)
        mel, durations, pitch = bundle.synthesize("abcd")
        assert mel.values.shape == (int(durations.sum()), 80)
        assert pitch.shape == (4,)
        assert bundle.speakers == [0]
        # the pretraining speaker id is also accepted explicitly
        mel2, _, _ = bundle.synthesize("abcd", speaker_id=0)
        assert np.array_equal(mel.values, mel2.values)
        with pytest.raises(ValueError, match="not available"):
            bundle.synthesize("abcd", speaker_id=9)

    def test_multi_speaker_requires_choice(self, short_corpus_a, short_corpus_b):
        base = micro_pretrain(short_corpus_a, steps=1)
        spec = FinetuneSpec(
            method="mixed",
            minutes=0.004,
            new_speaker_manifest=manifest_of(short_corpus_b),
            original_manifest=manifest_of(short_corpus_a),
            batch_size=2,
        )
        bundle = AcousticBundle.from_payload(finetune_acoustic(base.payload, spec).payload)
        with pytest.raises(ValueError, match="pick a speaker"):
            bundle.synthesize("abcd")
        mel, _, _ = bundle.synthesize("abcd", speaker_id=1)
        assert mel.values.shape[1] == 80
        with pytest.raises(ValueError, match="not in"):
            bundle.synthesize("abcd", speaker_id=7)

    def test_reference_synthesis_matches_frames(self, short_corpus_a):
        result = micro_pretrain(short_corpus_a, steps=2)
        bundle = AcousticBundle.from_payload(result.payload)
        reference = np.random.default_rng(0).standard_normal((19, 80)).astype(np.float32)
        mel, durations = bundle.synthesize_with_reference("abcd", reference)
        assert mel.values.shape == (19, 80)
        assert durations.sum() == 19


class TestVocoderTraining:
    def test_pretrain_runs_and_logs(self, short_corpus_a):
        result = micro_vocoder_pretrain(short_corpus_a, steps=2)
        assert [e["step"] for e in result.loss_log] == [1, 2]
        for entry in result.loss_log:
            for key in ("generator", "discriminator", "adversarial", "feature_matching", "mel_l1"):
                assert key in entry
        assert result.payload["kind"] == "vocoder"
        assert "symbols" not in result.payload
        assert "speakers" not in result.payload

    def test_deterministic_for_seed(self, short_corpus_a):
        a = micro_vocoder_pretrain(short_corpus_a, steps=2, seed=3)
        b = micro_vocoder_pretrain(short_corpus_a, steps=2, seed=3)
        assert a.loss_log == b.loss_log
        state_a = a.payload["model_state"]["generator"]
        state_b = b.payload["model_state"]["generator"]
        for key in state_a:
            assert torch.equal(state_a[key], state_b[key])

    def test_hop_mismatch_rejected(self, short_corpus_a):
        cfg = VocoderConfig(upsample_factors=(4, 4), base_channels=64)
        with pytest.raises(ValueError, match="hop"):
            pretrain_vocoder(short_corpus_a, steps=1, config=cfg)

    def test_resume(self, short_corpus_a):
        first = micro_vocoder_pretrain(short_corpus_a, steps=2)
        resumed = pretrain_vocoder(
            short_corpus_a,
            steps=3,
            batch_size=2,
            segment_frames=8,
            resume_from=first.payload,
        )
        assert [e["step"] for e in resumed.loss_log] == [3]
        assert resumed.payload["step"] == 3

    def test_finetune_direct(self, short_corpus_a, short_corpus_b):
        base = micro_vocoder_pretrain(short_corpus_a, steps=1)
        spec = FinetuneSpec(
            method="direct",
            minutes=0.02,
            new_speaker_manifest=manifest_of(short_corpus_b),
            batch_size=2,
        )
        result = finetune_vocoder(base.payload, spec, segment_frames=8)
        assert len(result.loss_log) == 4
        assert result.payload["step"] == 4

    def test_finetune_mixed(self, short_corpus_a, short_corpus_b):
        base = micro_vocoder_pretrain(short_corpus_a, steps=1)
        spec = FinetuneSpec(
            method="mixed",
            minutes=0.004,
            new_speaker_manifest=manifest_of(short_corpus_b),
            original_manifest=manifest_of(short_corpus_a),
            batch_size=2,
        )
        result = finetune_vocoder(base.payload, spec, segment_frames=8)
        assert len(result.loss_log) == 4

    def test_bundle_generates_exact_length(self, short_corpus_a):
        result = micro_vocoder_pretrain(short_corpus_a, steps=1)
        bundle = VocoderBundle.from_payload(result.payload)
        wave = bundle.generate(np.zeros((7, 80), dtype=np.float32))
        assert wave.shape == (7 * 256,)
        assert wave.dtype == np.float32
