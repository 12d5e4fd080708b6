"""Desk-scale voice cloning: synthesizer, vocoder, finetuning and evaluation."""

from .audio import MelConfig, MelSpectrogram, compute_mel, load_audio, write_wav
from .data import (
    Tokenizer,
    TokenSequence,
    UtteranceRecord,
    balanced_batches,
    make_subset,
    read_manifest,
    write_manifest,
)
from .errors import DataError, VoicecloneError
from .evaluation import evaluate_synthesized, evaluate_voice
from .metrics import build_trials, eer, ffe, gpe, phoneme_rate, vde
from .model import AcousticConfig, SpectrogramSynthesizer
from .pitch import PitchContour, YinConfig, estimate_f0
from .training import (
    AcousticBundle,
    FinetuneSpec,
    VocoderBundle,
    finetune_acoustic,
    finetune_steps,
    finetune_vocoder,
    load_checkpoint,
    pretrain_acoustic,
    pretrain_vocoder,
    save_checkpoint,
)
from .vocoder import VocoderConfig, VocoderGenerator

__version__ = "0.1.0"

__all__ = [
    "AcousticBundle",
    "AcousticConfig",
    "DataError",
    "FinetuneSpec",
    "MelConfig",
    "MelSpectrogram",
    "PitchContour",
    "SpectrogramSynthesizer",
    "TokenSequence",
    "Tokenizer",
    "UtteranceRecord",
    "VocoderBundle",
    "VocoderConfig",
    "VocoderGenerator",
    "VoicecloneError",
    "YinConfig",
    "balanced_batches",
    "build_trials",
    "compute_mel",
    "eer",
    "estimate_f0",
    "evaluate_synthesized",
    "evaluate_voice",
    "ffe",
    "finetune_acoustic",
    "finetune_steps",
    "finetune_vocoder",
    "gpe",
    "load_audio",
    "load_checkpoint",
    "make_subset",
    "phoneme_rate",
    "pretrain_acoustic",
    "pretrain_vocoder",
    "read_manifest",
    "save_checkpoint",
    "vde",
    "write_manifest",
    "write_wav",
]
