"""Parallel spectrogram synthesizer with explicit duration and pitch control."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from functools import lru_cache

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .align import (
    AlignmentEncoder,
    apply_static_prior,
    extract_durations,
    soft_alignment,
    static_prior,
    viterbi,
)


@dataclass(frozen=True)
class AcousticConfig:
    """Synthesizer hyperparameters; defaults fit desk-scale CPU training."""

    vocab_size: int
    n_mels: int = 80
    embed_dim: int = 192
    n_layers: int = 4
    n_heads: int = 2
    filter_size: int = 768
    kernel_size: int = 3
    predictor_size: int = 128
    predictor_kernel: int = 3
    dropout: float = 0.1
    align_dim: int = 32
    prior_strength: float = 1.0
    n_speakers: int = 1
    # loss weights: mel + alpha * pitch + beta * duration + gamma * alignment
    alpha: float = 0.1
    beta: float = 0.1
    gamma: float = 1.0

    def __post_init__(self) -> None:
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be at least 2")
        if self.embed_dim % self.n_heads != 0:
            raise ValueError("embed_dim must be divisible by n_heads")
        if self.n_speakers < 1:
            raise ValueError("n_speakers must be at least 1")
        if min(self.n_layers, self.filter_size, self.predictor_size) < 1:
            raise ValueError("layer counts and widths must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.prior_strength <= 0:
            raise ValueError("prior_strength must be positive")


@lru_cache(maxsize=1024)
def _positional_encoding_cached(length: int, dim: int, dtype: torch.dtype) -> torch.Tensor:
    position = torch.arange(length, dtype=dtype)[:, None]
    div = torch.exp(
        torch.arange(0, dim, 2, dtype=dtype) * (-math.log(10000.0) / dim)
    )
    table = torch.zeros(length, dim, dtype=dtype)
    table[:, 0::2] = torch.sin(position * div)
    table[:, 1::2] = torch.cos(position * div[: (dim + 1) // 2])
    return table


def positional_encoding(
    length: int, dim: int, dtype: torch.dtype = torch.float32
) -> torch.Tensor:
    """Sinusoidal position table, (length, dim); treat the result as read-only."""
    return _positional_encoding_cached(length, dim, dtype)


class FFTBlock(nn.Module):
    """Transformer block with a 1-D convolutional feed-forward network."""

    def __init__(
        self, dim: int, n_heads: int, filter_size: int, kernel_size: int, dropout: float
    ) -> None:
        super().__init__()
        self.attn = nn.MultiheadAttention(
            dim, n_heads, dropout=dropout, batch_first=True
        )
        self.conv1 = nn.Conv1d(dim, filter_size, kernel_size, padding=kernel_size // 2)
        self.conv2 = nn.Conv1d(filter_size, dim, kernel_size, padding=kernel_size // 2)
        self.norm1 = nn.LayerNorm(dim)
        self.norm2 = nn.LayerNorm(dim)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """(length, dim) in, same shape out."""
        h = x[None]
        attn_out, _ = self.attn(h, h, h, need_weights=False)
        h = self.norm1(h + self.dropout(attn_out))
        ff = self.conv2(F.relu(self.conv1(h.transpose(1, 2)))).transpose(1, 2)
        h = self.norm2(h + self.dropout(ff))
        return h[0]


class VariancePredictor(nn.Module):
    """Two conv layers and a linear head yielding one scalar per position."""

    def __init__(
        self, dim: int, hidden: int, kernel_size: int, dropout: float
    ) -> None:
        super().__init__()
        pad = kernel_size // 2
        self.conv1 = nn.Conv1d(dim, hidden, kernel_size, padding=pad)
        self.conv2 = nn.Conv1d(hidden, hidden, kernel_size, padding=pad)
        self.norm1 = nn.LayerNorm(hidden)
        self.norm2 = nn.LayerNorm(hidden)
        self.dropout = nn.Dropout(dropout)
        self.out = nn.Linear(hidden, 1)

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        """(length, dim) hidden states to (length,) scalars."""
        x = F.relu(self.conv1(h.T[None])).squeeze(0).T
        x = self.dropout(self.norm1(x))
        x = F.relu(self.conv2(x.T[None])).squeeze(0).T
        x = self.dropout(self.norm2(x))
        return self.out(x).squeeze(-1)


def upsample(token_states: torch.Tensor, durations: torch.Tensor) -> torch.Tensor:
    """Repeat each token state by its frame count: (n, d) to (sum(durations), d)."""
    if token_states.dim() != 2:
        raise ValueError("token_states must be 2-D")
    durations = torch.as_tensor(durations, dtype=torch.long, device=token_states.device)
    if durations.dim() != 1 or durations.shape[0] != token_states.shape[0]:
        raise ValueError("durations must be 1-D with one entry per token")
    if torch.any(durations < 0):
        raise ValueError("durations must be non-negative")
    if int(durations.sum()) == 0:
        raise ValueError("total duration is zero")
    return torch.repeat_interleave(token_states, durations, dim=0)


def total_loss(
    mel_pred: torch.Tensor,
    mel_target: torch.Tensor,
    pitch_pred: torch.Tensor,
    pitch_target: torch.Tensor,
    log_dur_pred: torch.Tensor,
    log_dur_target: torch.Tensor,
    align_loss: torch.Tensor,
    alpha: float,
    beta: float,
    gamma: float,
) -> tuple[torch.Tensor, dict[str, float]]:
    """Composite training objective.

    mean squared errors on mel frames, per-token pitch and log-domain
    durations, plus the alignment loss:
    total = mel + alpha * pitch + beta * duration + gamma * align.
    Returns the scalar loss and detached per-term values.
    """
    for a, b, name in (
        (mel_pred, mel_target, "mel"),
        (pitch_pred, pitch_target, "pitch"),
        (log_dur_pred, log_dur_target, "duration"),
    ):
        if a.shape != b.shape:
            raise ValueError(f"{name} prediction and target shapes differ")
    mel_term = F.mse_loss(mel_pred, mel_target)
    pitch_term = F.mse_loss(pitch_pred, pitch_target)
    dur_term = F.mse_loss(log_dur_pred, log_dur_target)
    total = mel_term + alpha * pitch_term + beta * dur_term + gamma * align_loss
    components = {
        "mel": float(mel_term.detach()),
        "pitch": float(pitch_term.detach()),
        "duration": float(dur_term.detach()),
        "align": float(align_loss.detach()),
        "total": float(total.detach()),
    }
    return total, components


class SpectrogramSynthesizer(nn.Module):
    """Text to log-mel spectrogram with parallel duration and pitch prediction.

    Token embeddings (plus an optional additive speaker embedding repeated
    over positions) run through a transformer encoder; scalar duration and
    pitch predictors read the encoded states; pitch is embedded back in and
    the states are repeated per duration before the decoder stack projects
    to mel frames.
    """

    def __init__(self, config: AcousticConfig) -> None:
        super().__init__()
        self.config = config
        d = config.embed_dim
        self.token_emb = nn.Embedding(config.vocab_size, d)
        self.speaker_emb = (
            nn.Embedding(config.n_speakers, d) if config.n_speakers > 1 else None
        )
        self.encoder = nn.ModuleList(
            FFTBlock(d, config.n_heads, config.filter_size, config.kernel_size, config.dropout)
            for _ in range(config.n_layers)
        )
        self.decoder = nn.ModuleList(
            FFTBlock(d, config.n_heads, config.filter_size, config.kernel_size, config.dropout)
            for _ in range(config.n_layers)
        )
        self.duration_predictor = VariancePredictor(
            d, config.predictor_size, config.predictor_kernel, config.dropout
        )
        self.pitch_predictor = VariancePredictor(
            d, config.predictor_size, config.predictor_kernel, config.dropout
        )
        self.pitch_emb = nn.Conv1d(1, d, kernel_size=3, padding=1)
        self.mel_proj = nn.Linear(d, config.n_mels)
        self.aligner = AlignmentEncoder(d, config.n_mels, config.align_dim)

    # -- encoder side -----------------------------------------------------

    def _check_speaker(self, speaker: int | None) -> None:
        if self.speaker_emb is None:
            if speaker is not None:
                raise ValueError("single-speaker model does not take a speaker index")
        else:
            if speaker is None:
                raise ValueError("multi-speaker model requires a speaker index")
            if not 0 <= speaker < self.config.n_speakers:
                raise ValueError(f"speaker index {speaker} out of range")

    def encode(self, tokens: torch.Tensor, speaker: int | None = None) -> torch.Tensor:
        """(n,) token ids to (n, embed_dim) hidden states."""
        if tokens.dim() != 1 or tokens.shape[0] == 0:
            raise ValueError("tokens must be a non-empty 1-D id tensor")
        self._check_speaker(speaker)
        h = self.token_emb(tokens)
        if self.speaker_emb is not None:
            h = h + self.speaker_emb.weight[speaker]
        h = h + positional_encoding(h.shape[0], h.shape[1], h.dtype)
        for block in self.encoder:
            h = block(h)
        return h

    def predict_log_duration(self, h: torch.Tensor) -> torch.Tensor:
        """Per-token durations in log(1 + frames) space."""
        return self.duration_predictor(h)

    def predict_pitch(self, h: torch.Tensor) -> torch.Tensor:
        """Per-token average pitch in Hz (0 for unvoiced tokens)."""
        return self.pitch_predictor(h)

    def add_pitch(self, h: torch.Tensor, pitch: torch.Tensor) -> torch.Tensor:
        """Add the embedded pitch sequence to the encoder states."""
        if pitch.shape != (h.shape[0],):
            raise ValueError("pitch must be 1-D with one value per token")
        emb = self.pitch_emb(pitch[None, None, :]).squeeze(0).T
        return h + emb

    # -- decoder side -----------------------------------------------------

    def decode(self, frame_states: torch.Tensor) -> torch.Tensor:
        """(T, embed_dim) upsampled states to (T, n_mels) log-mel frames."""
        x = frame_states + positional_encoding(
            frame_states.shape[0], frame_states.shape[1], frame_states.dtype
        )
        for block in self.decoder:
            x = block(x)
        return self.mel_proj(x)

    # -- alignment --------------------------------------------------------

    def alignment_log_probs(
        self, tokens: torch.Tensor, mel: torch.Tensor
    ) -> torch.Tensor:
        """Prior-weighted attention log-probs (T, n) between tokens and mel."""
        keys, queries = self.aligner(self.token_emb(tokens), mel)
        log_probs = soft_alignment(keys, queries)
        prior = static_prior(
            tokens.shape[0], mel.shape[0], self.config.prior_strength
        )
        return apply_static_prior(log_probs, prior)

    # -- inference --------------------------------------------------------

    def _resolve_durations(self, log_dur: torch.Tensor, pace: float) -> torch.Tensor:
        # round-and-clamp: negative predictions floor at zero frames, and if
        # everything rounds to zero each token is granted one frame
        frames = torch.round(torch.expm1(log_dur) * pace).long().clamp(min=0)
        if int(frames.sum()) < frames.shape[0]:
            frames = frames.clamp(min=1)
        return frames

    @torch.no_grad()
    def infer(
        self, tokens: torch.Tensor, speaker: int | None = None, pace: float = 1.0
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Synthesize mel frames from token ids.

        ``pace`` multiplies predicted durations (values above 1 slow speech
        down). Returns (mel (T, n_mels), durations (n,), pitch (n,)).
        """
        if pace <= 0:
            raise ValueError("pace must be positive")
        was_training = self.training
        self.eval()
        try:
            h = self.encode(tokens, speaker)
            durations = self._resolve_durations(self.predict_log_duration(h), pace)
            pitch = self.predict_pitch(h)
            mel = self.decode(upsample(self.add_pitch(h, pitch), durations))
        finally:
            self.train(was_training)
        return mel, durations, pitch

    @torch.no_grad()
    def infer_with_reference(
        self, tokens: torch.Tensor, reference_mel: torch.Tensor, speaker: int | None = None
    ) -> tuple[torch.Tensor, np.ndarray]:
        """Synthesize with durations aligned to a reference mel.

        The output has exactly as many frames as the reference, which makes
        frame-synchronous comparison against the reference audio possible.
        Returns (mel, durations).
        """
        was_training = self.training
        self.eval()
        try:
            log_probs = self.alignment_log_probs(tokens, reference_mel)
            durations = extract_durations(viterbi(log_probs), tokens.shape[0])
            h = self.encode(tokens, speaker)
            pitch = self.predict_pitch(h)
            mel = self.decode(
                upsample(self.add_pitch(h, pitch), torch.from_numpy(durations))
            )
        finally:
            self.train(was_training)
        return mel, durations

    def config_dict(self) -> dict:
        return asdict(self.config)


def extend_speakers(
    model: SpectrogramSynthesizer, n_speakers: int
) -> SpectrogramSynthesizer:
    """Copy of the model with an additive speaker embedding table of
    ``n_speakers`` rows; every shared weight carries over unchanged.

    With all-zero speaker rows the extended model computes exactly the same
    forward pass as the original, so adaptation starts from the pretrained
    behavior for every speaker.
    """
    if n_speakers < 2:
        raise ValueError("a speaker table needs at least two rows")
    extended = SpectrogramSynthesizer(replace(model.config, n_speakers=n_speakers))
    missing, unexpected = extended.load_state_dict(model.state_dict(), strict=False)
    if unexpected or set(missing) - {"speaker_emb.weight"}:
        raise ValueError(
            f"state does not transfer cleanly: missing={missing} unexpected={unexpected}"
        )
    return extended
