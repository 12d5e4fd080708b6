"""Miniature adversarial mel-to-waveform vocoder."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import torch
import torch.nn.functional as F
from torch import nn

from .audio import MelConfig, mel_spectrogram_torch

LEAKY_SLOPE = 0.1


@dataclass(frozen=True)
class VocoderConfig:
    """Generator and discriminator sizes for the waveform synthesizer.

    The product of ``upsample_factors`` is the waveform samples emitted per
    mel frame and must equal the mel hop length it is trained against.
    """

    n_mels: int = 80
    upsample_factors: tuple[int, ...] = (8, 8, 2, 2)
    base_channels: int = 128
    resblock_kernels: tuple[int, ...] = (3, 7)
    resblock_dilations: tuple[int, ...] = (1, 3)
    mpd_periods: tuple[int, ...] = (2, 3, 5, 7, 11)
    msd_scales: int = 3
    lambda_fm: float = 2.0
    lambda_mel: float = 45.0

    def __post_init__(self) -> None:
        for name in ("upsample_factors", "resblock_kernels", "resblock_dilations", "mpd_periods"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not self.upsample_factors or any(
            u <= 0 or u % 2 for u in self.upsample_factors
        ):
            raise ValueError("upsample_factors must be positive even integers")
        if self.base_channels % (2 ** len(self.upsample_factors)) != 0:
            raise ValueError("base_channels must halve cleanly at every upsample stage")
        if len(set(self.mpd_periods)) != len(self.mpd_periods) or any(
            p <= 0 for p in self.mpd_periods
        ):
            raise ValueError("mpd_periods must be distinct positive integers")
        if any(k % 2 == 0 for k in self.resblock_kernels):
            raise ValueError("resblock_kernels must be odd")
        if self.msd_scales < 1:
            raise ValueError("msd_scales must be at least 1")

    @property
    def hop_length(self) -> int:
        return math.prod(self.upsample_factors)


class ResBlock(nn.Module):
    """Dilated residual convolutions at constant channel width and length."""

    def __init__(self, channels: int, kernel_size: int, dilations: Sequence[int]) -> None:
        super().__init__()
        self.convs = nn.ModuleList(
            nn.Conv1d(
                channels,
                channels,
                kernel_size,
                dilation=d,
                padding=(kernel_size // 2) * d,
            )
            for d in dilations
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for conv in self.convs:
            x = x + conv(F.leaky_relu(x, LEAKY_SLOPE))
        return x


class VocoderGenerator(nn.Module):
    """Transposed-conv upsampling stack turning mel frames into a waveform.

    Each stage halves the channel count and multiplies the time axis by its
    upsample factor, so T frames come out as exactly T * hop samples.
    """

    def __init__(self, config: VocoderConfig) -> None:
        super().__init__()
        self.config = config
        ch = config.base_channels
        self.pre = nn.Conv1d(config.n_mels, ch, kernel_size=7, padding=3)
        self.ups = nn.ModuleList()
        self.resblocks = nn.ModuleList()
        for factor in config.upsample_factors:
            self.ups.append(
                nn.ConvTranspose1d(
                    ch, ch // 2, kernel_size=2 * factor, stride=factor, padding=factor // 2
                )
            )
            ch //= 2
            self.resblocks.append(
                nn.ModuleList(
                    ResBlock(ch, k, config.resblock_dilations)
                    for k in config.resblock_kernels
                )
            )
        self.post = nn.Conv1d(ch, 1, kernel_size=7, padding=3)

    def forward(self, mel: torch.Tensor) -> torch.Tensor:
        """(n_frames, n_mels) log-mel to (n_frames * hop,) waveform in [-1, 1]."""
        if mel.dim() != 2 or mel.shape[1] != self.config.n_mels:
            raise ValueError(f"mel must be (n_frames, {self.config.n_mels})")
        if mel.shape[0] == 0:
            raise ValueError("mel has no frames")
        x = self.pre(mel.T[None])
        for up, blocks in zip(self.ups, self.resblocks):
            x = up(F.leaky_relu(x, LEAKY_SLOPE))
            x = sum(block(x) for block in blocks) / len(blocks)
        x = torch.tanh(self.post(F.leaky_relu(x, LEAKY_SLOPE)))
        return x[0, 0]


@dataclass
class DiscriminatorOutput:
    """Per-subdiscriminator logits and the intermediate feature maps."""

    logits: list[torch.Tensor]
    features: list[list[torch.Tensor]]


class PeriodDiscriminator(nn.Module):
    """2-D convolutions over the waveform folded into (time // period, period)."""

    def __init__(self, period: int) -> None:
        super().__init__()
        self.period = period
        self.convs = nn.ModuleList(
            [
                nn.Conv2d(1, 32, (5, 1), stride=(3, 1), padding=(2, 0)),
                nn.Conv2d(32, 64, (5, 1), stride=(3, 1), padding=(2, 0)),
                nn.Conv2d(64, 128, (5, 1), stride=(3, 1), padding=(2, 0)),
            ]
        )
        self.post = nn.Conv2d(128, 1, (3, 1), padding=(1, 0))

    def forward(self, wave: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor]]:
        n = wave.shape[0]
        remainder = n % self.period
        if remainder:
            wave = F.pad(wave[None, None], (0, self.period - remainder), mode="reflect")[0, 0]
        x = wave.view(1, 1, -1, self.period)
        features = []
        for conv in self.convs:
            x = F.leaky_relu(conv(x), LEAKY_SLOPE)
            features.append(x)
        x = self.post(x)
        features.append(x)
        return x.flatten(), features


class MultiPeriodDiscriminator(nn.Module):
    """One period discriminator per configured period."""

    def __init__(self, config: VocoderConfig) -> None:
        super().__init__()
        self.periods = config.mpd_periods
        self.subs = nn.ModuleList(PeriodDiscriminator(p) for p in self.periods)

    def forward(self, wave: torch.Tensor) -> DiscriminatorOutput:
        if wave.dim() != 1:
            raise ValueError("waveform must be 1-D")
        if wave.shape[0] < max(self.periods):
            raise ValueError(
                f"waveform of {wave.shape[0]} samples is shorter than the "
                f"largest period {max(self.periods)}"
            )
        logits, features = [], []
        for sub in self.subs:
            logit, feats = sub(wave)
            logits.append(logit)
            features.append(feats)
        return DiscriminatorOutput(logits=logits, features=features)


class ScaleDiscriminator(nn.Module):
    """1-D convolution stack over the raw (possibly pooled) waveform."""

    def __init__(self) -> None:
        super().__init__()
        self.convs = nn.ModuleList(
            [
                nn.Conv1d(1, 32, 15, stride=1, padding=7),
                nn.Conv1d(32, 64, 41, stride=4, padding=20),
                nn.Conv1d(64, 128, 41, stride=4, padding=20),
            ]
        )
        self.post = nn.Conv1d(128, 1, 3, padding=1)

    def forward(self, wave: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor]]:
        x = wave[None, None]
        features = []
        for conv in self.convs:
            x = F.leaky_relu(conv(x), LEAKY_SLOPE)
            features.append(x)
        x = self.post(x)
        features.append(x)
        return x.flatten(), features


class MultiScaleDiscriminator(nn.Module):
    """Scale discriminators on the waveform and its average-pooled halvings."""

    def __init__(self, config: VocoderConfig) -> None:
        super().__init__()
        self.subs = nn.ModuleList(ScaleDiscriminator() for _ in range(config.msd_scales))
        self.pool = nn.AvgPool1d(4, stride=2, padding=2)

    def forward(self, wave: torch.Tensor) -> DiscriminatorOutput:
        if wave.dim() != 1:
            raise ValueError("waveform must be 1-D")
        logits, features = [], []
        x = wave
        for k, sub in enumerate(self.subs):
            if k > 0:
                x = self.pool(x[None, None])[0, 0]
            logit, feats = sub(x)
            logits.append(logit)
            features.append(feats)
        return DiscriminatorOutput(logits=logits, features=features)


def discriminator_loss(
    real: DiscriminatorOutput, fake: DiscriminatorOutput
) -> torch.Tensor:
    """Least-squares discriminator objective: real toward 1, fake toward 0."""
    loss = 0.0
    for r, f in zip(real.logits, fake.logits):
        loss = loss + ((r - 1.0) ** 2).mean() + (f**2).mean()
    return loss


def generator_adversarial_loss(fake: DiscriminatorOutput) -> torch.Tensor:
    """Least-squares generator objective: fake logits toward 1."""
    loss = 0.0
    for f in fake.logits:
        loss = loss + ((f - 1.0) ** 2).mean()
    return loss


def feature_matching_loss(
    real: DiscriminatorOutput, fake: DiscriminatorOutput
) -> torch.Tensor:
    """Mean absolute difference of discriminator features, summed over layers."""
    loss = 0.0
    for real_feats, fake_feats in zip(real.features, fake.features):
        for r, f in zip(real_feats, fake_feats):
            loss = loss + (r.detach() - f).abs().mean()
    return loss


def vocoder_losses(
    real_wave: torch.Tensor,
    fake_wave: torch.Tensor,
    mpd: MultiPeriodDiscriminator,
    msd: MultiScaleDiscriminator,
    mel_config: MelConfig,
    lambda_fm: float = 2.0,
    lambda_mel: float = 45.0,
) -> dict[str, torch.Tensor]:
    """All adversarial training terms for one real/generated waveform pair.

    Returns the discriminator loss (fake side detached) and the generator
    total with its parts: adversarial + lambda_fm * feature matching +
    lambda_mel * mel-spectrogram L1.
    """
    if real_wave.shape != fake_wave.shape:
        raise ValueError("real and generated waveforms must have the same length")
    disc = 0.0
    for d in (mpd, msd):
        disc = disc + discriminator_loss(d(real_wave), d(fake_wave.detach()))
    adv = 0.0
    fm = 0.0
    for d in (mpd, msd):
        real_out = d(real_wave)
        fake_out = d(fake_wave)
        adv = adv + generator_adversarial_loss(fake_out)
        fm = fm + feature_matching_loss(real_out, fake_out)
    mel_l1 = F.l1_loss(
        mel_spectrogram_torch(fake_wave, mel_config),
        mel_spectrogram_torch(real_wave, mel_config),
    )
    generator = adv + lambda_fm * fm + lambda_mel * mel_l1
    return {
        "discriminator": disc,
        "generator": generator,
        "adversarial": adv,
        "feature_matching": fm,
        "mel_l1": mel_l1,
    }
