"""Unsupervised text-to-mel alignment: soft attention, monotonic losses, durations."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import torch
import torch.nn.functional as F
from scipy.stats import betabinom
from torch import nn

# Finite stand-in for log(0): exp(-1e9) underflows to zero, so impossible
# alignment states contribute neither mass nor gradient, while log-space
# additions stay NaN-free (unlike -inf).
NEG_INF = -1.0e9


def soft_alignment(text_keys: torch.Tensor, mel_queries: torch.Tensor) -> torch.Tensor:
    """Log-probabilities of each mel frame attending to each token.

    Scores are negative squared euclidean distances between projected mel
    queries (T, d) and token keys (n, d), log-softmax normalized over the
    token axis. Returns (T, n).
    """
    if text_keys.dim() != 2 or mel_queries.dim() != 2:
        raise ValueError("text_keys and mel_queries must be 2-D")
    if text_keys.shape[1] != mel_queries.shape[1]:
        raise ValueError("key and query feature widths differ")
    if text_keys.shape[0] == 0 or mel_queries.shape[0] == 0:
        raise ValueError("empty key or query sequence")
    dist_sq = (mel_queries[:, None, :] - text_keys[None, :, :]).pow(2).sum(dim=-1)
    return F.log_softmax(-dist_sq, dim=1)


@lru_cache(maxsize=512)
def _static_prior_np(n_tokens: int, n_frames: int, strength: float) -> np.ndarray:
    k = np.arange(n_tokens)
    t = np.arange(n_frames, dtype=np.float64)
    return betabinom.logpmf(
        k[None, :],
        n_tokens - 1,
        strength * (t + 1.0)[:, None],
        strength * (n_frames - t)[:, None],
    )


def static_prior(n_tokens: int, n_frames: int, strength: float = 1.0) -> torch.Tensor:
    """Beta-binomial alignment prior, (n_frames, n_tokens) log-pmf rows.

    Frame t draws token index k from BetaBinomial(n_tokens - 1,
    strength * (t + 1), strength * (n_frames - t)), which concentrates mass
    near the diagonal; larger strength tightens it.
    """
    if n_tokens < 1 or n_frames < 1:
        raise ValueError("n_tokens and n_frames must be positive")
    if strength <= 0:
        raise ValueError("strength must be positive")
    return torch.tensor(
        _static_prior_np(n_tokens, n_frames, float(strength)), dtype=torch.float32
    )


def apply_static_prior(log_probs: torch.Tensor, prior: torch.Tensor) -> torch.Tensor:
    """Add the prior in log space and renormalize over the token axis."""
    if log_probs.shape != prior.shape:
        raise ValueError("log_probs and prior shapes differ")
    return F.log_softmax(log_probs + prior.to(log_probs.dtype), dim=1)


def forward_sum(log_probs: torch.Tensor) -> torch.Tensor:
    """Negative log total probability of all monotone surjective alignments.

    A path visits tokens left to right starting at token 0 and ending at the
    last token, advancing by at most one token per frame; each frame emits
    the attention probability of its current token. Differentiable in
    ``log_probs``.
    """
    if log_probs.dim() != 2:
        raise ValueError("log_probs must be 2-D")
    n_frames, n_tokens = log_probs.shape
    if n_frames < n_tokens:
        raise ValueError("need at least as many frames as tokens")
    edge = log_probs.new_full((1,), NEG_INF)
    alpha = torch.cat([log_probs[0, :1], edge.expand(n_tokens - 1)])
    for t in range(1, n_frames):
        from_prev = torch.cat([edge, alpha[:-1]])
        alpha = log_probs[t] + torch.logaddexp(alpha, from_prev)
    return -alpha[n_tokens - 1]


def viterbi(log_probs) -> np.ndarray:
    """Most probable monotone surjective alignment path, one token per frame.

    Ties between staying on a token and advancing are resolved by staying,
    so transitions happen as early as needed but never earlier than the
    scores demand. Accepts a tensor or array, returns int64 (n_frames,).
    """
    if torch.is_tensor(log_probs):
        log_probs = log_probs.detach().cpu().numpy()
    lp = np.asarray(log_probs, dtype=np.float64)
    if lp.ndim != 2:
        raise ValueError("log_probs must be 2-D")
    n_frames, n_tokens = lp.shape
    if n_frames < n_tokens:
        raise ValueError("need at least as many frames as tokens")
    score = np.full(n_tokens, -np.inf)
    score[0] = lp[0, 0]
    came_from_prev = np.zeros((n_frames, n_tokens), dtype=bool)
    for t in range(1, n_frames):
        moved = np.concatenate(([-np.inf], score[:-1]))
        came_from_prev[t] = moved > score  # tie keeps the current token
        score = lp[t] + np.where(came_from_prev[t], moved, score)
    path = np.empty(n_frames, dtype=np.int64)
    state = n_tokens - 1
    for t in range(n_frames - 1, 0, -1):
        path[t] = state
        if came_from_prev[t, state]:
            state -= 1
    path[0] = state
    return path


def extract_durations(path: np.ndarray, n_tokens: int) -> np.ndarray:
    """Frame counts per token from a monotone surjective path.

    Validates that the path starts at token 0, ends at the last token and
    only ever advances by 0 or 1; every token then gets at least one frame.
    """
    path = np.asarray(path)
    if path.ndim != 1 or path.size == 0:
        raise ValueError("path must be a non-empty 1-D array")
    if path[0] != 0 or path[-1] != n_tokens - 1:
        raise ValueError("path must start at token 0 and end at the last token")
    steps = np.diff(path)
    if np.any((steps != 0) & (steps != 1)):
        raise ValueError("path must advance by 0 or 1 tokens per frame")
    return np.bincount(path, minlength=n_tokens).astype(np.int64)


class AlignmentEncoder(nn.Module):
    """Convolutional projections mapping tokens and mel frames into a shared
    alignment space where euclidean distance scores attention."""

    def __init__(self, embed_dim: int, n_mels: int, align_dim: int = 32) -> None:
        super().__init__()
        self.key_proj = nn.Sequential(
            nn.Conv1d(embed_dim, 2 * align_dim, kernel_size=3, padding=1),
            nn.ReLU(),
            nn.Conv1d(2 * align_dim, align_dim, kernel_size=3, padding=1),
        )
        self.query_proj = nn.Sequential(
            nn.Conv1d(n_mels, 2 * align_dim, kernel_size=3, padding=1),
            nn.ReLU(),
            nn.Conv1d(2 * align_dim, align_dim, kernel_size=3, padding=1),
        )

    def forward(
        self, token_emb: torch.Tensor, mel: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """(n, embed_dim) tokens and (T, n_mels) mel to (n, a) keys, (T, a) queries."""
        keys = self.key_proj(token_emb.T[None]).squeeze(0).T
        queries = self.query_proj(mel.T[None]).squeeze(0).T
        return keys, queries
