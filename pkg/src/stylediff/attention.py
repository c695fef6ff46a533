"""Multi-head self-attention maps and the binary saliency masks cut from them.

Attention is computed over flattened feature maps: X is (HW) x C, each head
projects to dimension d and yields a row-stochastic (HW) x (HW) matrix
A = softmax(Q K^T / sqrt(d)). Saliency of a patch is the attention it
*receives*, averaged over heads and query rows; the mask keeps patches whose
saliency strictly exceeds the mean (so a constant map yields the empty mask).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import as_grid, softmax_rows


@dataclass(frozen=True)
class AttentionRecord:
    """Per-head attention matrices from one block evaluation."""

    a: np.ndarray  # (heads, HW, HW), rows sum to 1
    height: int
    width: int
    head_dim: int

    def __post_init__(self):
        if self.a.ndim != 3 or self.a.shape[1] != self.a.shape[2]:
            raise ValueError("attention record must be (heads, HW, HW)")
        if self.a.shape[1] != self.height * self.width:
            raise ValueError("attention size must equal height*width")


@dataclass(frozen=True)
class SaliencyMask:
    """Binary H x W grid plus the threshold that produced it."""

    m: np.ndarray
    psi: float


def compute_attention(x, w_q, w_k, height, width):
    """Attention record for features x (HW, C) under per-head projections (N, C, d)."""
    x = as_grid(x)
    w_q = as_grid(w_q)
    w_k = as_grid(w_k)
    if x.ndim != 2 or w_q.shape != w_k.shape or w_q.ndim != 3 or w_q.shape[1] != x.shape[1]:
        raise ValueError(f"attention shape mismatch: x{x.shape} wq{w_q.shape} wk{w_k.shape}")
    if x.shape[0] != height * width:
        raise ValueError("x rows must equal height*width")
    n_heads, _, d = w_q.shape
    mats = []
    for h in range(n_heads):
        q = x @ w_q[h]
        k = x @ w_k[h]
        mats.append(softmax_rows(q @ k.T / np.sqrt(d)))
    return AttentionRecord(np.stack(mats), height, width, d)


def saliency_mask(rec):
    """Threshold attention-received at its own mean (strict inequality)."""
    s = rec.a.mean(axis=(0, 1))  # attention received per patch
    psi = float(s.mean())
    m = (s > psi).astype(np.float64).reshape(rec.height, rec.width)
    return SaliencyMask(m, psi)


def mask_channel(rec):
    """Saliency mask as a single latent-resolution condition channel (1, H, W)."""
    return saliency_mask(rec).m[None, :, :]
