"""Synthetic content videos and procedural style oracles.

A scene is a single disk or square translating at constant velocity over a
static background gradient. Styles are deterministic pixel transforms keyed
by a small closed vocabulary; applying one to a content video yields the
training target for that (frame, token) pair. Everything is reproducible
from the seed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import Rng, as_grid

STYLE_TOKENS = ("plain", "invert", "stripes", "warm", "mosaic")


def style_id(token):
    try:
        return STYLE_TOKENS.index(token)
    except ValueError:
        raise KeyError(f"unknown style token {token!r}") from None


@dataclass(frozen=True)
class SceneSpec:
    size: int
    frames: int
    kind: str  # "disk" | "square"
    center: tuple  # (row, col) at frame 0
    velocity: tuple  # (d_row, d_col) per frame
    radius: float
    bg_colors: tuple  # ((r,g,b) at top, (r,g,b) at bottom)
    shape_color: tuple = None  # drawn from rng at render time when None

    def __post_init__(self):
        if self.kind not in ("disk", "square"):
            raise ValueError(f"unknown shape kind {self.kind!r}")
        for f in range(self.frames):
            cy = self.center[0] + f * self.velocity[0]
            cx = self.center[1] + f * self.velocity[1]
            if not (self.radius <= cy <= self.size - 1 - self.radius
                    and self.radius <= cx <= self.size - 1 - self.radius):
                raise ValueError(f"shape leaves canvas at frame {f}")


def random_scene(rng, size=32, frames=16):
    """Sample a scene whose shape provably stays inside the canvas."""
    radius = 3.0 + 3.0 * rng.uniform()
    margin = radius + 1.0
    span = size - 1 - 2 * margin
    vmax = span / max(frames - 1, 1) * 0.9
    vy = (2 * rng.uniform() - 1) * vmax
    vx = (2 * rng.uniform() - 1) * vmax
    # start so that both endpoints of the trajectory stay inside
    lo_y = margin + max(0.0, -(frames - 1) * vy)
    hi_y = size - 1 - margin - max(0.0, (frames - 1) * vy)
    lo_x = margin + max(0.0, -(frames - 1) * vx)
    hi_x = size - 1 - margin - max(0.0, (frames - 1) * vx)
    cy = lo_y + rng.uniform() * (hi_y - lo_y)
    cx = lo_x + rng.uniform() * (hi_x - lo_x)
    kind = "disk" if rng.bernoulli(0.5) else "square"
    bg0 = tuple(0.15 + 0.5 * rng.uniform() for _ in range(3))
    bg1 = tuple(0.15 + 0.5 * rng.uniform() for _ in range(3))
    color = tuple(0.3 + 0.7 * rng.uniform() for _ in range(3))
    return SceneSpec(size, frames, kind, (cy, cx), (vy, vx), radius, (bg0, bg1), color)


def generate_video(spec, rng=None):
    """Render (F, 3, H, W) frames in [0, 1]; rng only fills in missing colors."""
    shape_color = spec.shape_color
    if shape_color is None:
        if rng is None:
            raise ValueError("shape_color unset and no rng given")
        shape_color = tuple(0.3 + 0.7 * rng.uniform() for _ in range(3))
    n = spec.size
    rows = np.arange(n)[:, None] * np.ones((1, n))
    cols = np.ones((n, 1)) * np.arange(n)[None, :]
    ramp = rows / max(n - 1, 1)
    bg = np.stack([
        (1 - ramp) * spec.bg_colors[0][c] + ramp * spec.bg_colors[1][c] for c in range(3)
    ])
    frames = np.empty((spec.frames, 3, n, n))
    for f in range(spec.frames):
        cy = spec.center[0] + f * spec.velocity[0]
        cx = spec.center[1] + f * spec.velocity[1]
        if spec.kind == "disk":
            inside = (rows - cy) ** 2 + (cols - cx) ** 2 <= spec.radius ** 2
        else:
            inside = (np.abs(rows - cy) <= spec.radius) & (np.abs(cols - cx) <= spec.radius)
        img = bg.copy()
        for c in range(3):
            img[c][inside] = shape_color[c]
        frames[f] = img
    return np.clip(frames, 0.0, 1.0)


def apply_style(seq, token):
    """Deterministic pixel transform for a style token; [0,1] -> [0,1]."""
    seq = as_grid(seq)
    if token == "plain":
        return seq.copy()
    if token == "invert":
        return 1.0 - seq
    if token == "stripes":
        h = seq.shape[-2]
        gain = 0.6 + 0.4 * 0.5 * (1.0 + np.sin(2.0 * np.pi * 3.0 * np.arange(h) / h))
        return seq * gain[:, None]
    if token == "warm":
        gains = np.array([1.0, 0.78, 0.55])
        return seq * gains[:, None, None] if seq.ndim == 3 else seq * gains[None, :, None, None]
    if token == "mosaic":
        b = 8
        h, w = seq.shape[-2], seq.shape[-1]
        if h % b or w % b:
            raise ValueError("mosaic needs dims divisible by 8")
        lead = seq.shape[:-2]
        blocks = seq.reshape(*lead, h // b, b, w // b, b).mean(axis=(-3, -1))
        return blocks.repeat(b, axis=-2).repeat(b, axis=-1)
    raise KeyError(f"unknown style token {token!r}")


def add_flicker(seq, rng, amplitude=0.15):
    """Multiplicative per-frame global brightness jitter (synthetic flicker)."""
    seq = as_grid(seq)
    out = seq.copy()
    for f in range(seq.shape[0]):
        g = 1.0 + amplitude * (2.0 * rng.uniform() - 1.0)
        out[f] = np.clip(seq[f] * g, 0.0, 1.0)
    return out


@dataclass
class Corpus:
    """Training triples plus the held-out split (split is by video)."""

    train: list  # (content frame, token id, styled frame)
    heldout: list
    videos: list = field(default_factory=list)  # content videos, (F,3,H,W) each
    size: int = 32
    frames: int = 16


def build_dataset(n_videos, rng, size=32, frames=16, tokens=STYLE_TOKENS):
    """n_videos scenes x all frames x all tokens -> triples, 80/20 split by video."""
    if n_videos < 1:
        raise ValueError("need at least one video")
    videos = [generate_video(random_scene(rng, size, frames)) for _ in range(n_videos)]
    order = list(range(n_videos))
    for i in range(n_videos - 1, 0, -1):  # Fisher-Yates, deterministic per seed
        j = rng.randint(0, i + 1)
        order[i], order[j] = order[j], order[i]
    n_held = max(1, n_videos // 5) if n_videos > 1 else 0
    held_set = set(order[:n_held])
    train, heldout = [], []
    for vi, vid in enumerate(videos):
        styled = {tok: apply_style(vid, tok) for tok in tokens}
        dest = heldout if vi in held_set else train
        for f in range(frames):
            for tok in tokens:
                dest.append((vid[f], style_id(tok), styled[tok][f]))
    return Corpus(train, heldout, videos, size, frames)


def sample_batch(corpus, n, rng):
    return [corpus.train[rng.randint(0, len(corpus.train))] for _ in range(n)]
