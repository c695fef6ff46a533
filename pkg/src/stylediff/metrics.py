"""Evaluation triad over a shared toy embedder.

The embedder's image branch mean-pools the structure extractor's patch
features into one vector per frame. The text branch looks a style token up
in a fixed seeded table and projects it into the same space; the projection
is calibrated once (least squares) so each token lands on the centroid of
pooled features of oracle-styled probe frames. Absolute values are not
comparable to any pretrained-embedding numbers; all downstream use is
paired/directional.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import STYLE_TOKENS, apply_style, generate_video, random_scene, style_id
from .numerics import Rng, as_grid
from .structure import make_feature_extractor, pooled_embedding


@dataclass
class Embedder:
    extractor: object
    style_table: np.ndarray  # (V, d_style), fixed
    projection: np.ndarray  # (d_e, d_style), calibrated
    center: np.ndarray  # (d_e,), probe-corpus mean of pooled features
    scale: np.ndarray  # (d_e,), probe-corpus std of pooled features
    tokens: tuple = STYLE_TOKENS

    @property
    def dim(self):
        return self.projection.shape[0]

    def image_embed(self, frame):
        # standardizing keeps cosines from being dominated by the shared
        # positive component of relu-pooled features and lets weak style
        # signatures (block averaging, stripes) register
        pooled = pooled_embedding(as_grid(frame), self.extractor)
        return (pooled - self.center) / self.scale

    def text_embed(self, token):
        tid = token if isinstance(token, (int, np.integer)) else style_id(token)
        if not 0 <= tid < len(self.tokens):
            raise KeyError(f"unknown style id {tid}")
        return self.projection @ self.style_table[tid]


def fit_embedder(extractor=None, tokens=STYLE_TOKENS, style_dim=8, seed=0xE3B,
                 n_probe=6, probe_size=32, probe_frames=4):
    """Build and calibrate the embedder on a deterministic probe corpus."""
    extractor = extractor or make_feature_extractor()
    rng = Rng(seed)
    table = np.asarray([[(rng.uniform() * 2 - 1) for _ in range(style_dim)] for _ in tokens])
    probes = [generate_video(random_scene(rng, probe_size, probe_frames))
              for _ in range(n_probe)]
    pooled = {tok: np.stack([pooled_embedding(f, extractor)
                             for vid in probes for f in apply_style(vid, tok)])
              for tok in tokens}
    everything = np.concatenate(list(pooled.values()))
    center = everything.mean(axis=0)
    scale = everything.std(axis=0)
    scale[scale == 0.0] = 1.0
    c = np.stack([((pooled[tok] - center) / scale).mean(axis=0) for tok in tokens])
    proj, *_ = np.linalg.lstsq(table, c, rcond=None)  # table @ proj ~= standardized centroids
    return Embedder(extractor, table, proj.T, center, scale, tuple(tokens))


def _cos(a, b):
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b / (na * nb))


def temporal_consistency(seq, emb):
    """Mean cosine of embeddings of consecutive frame pairs."""
    seq = as_grid(seq)
    if seq.shape[0] < 2:
        raise ValueError("need at least 2 frames")
    e = [emb.image_embed(f) for f in seq]
    return float(np.mean([_cos(e[i], e[i + 1]) for i in range(len(e) - 1)]))


def prompt_consistency(seq, token, emb):
    """Mean cosine between frame embeddings and the style token embedding."""
    seq = as_grid(seq)
    te = emb.text_embed(token)
    return float(np.mean([_cos(emb.image_embed(f), te) for f in seq]))


def frame_accuracy(input_seq, output_seq, emb):
    """Mean cosine between corresponding input/output frame embeddings."""
    input_seq = as_grid(input_seq)
    output_seq = as_grid(output_seq)
    if input_seq.shape[0] != output_seq.shape[0]:
        raise ValueError("sequences must have equal length")
    return float(np.mean([
        _cos(emb.image_embed(a), emb.image_embed(b))
        for a, b in zip(input_seq, output_seq)
    ]))
