"""Structure preservation: feature extraction, the structure loss, and its
gradient with respect to the noisy latent.

The extractor is a small frozen conv net (seeded random weights, two
effective stride-2 stages) standing in for a pretrained ViT; it maps a frame
to per-patch feature vectors. Two loss modes share the identity-zero and
nonnegativity properties:
  * ``self-similarity``: mean |S_in - S_pred| between pairwise-cosine
    matrices of the patch features (default, follows the self-similarity
    reading);
  * ``pooled-cosine``: 1 - cosine of the mean-pooled feature vectors (the
    literal single-cosine form).
The latent gradient treats the current noise estimate as a constant,
differentiating only through the clean-frame prediction, the decoder and
the extractor.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autoencoder import decode_graph
from .numerics import NumericalError, Rng, Tape, as_grid, check_finite, gaussian

MODES = ("self-similarity", "pooled-cosine")


@dataclass
class FeatureExtractor:
    """Frozen two-stage conv feature net; patch grid is input/4 per side."""

    frame_channels: int = 3
    n_features: int = 16
    tensors: dict = field(default_factory=dict)

    @property
    def feature_dim(self):
        return self.n_features


@dataclass(frozen=True)
class StructureLossConfig:
    mode: str = "self-similarity"
    lam: float = 0.1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown structure mode {self.mode!r}")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")


def make_feature_extractor(frame_channels=3, n_features=16, seed=0x5EED):
    rng = Rng(seed)

    def conv_init(cout, cin):
        return gaussian(rng, (cout, cin, 3, 3)) * np.sqrt(2.0 / (cin * 9))

    t = {
        "w1": conv_init(n_features, frame_channels),
        "b1": np.full(n_features, 0.05),  # keeps dead all-zero patches rare
        "w2": conv_init(n_features, n_features),
        "b2": np.full(n_features, 0.05),
    }
    return FeatureExtractor(frame_channels, n_features, t)


def _stages_graph(tape, x, fe):
    h1 = tape.relu(tape.slice(tape.conv2d_3x3(x, fe.tensors["w1"], fe.tensors["b1"]),
                              np.s_[:, 0::2, 0::2]))
    h2 = tape.relu(tape.slice(tape.conv2d_3x3(h1, fe.tensors["w2"], fe.tensors["b2"]),
                              np.s_[:, 0::2, 0::2]))
    return h1, h2


def features_graph(tape, x, fe):
    """Patch features (K, F) on the tape; stride 2 realized by strided slicing."""
    _, h2 = _stages_graph(tape, x, fe)
    k = h2.data.shape[1] * h2.data.shape[2]
    return tape.reshape(tape.transpose(h2, (1, 2, 0)), (k, fe.n_features))


def patch_features(x, fe):
    tape = Tape()
    return features_graph(tape, tape.var(as_grid(x)), fe).data


def pooled_embedding(x, fe):
    """Mean-pooled features of both stages concatenated, (2F,).

    The first stage still sees fine detail at half resolution, so texture
    edits that the deeper patch grid averages away stay visible here.
    """
    tape = Tape()
    h1, h2 = _stages_graph(tape, tape.var(as_grid(x)), fe)
    return np.concatenate([h1.data.mean(axis=(1, 2)), h2.data.mean(axis=(1, 2))])


def self_similarity(x, fe):
    """K x K pairwise cosine matrix of patch features (symmetric, unit diagonal)."""
    tape = Tape()
    f = features_graph(tape, tape.var(as_grid(x)), fe)
    n = tape.l2_normalize_rows(f)
    return tape.matmul(n, tape.transpose(n)).data


def _loss_graph(tape, x_in, x_pred, fe, cfg):
    """x_in enters as a constant; x_pred may be a Var carrying gradients."""
    f_pred = features_graph(tape, x_pred, fe)
    if cfg.mode == "pooled-cosine":
        pooled_in = patch_features(x_in, fe).mean(axis=0)
        pooled_pred = tape.mean(f_pred, axis=0)
        return 1.0 - tape.cosine(tape.var(pooled_in), pooled_pred)
    s_in = self_similarity(x_in, fe)
    n_pred = tape.l2_normalize_rows(f_pred)
    s_pred = tape.matmul(n_pred, tape.transpose(n_pred))
    return tape.mean(tape.absval(s_pred - s_in))


def structure_loss(x_in, x_pred, fe, cfg):
    x_in = as_grid(x_in)
    x_pred = as_grid(x_pred)
    if x_in.shape != x_pred.shape:
        raise ValueError("frames must share a shape")
    tape = Tape()
    return float(_loss_graph(tape, x_in, tape.var(x_pred), fe, cfg).data)


def latent_gradient(z_t, t, eps_hat, x_in, ae, fe, cfg, sched):
    """d structure_loss / d z_t with eps_hat held constant.

    Path: z_t -> predicted clean latent (closed-form inversion) -> decode ->
    extractor -> loss against the input frame.
    """
    z_t = as_grid(z_t)
    eps_hat = as_grid(eps_hat)
    t = sched._check_t(t)
    ab = sched.alpha_bar[t - 1]
    tape = Tape()
    zv = tape.var(z_t)
    x0_hat = (zv - np.sqrt(1.0 - ab) * eps_hat) * (1.0 / np.sqrt(ab))
    x_pred = decode_graph(tape, x0_hat, ae)
    loss = _loss_graph(tape, x_in, x_pred, fe, cfg)
    grad = tape.backward(loss).get(zv)
    if grad is None:
        grad = np.zeros(z_t.shape)
    if not np.all(np.isfinite(grad)):
        raise NumericalError(f"non-finite structure gradient at t={t}")
    return grad
