"""Latent-stage autoencoder: pixel frames <-> latents.

Two modes. ``identity`` passes frames through untouched (latent space ==
pixel space), which turns the rest of the pipeline into pixel-space
diffusion and isolates diffusion-math failures from reconstruction error.
``learned`` halves the spatial dims with a two-conv encoder/decoder pair
trained by full-frame MSE. Both directions are differentiable on the tape
(the structure-loss gradient flows through decode).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import SgdMomentum, Tape, Var, as_grid, check_finite, gaussian


@dataclass
class AutoencoderWeights:
    mode: str  # "identity" | "learned"
    frame_channels: int
    latent_channels: int
    hidden: int = 16
    tensors: dict = field(default_factory=dict)

    def latent_shape(self, frame_shape):
        c, h, w = frame_shape
        if self.mode == "identity":
            return (c, h, w)
        return (self.latent_channels, h // 2, w // 2)


def make_identity_autoencoder(frame_channels=3):
    return AutoencoderWeights("identity", frame_channels, frame_channels)


def init_autoencoder(rng, frame_channels=3, latent_channels=4, hidden=16):
    """He-scaled random weights for the learned mode."""

    def conv_init(cout, cin):
        std = np.sqrt(2.0 / (cin * 9))
        return gaussian(rng, (cout, cin, 3, 3)) * std

    t = {
        "enc1_w": conv_init(hidden, frame_channels),
        "enc1_b": np.zeros(hidden),
        "enc2_w": conv_init(latent_channels, hidden),
        "enc2_b": np.zeros(latent_channels),
        "dec1_w": conv_init(hidden, latent_channels),
        "dec1_b": np.zeros(hidden),
        "dec2_w": conv_init(frame_channels, hidden),
        "dec2_b": np.zeros(frame_channels),
    }
    return AutoencoderWeights("learned", frame_channels, latent_channels, hidden, t)


def _avgpool2(tape, x):
    # 2x2 mean pooling composed from strided slices
    a = tape.add(x[:, 0::2, 0::2], x[:, 1::2, 0::2])
    b = tape.add(x[:, 0::2, 1::2], x[:, 1::2, 1::2])
    return tape.mul(tape.add(a, b), 0.25)


def encode_graph(tape, x, w, tensors=None):
    """Encoder on the tape; `tensors` may supply Vars for training."""
    if w.mode == "identity":
        return x if isinstance(x, Var) else tape.var(np.asarray(x, dtype=np.float64))
    t = tensors or w.tensors
    xc = tape.add(x, -0.5)  # center [0,1] frames
    h = tape.relu(tape.conv2d_3x3(xc, t["enc1_w"], t["enc1_b"]))
    h = _avgpool2(tape, h)
    return tape.conv2d_3x3(h, t["enc2_w"], t["enc2_b"])


def decode_graph(tape, z, w, tensors=None):
    if w.mode == "identity":
        return z if isinstance(z, Var) else tape.var(np.asarray(z, dtype=np.float64))
    t = tensors or w.tensors
    h = tape.relu(tape.conv2d_3x3(z, t["dec1_w"], t["dec1_b"]))
    h = tape.upsample2(h)
    return tape.add(tape.conv2d_3x3(h, t["dec2_w"], t["dec2_b"]), 0.5)


def encode(x, w):
    x = as_grid(x)
    if x.ndim != 3 or x.shape[0] != w.frame_channels:
        raise ValueError(f"frame shape {x.shape} does not match autoencoder ({w.frame_channels} channels)")
    if w.mode == "identity":
        return x.copy()
    if x.shape[1] % 2 or x.shape[2] % 2:
        raise ValueError("learned mode needs even spatial dims")
    z = encode_graph(Tape(), x, w).data
    return check_finite(z, "encoded latent")


def decode(z, w):
    z = as_grid(z)
    if w.mode == "identity":
        return z.copy()
    if z.shape[0] != w.latent_channels:
        raise ValueError(f"latent shape {z.shape} does not match autoencoder ({w.latent_channels} channels)")
    x = decode_graph(Tape(), z, w).data
    return check_finite(x, "decoded frame")


def train_autoencoder(frames, rng, steps=800, lr=5e-2, momentum=0.9, batch=4,
                      latent_channels=4, hidden=16):
    """Fit the learned autoencoder by full-frame MSE; returns (weights, loss curve)."""
    frames = [as_grid(f) for f in frames]
    if not frames:
        raise ValueError("empty dataset")
    w = init_autoencoder(rng, frames[0].shape[0], latent_channels, hidden)
    opt = SgdMomentum(lr, momentum)
    losses = []
    for _ in range(steps):
        tape = Tape()
        tvars = {k: tape.var(v) for k, v in w.tensors.items()}
        per = []
        for _ in range(batch):
            x = frames[rng.randint(0, len(frames))]
            z = encode_graph(tape, x, w, tvars)
            y = decode_graph(tape, z, w, tvars)
            d = y - x
            per.append(tape.reshape(tape.mean(d * d), (1,)))
        loss = tape.mean(tape.concat(per))
        check_finite(loss.data, "autoencoder loss")
        grads = tape.backward(loss)
        opt.step(w.tensors, {k: grads.get(v) for k, v in tvars.items()})
        losses.append(float(loss.data))
    return w, losses


def reconstruction_mse(frames, w):
    errs = [float(np.mean((decode(encode(f, w), w) - as_grid(f)) ** 2)) for f in frames]
    return float(np.mean(errs))
