"""Local deflicker: a small fusion network that stabilizes stylized frames.

The network fuses the current raw frame, its raw predecessor and the previous
refined output, and emits a residual on top of the current frame. The first
layer consumes the two temporal differences (x_f - x_prev, x_f - y_prev) and
the net carries no bias terms, so an all-static input yields a residual of
exactly zero at any training stage: the deflicker can never degrade a
perfectly stable video. The residual head starts at exactly zero, so an
untrained network is the identity on its current input. Training minimizes

    alpha * |y_f - x_raw_f|_1  +  beta * |(y_f - y_{f-1}) * (1 - change)|_1

where ``change`` marks pixels whose ORIGINAL (pre-flicker) content moved by
more than tau between the two frames; stabilization therefore never smears
genuine motion. The previous refined output is teacher-forced (treated as a
constant) during training.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import SgdMomentum, Tape, as_grid, check_finite, gaussian


@dataclass
class DeflickerWeights:
    frame_channels: int = 3
    hidden: int = 16
    tensors: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DeflickerConfig:
    alpha: float = 1.0
    beta: float = 2.0
    tau: float = 0.1


def init_deflicker(rng, frame_channels=3, hidden=16):
    c = frame_channels
    t = {
        "w1": gaussian(rng, (hidden, 2 * c, 3, 3)) * np.sqrt(2.0 / (2 * c * 9)),
        # zero residual head: initial network is the identity on x_raw_f
        "w2": np.zeros((c, hidden, 3, 3)),
    }
    return DeflickerWeights(c, hidden, t)


def _residual_graph(tape, x_f, x_prev, y_prev, w, tensors=None):
    # bias-free on purpose: relu(conv(0)) == 0, so a static input always
    # yields a zero residual no matter how far training has moved w1/w2
    tv = tensors or w.tensors
    d1 = tape.add(x_f, tape.mul(x_prev, -1.0))
    d2 = tape.add(x_f, tape.mul(y_prev, -1.0))
    inp = tape.concat([d1, d2], axis=0)
    h = tape.relu(tape.conv2d_3x3(inp, tv["w1"], np.zeros(w.hidden)))
    return tape.conv2d_3x3(h, tv["w2"], np.zeros(w.frame_channels))


def refine_frame(x_raw_f, x_raw_prev, y_prev, w):
    """Refined frame; first frame (y_prev None) passes through untouched."""
    x_raw_f = as_grid(x_raw_f)
    if y_prev is None:
        return x_raw_f.copy()
    x_raw_prev = as_grid(x_raw_prev)
    y_prev = as_grid(y_prev)
    if x_raw_prev.shape != x_raw_f.shape or y_prev.shape != x_raw_f.shape:
        raise ValueError("deflicker inputs must share a shape")
    res = _residual_graph(Tape(), x_raw_f, x_raw_prev, y_prev, w)
    out = np.clip(x_raw_f + res.data, 0.0, 1.0)
    return check_finite(out, "deflicker output")


def refine_sequence(frames, w):
    """Chain refine_frame over (F, C, H, W); frame 1 is the passthrough branch."""
    frames = as_grid(frames)
    out = [frames[0].copy()]
    for f in range(1, frames.shape[0]):
        out.append(refine_frame(frames[f], frames[f - 1], out[-1], w))
    return np.stack(out)


def train_deflicker(pairs, rng, cfg=DeflickerConfig(), steps=1000, lr=1e-2,
                    momentum=0.9, hidden=16):
    """Fit on (original clean sequence, flickered sequence) pairs.

    Each step picks one consecutive frame pair and minimizes the fusion loss
    with the previous refined output teacher-forced from the current weights.
    Returns (weights, loss curve).
    """
    pairs = [(as_grid(o), as_grid(x)) for o, x in pairs]
    if not pairs:
        raise ValueError("empty dataset")
    if any(o.shape[0] < 2 for o, _ in pairs):
        raise ValueError("sequences must have at least 2 frames")
    c = pairs[0][1].shape[1]
    w = init_deflicker(rng, c, hidden)
    opt = SgdMomentum(lr, momentum)
    losses = []
    for _ in range(steps):
        orig, flick = pairs[rng.randint(0, len(pairs))]
        # previous outputs teacher-forced from a full recursive pass under
        # the current weights, so training sees inference-like inputs
        ys = refine_sequence(flick, w)
        tape = Tape()
        tvars = {k: tape.var(v) for k, v in w.tensors.items()}
        per = []
        for f in range(1, flick.shape[0]):
            y_prev = ys[f - 1]
            static = (np.abs(orig[f] - orig[f - 1]) <= cfg.tau).astype(np.float64)
            res = _residual_graph(tape, flick[f], flick[f - 1], y_prev, w, tvars)
            y = tape.add(res, flick[f])  # training skips the [0,1] clip
            fidelity = tape.mean(tape.absval(y - flick[f]))
            stability = tape.mean(tape.absval((y - y_prev) * static))
            term = cfg.alpha * fidelity + cfg.beta * stability
            per.append(tape.reshape(term, (1,)))
        loss = tape.mean(tape.concat(per))
        check_finite(loss.data, "deflicker loss")
        grads = tape.backward(loss)
        opt.step(w.tensors, {k: grads.get(v) for k, v in tvars.items()})
        losses.append(float(loss.data))
    return w, losses


def flicker_score(seq, original=None, tau=0.1):
    """Mean inter-frame change over pixels static in the ORIGINAL content.

    With no original sequence, every pixel counts (a constant video scores 0,
    alternating 0/1 frames score 1).
    """
    seq = as_grid(seq)
    if seq.shape[0] < 2:
        raise ValueError("need at least 2 frames")
    if original is not None:
        original = as_grid(original)
        if original.shape != seq.shape:
            raise ValueError("original must match the sequence shape")
    per = []
    for f in range(1, seq.shape[0]):
        diff = np.abs(seq[f] - seq[f - 1])
        if original is None:
            per.append(diff.mean())
        else:
            static = np.abs(original[f] - original[f - 1]) <= tau
            if static.any():
                per.append(diff[static].mean())
    if not per:
        raise ValueError("no static pixels to score")
    return float(np.mean(per))
