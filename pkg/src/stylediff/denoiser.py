"""Conditional noise predictor eps(z_t, t, conditions) with one attention block.

Architecture: two 3x3 conv layers, a multi-head self-attention block at the
latent resolution (its maps feed the saliency masks), two more conv layers.
Conditioning:
  * content latent and mask enter as extra input channels, each paired with
    a constant presence-flag channel; the first conv's weight slices for all
    of them start at exactly zero, so an untrained forward is invariant to
    their content;
  * the style token is looked up in a learned table, concatenated with its
    presence flag, projected and broadcast-added after the first conv;
  * the timestep row carries a per-channel additive bias and a multiplicative
    gate (1+g, zero-init) so the net can scale its response with noise level.
Training follows the eps-MSE objective with per-condition null dropout.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attention import AttentionRecord, mask_channel
from .numerics import NumericalError, SgdMomentum, Tape, Var, check_finite, gaussian
from .schedule import forward_sample


@dataclass
class ConditionSet:
    """Guidance conditions; None means the null condition."""

    content: np.ndarray = None  # c_I latent channels (zc, h, w)
    style: int = None  # c_T token id
    mask: np.ndarray = None  # c_M channel (1, h, w), values {0,1}

    def nulled(self, drop_content=False, drop_style=False, drop_mask=False):
        return ConditionSet(
            None if drop_content else self.content,
            None if drop_style else self.style,
            None if drop_mask else self.mask,
        )


@dataclass(frozen=True)
class DenoiserConfig:
    latent_channels: int = 4
    channels: int = 16
    heads: int = 2
    head_dim: int = 8
    timesteps: int = 30
    vocab: int = 5
    style_dim: int = 8

    def __post_init__(self):
        if self.channels != self.heads * self.head_dim:
            raise ValueError("channels must equal heads * head_dim")


@dataclass
class DenoiserWeights:
    cfg: DenoiserConfig
    tensors: dict = field(default_factory=dict)


def init_denoiser(cfg, rng):
    """Seeded init; condition input slices and timestep rows start at zero."""
    zc, c = cfg.latent_channels, cfg.channels
    in_ch = zc + zc + 1 + 1 + 1  # z | c_I | flag_I | c_M | flag_M

    def conv_init(cout, cin, scale=1.0):
        return gaussian(rng, (cout, cin, 3, 3)) * (scale * np.sqrt(2.0 / (cin * 9)))

    conv1 = conv_init(c, in_ch)
    conv1[:, zc:, :, :] = 0.0  # newly added condition channels contribute nothing
    t = {
        "conv1_w": conv1,
        "conv1_b": np.zeros(c),
        "temb": np.zeros((cfg.timesteps, 2 * c)),
        "style_table": gaussian(rng, (cfg.vocab, cfg.style_dim)) * 0.5,
        "style_proj": gaussian(rng, (c, cfg.style_dim + 1)) * 0.1,
        "conv2_w": conv_init(c, c),
        "conv2_b": np.zeros(c),
        "wq": gaussian(rng, (cfg.heads, c, cfg.head_dim)) * np.sqrt(1.0 / c),
        "wk": gaussian(rng, (cfg.heads, c, cfg.head_dim)) * np.sqrt(1.0 / c),
        "wv": gaussian(rng, (cfg.heads, c, cfg.head_dim)) * np.sqrt(1.0 / c),
        "conv3_w": conv_init(c, c),
        "conv3_b": np.zeros(c),
        # near-zero output head: initial prediction ~0, so the initial
        # objective sits at E||eps||^2 = 1 per element
        "conv4_w": conv_init(zc, c, scale=0.01),
        "conv4_b": np.zeros(zc),
    }
    return DenoiserWeights(cfg, t)


def forward_graph(tape, z, t, conds, w, tensors=None):
    """Build the forward pass on a tape; returns (eps_hat Var, AttentionRecord)."""
    cfg = w.cfg
    tv = tensors or w.tensors
    zd = z.data if isinstance(z, Var) else np.asarray(z, dtype=np.float64)
    zc = cfg.latent_channels
    if zd.ndim != 3 or zd.shape[0] != zc:
        raise ValueError(f"latent shape {zd.shape} does not match config ({zc} channels)")
    if not 1 <= t <= cfg.timesteps:
        raise ValueError(f"timestep {t} outside 1..{cfg.timesteps}")
    _, hh, ww = zd.shape
    plane = (1, hh, ww)

    if conds.content is not None and conds.content.shape != zd.shape:
        raise ValueError("content condition must match latent shape")
    if conds.mask is not None and conds.mask.shape != plane:
        raise ValueError("mask condition must be a single latent-resolution channel")
    c_i = conds.content if conds.content is not None else np.zeros(zd.shape)
    f_i = np.full(plane, 0.0 if conds.content is None else 1.0)
    c_m = conds.mask if conds.mask is not None else np.zeros(plane)
    f_m = np.full(plane, 0.0 if conds.mask is None else 1.0)
    inp = tape.concat([z if isinstance(z, Var) else tape.var(zd), c_i, f_i, c_m, f_m], axis=0)

    h = tape.conv2d_3x3(inp, tv["conv1_w"], tv["conv1_b"])
    c = cfg.channels
    trow = tape.slice(tv["temb"], t - 1)
    tadd = tape.reshape(trow[:c], (c, 1, 1))
    tgate = tape.reshape(trow[c:], (c, 1, 1))
    if conds.style is not None:
        if not 0 <= conds.style < cfg.vocab:
            raise ValueError(f"style id {conds.style} outside vocabulary")
        svec = tape.concat([tape.slice(tv["style_table"], conds.style), np.ones(1)], axis=0)
    else:
        svec = tape.var(np.zeros(cfg.style_dim + 1))
    sbias = tape.reshape(
        tape.matmul(tv["style_proj"], tape.reshape(svec, (cfg.style_dim + 1, 1))), (c, 1, 1))
    h = tape.relu(h * (1.0 + tgate) + tadd + sbias)
    h = tape.relu(tape.conv2d_3x3(h, tv["conv2_w"], tv["conv2_b"]))

    x = tape.reshape(tape.transpose(h, (1, 2, 0)), (hh * ww, c))
    heads, mats = [], []
    inv_sqrt_d = 1.0 / np.sqrt(cfg.head_dim)
    for hd in range(cfg.heads):
        q = tape.matmul(x, tape.slice(tv["wq"], hd))
        k = tape.matmul(x, tape.slice(tv["wk"], hd))
        a = tape.softmax_rows(tape.matmul(q, tape.transpose(k)) * inv_sqrt_d)
        mats.append(a.data.copy())
        heads.append(tape.matmul(a, tape.matmul(x, tape.slice(tv["wv"], hd))))
    attn = tape.concat(heads, axis=1)
    h = h + tape.transpose(tape.reshape(attn, (hh, ww, c)), (2, 0, 1))

    h = tape.relu(tape.conv2d_3x3(h, tv["conv3_w"], tv["conv3_b"]))
    eps = tape.conv2d_3x3(h, tv["conv4_w"], tv["conv4_b"])
    return eps, AttentionRecord(np.stack(mats), hh, ww, cfg.head_dim)


def forward(z_t, t, conds, w):
    """Pure forward pass: (eps_hat array, AttentionRecord)."""
    eps, rec = forward_graph(Tape(), z_t, t, conds, w)
    check_finite(eps.data, f"denoiser output at t={t}")
    return eps.data, rec


def bootstrap_mask(z_t, t, conds, w):
    """Mask channel read from the model's own attention (content+style pass, mask null)."""
    _, rec = forward(z_t, t, conds.nulled(drop_mask=True), w)
    return mask_channel(rec)


def null_conditions(conds, p_drop, rng):
    """Independently null each condition with probability p_drop.

    Always consumes exactly three Bernoulli draws (content, style, mask order)
    so the stream position is input-independent.
    """
    d_i = rng.bernoulli(p_drop)
    d_t = rng.bernoulli(p_drop)
    d_m = rng.bernoulli(p_drop)
    return conds.nulled(d_i, d_t, d_m), (d_i, d_t, d_m)


@dataclass
class TrainExample:
    z0: np.ndarray
    t: int
    eps: np.ndarray
    conds: ConditionSet


def example_loss(ex, w, sched, conds=None):
    """eps-MSE of one example without touching weights."""
    z_t = forward_sample(ex.z0, ex.t, ex.eps, sched)
    eps_hat, _ = forward(z_t, ex.t, conds if conds is not None else ex.conds, w)
    return float(np.mean((ex.eps - eps_hat) ** 2))


def train_step(batch, w, opt, rng, sched, p_drop=0.1):
    """One SGD step on the eps-MSE objective; returns (loss, per-condition drop counts)."""
    if not batch:
        raise ValueError("empty batch")
    tape = Tape()
    tvars = {k: tape.var(v) for k, v in w.tensors.items()}
    per = []
    drops = np.zeros(3, dtype=int)
    for ex in batch:
        conds, flags = null_conditions(ex.conds, p_drop, rng)
        drops += np.array(flags, dtype=int)
        z_t = forward_sample(ex.z0, ex.t, ex.eps, sched)
        eps_hat, _ = forward_graph(tape, z_t, ex.t, conds, w, tvars)
        d = eps_hat - ex.eps
        per.append(tape.reshape(tape.mean(d * d), (1,)))
    loss = tape.mean(tape.concat(per))
    if not np.isfinite(loss.data):
        raise NumericalError(f"non-finite training loss (t values {[ex.t for ex in batch]})")
    grads = tape.backward(loss)
    opt.step(w.tensors, {k: grads.get(v) for k, v in tvars.items()})
    return float(loss.data), tuple(int(x) for x in drops)


def make_examples(triples, ae, sched, rng, w, use_bootstrap_mask=True):
    """Turn (content frame, token, styled frame) triples into train examples.

    Samples t uniformly and eps ~ N(0, I) per triple; the mask condition is
    bootstrapped from the current model's attention on z_t.
    """
    from .autoencoder import encode

    out = []
    for content, token, styled in triples:
        z0 = encode(styled, ae)
        c_i = encode(content, ae)
        t = rng.randint(1, sched.T + 1)
        eps = gaussian(rng, z0.shape)
        conds = ConditionSet(c_i, int(token), None)
        if use_bootstrap_mask:
            z_t = forward_sample(z0, t, eps, sched)
            conds = ConditionSet(c_i, int(token), bootstrap_mask(z_t, t, conds, w))
        out.append(TrainExample(z0, t, eps, conds))
    return out


def train_denoiser(corpus, ae, sched, cfg, rng, steps=2000, batch=4, lr=1e-3,
                   momentum=0.9, p_drop=0.1, eval_every=200, eval_seed=9901,
                   log=None):
    """Full training loop; returns (weights, history dict).

    The held-out evaluation set is frozen once from `eval_seed` (fixed t and
    eps per example) so successive evaluations are comparable.
    """
    from .dataset import sample_batch

    w = init_denoiser(cfg, rng)
    opt = SgdMomentum(lr, momentum)
    eval_rng = type(rng)(eval_seed)
    eval_set = make_examples(corpus.heldout, ae, sched, eval_rng, w,
                             use_bootstrap_mask=False)
    # masks for the eval set come from the *initial* model and stay frozen
    for ex in eval_set:
        z_t = forward_sample(ex.z0, ex.t, ex.eps, sched)
        ex.conds = ConditionSet(ex.conds.content, ex.conds.style,
                                bootstrap_mask(z_t, ex.t, ex.conds, w))
    history = {"loss": [], "heldout": [], "drops": np.zeros(3, dtype=int)}

    def heldout_loss():
        return float(np.mean([example_loss(ex, w, sched) for ex in eval_set]))

    history["heldout"].append((0, heldout_loss()))
    for step in range(1, steps + 1):
        triples = sample_batch(corpus, batch, rng)
        examples = make_examples(triples, ae, sched, rng, w)
        loss, drops = train_step(examples, w, opt, rng, sched, p_drop)
        history["loss"].append(loss)
        history["drops"] += np.array(drops)
        if eval_every and step % eval_every == 0:
            history["heldout"].append((step, heldout_loss()))
            if log:
                log(f"step {step}: train {loss:.4f} heldout {history['heldout'][-1][1]:.4f}")
    if not eval_every or steps % eval_every:
        history["heldout"].append((steps, heldout_loss()))
    return w, history
