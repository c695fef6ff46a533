"""The end-to-end guided sampling loop.

Per frame: encode the input and partially noise the latent (shared base
noise drawn once from the seed), then walk the chain down. Each step reads a
noise estimate and an attention record from a conditioned model pass, cuts
the saliency mask, takes a structure-loss gradient step on the latent,
re-estimates noise under each single condition, composes the estimates, and
performs one ancestral update. Every frame consumes an identical noise
stream (the rng is cloned at a fixed position), which is what keeps
per-frame outputs mutually coherent before the deflicker pass.

Noising happens in latent space: training noises latents, and pushing a
pixel-noised frame through a nonlinear encoder would start the chain off
the distribution the denoiser was fit on (for the identity autoencoder the
two orders coincide).
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .attention import mask_channel
from .autoencoder import decode, encode
from .denoiser import ConditionSet, forward
from .guidance import GuidanceScales, composed_guidance
from .numerics import NumericalError, Rng, as_grid, gaussian
from .schedule import forward_sample
from .structure import StructureLossConfig, latent_gradient
from .temporal import refine_sequence

MEAN_CONVENTIONS = ("ddpm", "paper")


@dataclass(frozen=True)
class SamplerConfig:
    seed: int = 1234
    steps: int = None  # defaults to the schedule's T
    noising_strength: float = 0.8
    scales: GuidanceScales = field(default_factory=GuidanceScales)
    structure: StructureLossConfig = field(default_factory=StructureLossConfig)
    mean_convention: str = "ddpm"
    style: int = 1
    use_deflicker: bool = True

    def __post_init__(self):
        if not 0.0 < self.noising_strength <= 1.0:
            raise ValueError("noising_strength must lie in (0, 1]")
        if self.mean_convention not in MEAN_CONVENTIONS:
            raise ValueError(f"mean_convention must be one of {MEAN_CONVENTIONS}")


@dataclass
class FrameSequence:
    """Ordered frames (F, C, H, W) in [0, 1]; fps informational only."""

    frames: np.ndarray
    fps: float = 8.0

    def __post_init__(self):
        self.frames = as_grid(self.frames)
        if self.frames.ndim != 4:
            raise ValueError("frames must be (F, C, H, W)")
        if self.frames.min() < 0.0 or self.frames.max() > 1.0:
            raise ValueError("frame values must lie in [0, 1]")

    def __len__(self):
        return self.frames.shape[0]


@dataclass
class Models:
    """Everything stylization needs: schedule, denoiser, autoencoder, extractor, deflicker."""

    schedule: object
    denoiser: object
    autoencoder: object
    extractor: object
    deflicker: object = None


def ddpm_step(z_t, eps_tilde, t, sched, rng, mean_convention="ddpm"):
    """One ancestral update; deterministic at t=1 (posterior variance 0).

    ``ddpm`` uses the standard per-step mean 1/sqrt(alpha_t)(...); ``paper``
    uses 1/sqrt(alpha_bar_t) as transcribed in the sampling line it follows.
    """
    z_t = as_grid(z_t)
    eps_tilde = as_grid(eps_tilde)
    if eps_tilde.shape != z_t.shape:
        raise ValueError("eps_tilde must match z_t")
    mean = step_mean(z_t, eps_tilde, t, sched, mean_convention)
    if t == 1:
        return mean
    return mean + np.sqrt(sched.beta_tilde[t - 1]) * gaussian(rng, z_t.shape)


def _start_step(cfg, sched):
    T = cfg.steps or sched.T
    if not 1 <= T <= sched.T:
        raise ValueError(f"steps must lie in 1..{sched.T}")
    return int(round(cfg.noising_strength * T))


def stylize_frame(x_f, cfg, models, base_eps, rng, collect=None):
    """Stylize one frame from pre-drawn base noise and a step rng.

    ``collect`` (optional dict) receives per-step masks/latents for dumping.
    """
    sched = models.schedule
    x_f = as_grid(x_f)
    t_start = _start_step(cfg, sched)
    c_i = encode(x_f, models.autoencoder)
    if t_start == 0:  # reconstruction limit: no noising, no chain
        return np.clip(decode(c_i, models.autoencoder), 0.0, 1.0)
    z = forward_sample(c_i, t_start, base_eps, sched)
    for t in range(t_start, 0, -1):
        eps_pre, rec = forward(z, t, ConditionSet(c_i, cfg.style, None), models.denoiser)
        c_m = mask_channel(rec)
        if cfg.structure.lam > 0.0:
            dz = latent_gradient(z, t, eps_pre, x_f, models.autoencoder,
                                 models.extractor, cfg.structure, sched)
            z_g = z - cfg.structure.lam * dz
        else:
            z_g = z
        eps_null, _ = forward(z_g, t, ConditionSet(), models.denoiser)
        eps_i, _ = forward(z_g, t, ConditionSet(content=c_i), models.denoiser)
        eps_t, _ = forward(z_g, t, ConditionSet(style=cfg.style), models.denoiser)
        eps_m, _ = forward(z_g, t, ConditionSet(mask=c_m), models.denoiser)
        eps_tilde = composed_guidance(eps_null, eps_i, eps_t, eps_m, cfg.scales)
        z = ddpm_step(z, eps_tilde, t, sched, rng, cfg.mean_convention)
        if not np.all(np.isfinite(z)):
            raise NumericalError(f"non-finite latent after sampling step t={t}")
        if collect is not None:
            collect.setdefault("masks", []).append(c_m[0])
            collect.setdefault("latents", []).append(z.copy())
    return np.clip(decode(z, models.autoencoder), 0.0, 1.0)


def stylize_video(seq, cfg, models, collect=None):
    """Stylize every frame with an identical noise stream, then deflicker.

    Frames are independent before the temporal pass; worker count comes from
    SAV_THREADS (default 1). Results are identical at any worker count.
    """
    if len(seq) < 1:
        raise ValueError("empty sequence")
    frames = seq.frames
    rng = Rng(cfg.seed)
    base_eps = gaussian(rng, models.autoencoder.latent_shape(frames[0].shape))
    rng_template = rng.clone()  # every frame restarts here

    def run(ix_frame):
        ix, frame = ix_frame
        col = {} if collect is not None else None
        out = stylize_frame(frame, cfg, models, base_eps, rng_template.clone(), col)
        return ix, out, col

    workers = int(os.environ.get("SAV_THREADS", "1"))
    items = list(enumerate(frames))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, items))
    else:
        results = [run(it) for it in items]
    results.sort(key=lambda r: r[0])
    raw = np.stack([r[1] for r in results])
    if collect is not None:
        collect["frames"] = [r[2] for r in results]
    if cfg.use_deflicker and models.deflicker is not None and len(seq) > 1:
        refined = refine_sequence(raw, models.deflicker)
    else:
        refined = raw
    return FrameSequence(refined, seq.fps)


def step_mean(z_t, eps_tilde, t, sched, mean_convention="ddpm"):
    """The noise-free part of ddpm_step (exposed for the convention cross-check)."""
    if mean_convention not in MEAN_CONVENTIONS:
        raise ValueError(f"unknown mean convention {mean_convention!r}")
    t = sched._check_t(t)
    i = t - 1
    coef = sched.alpha[i] if mean_convention == "ddpm" else sched.alpha_bar[i]
    return (as_grid(z_t) - (1.0 - sched.alpha[i]) / np.sqrt(1.0 - sched.alpha_bar[i]) * as_grid(eps_tilde)) / np.sqrt(coef)
