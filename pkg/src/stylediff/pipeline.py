"""Workflow glue: model bundles on disk and the train -> stylize -> eval chain."""
from __future__ import annotations

import os

import numpy as np

from . import containers
from .autoencoder import AutoencoderWeights, make_identity_autoencoder, train_autoencoder
from .dataset import STYLE_TOKENS, add_flicker, apply_style, build_dataset
from .denoiser import DenoiserConfig, DenoiserWeights, train_denoiser
from .guidance import GuidanceScales
from .metrics import fit_embedder
from .numerics import Rng
from .sampler import FrameSequence, Models, SamplerConfig
from .schedule import make_linear_schedule
from .structure import StructureLossConfig, make_feature_extractor
from .temporal import DeflickerConfig, DeflickerWeights, train_deflicker


def save_sequence(path, seq):
    containers.write_tensor(path, seq.frames)


def load_sequence(path, fps=8.0):
    arr = containers.read_tensor(path)
    if arr.ndim != 4:
        raise ValueError(f"{path}: expected a rank-4 frame sequence, got rank {arr.ndim}")
    return FrameSequence(np.clip(arr, 0.0, 1.0), fps)


def save_autoencoder(outdir, w):
    meta = {"kind": "autoencoder", "mode": w.mode, "frame_channels": w.frame_channels,
            "latent_channels": w.latent_channels, "hidden": w.hidden}
    containers.save_bundle(outdir, w.tensors, meta)


def load_autoencoder(indir):
    if indir in (None, "identity"):
        return make_identity_autoencoder()
    tensors, meta = containers.load_bundle(indir)
    return AutoencoderWeights(meta["mode"], meta["frame_channels"],
                              meta["latent_channels"], meta["hidden"], tensors)


def save_denoiser(outdir, w):
    meta = {"kind": "denoiser", **{k: getattr(w.cfg, k) for k in (
        "latent_channels", "channels", "heads", "head_dim", "timesteps", "vocab", "style_dim")}}
    containers.save_bundle(outdir, w.tensors, meta)


def load_denoiser(indir):
    tensors, meta = containers.load_bundle(indir)
    cfg = DenoiserConfig(**{k: meta[k] for k in (
        "latent_channels", "channels", "heads", "head_dim", "timesteps", "vocab", "style_dim")})
    return DenoiserWeights(cfg, tensors)


def save_deflicker(outdir, w):
    containers.save_bundle(outdir, w.tensors, {
        "kind": "deflicker", "frame_channels": w.frame_channels, "hidden": w.hidden})


def load_deflicker(indir):
    if indir is None:
        return None
    tensors, meta = containers.load_bundle(indir)
    return DeflickerWeights(meta["frame_channels"], meta["hidden"], tensors)


def corpus_from_config(cfg):
    d = cfg["dataset"]
    return build_dataset(d["n_videos"], Rng(d["seed"]), d["size"], d["frames"])


def schedule_from_config(cfg):
    s = cfg["schedule"]
    return make_linear_schedule(s["T"], s["beta_start"], s["beta_end"])


def sampler_config(cfg, style, **kw):
    s = cfg["sampler"]
    g = cfg["guidance"]
    args = dict(
        seed=s["seed"],
        noising_strength=s["noising_strength"],
        scales=GuidanceScales(g["s_I"], g["s_T"], g["s_M"]),
        structure=StructureLossConfig(s["structure_mode"], s["lambda"]),
        mean_convention=s["mean_convention"],
        style=style,
    )
    args.update(kw)
    return SamplerConfig(**args)


def train_autoencoder_from_config(cfg, corpus, log=None):
    t = cfg["training"]
    frames = [f for vid in corpus.videos for f in vid]
    w, losses = train_autoencoder(frames, Rng(t["seed"]), steps=t["ae_steps"],
                                  lr=t["ae_lr"], hidden=t["ae_hidden"],
                                  latent_channels=cfg["model"]["latent_channels"])
    if log:
        log(f"autoencoder loss {losses[0]:.4f} -> {losses[-1]:.4f}")
    return w, losses


def train_denoiser_from_config(cfg, corpus, ae, log=None, steps=None):
    t = cfg["training"]
    m = cfg["model"]
    sched = schedule_from_config(cfg)
    zc = m["latent_channels"] if ae.mode == "learned" else ae.frame_channels
    dcfg = DenoiserConfig(latent_channels=zc, channels=m["channels"], heads=m["heads"],
                          head_dim=m["head_dim"], timesteps=sched.T,
                          vocab=len(STYLE_TOKENS), style_dim=m["style_dim"])
    return train_denoiser(corpus, ae, sched, dcfg, Rng(t["seed"]),
                          steps=steps or t["steps"], batch=t["batch"], lr=t["lr"],
                          momentum=t["momentum"], p_drop=t["p_drop"], log=log)


def flicker_pairs(corpus, seed=77, amplitude=0.15, tokens=STYLE_TOKENS):
    """(clean styled sequence, flickered sequence) pairs for deflicker training."""
    frng = Rng(seed)
    pairs = []
    for vid in corpus.videos:
        for tok in tokens:
            styled = apply_style(vid, tok)
            pairs.append((styled, add_flicker(styled, frng, amplitude)))
    return pairs


def train_deflicker_from_config(cfg, corpus, log=None, steps=None):
    t = cfg["training"]
    tm = cfg["temporal"]
    pairs = flicker_pairs(corpus)
    w, losses = train_deflicker(pairs, Rng(t["seed"]),
                                DeflickerConfig(tm["alpha"], tm["beta"], tm["tau"]),
                                steps=steps or t["deflicker_steps"],
                                lr=t["deflicker_lr"], hidden=t["deflicker_hidden"])
    if log:
        log(f"deflicker loss {losses[0]:.4f} -> {losses[-1]:.4f}")
    return w, losses


def build_models(cfg, denoiser_dir, ae_dir=None, deflicker_dir=None):
    return Models(
        schedule=schedule_from_config(cfg),
        denoiser=load_denoiser(denoiser_dir),
        autoencoder=load_autoencoder(ae_dir),
        extractor=make_feature_extractor(),
        deflicker=load_deflicker(deflicker_dir),
    )


def default_embedder():
    return fit_embedder(n_probe=12)
