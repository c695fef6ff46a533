"""The whole workflow at reduced scale: corpus, training, stylization, metrics.

Runs in a few minutes on a laptop CPU. For the full-scale version use the
CLI chain documented in the README (gen-data, train-ae, train,
train-deflicker, stylize, eval); this script calls the same library
functions directly with smaller step counts.
"""
import time

import numpy as np

from stylediff import FrameSequence, Models, Rng, make_feature_extractor, style_id, stylize_video
from stylediff.config import load_config
from stylediff.metrics import frame_accuracy, prompt_consistency, temporal_consistency
from stylediff.pipeline import (corpus_from_config, default_embedder, sampler_config,
                                schedule_from_config, train_autoencoder_from_config,
                                train_deflicker_from_config, train_denoiser_from_config)

t0 = time.time()
cfg = load_config()
cfg["dataset"].update(n_videos=6, frames=8)

corpus = corpus_from_config(cfg)
print(f"[{time.time()-t0:5.1f}s] corpus: {len(corpus.train)} train triples")

ae, _ = train_autoencoder_from_config(cfg, corpus, log=print)
print(f"[{time.time()-t0:5.1f}s] autoencoder trained")

denoiser, hist = train_denoiser_from_config(cfg, corpus, ae, steps=800)
print(f"[{time.time()-t0:5.1f}s] denoiser trained, held-out loss "
      f"{hist['heldout'][0][1]:.3f} -> {hist['heldout'][-1][1]:.3f}")

deflicker, _ = train_deflicker_from_config(cfg, corpus, steps=400)
print(f"[{time.time()-t0:5.1f}s] deflicker trained")

models = Models(schedule_from_config(cfg), denoiser, ae, make_feature_extractor(), deflicker)
style = "invert"
video = FrameSequence(corpus.videos[0])
out = stylize_video(video, sampler_config(cfg, style_id(style)), models)
print(f"[{time.time()-t0:5.1f}s] stylized {len(out)} frames as {style!r}")

emb = default_embedder()
print("\nmetric triad (toy embedder, directional use only):")
print(f"  temporal_consistency = {temporal_consistency(out.frames, emb):.4f}")
print(f"  prompt_consistency   = {prompt_consistency(out.frames, style, emb):.4f}")
print(f"  frame_accuracy       = {frame_accuracy(video.frames, out.frames, emb):.4f}")
print(f"  prompt_consistency of the raw input, for contrast: "
      f"{prompt_consistency(video.frames, style, emb):.4f}")
