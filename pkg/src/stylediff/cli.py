"""Command-line entry point.

Subcommands: gen-data, train-ae, train, train-deflicker, stylize, deflicker,
eval, inspect-schedule. Every command prints a machine-readable JSON summary
on stdout (inspect-schedule and eval print their CSV first). Exit codes:
0 success, 1 malformed input, 2 numerical failure, 3 configuration error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import containers, pipeline
from .config import load_config
from .containers import ContainerError
from .dataset import STYLE_TOKENS, apply_style, build_dataset, style_id
from .metrics import frame_accuracy, prompt_consistency, temporal_consistency
from .numerics import ConfigError, NumericalError, Rng
from .sampler import stylize_video
from .schedule import make_linear_schedule
from .temporal import refine_sequence


def _emit(doc):
    print(json.dumps(doc, indent=1, sort_keys=True))


def cmd_gen_data(args):
    cfg = load_config(args.config, {"dataset": {
        "n_videos": args.n, "size": args.size, "frames": args.frames, "seed": args.seed}})
    corpus = pipeline.corpus_from_config(cfg)
    os.makedirs(args.out, exist_ok=True)
    for i, vid in enumerate(corpus.videos):
        containers.write_tensor(os.path.join(args.out, f"content_{i:02d}.savt"), vid)
        for tok in STYLE_TOKENS:
            containers.write_tensor(
                os.path.join(args.out, f"styled_{i:02d}_{tok}.savt"), apply_style(vid, tok))
        containers.write_pgm(os.path.join(args.out, f"preview_{i:02d}.pgm"),
                             vid[0].mean(axis=0))
    manifest = {"n_videos": len(corpus.videos), "size": corpus.size,
                "frames": corpus.frames, "styles": list(STYLE_TOKENS),
                "seed": cfg["dataset"]["seed"]}
    with open(os.path.join(args.out, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    _emit({"command": "gen-data", "out": args.out, **manifest,
           "triples": len(corpus.train) + len(corpus.heldout)})


def cmd_train_ae(args):
    cfg = load_config(args.config, _training_overrides(args))
    corpus = pipeline.corpus_from_config(cfg)
    w, losses = pipeline.train_autoencoder_from_config(cfg, corpus, log=_log)
    pipeline.save_autoencoder(args.out, w)
    _emit({"command": "train-ae", "out": args.out, "steps": len(losses),
           "initial_loss": losses[0], "final_loss": losses[-1]})


def cmd_train(args):
    cfg = load_config(args.config, _training_overrides(args))
    corpus = pipeline.corpus_from_config(cfg)
    ae = pipeline.load_autoencoder(args.ae)
    w, hist = pipeline.train_denoiser_from_config(cfg, corpus, ae, log=_log, steps=args.steps)
    pipeline.save_denoiser(args.out, w)
    held = hist["heldout"]
    _emit({"command": "train", "out": args.out, "steps": len(hist["loss"]),
           "initial_heldout_loss": held[0][1], "final_heldout_loss": held[-1][1],
           "condition_drops": [int(x) for x in hist["drops"]]})


def cmd_train_deflicker(args):
    cfg = load_config(args.config, _training_overrides(args))
    corpus = pipeline.corpus_from_config(cfg)
    w, losses = pipeline.train_deflicker_from_config(cfg, corpus, log=_log, steps=args.steps)
    pipeline.save_deflicker(args.out, w)
    _emit({"command": "train-deflicker", "out": args.out, "steps": len(losses),
           "initial_loss": losses[0], "final_loss": losses[-1]})


def cmd_stylize(args):
    overrides = {"sampler": {}, "guidance": {}}
    if args.seed is not None:
        overrides["sampler"]["seed"] = args.seed
    if args.noising_strength is not None:
        overrides["sampler"]["noising_strength"] = args.noising_strength
    if args.lam is not None:
        overrides["sampler"]["lambda"] = args.lam
    if args.structure_mode is not None:
        overrides["sampler"]["structure_mode"] = args.structure_mode
    if args.mean_convention is not None:
        overrides["sampler"]["mean_convention"] = args.mean_convention
    if args.scale_content is not None:
        overrides["guidance"]["s_I"] = args.scale_content
    if args.scale_style is not None:
        overrides["guidance"]["s_T"] = args.scale_style
    if args.scale_mask is not None:
        overrides["guidance"]["s_M"] = args.scale_mask
    cfg = load_config(args.config, overrides)
    seq = pipeline.load_sequence(args.input)
    models = pipeline.build_models(cfg, args.weights, args.ae,
                                   None if args.no_deflicker else args.deflicker)
    scfg = pipeline.sampler_config(cfg, style_id(args.style), steps=args.steps,
                                   use_deflicker=not args.no_deflicker)
    collect = {} if (args.dump_masks or args.dump_latents) else None
    out = stylize_video(seq, scfg, models, collect)
    pipeline.save_sequence(args.out, out)
    if args.dump_masks:
        for fi, col in enumerate(collect["frames"]):
            containers.export_pgm(np.stack(col["masks"])[:, None], args.dump_masks,
                                  prefix=f"mask_f{fi:03d}_t")
    if args.dump_latents:
        os.makedirs(args.dump_latents, exist_ok=True)
        for fi, col in enumerate(collect["frames"]):
            for si, z in enumerate(col["latents"]):
                containers.write_tensor(
                    os.path.join(args.dump_latents, f"latent_f{fi:03d}_s{si:03d}.savt"), z)
    _emit({"command": "stylize", "input": args.input, "out": args.out,
           "style": args.style, "frames": len(out),
           "steps": scfg.steps or models.schedule.T, "seed": scfg.seed})


def cmd_deflicker(args):
    seq = pipeline.load_sequence(args.input)
    w = pipeline.load_deflicker(args.weights)
    out = refine_sequence(seq.frames, w)
    containers.write_tensor(args.out, out)
    _emit({"command": "deflicker", "input": args.input, "out": args.out,
           "frames": int(out.shape[0])})


def cmd_eval(args):
    inp = pipeline.load_sequence(args.input)
    outp = pipeline.load_sequence(args.output)
    emb = pipeline.default_embedder()
    triad = {
        "temporal_consistency": temporal_consistency(outp.frames, emb),
        "prompt_consistency": prompt_consistency(outp.frames, args.style, emb),
        "frame_accuracy": frame_accuracy(inp.frames, outp.frames, emb),
    }
    print("metric,value")
    for k, v in triad.items():
        print(f"{k},{v:.6f}")
    _emit({"command": "eval", "input": args.input, "output": args.output,
           "style": args.style, **triad})


def cmd_inspect_schedule(args):
    cfg = load_config(args.config, {"schedule": {
        k: v for k, v in (("T", args.steps), ("beta_start", args.beta_start),
                          ("beta_end", args.beta_end)) if v is not None}})
    s = cfg["schedule"]
    sched = make_linear_schedule(s["T"], s["beta_start"], s["beta_end"])
    print("t,beta,alpha_bar,beta_tilde")
    for t in range(1, sched.T + 1):
        print(f"{t},{sched.beta[t-1]:.8f},{sched.alpha_bar[t-1]:.8f},{sched.beta_tilde[t-1]:.8f}")
    _emit({"command": "inspect-schedule", "T": sched.T,
           "beta_start": s["beta_start"], "beta_end": s["beta_end"]})


def _log(msg):
    print(msg, file=sys.stderr)


def _training_overrides(args):
    o = {"training": {}, "dataset": {}}
    if getattr(args, "seed", None) is not None:
        o["training"]["seed"] = args.seed
    if getattr(args, "data_seed", None) is not None:
        o["dataset"]["seed"] = args.data_seed
    return o


def build_parser():
    p = argparse.ArgumentParser(
        prog="stylediff",
        description="Toy conditions-guided diffusion video stylizer.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--config", help="JSON run configuration (flags override it)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic content/style corpus")
    g.add_argument("--n", type=int, default=10, help="number of videos")
    g.add_argument("--size", type=int, default=32, help="canvas side length")
    g.add_argument("--frames", type=int, default=16, help="frames per video")
    g.add_argument("--seed", type=int, default=42, help="corpus seed")
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(fn=cmd_gen_data)

    for name, fn in (("train-ae", cmd_train_ae), ("train", cmd_train),
                     ("train-deflicker", cmd_train_deflicker)):
        tp = sub.add_parser(name, help=f"{name} on the configured corpus")
        tp.add_argument("--out", required=True, help="weight bundle directory")
        tp.add_argument("--steps", type=int, help="override training step count")
        tp.add_argument("--seed", type=int, help="training seed")
        tp.add_argument("--data-seed", type=int, help="corpus seed")
        if name == "train":
            tp.add_argument("--ae", default="identity",
                            help='autoencoder bundle dir or "identity"')
        tp.set_defaults(fn=fn)

    st = sub.add_parser("stylize", help="stylize a frame-sequence container")
    st.add_argument("--input", required=True, help="input sequence (.savt)")
    st.add_argument("--style", required=True, choices=STYLE_TOKENS, help="style token")
    st.add_argument("--weights", required=True, help="denoiser bundle dir")
    st.add_argument("--ae", default="identity", help='autoencoder bundle dir or "identity"')
    st.add_argument("--deflicker", help="deflicker bundle dir (optional)")
    st.add_argument("--no-deflicker", action="store_true", help="skip the temporal pass")
    st.add_argument("--steps", type=int, help="sampling steps (default: schedule T)")
    st.add_argument("--seed", type=int, help="noise seed")
    st.add_argument("--noising-strength", type=float, help="fraction of the chain applied")
    st.add_argument("--scale-content", type=float, help="content guidance scale s_I")
    st.add_argument("--scale-style", type=float, help="style guidance scale s_T")
    st.add_argument("--scale-mask", type=float, help="mask guidance scale s_M")
    st.add_argument("--lambda", dest="lam", type=float, help="structure gradient step size")
    st.add_argument("--structure-mode", choices=("self-similarity", "pooled-cosine"))
    st.add_argument("--mean-convention", choices=("ddpm", "paper"))
    st.add_argument("--dump-masks", help="directory for per-step mask PGMs")
    st.add_argument("--dump-latents", help="directory for per-step latent containers")
    st.add_argument("--out", required=True, help="output sequence (.savt)")
    st.set_defaults(fn=cmd_stylize)

    d = sub.add_parser("deflicker", help="run the temporal pass standalone")
    d.add_argument("--input", required=True)
    d.add_argument("--weights", required=True)
    d.add_argument("--out", required=True)
    d.set_defaults(fn=cmd_deflicker)

    e = sub.add_parser("eval", help="metric triad for an input/output pair")
    e.add_argument("--input", required=True)
    e.add_argument("--output", required=True)
    e.add_argument("--style", required=True, choices=STYLE_TOKENS)
    e.set_defaults(fn=cmd_eval)

    i = sub.add_parser("inspect-schedule", help="print the (t, beta, alpha_bar, beta_tilde) table")
    i.add_argument("--steps", type=int, help="T")
    i.add_argument("--beta-start", type=float)
    i.add_argument("--beta-end", type=float)
    i.set_defaults(fn=cmd_inspect_schedule)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
        return 0
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 3
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 2
    except (ContainerError, OSError, ValueError, KeyError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
