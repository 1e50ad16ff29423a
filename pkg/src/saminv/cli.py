"""Command-line interface.

Subcommands cover the full workflow: build a probe dataset, train the error
predictor, invert images (optimization or encoder), apply edits, evaluate
reconstructions, benchmark quality-vs-runtime, and serve the HTTP API.

Exit codes: 0 success, 2 usage error (bad flags, bad inputs), 1 runtime
failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from pathlib import Path

import numpy as np

from .config import OptimizationConfig, PredictorConfig, load_config
from .editing import (CAPABILITY_TABLE, apply_edit, builtin_directions,
                      load_directions)
from .errors import SamError, UsageError
from .generator import load_generator
from .imgio import load_image, resize_image, save_image
from .inversion import form_image, invert, invert_batch, load_bundle, save_bundle
from .invertibility import DEFAULT_TAU, assignment_to_rgb
from .metrics import (benchmark_runtime, encoder_method, optimization_method,
                      plot_benchmark, psnr, write_benchmark_csv)
from .perceptual import perceptual_distance
from .pipeline import sam_invert
from .synthetic import patched_target, sample_image


def _progress_printer(label: str):
    def cb(done, total):
        pct = 100.0 * done / max(total, 1)
        print(f"\r{label}: {pct:5.1f}%", end="", file=sys.stderr, flush=True)
        if done >= total:
            print(file=sys.stderr)
    return cb


def _opt_config(args) -> OptimizationConfig:
    if getattr(args, "config", None):
        cfg = load_config(args.config)
    else:
        cfg = OptimizationConfig()
    overrides = {}
    if getattr(args, "steps", None) is not None:
        overrides["steps"] = args.steps
    if getattr(args, "opt_seed", None) is not None:
        overrides["seed"] = args.opt_seed
    if overrides:
        from dataclasses import replace
        cfg = replace(cfg, **overrides)
    return cfg


def _load_target(args, h) -> np.ndarray:
    image = load_image(args.image)
    if image.shape[1:] != (h.output_resolution, h.output_resolution):
        image = resize_image(image, h.output_resolution)
    return image


def _handle_for_bundle(args, bundle):
    if getattr(args, "generator", None):
        return load_generator(args.generator, seed=args.gen_seed)
    gid = bundle.generator_id
    if gid.startswith("toy:"):
        return load_generator("toy", seed=int(gid.split(":", 1)[1]))
    raise UsageError(f"bundle was made with generator {gid!r}; "
                     "pass --generator to locate its weights")


# ---------------------------------------------------------------------------
# subcommands


def cmd_build_dataset(args) -> int:
    from .dataset import build_error_dataset

    h = load_generator(args.generator, seed=args.gen_seed)
    cfg = _opt_config(args)
    dirs = build_error_dataset(h, args.out, args.count, cfg=cfg, seed0=args.seed0,
                               segmenter=args.segmenter,
                               progress=_progress_printer("probing"))
    print(f"dataset at {args.out}: {len(dirs)} items")
    return 0


def cmd_train_predictor(args) -> int:
    from .dataset import load_dataset, split_items
    from .predictor import save_predictor, train_predictor

    items = load_dataset(args.dataset)
    train, val = split_items(items, val_every=args.val_every)
    cfg = PredictorConfig(epochs=args.epochs, lr=args.lr,
                          batch_size=args.batch_size, seed=args.train_seed)
    model, report = train_predictor(train, cfg, val_items=val)
    save_predictor(args.out, model)
    base = report["baseline_val_mse"]
    ours = report["val_mse"]
    gain = 100.0 * (base - ours) / base if base > 0 else float("nan")
    print(f"predictor saved to {args.out}")
    print(f"val mse {ours:.6f} vs mean-map baseline {base:.6f} "
          f"({gain:+.1f}% improvement)")
    return 0


def cmd_invert(args) -> int:
    h = load_generator(args.generator, seed=args.gen_seed)
    image = _load_target(args, h)
    cfg = _opt_config(args)

    t0 = time.perf_counter()
    if args.assign == "wplus":
        result = invert(h, image, assignment=None, cfg=cfg)
        bundle, assignment = result.bundle, None
    else:
        if args.assign == "predictor":
            from .predictor import load_predictor
            if not args.predictor:
                raise UsageError("--assign predictor requires --predictor PATH")
            maps = load_predictor(args.predictor)
        else:
            maps = "measured"
        probe_cfg = None
        if args.probe_steps is not None:
            from dataclasses import replace
            probe_cfg = replace(cfg, steps=args.probe_steps)
        sam = sam_invert(h, image, tau=args.tau, cfg=cfg, probe_cfg=probe_cfg,
                         maps=maps, segmenter=args.segmenter,
                         progress=_progress_printer("inverting"))
        bundle, assignment = sam.bundle, sam.assignment
    seconds = time.perf_counter() - t0

    save_bundle(args.out, bundle)
    recon = form_image(h, bundle)
    print(f"bundle saved to {args.out} "
          f"({psnr(image, recon):.2f} dB, {seconds:.1f}s)")
    if args.save_render:
        save_image(args.save_render, recon)
        print(f"render saved to {args.save_render}")
    if args.save_overlay:
        if assignment is None:
            raise UsageError("--save-overlay needs --assign measured or predictor")
        from .imgio import encode_png_u8
        Path(args.save_overlay).write_bytes(encode_png_u8(assignment_to_rgb(assignment)))
        print(f"assignment overlay saved to {args.save_overlay}")
    return 0


def cmd_encode(args) -> int:
    from .encoders import encode_bundle, load_encoders, save_encoders, train_encoders

    h = load_generator(args.generator, seed=args.gen_seed)
    image = _load_target(args, h)
    enc_path = Path(args.encoders)
    if enc_path.exists():
        encs = load_encoders(enc_path, h)
    elif args.train_if_missing:
        print(f"no encoders at {enc_path}; training", file=sys.stderr)
        encs = train_encoders(h, seed=args.train_seed,
                              progress=_progress_printer("training"))
        save_encoders(enc_path, encs)
        print(f"encoders saved to {enc_path}")
    else:
        raise UsageError(f"no encoders at {enc_path}; pass --train-if-missing")

    t0 = time.perf_counter()
    bundle = encode_bundle(h, encs, image)
    seconds = time.perf_counter() - t0
    save_bundle(args.out, bundle)
    recon = form_image(h, bundle)
    print(f"bundle saved to {args.out} "
          f"({psnr(image, recon):.2f} dB, {seconds * 1e3:.0f}ms)")
    if args.save_render:
        save_image(args.save_render, recon)
        print(f"render saved to {args.save_render}")
    return 0


def cmd_edit(args) -> int:
    bundle = load_bundle(args.bundle)
    h = _handle_for_bundle(args, bundle)

    if args.directions:
        registry = load_directions(args.directions)
    elif args.dataset:
        registry = builtin_directions(h, args.dataset)
    else:
        registry = {}
        for ds in ["toy"] + sorted(CAPABILITY_TABLE):
            registry.update(builtin_directions(h, ds))
    if args.direction not in registry:
        known = ", ".join(sorted(registry))
        raise UsageError(f"unknown direction {args.direction!r}; known: {known}")

    img = apply_edit(h, bundle, registry[args.direction], args.magnitude,
                     force=args.force)
    save_image(args.out, img)
    print(f"edited render saved to {args.out}")
    return 0


def _toy_targets(h, count: int, kind: str, seed0: int):
    if kind == "pure":
        return {f"img{i:03d}": sample_image(h, seed0 + i) for i in range(count)}
    return {f"img{i:03d}": patched_target(h, seed0 + i)[0] for i in range(count)}


def cmd_eval(args) -> int:
    h = load_generator(args.generator, seed=args.gen_seed)
    cfg = _opt_config(args)
    targets = _toy_targets(h, args.count, args.targets, args.seed0)

    rows = []
    if args.mode == "wplus":
        ids = list(targets)
        imgs = list(targets.values())
        t0 = time.perf_counter()
        results = invert_batch(h, np.stack(imgs), cfg=cfg)
        per_image_s = (time.perf_counter() - t0) / len(ids)
        for image_id, img, res in zip(ids, imgs, results):
            recon = form_image(h, res.bundle)
            rows.append((image_id, psnr(img, recon),
                         perceptual_distance(img, recon), per_image_s))
    else:
        for i, (image_id, img) in enumerate(targets.items()):
            t0 = time.perf_counter()
            sam = sam_invert(h, img, tau=args.tau, cfg=cfg)
            seconds = time.perf_counter() - t0
            recon = form_image(h, sam.bundle)
            rows.append((image_id, psnr(img, recon),
                         perceptual_distance(img, recon), seconds))
            print(f"\r{i + 1}/{len(targets)}", end="", file=sys.stderr, flush=True)
        print(file=sys.stderr)

    with open(args.out, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["image_id", "psnr_db", "lpips", "seconds"])
        for image_id, p, l, s in rows:
            wr.writerow([image_id, f"{p:.4f}", f"{l:.6f}", f"{s:.4f}"])
        wr.writerow(["mean", f"{np.mean([r[1] for r in rows]):.4f}",
                     f"{np.mean([r[2] for r in rows]):.6f}",
                     f"{np.mean([r[3] for r in rows]):.4f}"])
    print(f"eval written to {args.out}: {len(rows)} images, "
          f"mean {np.mean([r[1] for r in rows]):.2f} dB")
    return 0


def cmd_bench(args) -> int:
    h = load_generator(args.generator, seed=args.gen_seed)
    cfg = _opt_config(args)
    targets = _toy_targets(h, args.count, args.targets, args.seed0)

    names = [m.strip() for m in args.methods.split(",") if m.strip()]
    methods = {}
    for name in names:
        if name == "optimization":
            methods[name] = optimization_method(h, cfg=cfg, every=args.every)
        elif name == "encoder":
            from .encoders import load_encoders, save_encoders, train_encoders
            enc_path = Path(args.encoders) if args.encoders else None
            if enc_path and enc_path.exists():
                encs = load_encoders(enc_path, h)
            else:
                print("training encoders for the benchmark", file=sys.stderr)
                encs = train_encoders(h, progress=_progress_printer("training"))
                if enc_path:
                    save_encoders(enc_path, encs)
            methods[name] = encoder_method(h, encs)
        else:
            raise UsageError(f"unknown method {name!r} "
                             "(choose from optimization, encoder)")

    budgets = None
    if args.budgets:
        budgets = [float(b) for b in args.budgets.split(",")]
    curves = benchmark_runtime(methods, targets, budgets=budgets)
    write_benchmark_csv(args.out_csv, curves)
    plot_benchmark(args.out_plot, curves)
    for c in curves:
        if c.failed:
            print(f"{c.method} on {c.image_id}: FAILED ({c.error})")
        elif c.points:
            last = c.points[-1]
            print(f"{c.method} on {c.image_id}: {last.psnr_db:.2f} dB "
                  f"after {last.seconds:.2f}s ({len(c.points)} points)")
    print(f"table: {args.out_csv}  plot: {args.out_plot}")
    return 0


def cmd_serve(args) -> int:
    from .service import run_service

    run_service(host=args.host, port=args.port, data_dir=args.data_dir,
                generator=args.generator, seed=args.gen_seed,
                workers=args.workers, frontend_dist=args.frontend)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="saminv",
        description="spatially adaptive multilayer GAN inversion and editing")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def gen_flags(p):
        p.add_argument("--generator", default="toy",
                       help="'toy' or a path to generator weights")
        p.add_argument("--gen-seed", type=int, default=0,
                       help="weight seed for the toy generator")

    def opt_flags(p):
        p.add_argument("--steps", type=int, default=None,
                       help="optimization steps (default 300)")
        p.add_argument("--config", default=None,
                       help="JSON file with optimization settings")
        p.add_argument("--opt-seed", type=int, default=None)

    p = sub.add_parser("build-dataset",
                       help="synthesize targets and measured per-space error maps")
    gen_flags(p); opt_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=30)
    p.add_argument("--seed0", type=int, default=100, help="first target seed")
    p.add_argument("--segmenter", default="felzenszwalb")
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("train-predictor",
                       help="train the single-pass error map predictor")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--lr", type=float, default=2e-3)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--train-seed", type=int, default=0)
    p.add_argument("--val-every", type=int, default=5)
    p.set_defaults(func=cmd_train_predictor)

    p = sub.add_parser("invert", help="optimize a latent bundle for an image")
    gen_flags(p); opt_flags(p)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True, help="output bundle (.samb)")
    p.add_argument("--tau", type=float, default=DEFAULT_TAU,
                   help="invertibility threshold for region assignment")
    p.add_argument("--assign", choices=["wplus", "measured", "predictor"],
                   default="measured",
                   help="region assignment source (wplus = style only, no masks)")
    p.add_argument("--predictor", default=None, help="predictor .samb file")
    p.add_argument("--probe-steps", type=int, default=None,
                   help="steps for the per-space probe inversions")
    p.add_argument("--segmenter", default="felzenszwalb")
    p.add_argument("--save-render", default=None, help="write the final render PNG")
    p.add_argument("--save-overlay", default=None,
                   help="write the assignment overlay PNG")
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("encode", help="single-pass encoder inversion")
    gen_flags(p)
    p.add_argument("--image", required=True)
    p.add_argument("--encoders", required=True, help="encoder weights (.samb)")
    p.add_argument("--out", required=True, help="output bundle (.samb)")
    p.add_argument("--train-if-missing", action="store_true")
    p.add_argument("--train-seed", type=int, default=0)
    p.add_argument("--save-render", default=None)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("edit", help="apply a named direction to a bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--direction", required=True)
    p.add_argument("--magnitude", type=float, required=True)
    p.add_argument("--out", default="edited.png")
    p.add_argument("--dataset", default=None,
                   help="restrict lookup to one direction registry")
    p.add_argument("--directions", default=None,
                   help="load directions from a .samb file or directory")
    p.add_argument("--force", action="store_true",
                   help="render even when the direction is inapplicable")
    p.add_argument("--generator", default=None,
                   help="generator weights if the bundle id cannot be resolved")
    p.add_argument("--gen-seed", type=int, default=0)
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("eval", help="reconstruction metrics over toy targets")
    gen_flags(p); opt_flags(p)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--out", default="eval.csv")
    p.add_argument("--mode", choices=["wplus", "sam"], default="wplus")
    p.add_argument("--tau", type=float, default=DEFAULT_TAU)
    p.add_argument("--targets", choices=["pure", "patched"], default="patched")
    p.add_argument("--seed0", type=int, default=100)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="quality-vs-runtime reconstruction benchmark")
    gen_flags(p); opt_flags(p)
    p.add_argument("--count", type=int, default=3)
    p.add_argument("--methods", default="optimization,encoder",
                   help="comma list: optimization, encoder")
    p.add_argument("--encoders", default=None,
                   help="encoder weights (.samb); trained fresh when absent")
    p.add_argument("--every", type=int, default=10,
                   help="optimization render checkpoint interval")
    p.add_argument("--budgets", default=None,
                   help="comma list of wall-clock checkpoints in seconds")
    p.add_argument("--targets", choices=["pure", "patched"], default="patched")
    p.add_argument("--seed0", type=int, default=100)
    p.add_argument("--out-csv", default="bench.csv")
    p.add_argument("--out-plot", default="bench.png")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("serve", help="run the HTTP inversion/editing service")
    gen_flags(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=None,
                   help="default: SAM_PORT or 8000")
    p.add_argument("--data-dir", default=None, help="default: SAM_DATA_DIR")
    p.add_argument("--workers", type=int, default=None,
                   help="default: SAM_WORKERS or 1")
    p.add_argument("--frontend", default=None,
                   help="static frontend dist directory to mount at /")
    p.set_defaults(func=cmd_serve)

    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
