"""Full-scale reconstruction evaluation protocol.

Runs the standard evaluation on a real generator checkpoint: 1000 held-out
images, measured per-space error maps, threshold-based space selection, a
1000-step masked inversion per image, and a CSV of per-image PSNR / LPIPS /
wall-clock plus the mean row. This is the protocol behind the headline
reconstruction numbers; it needs released generator weights and hours of
compute, neither of which ship with the repository.

    python demos/full_scale_eval.py --generator weights.samb --images dir/

Without a checkpoint the script explains itself and offers --toy-smoke,
which runs the identical plumbing on the built-in fixture at desk scale.
"""

import argparse
import csv
import sys
import time
from pathlib import Path

import numpy as np

import saminv
from saminv.config import OptimizationConfig
from saminv.imgio import load_image, resize_image
from saminv.perceptual import perceptual_distance

FULL_COUNT = 1000
FULL_STEPS = 1000
FULL_PROBE_STEPS = 1000
TAU = 0.25


def run_protocol(h, images, cfg, probe_cfg, tau, out_csv, preset):
    rows = []
    for i, (image_id, img) in enumerate(images):
        t0 = time.perf_counter()
        sam = saminv.sam_invert(h, img, tau=tau, cfg=cfg, probe_cfg=probe_cfg)
        seconds = time.perf_counter() - t0
        recon = saminv.form_image(h, sam.bundle)
        rows.append((image_id, saminv.psnr(img, recon),
                     perceptual_distance(img, recon, preset=preset), seconds))
        print(f"[{i + 1}/{len(images)}] {image_id}: {rows[-1][1]:.2f} dB, "
              f"{seconds:.0f}s", flush=True)

    with open(out_csv, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["image_id", "psnr_db", "lpips", "seconds"])
        for image_id, p, l, s in rows:
            wr.writerow([image_id, f"{p:.4f}", f"{l:.6f}", f"{s:.2f}"])
        wr.writerow(["mean", f"{np.mean([r[1] for r in rows]):.4f}",
                     f"{np.mean([r[2] for r in rows]):.6f}",
                     f"{np.mean([r[3] for r in rows]):.2f}"])
    print(f"\nwrote {out_csv} ({len(rows)} images)")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--generator", default=None,
                    help="serialized generator weights (.samb)")
    ap.add_argument("--images", default=None, help="directory of target PNGs")
    ap.add_argument("--count", type=int, default=FULL_COUNT)
    ap.add_argument("--steps", type=int, default=FULL_STEPS)
    ap.add_argument("--probe-steps", type=int, default=FULL_PROBE_STEPS)
    ap.add_argument("--tau", type=float, default=TAU)
    ap.add_argument("--perceptual", default="vgg16")
    ap.add_argument("--out", default="full_scale_eval.csv")
    ap.add_argument("--toy-smoke", action="store_true",
                    help="run the same plumbing on the toy fixture (minutes)")
    args = ap.parse_args()

    if args.toy_smoke:
        h = saminv.load_generator("toy", seed=0)
        images = [(f"toy{i:03d}", saminv.patched_target(h, 100 + i)[0])
                  for i in range(3)]
        cfg = OptimizationConfig(steps=120)
        probe = OptimizationConfig(steps=80)
        run_protocol(h, images, cfg, probe, args.tau, args.out, "tiny")
        return 0

    if not args.generator or not args.images:
        print(__doc__.strip(), file=sys.stderr)
        print("\nerror: --generator and --images are required for the "
              "full-scale run (or pass --toy-smoke)", file=sys.stderr)
        return 2

    h = saminv.load_generator(args.generator)
    paths = sorted(Path(args.images).glob("*.png"))[: args.count]
    if not paths:
        print(f"error: no PNGs under {args.images}", file=sys.stderr)
        return 2
    images = []
    for p in paths:
        img = load_image(p)
        if img.shape[1:] != (h.output_resolution, h.output_resolution):
            img = resize_image(img, h.output_resolution)
        images.append((p.stem, img))

    cfg = OptimizationConfig(steps=args.steps, perceptual=args.perceptual)
    probe = OptimizationConfig(steps=args.probe_steps, perceptual=args.perceptual)
    run_protocol(h, images, cfg, probe, args.tau, args.out, args.perceptual)
    return 0


if __name__ == "__main__":
    sys.exit(main())
