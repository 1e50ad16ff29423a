"""Reconstruction quality metrics and the quality-vs-runtime benchmark.

The benchmark treats a reconstruction method as a factory: called with a
target image it returns an iterator that yields successively better
reconstructions (an optimizer yields every few steps, an encoder yields
once). The harness clocks only the time spent inside the iterator, keeps
the best-so-far reconstruction, and records (seconds, PSNR, LPIPS) points.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, UsageError
from .perceptual import perceptual_distance, perceptual_error_map

# Images here live in [-1,1], so the peak-to-peak signal is 2.0 by default.
DEFAULT_PEAK = 2.0
PSNR_CAP_DB = 100.0


def psnr(x: np.ndarray, y: np.ndarray, peak: float = DEFAULT_PEAK) -> float:
    """Peak signal-to-noise ratio in dB, capped at 100 dB for identical inputs."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeError(f"shape mismatch {x.shape} vs {y.shape}")
    if peak <= 0:
        raise UsageError("peak must be positive")
    mse = float(((x - y) ** 2).mean())
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(peak * peak / mse))


def mse(x: np.ndarray, y: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeError(f"shape mismatch {x.shape} vs {y.shape}")
    return float(((x - y) ** 2).mean())


def lpips_vgg(x: np.ndarray, y: np.ndarray, preset: str = "vgg16"):
    """Perceptual distance: (scalar, HxW spatial map).

    Same routine that backs the reconstruction losses and the error maps,
    so benchmark numbers and optimization objectives are directly comparable.
    """
    if np.asarray(x).shape != np.asarray(y).shape:
        raise ShapeError(f"shape mismatch {np.asarray(x).shape} vs {np.asarray(y).shape}")
    return perceptual_distance(x, y, preset), perceptual_error_map(x, y, preset)


@dataclass
class EvalReport:
    """Aggregate reconstruction metrics over an image set."""

    count: int
    psnr_mean: float
    psnr_per_image: list
    mse_mean: float
    lpips_mean: float
    lpips_per_image: list
    extras: dict = field(default_factory=dict)


def evaluate(targets, recons, peak: float = DEFAULT_PEAK,
             perceptual_preset: str = "tiny") -> EvalReport:
    """Score reconstructions against their targets (paired, same order)."""
    targets = list(targets)
    recons = list(recons)
    if len(targets) != len(recons):
        raise UsageError(f"{len(targets)} targets vs {len(recons)} reconstructions")
    if not targets:
        raise UsageError("nothing to evaluate")
    psnrs, mses, lps = [], [], []
    for t, r in zip(targets, recons):
        psnrs.append(psnr(t, r, peak))
        mses.append(mse(t, r))
        lps.append(perceptual_distance(t, r, perceptual_preset))
    return EvalReport(
        count=len(targets),
        psnr_mean=float(np.mean(psnrs)), psnr_per_image=psnrs,
        mse_mean=float(np.mean(mses)),
        lpips_mean=float(np.mean(lps)), lpips_per_image=lps,
    )


@dataclass
class CurvePoint:
    seconds: float
    psnr_db: float
    lpips: float


@dataclass
class MethodCurve:
    """Quality-vs-time trace for one (method, image) pair.

    Points carry best-so-far quality, so PSNR is monotone non-decreasing;
    a crash leaves the points collected so far and sets `failed`.
    """

    method: str
    image_id: str
    points: list
    failed: bool = False
    error: str = ""


def benchmark_runtime(methods: dict, images, budgets=None,
                      peak: float = DEFAULT_PEAK,
                      perceptual_preset: str = "tiny") -> list:
    """Run reconstruction methods against images, clocking quality over time.

    methods: name -> factory; factory(image) returns an iterator of CHW
    reconstructions. images: dict id -> image, or an iterable (ids assigned).
    budgets: optional ascending wall-clock checkpoints in seconds; without a
    schedule every yield becomes a point. Only iterator time is clocked, the
    harness's own metric computation never inflates a method's curve.
    """
    if not methods:
        raise UsageError("no methods to benchmark")
    if not isinstance(images, dict):
        images = {f"img{i:03d}": im for i, im in enumerate(images)}
    if not images:
        raise UsageError("no images to benchmark")
    if budgets is not None:
        budgets = [float(b) for b in budgets]
        if sorted(budgets) != budgets or any(b <= 0 for b in budgets):
            raise UsageError("budgets must be positive and ascending")

    curves = []
    for image_id, target in images.items():
        target = np.asarray(target, dtype=np.float32)
        for name, factory in methods.items():
            curves.append(_run_curve(name, image_id, factory, target, budgets,
                                     peak, perceptual_preset))
    return curves


def _run_curve(name, image_id, factory, target, budgets, peak, preset) -> MethodCurve:
    snaps = []          # (elapsed_s, best reconstruction at that moment)
    best = None
    best_mse = math.inf  # same ordering as PSNR, cheap enough for the loop
    elapsed = 0.0
    pending = list(budgets) if budgets is not None else None
    failed, err = False, ""

    t0 = time.perf_counter()
    try:
        it = iter(factory(target))
    except Exception as exc:
        return MethodCurve(name, image_id, [], failed=True,
                           error=f"{type(exc).__name__}: {exc}")
    elapsed += time.perf_counter() - t0

    while True:
        t0 = time.perf_counter()
        try:
            recon = next(it)
        except StopIteration:
            elapsed += time.perf_counter() - t0
            break
        except Exception as exc:
            elapsed += time.perf_counter() - t0
            failed, err = True, f"{type(exc).__name__}: {exc}"
            break
        elapsed += time.perf_counter() - t0

        recon = np.asarray(recon, dtype=np.float32)
        m = mse(target, recon)
        if m < best_mse:
            best_mse, best = m, recon.copy()
        if pending is None:
            snaps.append((elapsed, best))
        else:
            while pending and elapsed >= pending[0]:
                snaps.append((elapsed, best))
                pending.pop(0)

    if best is not None and (not snaps or snaps[-1][0] < elapsed):
        snaps.append((elapsed, best))

    points = [CurvePoint(seconds=float(t), psnr_db=psnr(target, r, peak),
                         lpips=perceptual_distance(target, r, preset))
              for t, r in snaps]
    return MethodCurve(name, image_id, points, failed=failed, error=err)


def write_benchmark_csv(path, curves) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["image_id", "method", "psnr_db", "lpips", "seconds"])
        for c in curves:
            for p in c.points:
                wr.writerow([c.image_id, c.method, f"{p.psnr_db:.4f}",
                             f"{p.lpips:.6f}", f"{p.seconds:.4f}"])


def plot_benchmark(path, curves) -> None:
    """PSNR-vs-seconds line per (method, image); matplotlib imported lazily."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    methods = sorted({c.method for c in curves})
    cmap = plt.get_cmap("tab10")
    colors = {m: cmap(i % 10) for i, m in enumerate(methods)}
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    seen = set()
    for c in curves:
        if not c.points:
            continue
        ts = [p.seconds for p in c.points]
        ps = [p.psnr_db for p in c.points]
        label = c.method if c.method not in seen else None
        seen.add(c.method)
        ax.plot(ts, ps, marker="o", ms=2.5, lw=1.0, alpha=0.8,
                color=colors[c.method], label=label)
    ax.set_xlabel("seconds")
    ax.set_ylabel("PSNR (dB)")
    ax.set_xscale("log")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def time_tasks(tasks: dict, runs: int = 3, warmup: int = 1) -> dict:
    """Micro-timer for named zero-argument callables: name -> mean seconds."""
    if runs < 1:
        raise UsageError("runs must be >= 1")
    out = {}
    for name, fn in tasks.items():
        for _ in range(warmup):
            fn()
        times = []
        for _ in range(runs):
            t0 = time.perf_counter()
            fn()
            times.append(time.perf_counter() - t0)
        out[name] = float(np.mean(times))
    return out


# ---------------------------------------------------------------------------
# method builders for the runtime benchmark


def optimization_method(h, cfg=None, masks=None, every: int = 10):
    """Factory builder: iterative inversion that yields its best render.

    Reuses the inversion objective so benchmark behaviour matches `invert`;
    yields the best-so-far reconstruction every `every` steps and at the end.
    """
    import torch

    from .config import OptimizationConfig
    from .inversion import _resolve_masks, style_statistics_for, total_objective_t
    from .generator import mean_style
    from .perceptual import get_perceptual

    cfg = cfg or OptimizationConfig()
    stats = style_statistics_for(h)
    percep = get_perceptual(cfg.perceptual)
    mask_arrays = _resolve_masks(h, masks)

    def factory(image):
        x = torch.from_numpy(np.asarray(image, dtype=np.float32))[None]
        w0 = torch.from_numpy(mean_style(h, stats).astype(np.float32))[None]
        w = w0.clone().requires_grad_(True)
        deltas, mts = {}, {}
        for s, m in mask_arrays.items():
            shape = (1,) + h.feature_shape(h.space_layers[s])
            deltas[s] = torch.zeros(shape, requires_grad=True)
            mts[s] = torch.from_numpy(np.ascontiguousarray(m, np.float32))[None, None]
        mu = torch.from_numpy(stats.mu.astype(np.float32))
        sigma_inv = torch.from_numpy(stats.sigma_inv_reg.astype(np.float32))
        groups = [{"params": [w], "lr": cfg.lr_w}]
        if deltas:
            groups.append({"params": list(deltas.values()), "lr": cfg.lr_delta})
        opt = torch.optim.Adam(groups)

        best_total, best_img = math.inf, None
        for step in range(cfg.steps):
            opt.zero_grad(set_to_none=True)
            terms = total_objective_t(h, percep, x, w, deltas, mts, mu, sigma_inv,
                                      w0, cfg.weights)
            total = float(terms["total"].detach()[0])
            if total < best_total:
                best_total = total
                best_img = terms["image"].detach()[0].numpy().copy()
            if (step + 1) % every == 0:
                yield best_img
            terms["total"].sum().backward()
            opt.step()
        if cfg.steps % every != 0 and best_img is not None:
            yield best_img

    return factory


def encoder_method(h, encoders, masks=None):
    """Factory builder: single-pass encoder reconstruction (yields once)."""
    from .encoders import encode_bundle
    from .inversion import form_image

    def factory(image):
        bundle = encode_bundle(h, encoders, np.asarray(image, np.float32), masks)
        yield form_image(h, bundle)

    return factory
