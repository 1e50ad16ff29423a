"""Acceptance gate: every property the package promises, measured end to end.

Each check runs on the CPU fixture, prints a single PASS/FAIL line with the
measured values, and enforces both the numeric tolerance and a wall-clock
budget, so a green run doubles as a verification report. Checks that need
an independent reference compute it here from scratch (central finite
differences, row-by-row prior sums, analytic PSNR) rather than trusting
the library's own code paths.
"""

import time

import numpy as np
import pytest
import torch

import saminv
from saminv import (LatentSpace, LossWeights, OptimizationConfig, PredictorConfig,
                    STYLEGAN_SPACES, LatentBundle)
from saminv.classcond import (_z_prior_t, load_class_generator, sample_z_plus,
                              z_statistics_for, zplus_regularizer)
from saminv.dataset import build_error_dataset, load_dataset, split_items
from saminv.generator import mean_style, run_slice, sample_style, synthesize
from saminv.inversion import (form_image, fspace_regularizer, invert, invert_batch,
                              offset_energy_t, style_prior_t, style_statistics_for,
                              total_objective_t, wplus_regularizer)
from saminv.invertibility import (build_masks, refine_maps, select_assignment)
from saminv.metrics import PSNR_CAP_DB, psnr
from saminv.perceptual import PerceptualNet, perceptual_error_map
from saminv.predictor import train_predictor
from saminv.samb import read_samb, write_samb
from saminv.segmentation import segment_image

FEATURE_SPACES = tuple(s for s in STYLEGAN_SPACES if s != LatentSpace.W_PLUS)


def _finish(name, ok, detail, t0, budget_s):
    elapsed = time.perf_counter() - t0
    line = (f"{'PASS' if ok and elapsed <= budget_s else 'FAIL'} {name}: {detail} "
            f"[{elapsed:.1f}s / budget {budget_s:.0f}s]")
    print(line)
    assert ok, line
    assert elapsed <= budget_s, line


@pytest.fixture(scope="module")
def toy():
    return saminv.load_generator("toy", seed=0)


@pytest.fixture(scope="module")
def stats(toy):
    return style_statistics_for(toy)


# ---------------------------------------------------------------------------
# generator slicing and formation

def test_sliced_forward_composes_to_full_forward():
    """Chaining every sub-network reproduces the one-shot forward pass."""
    t0 = time.perf_counter()
    worst = 0.0
    pairs = 0
    for gseed in range(5):
        h = saminv.load_generator("toy", seed=gseed)
        bounds = h.slice_boundaries
        for k in range(20):
            w = sample_style(h, seed=1000 * gseed + k)
            full = run_slice(h, 0, bounds[-1], None, w)
            f = None
            for i, j in zip(bounds[:-1], bounds[1:]):
                f = run_slice(h, i, j, f, w)
            worst = max(worst, float(np.max(np.abs(f.values - full.values))))
            pairs += 1
    _finish("slice-composition", pairs == 100 and worst <= 1e-5,
            f"{pairs} (seed, style) pairs, max abs diff {worst:.2e} (tol 1e-5)",
            t0, 30.0)


def test_zero_offset_formation_matches_plain_synthesis(toy):
    """All-zero feature offsets collapse masked formation to plain synthesis."""
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(5):
        w = sample_style(toy, seed=seed)
        plain = synthesize(toy, w)
        deltas = {}
        masks = {}
        for s in FEATURE_SPACES:
            shape = toy.feature_shape(toy.space_layers[s])
            deltas[s] = np.zeros(shape, dtype=np.float32)
            masks[s] = np.ones(shape[1:], dtype=np.float32)
        bundle = LatentBundle(generator_id=toy.id, w_plus=w,
                              delta_f=deltas, masks=masks)
        worst = max(worst, float(np.max(np.abs(form_image(toy, bundle) - plain))))
        empty = LatentBundle(generator_id=toy.id, w_plus=w)
        worst = max(worst, float(np.max(np.abs(form_image(toy, empty) - plain))))
    _finish("formation-identity", worst <= 1e-6,
            f"max abs diff vs plain synthesis {worst:.2e} (tol 1e-6)", t0, 5.0)


# ---------------------------------------------------------------------------
# gradients vs central finite differences

def _fd_rel(make_loss, p, idx, grad_val, eps):
    flat = p.detach().reshape(-1)
    old = float(flat[idx])
    with torch.no_grad():
        flat[idx] = old + eps
        hi = float(make_loss())
        flat[idx] = old - eps
        lo = float(make_loss())
        flat[idx] = old
    fd = (hi - lo) / (2.0 * eps)
    return abs(fd - grad_val) / max(abs(fd), abs(grad_val), 1e-12)


def _max_fd_rel(make_loss, params, picks, eps=1e-6):
    """Worst relative error of autograd vs central differences at `picks`.

    A probe that straddles one of the piecewise-linear kinks gets a second
    chance at a smaller step before it counts against the check.
    """
    grads = torch.autograd.grad(make_loss(), params)
    worst = 0.0
    for pi, idx in picks:
        g = float(grads[pi].reshape(-1)[idx])
        rel = _fd_rel(make_loss, params[pi], idx, g, eps)
        if rel > 1e-3:
            rel = min(rel, _fd_rel(make_loss, params[pi], idx, g, eps * 0.1))
        worst = max(worst, rel)
    return worst


def _picks(rng, params, counts):
    out = []
    for pi, n in enumerate(counts):
        size = params[pi].numel()
        out.extend((pi, int(i)) for i in rng.choice(size, size=n, replace=False))
    return out


def test_objective_gradients_match_central_differences(toy, stats):
    """Autograd of every loss term agrees with finite differences in float64."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    h64 = toy.double_copy()
    percep = PerceptualNet("tiny").double()
    mu = torch.from_numpy(stats.mu)
    sigma_inv = torch.from_numpy(stats.sigma_inv_reg)
    w0 = torch.from_numpy(mean_style(toy, stats).astype(np.float64))[None]
    x = torch.from_numpy(saminv.sample_image(toy, 32).astype(np.float64))[None]
    g = torch.Generator().manual_seed(3)

    w = torch.from_numpy(sample_style(toy, 31).astype(np.float64))[None]
    w = w.clone().requires_grad_(True)
    deltas, masks = {}, {}
    for s in (LatentSpace.F6, LatentSpace.F10):
        c, hh, ww = toy.feature_shape(toy.space_layers[s])
        d = 0.1 * torch.randn(1, c, hh, ww, dtype=torch.float64, generator=g)
        deltas[s] = d.requires_grad_(True)
        masks[s] = torch.rand(1, 1, hh, ww, dtype=torch.float64, generator=g)

    def full_loss():
        return total_objective_t(h64, percep, x, w, deltas, masks, mu, sigma_inv,
                                 w0, LossWeights())["total"].sum()

    params = [w, deltas[LatentSpace.F6], deltas[LatentSpace.F10]]
    rel_full = _max_fd_rel(full_loss, params, _picks(rng, params, (12, 4, 4)))

    w2 = torch.from_numpy(sample_style(toy, 33).astype(np.float64))[None]
    w2 = w2.clone().requires_grad_(True)
    rel_style = _max_fd_rel(lambda: style_prior_t(w2, mu, sigma_inv, w0).sum(),
                            [w2], _picks(rng, [w2], (20,)))

    d1 = torch.randn(1, 8, 6, 6, dtype=torch.float64, generator=g).requires_grad_(True)
    d2 = torch.randn(1, 4, 9, 9, dtype=torch.float64, generator=g).requires_grad_(True)
    rel_off = _max_fd_rel(
        lambda: offset_energy_t({LatentSpace.F4: d1, LatentSpace.F8: d2}).sum(),
        [d1, d2], _picks(rng, [d1, d2], (10, 10)))

    ch = load_class_generator("toy", seed=0)
    zstats = z_statistics_for(ch)
    mu_z = torch.from_numpy(zstats.mu)
    sig_z = torch.from_numpy(zstats.sigma_inv_reg)
    z = torch.from_numpy(sample_z_plus(ch, 5).astype(np.float64))[None]
    z = z.clone().requires_grad_(True)
    z0 = torch.zeros_like(z.detach())
    rel_z = _max_fd_rel(lambda: _z_prior_t(z, mu_z, sig_z, z0).sum(),
                        [z], _picks(rng, [z], (20,)))

    worst = max(rel_full, rel_style, rel_off, rel_z)
    _finish("gradient-checks", worst <= 1e-3,
            f"max rel err vs central FD: objective {rel_full:.2e}, style prior "
            f"{rel_style:.2e}, offset energy {rel_off:.2e}, class prior {rel_z:.2e} "
            f"(tol 1e-3, >=20 coords each)", t0, 120.0)


# ---------------------------------------------------------------------------
# prior terms vs row-loop oracles

def _rowloop_style_prior(w, mu, sigma_inv, w0):
    """Element-by-element reference: squash, Mahalanobis, drift, one row at a time."""
    w = np.asarray(w, dtype=np.float64)
    w0 = np.asarray(w0, dtype=np.float64)
    total = 0.0
    for n in range(w.shape[0]):
        c = np.array([x if x >= 0 else 5.0 * x for x in w[n]]) - mu
        for i in range(c.size):
            for j in range(c.size):
                total += c[i] * sigma_inv[i, j] * c[j]
        total += sum((w[n, k] - w0[n, k]) ** 2 for k in range(w.shape[1]))
    return total


def _rowloop_z_prior(z, mu, sigma_inv, z0):
    z = np.asarray(z, dtype=np.float64)
    z0 = np.asarray(z0, dtype=np.float64)
    total = 0.0
    for n in range(z.shape[0]):
        c = z[n] - mu
        for i in range(c.size):
            for j in range(c.size):
                total += c[i] * sigma_inv[i, j] * c[j]
        total += sum((z[n, k] - z0[n, k]) ** 2 for k in range(z.shape[1]))
    return total


def test_priors_match_row_loop_oracles(toy, stats):
    """Vectorized prior terms equal brute-force row loops on random inputs."""
    t0 = time.perf_counter()
    ch = load_class_generator("toy", seed=0)
    zstats = z_statistics_for(ch)
    w0 = mean_style(toy, stats).astype(np.float64)
    worst_w = worst_z = 0.0
    for seed in range(5):
        w = sample_style(toy, seed=50 + seed).astype(np.float64)
        want = _rowloop_style_prior(w, stats.mu, stats.sigma_inv_reg, w0)
        got = wplus_regularizer(w, stats, w0)
        got_t = float(style_prior_t(torch.from_numpy(w)[None],
                                    torch.from_numpy(stats.mu),
                                    torch.from_numpy(stats.sigma_inv_reg),
                                    torch.from_numpy(w0)[None])[0])
        worst_w = max(worst_w, abs(got - want) / abs(want),
                      abs(got_t - want) / abs(want))

        z = sample_z_plus(ch, 60 + seed).astype(np.float64)
        z0 = np.zeros_like(z)
        want_z = _rowloop_z_prior(z, zstats.mu, zstats.sigma_inv_reg, z0)
        got_z = zplus_regularizer(z, zstats, z0)
        got_zt = float(_z_prior_t(torch.from_numpy(z)[None],
                                  torch.from_numpy(zstats.mu),
                                  torch.from_numpy(zstats.sigma_inv_reg),
                                  torch.from_numpy(z0)[None])[0])
        worst_z = max(worst_z, abs(got_z - want_z) / abs(want_z),
                      abs(got_zt - want_z) / abs(want_z))
    worst = max(worst_w, worst_z)
    _finish("regularizer-oracles", worst <= 1e-6,
            f"max rel diff vs row loops: style prior {worst_w:.2e}, "
            f"class prior {worst_z:.2e} (tol 1e-6, 5 random inputs each)", t0, 10.0)


# ---------------------------------------------------------------------------
# metrics

def test_psnr_analytic_offset_and_cap():
    """A uniform 0.1 offset on unit-range images scores 20 dB; identity hits the cap."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(5):
        x = rng.uniform(0.0, 0.9, size=(3, 32, 32))
        worst = max(worst, abs(psnr(x, x + 0.1, peak=1.0) - 20.0))
    cap = psnr(x, x.copy(), peak=1.0)
    _finish("psnr-analytic", worst <= 0.01 and cap == PSNR_CAP_DB,
            f"0.1 offset within {worst:.2e} of 20.00 dB, identical images "
            f"{cap:.0f} dB cap", t0, 1.0)


# ---------------------------------------------------------------------------
# spatial selection

def test_space_selection_monotone_idempotent_partition():
    """Raising tau never deepens a segment; pooling is idempotent; regions tile."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    order = STYLEGAN_SPACES
    idem_worst = 0.0
    for _ in range(50):
        labels = rng.integers(0, 12, size=(32, 32))
        raw = {s: rng.uniform(0.0, 1.0, size=(32, 32)) for s in order}
        refined = refine_maps(raw, labels)
        again = refine_maps(refined, labels)
        idem_worst = max(idem_worst, max(float(np.max(np.abs(again[s] - refined[s])))
                                         for s in order))
        prev = None
        for tau in np.linspace(0.0, 1.0, 21):
            a = select_assignment(refined, tau=float(tau), order=order)
            cover = sum(a.region_map(s) for s in order)
            assert np.array_equal(cover, np.ones_like(cover)), "regions must tile"
            seg_idx = {seg: int(a.labels[labels == seg][0]) for seg in np.unique(labels)}
            for seg, i in seg_idx.items():
                assert np.all(a.labels[labels == seg] == i), "segments must agree"
            if prev is not None:
                assert all(seg_idx[seg] <= prev[seg] for seg in seg_idx), \
                    f"tau={tau:.2f} deepened a segment"
            prev = seg_idx
    _finish("selection-monotonicity", idem_worst <= 1e-6,
            f"50 map sets x 21 taus monotone, regions tile exactly, "
            f"re-pooling moves maps {idem_worst:.1e} (tol 1e-6)", t0, 30.0)


# ---------------------------------------------------------------------------
# reconstruction quality across spaces

def test_deeper_spaces_reconstruct_better_and_mixed_beats_style_only(toy):
    """Mean PSNR grows with feature depth; adaptive assignment beats style-only by 1 dB."""
    t0 = time.perf_counter()
    n = 20
    targets = [saminv.patched_target(toy, 700 + i)[0] for i in range(n)]
    images = np.stack(targets)
    cfg = OptimizationConfig(steps=200)

    means = []
    recons = {}
    for s in (None,) + tuple((sp,) for sp in FEATURE_SPACES):
        results = invert_batch(toy, images, assignments=s, cfg=cfg)
        rec = [form_image(toy, r.bundle) for r in results]
        key = LatentSpace.W_PLUS if s is None else s[0]
        recons[key] = rec
        means.append(float(np.mean([psnr(t, r) for t, r in zip(targets, rec)])))

    mask_sets = []
    for i, target in enumerate(targets):
        labels = segment_image(target)
        errs = {sp: perceptual_error_map(target, recons[sp][i]) for sp in STYLEGAN_SPACES}
        assignment = select_assignment(refine_maps(errs, labels), tau=0.25,
                                       order=STYLEGAN_SPACES)
        mask_sets.append(build_masks(toy, assignment))
    mixed = invert_batch(toy, images, assignments=mask_sets, cfg=cfg)
    mixed_mean = float(np.mean([psnr(t, form_image(toy, r.bundle))
                                for t, r in zip(targets, mixed)]))

    monotone = all(a <= b + 1e-9 for a, b in zip(means, means[1:]))
    margin = mixed_mean - means[0]
    series = " -> ".join(f"{m:.2f}" for m in means)
    _finish("depth-dominance", monotone and margin >= 1.0,
            f"mean PSNR over {n} targets {series} dB non-decreasing, adaptive "
            f"{mixed_mean:.2f} dB beats style-only by {margin:.2f} dB (need >= 1.0)",
            t0, 1200.0)


# ---------------------------------------------------------------------------
# editing identities

def test_zero_magnitude_edit_bit_identical_and_unmasked_edit_exact(toy):
    """Magnitude 0 renders the stored bundle bit-for-bit; no masks means a pure restyle."""
    t0 = time.perf_counter()
    direction = saminv.builtin_directions(toy, "toy")["toy pc1"]
    target = saminv.patched_target(toy, 900)[0]
    cfg = OptimizationConfig(steps=50)

    masked = invert(toy, target, assignment=(LatentSpace.F6,), cfg=cfg).bundle
    zero_ok = np.array_equal(saminv.apply_edit(toy, masked, direction, 0.0),
                             form_image(toy, masked))

    plain = invert(toy, target, assignment=None, cfg=cfg).bundle
    assert plain.delta_f == {}
    w_edit = (plain.w_plus.astype(np.float32)
              + 1.5 * direction.delta_w_plus).astype(np.float32)
    edit_ok = np.array_equal(saminv.apply_edit(toy, plain, direction, 1.5),
                             synthesize(toy, w_edit))
    _finish("edit-identities", zero_ok and edit_ok,
            "zero-magnitude edit bit-identical; maskless edit equals edited "
            "synthesis exactly", t0, 60.0)


# ---------------------------------------------------------------------------
# learned components

def test_error_predictor_beats_constant_mean_baseline(toy, tmp_path):
    """The trained map predictor beats the constant mean-map baseline by >= 10%."""
    t0 = time.perf_counter()
    build_error_dataset(toy, tmp_path, count=24, cfg=OptimizationConfig(steps=120),
                        seed0=100)
    items = load_dataset(tmp_path)
    train, val = split_items(items, val_every=4)
    _, report = train_predictor(train, PredictorConfig(resolution=32, epochs=160),
                                val_items=val)
    gain = 100.0 * (1.0 - report["val_mse"] / report["baseline_val_mse"])
    _finish("predictor-signal", gain >= 10.0,
            f"held-out map MSE {report['val_mse']:.6f} vs constant baseline "
            f"{report['baseline_val_mse']:.6f}: {gain:.1f}% better (need >= 10%)",
            t0, 900.0)


def test_encoder_inference_much_faster_than_optimization(toy):
    """One encoder forward pass beats a 300-step optimization by >= 10x."""
    t0 = time.perf_counter()
    encs = saminv.train_encoders(toy, style_steps=40, feature_steps=25)
    target = saminv.sample_image(toy, 950)

    t_opt0 = time.perf_counter()
    invert(toy, target, assignment=(LatentSpace.F10,), cfg=OptimizationConfig(steps=300))
    t_opt = time.perf_counter() - t_opt0

    saminv.encode_bundle(toy, encs, target, assignment=(LatentSpace.F10,))
    t_enc0 = time.perf_counter()
    bundle = saminv.encode_bundle(toy, encs, target, assignment=(LatentSpace.F10,))
    t_enc = time.perf_counter() - t_enc0
    assert form_image(toy, bundle).shape == target.shape

    ratio = t_opt / t_enc
    _finish("encoder-speedup", ratio >= 10.0,
            f"encode {t_enc * 1000:.0f} ms vs 300-step optimization {t_opt:.1f} s: "
            f"{ratio:.0f}x faster (need >= 10x)", t0, 300.0)


def test_offset_penalty_limits_delta_energy(toy):
    """Dropping the offset penalty lets feature offsets absorb >= 5x more energy."""
    t0 = time.perf_counter()
    images = np.stack([saminv.sample_image(toy, 400 + i) for i in range(10)])
    assignment = FEATURE_SPACES
    reg = invert_batch(toy, images, assignments=assignment,
                       cfg=OptimizationConfig(steps=300))
    off = invert_batch(toy, images, assignments=assignment,
                       cfg=OptimizationConfig(steps=300,
                                              weights=LossWeights(f_reg=0.0)))
    e_reg = float(np.mean([fspace_regularizer(r.bundle.delta_f) for r in reg]))
    e_off = float(np.mean([fspace_regularizer(r.bundle.delta_f) for r in off]))
    ratio = e_off / e_reg
    _finish("offset-penalty-ablation", ratio >= 5.0,
            f"mean offset energy {e_off:.2f} unpenalized vs {e_reg:.2f} "
            f"penalized on 10 targets: {ratio:.1f}x (need >= 5x)", t0, 900.0)


# ---------------------------------------------------------------------------
# container

def test_container_round_trip_bit_exact_with_nan(tmp_path):
    """Randomized arrays, NaN and infinities included, survive save/load bit-for-bit."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(12)
    arrays = {}
    for k in range(6):
        shape = tuple(rng.integers(1, 9, size=rng.integers(1, 5)))
        a = rng.normal(size=shape).astype(np.float32)
        mask = rng.uniform(size=shape) < 0.1
        a[mask] = np.nan
        a.flat[0] = np.inf if k % 2 else -np.inf
        arrays[f"group/arr{k}"] = a
    meta = {"kind": "test-blob", "nested": {"tau": 0.25, "order": ["w_plus", "f4"]},
            "count": 6}
    path = tmp_path / "blob.samb"
    write_samb(path, meta, arrays)
    meta2, arrays2 = read_samb(path)
    same_meta = meta2 == meta
    same_bits = (set(arrays2) == set(arrays)
                 and all(arrays2[k].shape == arrays[k].shape
                         and arrays2[k].dtype == arrays[k].dtype
                         and arrays2[k].tobytes() == arrays[k].tobytes()
                         for k in arrays))
    _finish("container-round-trip", same_meta and same_bits,
            f"{len(arrays)} arrays with NaN/inf and nested metadata identical "
            "after save/load", t0, 5.0)
