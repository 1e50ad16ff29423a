"""Command-line interface: exit codes, artifacts on disk, printed summaries."""

import csv

import numpy as np
import pytest
from PIL import Image

from saminv.cli import main
from saminv.editing import builtin_directions
from saminv.imgio import load_image, save_image
from saminv.inversion import form_image, load_bundle
from saminv.metrics import psnr
from saminv.synthetic import sample_image


@pytest.fixture(scope="module")
def target_png(tmp_path_factory, toy):
    path = tmp_path_factory.mktemp("cli") / "target.png"
    save_image(path, sample_image(toy, seed=500))
    return path


@pytest.fixture(scope="module")
def wplus_bundle(tmp_path_factory, target_png):
    out = tmp_path_factory.mktemp("cli-bundle") / "w.samb"
    code = main(["invert", "--image", str(target_png), "--out", str(out),
                 "--assign", "wplus", "--steps", "60"])
    assert code == 0
    return out


def test_no_command_is_usage_error(capsys):
    assert main([]) == 2
    capsys.readouterr()


def test_unknown_flag_is_usage_error(capsys):
    assert main(["invert", "--no-such-flag"]) == 2
    capsys.readouterr()


def test_missing_image_is_runtime_error(tmp_path, capsys):
    code = main(["invert", "--image", str(tmp_path / "absent.png"),
                 "--out", str(tmp_path / "b.samb"), "--assign", "wplus",
                 "--steps", "5"])
    assert code == 1
    capsys.readouterr()


def test_invert_wplus_roundtrip(toy, target_png, wplus_bundle, capsys):
    bundle = load_bundle(wplus_bundle)
    target = load_image(target_png)
    assert psnr(target, form_image(toy, bundle)) > 10.0
    assert bundle.delta_f == {}
    capsys.readouterr()


def test_invert_measured_writes_overlay(tmp_path, target_png, capsys):
    out = tmp_path / "sam.samb"
    render = tmp_path / "render.png"
    overlay = tmp_path / "overlay.png"
    code = main(["invert", "--image", str(target_png), "--out", str(out),
                 "--steps", "30", "--probe-steps", "20",
                 "--save-render", str(render), "--save-overlay", str(overlay)])
    assert code == 0
    assert out.exists() and render.exists()
    with Image.open(overlay) as im:
        assert im.size == (32, 32)
        assert im.mode == "RGB"
    msg = capsys.readouterr().out
    assert "dB" in msg


def test_overlay_requires_region_assignment(tmp_path, target_png, capsys):
    code = main(["invert", "--image", str(target_png),
                 "--out", str(tmp_path / "b.samb"), "--assign", "wplus",
                 "--steps", "5", "--save-overlay", str(tmp_path / "o.png")])
    assert code == 2
    capsys.readouterr()


def test_edit_zero_magnitude_matches_render(toy, wplus_bundle, tmp_path, capsys):
    out = tmp_path / "edited.png"
    code = main(["edit", "--bundle", str(wplus_bundle), "--direction", "toy pc0",
                 "--magnitude", "0", "--out", str(out)])
    assert code == 0
    bundle = load_bundle(wplus_bundle)
    direct = tmp_path / "direct.png"
    save_image(direct, form_image(toy, bundle))
    assert np.array_equal(load_image(out), load_image(direct))
    capsys.readouterr()


def test_edit_moves_pixels(toy, wplus_bundle, tmp_path, capsys):
    out = tmp_path / "edited.png"
    code = main(["edit", "--bundle", str(wplus_bundle), "--direction", "toy pc0",
                 "--magnitude", "2.0", "--out", str(out)])
    assert code == 0
    assert not np.array_equal(load_image(out), form_image(toy, load_bundle(wplus_bundle)))
    capsys.readouterr()


def test_edit_unknown_direction_lists_known(wplus_bundle, tmp_path, capsys):
    code = main(["edit", "--bundle", str(wplus_bundle),
                 "--direction", "definitely absent", "--magnitude", "1",
                 "--out", str(tmp_path / "x.png")])
    assert code == 2
    err = capsys.readouterr().err
    assert "known:" in err and "toy pc0" in err


def test_edit_merged_registry_includes_named_datasets(toy, wplus_bundle, tmp_path,
                                                      capsys):
    # with no --dataset the lookup spans the toy moves and every packaged
    # dataset registry
    name = next(iter(builtin_directions(toy, "cars")))
    out = tmp_path / "car.png"
    code = main(["edit", "--bundle", str(wplus_bundle), "--direction", name,
                 "--magnitude", "1.0", "--out", str(out)])
    assert code == 0
    assert out.exists()
    capsys.readouterr()


def test_eval_csv_schema(tmp_path, capsys):
    out = tmp_path / "eval.csv"
    code = main(["eval", "--count", "2", "--steps", "25", "--mode", "wplus",
                 "--out", str(out)])
    assert code == 0
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["image_id", "psnr_db", "lpips", "seconds"]
    assert len(rows) == 4 and rows[-1][0] == "mean"
    body = np.array([[float(v) for v in r[1:]] for r in rows[1:3]])
    mean = [float(v) for v in rows[3][1:]]
    assert np.allclose(body.mean(axis=0), mean, atol=1e-3)
    capsys.readouterr()


def test_bench_writes_table_and_plot(tmp_path, capsys):
    out_csv = tmp_path / "bench.csv"
    out_plot = tmp_path / "bench.png"
    code = main(["bench", "--count", "1", "--methods", "optimization",
                 "--steps", "30", "--every", "10",
                 "--out-csv", str(out_csv), "--out-plot", str(out_plot)])
    assert code == 0
    with open(out_csv) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["image_id", "method", "psnr_db", "lpips", "seconds"]
    assert len(rows) >= 4          # three checkpoints plus the final state
    assert out_plot.stat().st_size > 0
    capsys.readouterr()


def test_bench_unknown_method(capsys):
    assert main(["bench", "--methods", "magic"]) == 2
    capsys.readouterr()


def test_dataset_then_predictor(tmp_path, capsys):
    data = tmp_path / "probes"
    code = main(["build-dataset", "--out", str(data), "--count", "4",
                 "--steps", "20"])
    assert code == 0
    items = sorted(p for p in data.iterdir() if p.is_dir())
    assert len(items) == 4
    for item in items:
        assert (item / "input.png").exists()
        assert (item / "meta.json").exists()
        assert (item / "maps.samb").exists()

    model = tmp_path / "predictor.samb"
    code = main(["train-predictor", "--dataset", str(data), "--out", str(model),
                 "--epochs", "2", "--val-every", "4"])
    assert code == 0
    assert model.exists()
    assert "improvement" in capsys.readouterr().out


def test_encode_with_pretrained_weights(tmp_path, toy, target_png, capsys):
    from saminv.encoders import save_encoders, train_encoders

    enc = tmp_path / "encoders.samb"
    save_encoders(enc, train_encoders(toy, style_steps=40, feature_steps=25))
    out = tmp_path / "enc.samb"
    code = main(["encode", "--image", str(target_png), "--encoders", str(enc),
                 "--out", str(out)])
    assert code == 0
    assert out.exists()
    assert "ms" in capsys.readouterr().out


def test_encode_missing_weights_without_training(tmp_path, target_png, capsys):
    code = main(["encode", "--image", str(target_png),
                 "--encoders", str(tmp_path / "none.samb"),
                 "--out", str(tmp_path / "b.samb")])
    assert code == 2
    capsys.readouterr()
