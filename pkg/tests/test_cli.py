import csv
import hashlib
import json
import math

import numpy as np
import pytest

from chaotrack.cli import main
from chaotrack.data import GridSeries, default_locations, load_checkpoint, load_grid, save_grid
from chaotrack.model import init_params

TINY = ["--dlc-hidden", "8", "--encoder-hidden", "6", "--latent-dim", "3", "--decoder-hidden", "6"]


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def seasonal(tmp_path):
    path = tmp_path / "seasonal.csv"
    assert run("synth", "--system", "seasonal", "--steps", 160, "--n-locations", 3, "--seed", 1, "--out", path) == 0
    return path


@pytest.fixture
def trained(tmp_path, seasonal):
    ckpt = tmp_path / "model.ctck"
    code = run("train", "--grid", seasonal, "--window", 4, "--checkpoint", ckpt,
               "--train-fraction", 0.75, "--epochs", 2, "--seed", 3, *TINY)
    assert code == 0
    return ckpt


def test_synth_logistic(tmp_path):
    out = tmp_path / "log.csv"
    assert run("synth", "--system", "logistic", "--r", 4, "--x0", 0.2, "--steps", 1000, "--out", out) == 0
    g = load_grid(out)
    assert (g.T, g.N) == (1000, 1)
    manifest = json.loads((tmp_path / "log.manifest.json").read_text())
    assert manifest["subcommand"] == "synth"
    assert manifest["outputs"]["log.csv"] == digest(out)
    assert manifest["config"]["x0"] == 0.2 and "tool_version" in manifest


def test_synth_deterministic(tmp_path):
    a, b = tmp_path / "a.ctgr", tmp_path / "b.ctgr"
    for p in (a, b):
        run("synth", "--system", "lorenz", "--steps", 300, "--component", "all", "--out", p)
    assert digest(a) == digest(b)
    assert load_grid(a).N == 3


def test_synth_missing_required_flag(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        run("synth", "--system", "logistic", "--out", tmp_path / "x.csv")
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err
    assert not list(tmp_path.iterdir())


def test_synth_invalid_value_writes_nothing(tmp_path, capsys):
    code = run("synth", "--system", "logistic", "--r", 4, "--x0", 1.5, "--steps", 10, "--out", tmp_path / "x.csv")
    assert code == 2
    assert "usage" in capsys.readouterr().err
    assert not list(tmp_path.iterdir())


def test_train_outputs(tmp_path, trained):
    cp = load_checkpoint(trained)
    assert cp.meta["train_rows"] == 120
    assert cp.model_config.window == 4 and cp.model_config.dlc_hidden == (8,)
    loss = rows(tmp_path / "model.loss.csv")
    assert loss[0] == ["epoch", "recon", "delta", "kl", "total"]
    assert len(loss) == 3
    manifest = json.loads((tmp_path / "model.manifest.json").read_text())
    assert manifest["seeds"] == {"init_seed": 3, "train_seed": 3}
    assert manifest["inputs"]["seasonal.csv"] == digest(tmp_path / "seasonal.csv")


def test_train_one_epoch_one_row(tmp_path, seasonal):
    ckpt = tmp_path / "one.ctck"
    run("train", "--grid", seasonal, "--window", 4, "--checkpoint", ckpt, "--epochs", 1, *TINY)
    assert len(rows(tmp_path / "one.loss.csv")) == 2


def test_train_zero_lr_keeps_init(tmp_path, seasonal):
    ckpt = tmp_path / "lr0.ctck"
    run("train", "--grid", seasonal, "--window", 4, "--checkpoint", ckpt, "--epochs", 1,
        "--lr", 0, "--seed", 9, *TINY)
    cp = load_checkpoint(ckpt)
    assert np.array_equal(cp.params.flat(), init_params(cp.model_config).flat())


def test_train_reproducible(tmp_path, seasonal):
    paths = [tmp_path / "r1.ctck", tmp_path / "r2.ctck"]
    for p in paths:
        run("train", "--grid", seasonal, "--window", 4, "--checkpoint", p, "--epochs", 2, "--seed", 5, *TINY)
    assert digest(paths[0]) == digest(paths[1])


def test_train_kl_weight_modes(tmp_path, seasonal):
    ckpt = tmp_path / "k.ctck"
    run("train", "--grid", seasonal, "--window", 4, "--checkpoint", ckpt, "--epochs", 1, "--kl-weight", 1, *TINY)
    assert load_checkpoint(ckpt).meta["train_config"]["kl_weight"] == 1.0
    run("train", "--grid", seasonal, "--window", 4, "--checkpoint", ckpt, "--epochs", 1, *TINY)
    std = load_checkpoint(ckpt).normalizer.std
    assert load_checkpoint(ckpt).meta["train_config"]["kl_weight"] == pytest.approx(1 / np.mean(std**2))
    assert run("train", "--grid", seasonal, "--window", 4, "--checkpoint", ckpt, "--kl-weight", "x") == 2


def test_train_missing_grid(tmp_path):
    assert run("train", "--grid", tmp_path / "nope.csv", "--window", 4, "--checkpoint", tmp_path / "m.ctck") == 3


def test_train_too_short(tmp_path, seasonal):
    code = run("train", "--grid", seasonal, "--window", 4, "--checkpoint", tmp_path / "m.ctck",
               "--train-fraction", 0.02)
    assert code == 3
    assert not (tmp_path / "m.ctck").exists()


def test_predict_outputs(tmp_path, trained, seasonal):
    out = tmp_path / "pred.csv"
    assert run("predict", "--checkpoint", trained, "--grid", seasonal, "--history-rows", 120,
               "--horizon", 40, "--out", out) == 0
    pred = load_grid(out)
    x_hat = load_grid(tmp_path / "pred.x_hat.csv")
    delta = load_grid(tmp_path / "pred.delta.csv")
    assert pred.T == 40 and pred.week_offset == 120
    # the component traces are denormalized separately, so they add up only to rounding
    np.testing.assert_allclose(x_hat.values + delta.values, pred.values, rtol=1e-12, atol=1e-12)


def test_predict_horizon_one(tmp_path, trained, seasonal):
    out = tmp_path / "p1.csv"
    run("predict", "--checkpoint", trained, "--grid", seasonal, "--horizon", 1, "--out", out)
    assert len(rows(out)) == 4 + 1


def test_predict_ten_years_weekly(tmp_path, trained, seasonal):
    out = tmp_path / "p520.csv"
    run("predict", "--checkpoint", trained, "--grid", seasonal, "--horizon", 520, "--out", out)
    assert load_grid(out).T == 520


def test_predict_deterministic(tmp_path, trained, seasonal):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        run("predict", "--checkpoint", trained, "--grid", seasonal, "--horizon", 30, "--out", p)
    assert digest(a) == digest(b)


def test_predict_sample_needs_seed(tmp_path, trained, seasonal):
    code = run("predict", "--checkpoint", trained, "--grid", seasonal, "--horizon", 3,
               "--mode", "sample", "--out", tmp_path / "s.csv")
    assert code == 2


def test_predict_insufficient_history(tmp_path, trained, seasonal):
    code = run("predict", "--checkpoint", trained, "--grid", seasonal, "--history-rows", 2,
               "--horizon", 3, "--out", tmp_path / "s.csv")
    assert code == 3
    assert not (tmp_path / "s.csv").exists()


def test_predict_location_mismatch(tmp_path, trained):
    other = tmp_path / "other.csv"
    save_grid(GridSeries(np.zeros((10, 2)), default_locations(2)), other)
    assert run("predict", "--checkpoint", trained, "--grid", other, "--horizon", 3,
               "--out", tmp_path / "s.csv") == 3


def test_predict_bad_checkpoint_version(tmp_path, trained, seasonal):
    data = bytearray(trained.read_bytes())
    data[4] = 7
    bad = tmp_path / "bad.ctck"
    bad.write_bytes(bytes(data))
    assert run("predict", "--checkpoint", bad, "--grid", seasonal, "--horizon", 3,
               "--out", tmp_path / "s.csv") == 5


def test_evaluate_self_is_zero(tmp_path, seasonal):
    out = tmp_path / "m.csv"
    assert run("evaluate", "--truth", seasonal, "--predictions", seasonal, "--out", out) == 0
    table = rows(out)
    assert table[0] == ["location", "mae", "rmse", "dtw"]
    assert len(table) - 1 == 3 + 1 and table[-1][0] == "ALL"
    assert all(float(v) == 0.0 for r in table[1:] for v in r[1:])


def test_evaluate_aligns_on_week_offset(tmp_path, trained, seasonal):
    pred = tmp_path / "pred.csv"
    run("predict", "--checkpoint", trained, "--grid", seasonal, "--history-rows", 120,
        "--horizon", 40, "--out", pred)
    out = tmp_path / "m.csv"
    assert run("evaluate", "--truth", seasonal, "--predictions", pred, "--out", out) == 0
    table = rows(out)
    truth = load_grid(seasonal).values[120:160]
    p = load_grid(pred).values
    assert float(table[1][1]) == pytest.approx(np.abs(truth[:, 0] - p[:, 0]).mean(), rel=1e-12)


def test_evaluate_location_mismatch_lists_difference(tmp_path, seasonal, capsys):
    other = tmp_path / "other.csv"
    g = load_grid(seasonal)
    save_grid(GridSeries(g.values[:, :2], default_locations(2)), other)
    assert run("evaluate", "--truth", seasonal, "--predictions", other, "--out", tmp_path / "m.csv") == 3
    assert "loc2" in capsys.readouterr().err


def test_telenet_outputs(tmp_path):
    grid = tmp_path / "g.csv"
    rng = np.random.default_rng(0)
    base = rng.standard_normal(256)
    values = np.column_stack([base, base, *rng.standard_normal((8, 256))])
    save_grid(GridSeries(values, default_locations(10)), grid)
    out_dir = tmp_path / "tn"
    assert run("telenet", "--grid", grid, "--scales", "3,5", "--region=-90,90,-180,180", "--out-dir", out_dir) == 0
    for s in (3, 5):
        sim = rows(out_dir / f"similarity_s{s}.csv")
        assert len(sim) == 11 and all(len(r) == 11 for r in sim)
        edges = rows(out_dir / f"edges_s{s}.csv")
        assert ["loc0", "loc1"] == edges[1][:2]
        degrees = rows(out_dir / f"degrees_s{s}.csv")
        assert degrees[0] == ["id", "lat", "lon", "degree", "scale"] and len(degrees) == 11
        assert (out_dir / f"connections_s{s}.csv").exists()
    assert (out_dir / "telenet.manifest.json").exists()


def test_telenet_constant_grid(tmp_path, capsys):
    grid = tmp_path / "c.csv"
    save_grid(GridSeries(np.ones((64, 3)), default_locations(3)), grid)
    assert run("telenet", "--grid", grid, "--scales", "3,4", "--out-dir", tmp_path / "tn") == 0
    for s in (3, 4):
        assert len(rows(tmp_path / "tn" / f"edges_s{s}.csv")) == 1
    assert "zero-variance" in capsys.readouterr().err


def test_telenet_scale_too_deep(tmp_path, capsys):
    grid = tmp_path / "c.csv"
    save_grid(GridSeries(np.random.default_rng(0).standard_normal((40, 2)), default_locations(2)), grid)
    assert run("telenet", "--grid", grid, "--scales", "8", "--out-dir", tmp_path / "tn") == 3
    assert "T=67" in capsys.readouterr().err
    assert not (tmp_path / "tn").exists()


def test_errgrowth_self_is_flat(tmp_path, seasonal):
    out = tmp_path / "eg.csv"
    assert run("errgrowth", "--truth", seasonal, "--predictions", seasonal, "--out", out) == 0
    slopes = rows(tmp_path / "eg.slopes.csv")
    assert slopes[0] == ["source", "log_error_slope", "mean_rmse"]
    assert float(slopes[1][1]) == 0.0


def test_errgrowth_doubling(tmp_path):
    truth, pred = tmp_path / "t.csv", tmp_path / "p.csv"
    save_grid(GridSeries(np.zeros((30, 1)), default_locations(1)), truth)
    save_grid(GridSeries(1e-6 * 2.0 ** np.arange(30)[:, None], default_locations(1)), pred)
    run("errgrowth", "--truth", truth, "--predictions", pred, "--out", tmp_path / "eg.csv")
    assert float(rows(tmp_path / "eg.slopes.csv")[1][1]) == pytest.approx(math.log(2), rel=1e-9)


def test_errgrowth_full_vs_dlc_only(tmp_path, trained, seasonal):
    out = tmp_path / "eg.csv"
    code = run("errgrowth", "--truth", seasonal, "--checkpoint", trained, "--history-rows", 120,
               "--horizon", 40, "--dlc-only", "--out", out)
    assert code == 0
    slopes = rows(tmp_path / "eg.slopes.csv")
    assert [r[0] for r in slopes[1:]] == ["model", "model_dlc_only"]
    assert rows(out)[0] == ["step", "model", "model_dlc_only"] and len(rows(out)) == 41


def test_errgrowth_needs_a_source(tmp_path, seasonal):
    assert run("errgrowth", "--truth", seasonal, "--out", tmp_path / "eg.csv") == 2
