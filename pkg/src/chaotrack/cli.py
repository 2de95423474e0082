"""Command-line pipeline: synth | train | predict | evaluate | telenet | errgrowth.

Every subcommand writes a ``<output>.manifest.json`` with the resolved
flags, seeds and SHA-256 digests of inputs and outputs. Outputs are staged
in memory and only written once the whole computation succeeded.

Exit codes: 0 ok, 2 usage, 3 data error, 4 numeric failure, 5 format version.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    Checkpoint,
    GridSeries,
    fit_normalizer,
    gen_logistic,
    gen_lorenz,
    gen_seasonal_chaotic,
    load_checkpoint,
    load_grid,
)
from .data.checkpoint import checkpoint_bytes
from .data.grid import write_grid_binary, write_grid_csv
from .errors import ChaoTrackError, DataError, ShapeError
from .forecast import error_growth, rollout
from .metrics import EvalSlice, dtw_grid, mae, rmse
from .model import ModelConfig
from .telenet import (
    DEFAULT_THRESHOLD,
    ScaleError,
    ZeroVarianceWarning,
    build_network,
    connection_map,
    degree_heatmap,
    modwt,
    required_length,
    scale_similarity,
    scale_to_level,
)
from .training import TrainConfig, raw_equivalent_kl_weight, train


class UsageError(ChaoTrackError):
    exit_code = 2


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path) -> str:
    return sha256_bytes(Path(path).read_bytes())


def _int_list(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _csv_text(header: list[str], rows: list[list]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return out.getvalue()


def _sibling(path: Path, suffix: str) -> Path:
    """``out/pred.csv`` -> ``out/pred<suffix>`` (any extension is replaced)."""
    path = Path(path)
    return path.with_name(path.stem + suffix)


def _grid_bytes(series: GridSeries, path: Path) -> bytes:
    if path.suffix.lower() in (".ctgr", ".bin"):
        return write_grid_binary(series)
    return write_grid_csv(series).encode("utf-8")


class Outputs:
    """Collects output files and writes them (plus the manifest) atomically."""

    def __init__(self, manifest_path: Path):
        self.manifest_path = Path(manifest_path)
        self.files: dict[Path, bytes] = {}

    def add(self, path: str | Path, data: bytes | str) -> None:
        self.files[Path(path)] = data.encode("utf-8") if isinstance(data, str) else data

    def commit(self, args: argparse.Namespace, seeds: dict, inputs: list[str | Path]) -> None:
        manifest = {
            "subcommand": args.command,
            "config": _resolved_config(args),
            "seeds": seeds,
            "inputs": {Path(p).name: sha256_file(p) for p in inputs},
            "outputs": {p.name: sha256_bytes(d) for p, d in self.files.items()},
            "tool_version": __version__,
        }
        self.add(self.manifest_path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        for path, data in self.files.items():
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_name(path.name + ".tmp")
            tmp.write_bytes(data)
            os.replace(tmp, path)


def _resolved_config(args: argparse.Namespace) -> dict:
    out = {}
    for key, value in sorted(vars(args).items()):
        if key in ("func",):
            continue
        if isinstance(value, Path):
            value = value.name  # keep manifests independent of the working directory
        elif isinstance(value, list) and value and isinstance(value[0], Path):
            value = [v.name for v in value]
        elif isinstance(value, tuple):
            value = list(value)
        out[key] = value
    return out


# --------------------------------------------------------------------------- synth


def cmd_synth(args) -> None:
    if args.steps < 1:
        raise UsageError("--steps must be >= 1")
    try:
        if args.system == "logistic":
            missing = [f for f in ("r", "x0") if getattr(args, f) is None]
            if missing:
                raise UsageError(f"--system logistic requires {', '.join('--' + m for m in missing)}")
            series = gen_logistic(args.r, args.x0, args.steps)
        elif args.system == "lorenz":
            series = gen_lorenz(
                args.sigma, args.rho, args.beta, args.initial, args.dt, args.steps, args.component
            )
        else:
            series = gen_seasonal_chaotic(
                args.amplitude, args.period, args.chaos_weight, args.seed, args.steps, args.n_locations
            )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Outputs(_sibling(args.out, ".manifest.json"))
    out.add(args.out, _grid_bytes(series, args.out))
    out.commit(args, {"seed": args.seed}, [])


# --------------------------------------------------------------------------- train


def _kl_weight(text: str, std: np.ndarray) -> float:
    if text == "raw":
        return raw_equivalent_kl_weight(std)
    try:
        value = float(text)
    except ValueError:
        raise UsageError(f"--kl-weight must be a number or 'raw', got {text!r}") from None
    return value


def cmd_train(args) -> None:
    grid = load_grid(args.grid)
    if not 0.0 < args.train_fraction <= 1.0:
        raise UsageError("--train-fraction must lie in (0, 1]")
    n_train = int(np.floor(args.train_fraction * grid.T))
    if n_train < args.window + 1:
        raise ShapeError(f"training split has {n_train} rows; window {args.window} needs {args.window + 1}")
    train_part = grid.slice_rows(0, n_train)
    norm = fit_normalizer(train_part)
    try:
        mc = ModelConfig(
            n_locations=grid.N,
            window=args.window,
            dlc_hidden=args.dlc_hidden,
            itc_encoder_hidden=args.encoder_hidden,
            latent_dim=args.latent_dim,
            itc_decoder_hidden=args.decoder_hidden,
            seed=args.seed if args.init_seed is None else args.init_seed,
        )
        tc = TrainConfig(
            epochs=args.epochs,
            batch_size=args.batch_size,
            learning_rate=args.lr,
            kl_weight=_kl_weight(args.kl_weight, norm.std),
            seed=args.seed,
            shuffle=not args.no_shuffle,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    params, history = train(norm.apply(train_part), mc, tc)
    tc_json = json.dumps(dataclasses.asdict(tc), sort_keys=True)
    cp = Checkpoint(
        mc,
        params,
        norm,
        sha256_bytes(tc_json.encode()),
        meta={
            "train_rows": n_train,
            "train_config": dataclasses.asdict(tc),
            "location_ids": grid.ids,
        },
    )
    loss_csv = args.loss_csv or _sibling(args.checkpoint, ".loss.csv")
    rows = [[e + 1, h.recon, h.delta, h.kl, h.total] for e, h in enumerate(history)]
    out = Outputs(_sibling(args.checkpoint, ".manifest.json"))
    out.add(args.checkpoint, checkpoint_bytes(cp))
    out.add(loss_csv, _csv_text(["epoch", "recon", "delta", "kl", "total"], rows))
    out.commit(args, {"init_seed": mc.seed, "train_seed": tc.seed}, [args.grid])


# --------------------------------------------------------------------------- predict


def _forecast(cp: Checkpoint, grid: GridSeries, history_rows: int | None, horizon: int,
              mode: str = "mean", seed: int | None = None, ablate_itc: bool = False):
    if grid.N != cp.model_config.n_locations:
        raise ShapeError(
            f"grid has {grid.N} locations, checkpoint expects {cp.model_config.n_locations}"
        )
    trained_ids = cp.meta.get("location_ids")
    if trained_ids is not None and trained_ids != grid.ids:
        raise ShapeError(f"grid locations {grid.ids} differ from the trained ones {trained_ids}")
    rows = grid.T if history_rows is None else history_rows
    if not cp.model_config.window <= rows <= grid.T:
        raise ShapeError(
            f"history of {rows} rows is invalid: need between {cp.model_config.window} and {grid.T}"
        )
    history = cp.normalizer.apply_values(grid.values[:rows])
    result = rollout(cp.params, history, horizon, mode, seed, ablate_itc=ablate_itc)
    offset = grid.week_offset + rows
    preds = grid.with_values(cp.normalizer.invert_values(result.predictions), offset)
    x_hat = grid.with_values(cp.normalizer.invert_values(result.x_hat_trace), offset)
    delta = grid.with_values(result.delta_trace * cp.normalizer.std, offset)
    return preds, x_hat, delta


def cmd_predict(args) -> None:
    if args.horizon < 1:
        raise UsageError("--horizon must be >= 1")
    if args.mode == "sample" and args.seed is None:
        raise UsageError("--mode sample requires --seed")
    cp = load_checkpoint(args.checkpoint)
    grid = load_grid(args.grid)
    preds, x_hat, delta = _forecast(
        cp, grid, args.history_rows, args.horizon, args.mode, args.seed, args.dlc_only
    )
    out = Outputs(_sibling(args.out, ".manifest.json"))
    out.add(args.out, write_grid_csv(preds))
    out.add(_sibling(args.out, ".x_hat.csv"), write_grid_csv(x_hat))
    out.add(_sibling(args.out, ".delta.csv"), write_grid_csv(delta))
    out.commit(args, {"seed": args.seed}, [args.checkpoint, args.grid])


# --------------------------------------------------------------------------- evaluate


def _align(truth: GridSeries, pred: GridSeries, truth_start: int | None) -> tuple[np.ndarray, np.ndarray]:
    """Rows of ``truth`` matching ``pred`` (same location order as truth)."""
    t_ids, p_ids = set(truth.ids), set(pred.ids)
    if t_ids != p_ids:
        raise DataError(
            "location sets differ: only in truth "
            f"{sorted(t_ids - p_ids)}, only in predictions {sorted(p_ids - t_ids)}"
        )
    order = [pred.ids.index(i) for i in truth.ids]
    p = pred.values[:, order]
    start = pred.week_offset - truth.week_offset if truth_start is None else truth_start
    if start < 0 or start + pred.T > truth.T:
        raise ShapeError(
            f"predictions cover weeks {start}..{start + pred.T - 1} of the truth grid, "
            f"which has {truth.T} rows"
        )
    return truth.values[start:start + pred.T], p


def cmd_evaluate(args) -> None:
    truth = load_grid(args.truth)
    pred = load_grid(args.predictions)
    t, p = _align(truth, pred, args.truth_start)
    rows = []
    dtws = dtw_grid(t, p)
    for i, loc_id in enumerate(truth.ids):
        s = EvalSlice(t[:, i], p[:, i])
        rows.append([loc_id, mae(s), rmse(s), float(dtws[i])])
    whole = EvalSlice.from_time_major(t, p)
    rows.append(["ALL", mae(whole), rmse(whole), float(dtws.mean())])
    out = Outputs(_sibling(args.out, ".manifest.json"))
    out.add(args.out, _csv_text(["location", "mae", "rmse", "dtw"], rows))
    out.commit(args, {}, [args.truth, args.predictions])


# --------------------------------------------------------------------------- telenet


def cmd_telenet(args) -> None:
    grid = load_grid(args.grid)
    if not args.scales:
        raise UsageError("--scales must list at least one scale")
    if min(args.scales) < 3:
        raise UsageError("scales start at 3 (2-4 weeks)")
    if not 0.0 < args.threshold <= 1.0:
        raise UsageError("--threshold must lie in (0, 1]")
    deepest = max(args.scales)
    need = required_length(deepest)
    if grid.T < need:
        raise ScaleError(f"scale {deepest} requires at least T={need} weeks; grid has T={grid.T}")
    decomp = modwt(grid, scale_to_level(deepest))
    out_dir = Path(args.out_dir)
    out = Outputs(out_dir / "telenet.manifest.json")
    flagged = {}
    for s in args.scales:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ZeroVarianceWarning)
            sim = scale_similarity(decomp, s)
        if any(issubclass(w.category, ZeroVarianceWarning) for w in caught):
            flagged[s] = [str(w.message) for w in caught]
        net = build_network(sim, args.threshold, scale=s)
        out.add(out_dir / f"similarity_s{s}.csv",
                _csv_text(["id", *grid.ids], [[i, *map(float, row)] for i, row in zip(grid.ids, sim)]))
        edges = [[grid.ids[i], grid.ids[j], s, float(sim[i, j])] for i, j in net.edges()]
        out.add(out_dir / f"edges_s{s}.csv", _csv_text(["src_id", "dst_id", "scale", "similarity"], edges))
        heat = [[r["id"], r["lat"], r["lon"], r["degree"], s] for r in degree_heatmap(net, grid.locations)]
        out.add(out_dir / f"degrees_s{s}.csv", _csv_text(["id", "lat", "lon", "degree", "scale"], heat))
        if args.region is not None:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                conns = connection_map(net, grid.locations, args.region)
            cols = ["src_id", "dst_id", "src_lat", "src_lon", "dst_lat", "dst_lon", "dst_region", "scale", "similarity"]
            out.add(out_dir / f"connections_s{s}.csv", _csv_text(cols, [[c[k] for k in cols] for c in conns]))
    for s, msgs in flagged.items():
        for m in msgs:
            print(f"warning: {m}", file=sys.stderr)
    out.commit(args, {}, [args.grid])


# --------------------------------------------------------------------------- errgrowth


def cmd_errgrowth(args) -> None:
    if not args.predictions and not args.checkpoint:
        raise UsageError("give at least one --predictions file or --checkpoint")
    truth = load_grid(args.truth)
    sources: list[tuple[str, np.ndarray, np.ndarray]] = []
    inputs: list[Path] = [args.truth]
    for path in args.predictions or []:
        pred = load_grid(path)
        t, p = _align(truth, pred, args.truth_start)
        sources.append((Path(path).stem, p, t))
        inputs.append(path)
    for path in args.checkpoint or []:
        if args.history_rows is None or args.horizon is None:
            raise UsageError("--checkpoint needs --history-rows and --horizon")
        cp = load_checkpoint(path)
        hist = truth.slice_rows(0, args.history_rows)
        t = truth.values[args.history_rows:args.history_rows + args.horizon]
        if t.shape[0] < args.horizon:
            raise ShapeError(f"truth grid has only {t.shape[0]} rows after the history")
        variants = [("", False)] + ([("dlc_only", True)] if args.dlc_only else [])
        for suffix, ablate in variants:
            preds, _, _ = _forecast(cp, hist, None, args.horizon, ablate_itc=ablate)
            label = Path(path).stem + (f"_{suffix}" if suffix else "")
            sources.append((label, preds.values, t))
        inputs.append(path)
    H = {p.shape[0] for _, p, _ in sources}
    if len(H) != 1:
        raise ShapeError(f"prediction sources have different horizons {sorted(H)}")
    growth = [(label, error_growth(p, t)) for label, p, t in sources]
    steps = [[k + 1, *(float(g.rmse[k]) for _, g in growth)] for k in range(H.pop())]
    slopes = [[label, g.slope, float(g.rmse.mean())] for label, g in growth]
    out = Outputs(_sibling(args.out, ".manifest.json"))
    out.add(args.out, _csv_text(["step", *(label for label, _ in growth)], steps))
    slopes_path = args.slopes_out or _sibling(args.out, ".slopes.csv")
    out.add(slopes_path, _csv_text(["source", "log_error_slope", "mean_rmse"], slopes))
    out.commit(args, {}, inputs)


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chaotrack", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic grid")
    p.add_argument("--system", choices=["logistic", "lorenz", "seasonal"], required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--r", type=float)
    p.add_argument("--x0", type=float)
    p.add_argument("--sigma", type=float, default=10.0)
    p.add_argument("--rho", type=float, default=28.0)
    p.add_argument("--beta", type=float, default=8.0 / 3.0)
    p.add_argument("--initial", type=_float_list, default=(1.0, 1.0, 1.0))
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--component", choices=["x", "y", "z", "all"], default="x")
    p.add_argument("--amplitude", type=float, default=10.0)
    p.add_argument("--period", type=float, default=52.0)
    p.add_argument("--chaos-weight", type=float, default=1.0)
    p.add_argument("--n-locations", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--grid", type=Path, required=True)
    p.add_argument("--window", type=int, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--loss-csv", type=Path)
    p.add_argument("--train-fraction", type=float, default=1.0)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--kl-weight", default="raw",
                   help="number, or 'raw' for 1/mean(std^2) (unit weight in data units)")
    p.add_argument("--dlc-hidden", type=_int_list, default=(64, 64))
    p.add_argument("--encoder-hidden", type=_int_list, default=(64,))
    p.add_argument("--latent-dim", type=int, default=16)
    p.add_argument("--decoder-hidden", type=_int_list, default=(64,))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init-seed", type=int, help="weight-init seed (defaults to --seed)")
    p.add_argument("--no-shuffle", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="closed-loop forecast from a checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--grid", type=Path, required=True, help="grid holding the history")
    p.add_argument("--history-rows", type=int, help="use the first K rows as history (default: all)")
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--mode", choices=["mean", "sample"], default="mean")
    p.add_argument("--seed", type=int)
    p.add_argument("--dlc-only", action="store_true", help="zero the ITC feedback (ablation)")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="MAE/RMSE/DTW of predictions against a truth grid")
    p.add_argument("--truth", type=Path, required=True)
    p.add_argument("--predictions", type=Path, required=True)
    p.add_argument("--truth-start", type=int, help="truth row of the first prediction (default: from week index)")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("telenet", help="multi-scale teleconnection networks")
    p.add_argument("--grid", type=Path, required=True)
    p.add_argument("--scales", type=_int_list, required=True)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--region", type=_float_list, help="lat_min,lat_max,lon_min,lon_max for connection maps")
    p.add_argument("--out-dir", type=Path, required=True)
    p.set_defaults(func=cmd_telenet)

    p = sub.add_parser("errgrowth", help="per-step RMSE and log-error slope")
    p.add_argument("--truth", type=Path, required=True)
    p.add_argument("--predictions", type=Path, action="append")
    p.add_argument("--truth-start", type=int)
    p.add_argument("--checkpoint", type=Path, action="append")
    p.add_argument("--history-rows", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--dlc-only", action="store_true", help="also report the DLC-only ablation per checkpoint")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--slopes-out", type=Path)
    p.set_defaults(func=cmd_errgrowth)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "region", None) is not None and len(args.region) != 4:
        parser.error("--region needs lat_min,lat_max,lon_min,lon_max")
    try:
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ChaoTrackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
