"""``icn`` command line: synth, ingest, dilate, train, evaluate, sweep, ablate, predict, plot.

Exit codes: 0 success, 2 usage/validation, 3 data error, 4 training fault.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .dataset import (
    FEATURE_GROUPS,
    AreaMap,
    Bundle,
    Normalizer,
    SplitSpec,
    check_window,
    filter_active_areas,
    generate_synthetic,
    ingest_trips,
    load_bundle,
    load_column_map,
    make_windows,
    read_features,
    read_weather_csv,
    save_bundle,
)
from .dilation import SpatialMatchTable, build_match_table
from .errors import ConfigError, DataError, IcnError, TrainingFault
from .evaluation import (
    ABLATABLE,
    Experiment,
    ablate,
    evaluate_ha,
    evaluate_icn,
    evaluate_persistence,
    prediction_rows,
    sweep,
    write_ablation_csv,
    write_sweep_csv,
)
from .network import IcnConfig
from .plotting import write_area_curve
from .training import TrainHyper, predict_raw, train

log = logging.getLogger("icn")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRAIN = 0, 2, 3, 4


@dataclass
class RunConfig:
    data: str
    model: dict
    train: dict
    split: list[float] = field(default_factory=lambda: [0.6, 0.2, 0.2])
    standardize_features: bool = True
    ablated: list[str] = field(default_factory=list)

    def canonical_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    def run_id(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:12]


# ---------------------------------------------------------------------------
# argument helpers
# ---------------------------------------------------------------------------


def _add_model_args(p: argparse.ArgumentParser, with_window=True):
    g = p.add_argument_group("model")
    if with_window:
        g.add_argument("--window", type=int, default=48, help="look-back window T (hours)")
        g.add_argument("--horizon", type=int, default=1, help="forecast horizon M (hours)")
    g.add_argument("--levels", type=int, default=2, help="IC tree levels L")
    g.add_argument("--k1", type=int, default=5)
    g.add_argument("--k2", type=int, default=3)
    g.add_argument("--hidden-scale", type=float, default=0.5)
    g.add_argument("--dropout", type=float, default=0.5)
    for c in FEATURE_GROUPS:
        g.add_argument(f"--no-{c}", action="store_true", help=f"drop the {c} dilation channel")
    g.add_argument("--no-weather", action="store_true", help="drop the weather branch")
    g.add_argument("--raw-features", action="store_true", help="correlate unstandardized features")
    t = p.add_argument_group("training")
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--batch", type=int, default=64)
    t.add_argument("--epochs", type=int, default=150)
    t.add_argument("--patience", type=int, default=15)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--split", type=float, nargs=3, default=[0.6, 0.2, 0.2], metavar=("TRAIN", "VAL", "TEST"))


def _hyper(a) -> TrainHyper:
    return TrainHyper(epochs=a.epochs, patience=a.patience, batch_size=a.batch, lr=a.lr, seed=a.seed)


def _ablated(a) -> list[str]:
    out = [c for c in FEATURE_GROUPS if getattr(a, f"no_{c}")]
    if a.no_weather:
        out.append("weather")
    return out


def _model_config(a, bundle: Bundle, window=None, horizon=None) -> IcnConfig:
    channels = tuple(c for c in FEATURE_GROUPS if not getattr(a, f"no_{c}"))
    if channels and bundle.features is None:
        raise ConfigError("the bundle has no feature tables; pass --no-demographic --no-functionality --no-transport")
    n_weather = 0 if a.no_weather else bundle.weather.n_features
    return IcnConfig(
        n_areas=bundle.demand.n_areas,
        window=window if window is not None else a.window,
        horizon=horizon if horizon is not None else a.horizon,
        n_weather=n_weather,
        channels=channels,
        k1=a.k1,
        k2=a.k2,
        hidden_scale=a.hidden_scale,
        levels=a.levels,
        dropout=a.dropout,
    )


def _need(path, what: str, kind: str = "file"):
    """Missing inputs are usage errors, raised before any work starts."""
    if path is None:
        return
    ok = Path(path).is_dir() if kind == "dir" else Path(path).exists()
    if not ok:
        raise ConfigError(f"{what} {path} does not exist")


def _load_data(path) -> Bundle:
    if not Path(path).is_dir():
        raise ConfigError(f"dataset directory {path} does not exist")
    return load_bundle(path)


def _experiment(a, bundle: Bundle) -> Experiment:
    return Experiment(bundle.demand, bundle.features, bundle.weather, SplitSpec(*a.split), not a.raw_features)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_synth(a) -> int:
    d, f, w = generate_synthetic(
        a.areas, a.hours, seed=a.seed, correlation_plan=a.groups, planted_group=a.planted,
        noise_scale=a.noise, trend_scale=a.trend, weather_scale=a.weather_effect,
    )
    save_bundle(a.out, d, f, w, {"synthetic": {k: getattr(a, k) for k in
                                               ("areas", "hours", "groups", "seed", "planted", "noise", "trend",
                                                "weather_effect")}})
    print(a.out)
    return EXIT_OK


def cmd_ingest(a) -> int:
    for flag in ("trips", "areas", "columns", "weather", *(f"features_{g}" for g in FEATURE_GROUPS)):
        _need(getattr(a, flag), "--" + flag.replace("_", "-"))
    cols = load_column_map(a.columns)
    area_map = AreaMap(a.areas, cols["area_property"]) if a.areas else None
    span = None
    if a.start or a.end:
        if not (a.start and a.end):
            raise ConfigError("--start and --end must be given together")
        span = (datetime.fromisoformat(a.start), datetime.fromisoformat(a.end))
    demand, report = ingest_trips(a.trips, area_map, span, cols)
    demand, kept = filter_active_areas(demand, a.threshold)
    features = None
    paths = {g: getattr(a, f"features_{g}") for g in FEATURE_GROUPS}
    if any(paths.values()):
        if not all(paths.values()):
            raise ConfigError("give all three feature tables or none")
        features = read_features(paths, demand.area_ids)
    weather = read_weather_csv(a.weather, demand.t0, demand.n_hours) if a.weather else None
    meta = {"ingest": {**report.to_dict(), "threshold": a.threshold, "areas_kept": len(kept)}}
    save_bundle(a.out, demand, features, weather, meta)
    print(json.dumps(meta["ingest"], sort_keys=True))
    return EXIT_OK


def cmd_dilate(a) -> int:
    bundle = _load_data(a.data)
    if bundle.features is None:
        raise DataError(f"{a.data} has no feature tables")
    table = build_match_table(bundle.features, standardize=not a.raw_features)
    table.to_csv(a.out, bundle.demand.area_ids)
    print(a.out)
    return EXIT_OK


def cmd_train(a) -> int:
    check_window(a.window, a.levels)  # fail before touching any data
    SplitSpec(*a.split)
    bundle = _load_data(a.data)
    cfg = _model_config(a, bundle)
    hyper = _hyper(a)
    exp = _experiment(a, bundle)
    run = RunConfig(str(a.data), cfg.to_dict(), asdict(hyper), list(a.split), not a.raw_features, _ablated(a))
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "run_config.json").write_text(run.canonical_json() + "\n")

    sets = exp.windows(cfg)
    table = exp.match_table()
    gather = exp.gather(cfg)
    try:
        params, report = train(sets, cfg, gather, hyper)
    except TrainingFault as exc:
        if exc.report is not None:
            _write_json(out / "train_report.json", exc.report.to_dict())
        raise
    meta = {
        "run_id": run.run_id(),
        "area_ids": bundle.demand.area_ids,
        "weather_features": bundle.weather.names if cfg.use_weather else [],
        "normalizer": sets.normalizer.to_dict(),
        "weather_normalizer": sets.weather_normalizer.to_dict(),
        "match_table": table.to_dict() if table is not None else None,
        "split": list(a.split),
        "train_hours": sets.train_hours,
        "training": asdict(hyper),
    }
    save_checkpoint(out / "checkpoint", params, meta)
    _write_json(out / "train_report.json", {**report.to_dict(), "run_id": run.run_id()})
    with open(out / "training_curve.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_mae", "val_rmse"])
        w.writerows(report.curve_rows())
    print(json.dumps({"run_id": run.run_id(), "best_epoch": report.best_epoch,
                      "best_val_mae": report.best_val_mae, "out": str(out)}))
    return EXIT_OK


def _restore(a):
    """Checkpoint + bundle, checked for consistency; returns what prediction needs."""
    _need(a.checkpoint, "checkpoint directory", "dir")
    _need(a.data, "dataset directory", "dir")
    params, meta = load_checkpoint(a.checkpoint)
    cfg = params.config
    bundle = _load_data(a.data)
    problems = []
    if bundle.demand.area_ids != meta["area_ids"]:
        if len(bundle.demand.area_ids) != len(meta["area_ids"]):
            problems.append(f"N: checkpoint {len(meta['area_ids'])} vs bundle {bundle.demand.n_areas}")
        else:
            diff = [i for i, (x, y) in enumerate(zip(meta["area_ids"], bundle.demand.area_ids)) if x != y]
            problems.append(f"area order differs at {len(diff)} positions (first: {diff[:5]})")
    if cfg.use_weather and bundle.weather.names != meta["weather_features"]:
        problems.append(f"N_w/weather: checkpoint {meta['weather_features']} vs bundle {bundle.weather.names}")
    if problems:
        raise ConfigError("checkpoint/bundle mismatch: " + "; ".join(problems))
    table = SpatialMatchTable.from_dict(meta["match_table"]) if meta.get("match_table") else None
    gather = table.gather_index(cfg.channels) if table is not None else np.arange(cfg.n_areas)[None, :]
    sets = make_windows(
        bundle.demand, bundle.weather if cfg.use_weather else None, cfg.window, cfg.horizon,
        SplitSpec(*meta["split"]), cfg.levels, Normalizer.from_dict(meta["normalizer"]),
        Normalizer.from_dict(meta["weather_normalizer"]) if cfg.use_weather else None,
    )
    return params, bundle, sets, gather


def cmd_predict(a) -> int:
    params, bundle, sets, gather = _restore(a)
    samples = getattr(sets, a.split)
    pred = predict_raw(params, samples, gather, sets.normalizer)
    out = Path(a.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["area_id", "timestamp", "horizon_step", "prediction"])
        for _, area, ts, step, p, _ in prediction_rows(a.split, bundle.demand, samples, pred):
            w.writerow([area, ts, step, repr(float(p))])
    print(out)
    return EXIT_OK


def cmd_evaluate(a) -> int:
    params, bundle, sets, gather = _restore(a)
    out = Path(a.out)
    run = evaluate_icn(params, sets, bundle.demand, gather)
    run.save(out, "eval_run")
    summary = {"ICN": run.metrics["test"].to_dict()}
    for name in a.baseline:
        base = (evaluate_ha if name == "ha" else evaluate_persistence)(sets, bundle.demand)
        base.save(out, f"eval_{name}")
        summary[base.model] = base.metrics["test"].to_dict()
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_sweep(a) -> int:
    bundle = _load_data(a.data)
    exp = _experiment(a, bundle)
    base = _model_config(a, bundle, window=2**a.levels, horizon=1)
    cells = sweep(exp, base, a.windows, a.horizons, _hyper(a))
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(cells, out / "sweep.csv", a.dataset_name)
    for c in cells:
        if c.run is not None:
            c.run.save(out / f"T{c.window}_M{c.horizon}", "eval_run")
    print(out / "sweep.csv")
    return EXIT_OK


def cmd_ablate(a) -> int:
    bundle = _load_data(a.data)
    exp = _experiment(a, bundle)
    hyper = _hyper(a)
    rows = []
    for M in a.horizons:
        base = _model_config(a, bundle, window=a.window, horizon=M)
        full, ablated = None, []
        for comp in a.components:
            full, abl = ablate(exp, base, comp, hyper, full)
            ablated.append((abl.model, M, abl))
        rows += [("ICN", M, full), *ablated]
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    write_ablation_csv(rows, out / "ablation.csv", a.dataset_name)
    print(out / "ablation.csv")
    return EXIT_OK


def cmd_plot(a) -> int:
    _need(a.predictions, "prediction table")
    series: dict[str, tuple[list, list, list]] = {}
    with open(a.predictions, newline="") as fh:
        for r in csv.DictReader(fh):
            if r.get("split", a.split) != a.split or int(r["horizon_step"]) != a.step:
                continue
            s = series.setdefault(r["area_id"], ([], [], []))
            s[0].append(r["timestamp"])
            s[1].append(float(r["truth"]))
            s[2].append(float(r["prediction"]))
    unknown = [x for x in a.areas if x not in series]
    if unknown:
        raise ConfigError(f"unknown area id(s): {unknown}")
    for area in a.areas:
        ts, truth, pred = series[area]
        if a.last:
            ts, truth, pred = ts[-a.last:], truth[-a.last:], pred[-a.last:]
        svg, table = write_area_curve(a.out, area, ts, truth, pred)
        print(svg)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="icn", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic dataset bundle")
    p.add_argument("--areas", type=int, default=16)
    p.add_argument("--hours", type=int, default=24 * 7 * 8)
    p.add_argument("--groups", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--planted", choices=FEATURE_GROUPS, default="demographic")
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--trend", type=float, default=0.5)
    p.add_argument("--weather-effect", type=float, default=0.3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="build a dataset bundle from trip/feature/weather CSVs")
    p.add_argument("--trips", required=True)
    p.add_argument("--areas", help="GeoJSON polygons; omit when trips carry an area id column")
    p.add_argument("--columns", help="column-mapping JSON")
    p.add_argument("--start", help="ISO start of the span (inclusive)")
    p.add_argument("--end", help="ISO end of the span (exclusive)")
    p.add_argument("--threshold", type=float, default=1.0, help="keep areas with mean hourly demand above this")
    for g in FEATURE_GROUPS:
        p.add_argument(f"--features-{g}")
    p.add_argument("--weather", help="daily weather CSV (date + one column per feature)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("dilate", help="write the per-area match table")
    p.add_argument("--data", required=True)
    p.add_argument("--raw-features", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dilate)

    p = sub.add_parser("train", help="train one model")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_model_args(p)
    p.set_defaults(func=cmd_train)

    for name, func, helptext in (("evaluate", cmd_evaluate, "score a checkpoint"),
                                 ("predict", cmd_predict, "write raw-scale predictions")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--data", required=True)
        p.add_argument("--out", required=True)
        if name == "evaluate":
            p.add_argument("--baseline", nargs="*", choices=("ha", "persistence"), default=["ha"])
        else:
            p.add_argument("--split", choices=("train", "val", "test"), default="test")
        p.set_defaults(func=func)

    p = sub.add_parser("sweep", help="input-window x horizon grid")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--windows", type=int, nargs="+", default=[24, 48, 96, 192])
    p.add_argument("--horizons", type=int, nargs="+", default=[1, 6, 12])
    p.add_argument("--dataset-name", default="dataset")
    _add_model_args(p, with_window=False)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ablate", help="full model vs. models with one component removed")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--components", nargs="+", choices=ABLATABLE, default=list(ABLATABLE))
    p.add_argument("--window", type=int, default=48)
    p.add_argument("--horizons", type=int, nargs="+", default=[1])
    p.add_argument("--dataset-name", default="dataset")
    _add_model_args(p, with_window=False)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("plot", help="prediction-vs-truth curves for chosen areas")
    p.add_argument("--predictions", required=True, help="eval_run_predictions.csv from `icn evaluate`")
    p.add_argument("--areas", nargs="+", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--step", type=int, default=1, help="horizon step to plot")
    p.add_argument("--last", type=int, default=0, help="only the last N hours")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"icn {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingFault as exc:
        print(f"icn {args.command}: training fault: {exc}", file=sys.stderr)
        return EXIT_TRAIN
    except IcnError as exc:
        print(f"icn {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"icn {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
