"""Error metrics, reference forecasters, window/horizon sweeps and ablations."""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import HOUR, DemandMatrix, FeatureBundle, SampleSet, SplitSpec, WeatherSeries, WindowSets, make_windows
from .dilation import SpatialMatchTable, build_match_table
from .errors import ConfigError, DimensionError, EmptyDatasetError, IcnError
from .network import IcnConfig, IcnParams
from .training import TrainHyper, TrainReport, predict_raw, train

log = logging.getLogger(__name__)

ABLATABLE = ("demographic", "functionality", "transport", "weather")


@dataclass
class MetricSet:
    mae: float
    rmse: float
    mape10: float | None  # None when no ground truth reaches the threshold
    n_total: int
    n_mape: int

    def to_dict(self) -> dict:
        return asdict(self)


def metrics(pred, truth, mape_threshold: float = 10.0) -> MetricSet:
    """MAE and RMSE over every pair; MAPE over pairs with ``truth >= mape_threshold``."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.shape != truth.shape:
        raise DimensionError(f"metrics: {pred.size} predictions vs {truth.size} targets")
    if pred.size == 0:
        raise EmptyDatasetError("metrics of an empty sample set")
    err = pred - truth
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err * err)))
    sel = truth >= mape_threshold
    n_mape = int(sel.sum())
    mape = float(np.mean(np.abs(err[sel]) / truth[sel])) if n_mape else None
    return MetricSet(mae, rmse, mape, int(pred.size), n_mape)


# ---------------------------------------------------------------------------
# reference forecasters
# ---------------------------------------------------------------------------


def historical_average(history: DemandMatrix, query_hours: Sequence[int]) -> np.ndarray:
    """Mean of same hour-of-week observations in ``history`` for each query.

    ``query_hours`` are offsets from ``history.t0`` (they may lie past the end
    of the history).  Slots never observed fall back to the area's overall mean.
    """
    if history.n_hours == 0:
        raise EmptyDatasetError("historical average needs at least one observed hour")
    slots = history.hour_of_week()
    sums = np.zeros((history.n_areas, 168))
    counts = np.zeros(168)
    np.add.at(sums.T, slots, history.values.T)
    np.add.at(counts, slots, 1)
    overall = history.values.mean(axis=1, keepdims=True)
    table = np.where(counts > 0, sums / np.maximum(counts, 1), overall)
    start = history.t0.weekday() * 24 + history.t0.hour
    q = (start + np.asarray(query_hours, dtype=np.int64)) % 168
    return table[:, q]


def ha_for_samples(demand: DemandMatrix, train_hours: int, samples: SampleSet, horizon: int) -> np.ndarray:
    """HA predictions for every target hour of ``samples``: (S, N, M)."""
    history = DemandMatrix(demand.area_ids, demand.t0, demand.values[:, :train_hours])
    hours = samples.t_index[:, None] + 1 + np.arange(horizon)[None, :]
    pred = historical_average(history, hours.ravel())  # (N, S*M)
    return pred.reshape(demand.n_areas, len(samples), horizon).transpose(1, 0, 2)


def persistence(last_values, horizon: int) -> np.ndarray:
    """Repeat the last observed value for every horizon step.

    ``last_values`` is either (N,) or a window (..., N, T) whose last column is used.
    """
    v = np.asarray(last_values, dtype=np.float64)
    if v.size == 0:
        raise EmptyDatasetError("persistence needs a non-empty window")
    if v.ndim >= 2:
        v = v[..., -1]
    return np.repeat(v[..., None], horizon, axis=-1)


# ---------------------------------------------------------------------------
# evaluation runs
# ---------------------------------------------------------------------------


@dataclass
class EvalRun:
    model: str
    config_hash: str
    window: int
    horizon: int
    metrics: dict[str, MetricSet]
    predictions: list[tuple] = field(default_factory=list, repr=False)
    extra: dict = field(default_factory=dict)

    PRED_HEADER = ("split", "area_id", "timestamp", "horizon_step", "prediction", "truth")

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "config_hash": self.config_hash,
            "window": self.window,
            "horizon": self.horizon,
            "metrics": {k: v.to_dict() for k, v in self.metrics.items()},
            "n_predictions": len(self.predictions),
            **self.extra,
        }

    def save(self, out_dir: str | Path, stem: str = "eval_run") -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        js = out / f"{stem}.json"
        js.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        table = out / f"{stem}_predictions.csv"
        with open(table, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.PRED_HEADER)
            for r in self.predictions:
                w.writerow([*r[:4], repr(float(r[4])), repr(float(r[5]))])
        return js, table


def prediction_rows(split: str, demand: DemandMatrix, samples: SampleSet, pred: np.ndarray):
    """One row per (sample, area, horizon step) with the target timestamp."""
    rows = []
    for s, t_idx in enumerate(samples.t_index):
        for step in range(pred.shape[2]):
            ts = (demand.t0 + (int(t_idx) + 1 + step) * HOUR).isoformat()
            for i, a in enumerate(demand.area_ids):
                rows.append((split, a, ts, step + 1, pred[s, i, step], samples.y[s, i, step]))
    return rows


def evaluate_predictions(
    model: str,
    config_hash: str,
    sets: WindowSets,
    demand: DemandMatrix,
    preds: dict[str, np.ndarray],
    keep_rows: Sequence[str] = ("test",),
) -> EvalRun:
    ms, rows = {}, []
    for split, pred in preds.items():
        samples = getattr(sets, split)
        ms[split] = metrics(pred, samples.y)
        if split in keep_rows:
            rows += prediction_rows(split, demand, samples, pred)
    return EvalRun(model, config_hash, sets.window, sets.horizon, ms, rows)


def evaluate_icn(params: IcnParams, sets: WindowSets, demand: DemandMatrix, gather, splits=("train", "val", "test")):
    cfg = params.config
    preds = {s: predict_raw(params, getattr(sets, s), gather, sets.normalizer) for s in splits}
    return evaluate_predictions("ICN", cfg.config_hash(), sets, demand, preds)


def evaluate_ha(sets: WindowSets, demand: DemandMatrix, splits=("train", "val", "test")):
    preds = {s: ha_for_samples(demand, sets.train_hours, getattr(sets, s), sets.horizon) for s in splits}
    return evaluate_predictions("HA", "ha", sets, demand, preds)


def evaluate_persistence(sets: WindowSets, demand: DemandMatrix, splits=("train", "val", "test")):
    preds = {}
    for s in splits:
        samples = getattr(sets, s)
        last = demand.values[:, samples.t_index].T  # (S, N) raw value at each t_index
        preds[s] = persistence(last[..., None], sets.horizon)
    return evaluate_predictions("persistence", "persistence", sets, demand, preds)


# ---------------------------------------------------------------------------
# experiment harness
# ---------------------------------------------------------------------------


@dataclass
class Experiment:
    """Everything needed to train and score one model configuration."""

    demand: DemandMatrix
    features: FeatureBundle | None
    weather: WeatherSeries
    split: SplitSpec = field(default_factory=SplitSpec)
    standardize_features: bool = True

    def match_table(self) -> SpatialMatchTable | None:
        if self.features is None:
            return None
        return build_match_table(self.features, self.standardize_features)

    def gather(self, cfg: IcnConfig) -> np.ndarray:
        table = self.match_table()
        if table is None:
            if cfg.channels:
                raise ConfigError("dilation channels requested but the dataset has no feature tables")
            return np.arange(self.demand.n_areas)[None, :]
        return table.gather_index(cfg.channels)

    def windows(self, cfg: IcnConfig) -> WindowSets:
        weather = self.weather if cfg.use_weather else None
        return make_windows(self.demand, weather, cfg.window, cfg.horizon, self.split, cfg.levels)

    def run(self, cfg: IcnConfig, hyper: TrainHyper) -> tuple[IcnParams, TrainReport, EvalRun, WindowSets]:
        sets = self.windows(cfg)
        gather = self.gather(cfg)
        params, report = train(sets, cfg, gather, hyper)
        ev = evaluate_icn(params, sets, self.demand, gather)
        ev.extra.update({"best_epoch": report.best_epoch, "seed": hyper.seed, "epochs_run": len(report.epochs)})
        return params, report, ev, sets


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("ICN_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class SweepCell:
    window: int
    horizon: int
    status: str
    run: EvalRun | None = None
    reason: str = ""


def sweep(
    exp: Experiment,
    base: IcnConfig,
    windows: Sequence[int],
    horizons: Sequence[int],
    hyper: TrainHyper,
) -> list[SweepCell]:
    """Train and evaluate one model per (window, horizon) cell."""

    def one(T, M):
        try:
            cfg = replace(base, window=T, horizon=M)
        except ConfigError as exc:
            return SweepCell(T, M, "skipped", reason=str(exc))
        try:
            _, _, ev, _ = exp.run(cfg, hyper)
        except IcnError as exc:
            return SweepCell(T, M, "skipped", reason=str(exc))
        ev.extra["config"] = cfg.to_dict()
        return SweepCell(T, M, "ok", ev)

    grid = [(T, M) for M in horizons for T in windows]
    with ThreadPoolExecutor(max_workers=_workers()) as pool:
        return list(pool.map(lambda tm: one(*tm), grid))


def _fmt_metric(v):
    return "" if v is None else f"{v:.4f}"


def write_sweep_csv(cells: Sequence[SweepCell], path: str | Path, dataset: str = "dataset", split: str = "test"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["output_horizon", "input_window", f"{dataset}_MAE", f"{dataset}_MAPE10", f"{dataset}_RMSE",
                    "status", "config_hash", "reason"])
        for c in cells:
            if c.run is not None:
                m = c.run.metrics[split]
                w.writerow([c.horizon, c.window, _fmt_metric(m.mae), _fmt_metric(m.mape10), _fmt_metric(m.rmse),
                            c.status, c.run.config_hash, ""])
            else:
                w.writerow([c.horizon, c.window, "", "", "", c.status, "", c.reason])


def ablate(
    exp: Experiment, base: IcnConfig, component: str, hyper: TrainHyper, full: EvalRun | None = None
) -> tuple[EvalRun, EvalRun]:
    """Full model and the model with ``component`` removed, same seed and data.

    Pass a previously computed ``full`` run to avoid retraining it.
    """
    if component not in ABLATABLE:
        raise ConfigError(f"unknown ablation component {component!r}; choose from {ABLATABLE}")
    reduced = base.without(component)
    if full is None:
        _, _, full, _ = exp.run(base, hyper)
    _, _, abl, _ = exp.run(reduced, hyper)
    full.model = "ICN"
    abl.model = f"ICN w/o {component}"
    return full, abl


def write_ablation_csv(rows: Sequence[tuple[str, int, EvalRun]], path: str | Path, dataset="dataset", split="test"):
    """``rows`` are (model label, horizon, run) triples, Table-4 column layout."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "output_horizon", f"{dataset}_MAE", f"{dataset}_MAPE10", f"{dataset}_RMSE", "config_hash"])
        for label, horizon, run in rows:
            m = run.metrics[split]
            w.writerow([label, horizon, _fmt_metric(m.mae), _fmt_metric(m.mape10), _fmt_metric(m.rmse), run.config_hash])
