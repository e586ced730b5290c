"""L1 objective, batch gradients, RMSprop and the epoch loop with early stopping."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import Normalizer, SampleSet, WindowSets
from .errors import DimensionError, TrainingFault
from .network import IcnConfig, IcnParams, icn_backward, icn_forward, init_params

log = logging.getLogger(__name__)


def l1_loss(pred, target) -> float:
    """Mean absolute error over areas and horizon steps (and batch, if present)."""
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise DimensionError(f"l1_loss: {pred.shape} vs {target.shape}")
    return float(np.mean(np.abs(pred - target)))


def backward(params: IcnParams, x, w, y, gather, rng=None, train=True):
    """Loss and gradients for one batch.

    ``y`` is the target on the normalized scale, shape (B, N, M).  Dropout masks
    drawn from ``rng`` are kept in the forward cache and reused here.
    """
    x = np.asarray(x)
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    pred, cache = icn_forward(params, x, w, gather, train=train, rng=rng, return_cache=True)
    y = np.asarray(y, dtype=pred.dtype)
    diff = pred - y
    per_sample = np.abs(diff).mean(axis=(1, 2))
    bad = np.flatnonzero(~np.isfinite(per_sample))
    if bad.size:
        raise TrainingFault(f"non-finite loss at batch sample {int(bad[0])}", sample_index=int(bad[0]))
    loss = float(per_sample.mean())
    dpred = (np.sign(diff) / diff.size).astype(pred.dtype)
    grads = icn_backward(params, dpred, cache)
    return loss, grads


@dataclass
class OptimizerState:
    accum: dict[str, np.ndarray]
    lr: float = 1e-3
    rho: float = 0.9
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: IcnParams, lr=1e-3, rho=0.9, eps=1e-8) -> "OptimizerState":
        return cls({k: np.zeros_like(v) for k, v in params.arrays.items()}, lr, rho, eps)


def rmsprop_step(params: IcnParams, grads: dict, state: OptimizerState):
    """In-place update: a <- rho a + (1-rho) g^2;  theta <- theta - lr g / (sqrt(a) + eps)."""
    for k, theta in params.arrays.items():
        g = grads[k]
        if g.shape != theta.shape:
            raise DimensionError(f"{k}: gradient {g.shape} vs parameter {theta.shape}")
        a = state.accum[k]
        a *= state.rho
        a += (1.0 - state.rho) * g * g
        theta -= state.lr * g / (np.sqrt(a) + state.eps)
    return params, state


@dataclass
class TrainHyper:
    epochs: int = 150
    patience: int = 15
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0
    dtype: str = "float32"
    track_train_mae: bool = False  # extra eval pass over the training set each epoch


@dataclass
class TrainReport:
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val_mae: float = float("inf")
    stopped_early: bool = False
    seed: int = 0
    config_hash: str = ""
    wall_seconds: float = 0.0
    fault: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def curve_rows(self):
        for e in self.epochs:
            yield e["epoch"], e["train_loss"], e["val_mae"], e["val_rmse"]


def predict_raw(params: IcnParams, samples: SampleSet, gather, normalizer: Normalizer, batch_size=256):
    """Eval-mode predictions on the raw demand scale, shape (S, N, M)."""
    out = []
    for i in range(0, len(samples), batch_size):
        sl = slice(i, i + batch_size)
        pred = icn_forward(params, samples.x[sl], samples.w[sl], gather)
        out.append(normalizer.inverse(pred.astype(np.float64)))
    if not out:
        return np.zeros((0,) + samples.y.shape[1:])
    return np.concatenate(out)


def _mae_rmse(pred, truth):
    d = pred - truth
    return float(np.mean(np.abs(d))), float(np.sqrt(np.mean(d * d)))


def train(
    sets: WindowSets,
    cfg: IcnConfig,
    gather,
    hyper: TrainHyper | None = None,
    init: IcnParams | None = None,
) -> tuple[IcnParams, TrainReport]:
    """Mini-batch RMSprop on the L1 loss; keeps the parameters with the best
    validation MAE and stops after ``patience`` epochs without improvement."""
    hyper = hyper or TrainHyper()
    if len(sets.train) == 0 or len(sets.val) == 0:
        raise ValueError("train and validation sets must be non-empty")
    dtype = np.dtype(hyper.dtype)
    rng = np.random.default_rng(hyper.seed)
    params = init if init is not None else init_params(cfg, seed=hyper.seed, dtype=dtype)
    params = params.astype(dtype)
    state = OptimizerState.zeros_like(params, lr=hyper.lr)
    norm = sets.normalizer
    y_train = norm.transform(sets.train.y).astype(dtype)

    report = TrainReport(seed=hyper.seed, config_hash=cfg.config_hash())
    best = params.copy()
    wait = 0
    t_start = time.perf_counter()
    for epoch in range(1, hyper.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(sets.train))
        losses = []
        for i in range(0, len(order), hyper.batch_size):
            idx = order[i : i + hyper.batch_size]
            try:
                loss, grads = backward(params, sets.train.x[idx], sets.train.w[idx], y_train[idx], gather, rng)
            except TrainingFault as exc:
                idx_fault = int(idx[exc.sample_index]) if exc.sample_index is not None else None
                report.fault = f"epoch {epoch}: {exc} (train sample {idx_fault})"
                report.wall_seconds = time.perf_counter() - t_start
                raise TrainingFault(report.fault, sample_index=idx_fault, report=report) from exc
            rmsprop_step(params, grads, state)
            losses.append(loss * len(idx))
        train_loss = float(np.sum(losses) / len(order))
        train_mae = None
        if hyper.track_train_mae:
            train_mae, _ = _mae_rmse(predict_raw(params, sets.train, gather, norm), sets.train.y)
        val_mae, val_rmse = _mae_rmse(predict_raw(params, sets.val, gather, norm), sets.val.y)
        if not np.isfinite(val_mae):
            report.fault = f"epoch {epoch}: validation MAE is not finite"
            raise TrainingFault(report.fault, report=report)
        report.epochs.append(
            {
                "epoch": epoch,
                "train_loss": train_loss,
                "train_mae": train_mae,
                "val_mae": val_mae,
                "val_rmse": val_rmse,
                "seconds": time.perf_counter() - t0,
            }
        )
        log.debug("epoch %d loss %.4f train_mae %.4f val_mae %.4f", epoch, train_loss, train_mae, val_mae)
        if val_mae < report.best_val_mae:
            report.best_val_mae = val_mae
            report.best_epoch = epoch
            best = params.copy()
            wait = 0
        else:
            wait += 1
            if wait >= max(hyper.patience, 1):
                report.stopped_early = epoch < hyper.epochs
                break
    report.wall_seconds = time.perf_counter() - t_start
    return best, report
