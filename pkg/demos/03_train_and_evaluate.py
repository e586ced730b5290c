"""
Training a model and comparing it with the baselines
====================================================

Train on a chronological 60/20/20 split, keep the best-validation weights,
and score the test set against historical average and persistence.
"""

import os

from icn.dataset import generate_synthetic
from icn.evaluation import Experiment, evaluate_ha, evaluate_persistence
from icn.network import IcnConfig, param_count
from icn.training import TrainHyper

EPOCHS = int(os.environ.get("ICN_DEMO_EPOCHS", "40"))

demand, features, weather = generate_synthetic(n_areas=8, hours=24 * 7 * 6, seed=0, correlation_plan=4)
exp = Experiment(demand, features, weather)

cfg = IcnConfig(n_areas=8, window=48, horizon=1)  # k1=5, k2=3, h=0.5, L=2, dropout 0.5
print("parameters:", param_count(cfg))

params, report, run, sets = exp.run(cfg, TrainHyper(epochs=EPOCHS, seed=0))
print(f"windows: train {len(sets.train)}  val {len(sets.val)}  test {len(sets.test)}")
print(f"best epoch {report.best_epoch} of {len(report.epochs)}, val MAE {report.best_val_mae:.3f}")

for name, ev in (("ICN", run), ("HA", evaluate_ha(sets, demand)), ("persist", evaluate_persistence(sets, demand))):
    m = ev.metrics["test"]
    mape = "n/a" if m.mape10 is None else f"{m.mape10:.3f}"
    print(f"{name:>8}: MAE {m.mae:7.3f}  RMSE {m.rmse:7.3f}  MAPE10 {mape}")

# the prediction table has one row per (sample, area, step)
print("prediction rows:", len(run.predictions), "=", len(sets.test), "x", cfg.n_areas, "x", cfg.horizon)
first = run.predictions[0]
print("first row:", first[:4], "pred %.2f truth %.0f" % (first[4], first[5]))
print("curve (epoch, loss, val MAE):", [(e["epoch"], round(e["train_loss"], 3), round(e["val_mae"], 2))
                                        for e in report.epochs[:: max(1, len(report.epochs) // 5)]])
