import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icn.dataset import generate_synthetic
from icn.errors import DimensionError, TrainingFault
from icn.evaluation import Experiment
from icn.network import IcnConfig, IcnParams, init_params, param_shapes
from icn.training import OptimizerState, TrainHyper, backward, l1_loss, rmsprop_step, train

from conftest import GRADCHECK_GATHER, finite_difference_check


def _scalar_params(value):
    cfg = IcnConfig(n_areas=2, window=2, horizon=1, n_weather=0, levels=1, channels=())
    arrays = {k: np.zeros(s) for k, s in param_shapes(cfg).items()}
    arrays["fc.b"][:] = value
    return IcnParams(cfg, arrays)


def test_l1_examples():
    assert l1_loss([[1, 2]], [[2, 4]]) == 1.5
    assert l1_loss([[3.0, 1.0]], [[3.0, 1.0]]) == 0.0
    with pytest.raises(DimensionError):
        l1_loss(np.zeros((2, 2)), np.zeros((2, 3)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_l1_symmetric_nonnegative(seed):
    rng = np.random.default_rng(seed)
    p, t = rng.normal(size=(3, 4, 2)), rng.normal(size=(3, 4, 2))
    assert l1_loss(p, t) == l1_loss(t, p) > 0


def test_rmsprop_hand_example():
    p = _scalar_params(0.0)
    state = OptimizerState.zeros_like(p)
    grads = {k: np.zeros_like(v) for k, v in p.arrays.items()}
    grads["fc.b"][:] = 1.0
    rmsprop_step(p, grads, state)
    assert state.accum["fc.b"][0] == pytest.approx(0.1)
    assert -p["fc.b"][0] == pytest.approx(0.001 / (math.sqrt(0.1) + 1e-8))
    assert round(-float(p["fc.b"][0]), 6) == 0.003162
    first = -p["fc.b"][0]
    rmsprop_step(p, grads, state)
    second = -p["fc.b"][0] - first
    assert 0 < second < first


def test_rmsprop_zero_gradient_is_noop():
    p = init_params(IcnConfig(n_areas=4, window=8, levels=1), 0)
    before = p.copy()
    state = OptimizerState.zeros_like(p)
    rmsprop_step(p, {k: np.zeros_like(v) for k, v in p.arrays.items()}, state)
    assert all(np.array_equal(p[k], before[k]) for k in p.arrays)
    assert all(np.all(a >= 0) for a in state.accum.values())


def test_rmsprop_l1_toy_converges():
    # minimise |theta - 3| with the scalar FC bias
    p = _scalar_params(0.0)
    state = OptimizerState.zeros_like(p, lr=0.05)
    start = abs(p["fc.b"][0] - 3.0)
    for _ in range(200):
        g = {k: np.zeros_like(v) for k, v in p.arrays.items()}
        g["fc.b"][:] = np.sign(p["fc.b"] - 3.0)
        rmsprop_step(p, g, state)
    assert abs(p["fc.b"][0] - 3.0) < start
    assert abs(p["fc.b"][0] - 3.0) < 0.1


def test_rmsprop_shape_check():
    p = _scalar_params(0.0)
    state = OptimizerState.zeros_like(p)
    g = {k: np.zeros_like(v) for k, v in p.arrays.items()}
    g["fc.b"] = np.zeros(2)
    with pytest.raises(DimensionError):
        rmsprop_step(p, g, state)


def test_gradients_match_finite_differences():
    cfg = IcnConfig(n_areas=4, window=8, horizon=2, n_weather=1, levels=1)
    p = init_params(cfg, seed=1, dtype=np.float64)
    rng = np.random.default_rng(0)
    x, w, y = rng.normal(size=(3, 4, 8)), rng.normal(size=(3, 1, 8)), rng.normal(size=(3, 4, 2))
    errors = finite_difference_check(p, x, w, y, GRADCHECK_GATHER)
    assert max(errors.values()) < 1e-4, errors


def test_gradients_two_levels_no_weather():
    cfg = IcnConfig(n_areas=4, window=8, horizon=1, n_weather=0, levels=2, channels=("transport",), dropout=0.0)
    p = init_params(cfg, seed=2, dtype=np.float64)
    rng = np.random.default_rng(1)
    x, y = rng.normal(size=(2, 4, 8)), rng.normal(size=(2, 4, 1))
    errors = finite_difference_check(p, x, None, y, GRADCHECK_GATHER[[0, 3]])
    assert max(errors.values()) < 1e-4, errors


def test_fc_bias_gradient_zero_when_exact():
    cfg = IcnConfig(n_areas=4, window=8, horizon=2, n_weather=1, levels=1)
    p = init_params(cfg, seed=1, dtype=np.float64)
    rng = np.random.default_rng(3)
    x, w = rng.normal(size=(2, 4, 8)), rng.normal(size=(2, 1, 8))
    from icn.network import icn_forward

    y = icn_forward(p, x, w, GRADCHECK_GATHER)
    loss, g = backward(p, x, w, y, GRADCHECK_GATHER, train=False)
    assert loss == 0.0
    assert np.all(g["fc.b"] == 0)


def test_backward_deterministic_given_rng():
    cfg = IcnConfig(n_areas=4, window=8, horizon=2, n_weather=1, levels=1)
    p = init_params(cfg, seed=1)
    rng = np.random.default_rng(0)
    x, w, y = rng.normal(size=(3, 4, 8)), rng.normal(size=(3, 1, 8)), rng.normal(size=(3, 4, 2))
    _, g1 = backward(p, x, w, y, GRADCHECK_GATHER, np.random.default_rng(11))
    _, g2 = backward(p, x, w, y, GRADCHECK_GATHER, np.random.default_rng(11))
    assert all(np.array_equal(g1[k], g2[k]) for k in g1)
    assert set(g1) == set(p.arrays)
    assert all(g1[k].shape == p[k].shape for k in g1)


def test_non_finite_loss_reports_sample():
    cfg = IcnConfig(n_areas=4, window=8, horizon=1, n_weather=0, levels=1)
    p = init_params(cfg, seed=1, dtype=np.float64)
    x = np.zeros((3, 4, 8))
    x[2, 1, 3] = np.nan
    with pytest.raises(TrainingFault) as info:
        backward(p, x, None, np.zeros((3, 4, 1)), GRADCHECK_GATHER, np.random.default_rng(0))
    assert info.value.sample_index == 2


@pytest.fixture(scope="module")
def small_experiment():
    d, f, w = generate_synthetic(n_areas=6, hours=24 * 7 * 3, seed=4, correlation_plan=3)
    return Experiment(d, f, w), IcnConfig(n_areas=6, window=16, horizon=1, levels=2)


def _strip_timing(report):
    out = report.to_dict()
    out.pop("wall_seconds")
    for e in out["epochs"]:
        e.pop("seconds")
    return out


def test_same_seed_same_report(small_experiment):
    exp, cfg = small_experiment
    hyper = TrainHyper(epochs=3, seed=7)
    p1, r1, _, _ = exp.run(cfg, hyper)
    p2, r2, _, _ = exp.run(cfg, hyper)
    assert _strip_timing(r1) == _strip_timing(r2)
    assert all(np.array_equal(p1[k], p2[k]) for k in p1.arrays)
    assert [e["epoch"] for e in r1.epochs] == [1, 2, 3]
    assert 1 <= r1.best_epoch <= len(r1.epochs)
    assert r1.config_hash == cfg.config_hash() and r1.seed == 7


def test_patience_zero_stops_on_first_miss(small_experiment):
    exp, cfg = small_experiment
    sets, g = exp.windows(cfg), exp.gather(cfg)
    _, rep = train(sets, cfg, g, TrainHyper(epochs=40, patience=0, lr=0.05, seed=1))
    vals = [e["val_mae"] for e in rep.epochs]
    # every epoch but the last improved on the best so far
    assert all(vals[i] < min(vals[:i], default=np.inf) for i in range(len(vals) - 1))
    if len(vals) < 40:
        assert vals[-1] >= min(vals[:-1])
        assert rep.stopped_early


def test_best_params_are_returned(small_experiment):
    exp, cfg = small_experiment
    sets, g = exp.windows(cfg), exp.gather(cfg)
    from icn.training import predict_raw

    params, rep = train(sets, cfg, g, TrainHyper(epochs=6, seed=2))
    mae = float(np.mean(np.abs(predict_raw(params, sets.val, g, sets.normalizer) - sets.val.y)))
    assert mae == pytest.approx(rep.best_val_mae, rel=1e-12)
