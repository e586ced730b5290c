import csv
import json
from datetime import datetime

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from icn.dataset import (
    AreaMap,
    DemandMatrix,
    FeatureBundle,
    Normalizer,
    SplitSpec,
    WeatherSeries,
    filter_active_areas,
    generate_synthetic,
    ingest_trips,
    load_bundle,
    make_windows,
    save_bundle,
)
from icn.errors import ConfigError, EmptyDatasetError, SchemaError

T0 = datetime(2020, 3, 2)


def _write_trips(path, rows, header=("start_time", "area_id")):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _demand(values, t0=T0):
    values = np.asarray(values, dtype=float)
    return DemandMatrix([f"a{i}" for i in range(values.shape[0])], t0, values)


# --- ingestion ---------------------------------------------------------------


def test_ingest_counts_per_hour(tmp_path):
    rows = [
        ("2020-03-02T09:05:00", "A"),
        ("2020-03-02T09:17:00", "A"),
        ("2020-03-02T09:59:59", "A"),
        ("2020-03-02T10:30:00", "A"),
        ("2020-03-02T08:10:00", "B"),
    ]
    _write_trips(tmp_path / "t.csv", rows)
    d, rep = ingest_trips(tmp_path / "t.csv", None, (datetime(2020, 3, 2, 8), datetime(2020, 3, 2, 12)))
    assert d.area_ids == ["A", "B"]
    assert d.values.tolist() == [[0, 3, 1, 0], [1, 0, 0, 0]]
    assert rep.n_skipped == 0


def test_malformed_timestamp_is_counted(tmp_path):
    rows = [("2020-03-02T09:05:00", "A"), ("not-a-time", "A"), ("2020-03-02T10:00:00", "A")]
    _write_trips(tmp_path / "t.csv", rows)
    d, rep = ingest_trips(tmp_path / "t.csv", None, None)
    assert rep.skipped["bad_timestamp"] == 1
    assert d.values.sum() + rep.n_skipped == 3


def test_ingest_conservation_random(tmp_path):
    rng = np.random.default_rng(7)
    rows = []
    for _ in range(500):
        if rng.random() < 0.1:
            rows.append(("garbage", "A"))
        else:
            h, m = rng.integers(0, 48), rng.integers(0, 60)
            ts = datetime(2020, 3, 2).timestamp() + h * 3600 + m * 60
            rows.append((datetime.fromtimestamp(ts).isoformat(), str(rng.choice(["A", "B", "C"]))))
    _write_trips(tmp_path / "t.csv", rows)
    d, rep = ingest_trips(tmp_path / "t.csv", None, (datetime(2020, 3, 2), datetime(2020, 3, 3)))
    # independent recount of the CSV
    with open(tmp_path / "t.csv") as fh:
        n_rows = sum(1 for _ in fh) - 1
    assert d.values.sum() + rep.n_skipped == n_rows
    assert rep.skipped["out_of_span"] > 0


def test_ingest_polygons(tmp_path):
    gj = {
        "type": "FeatureCollection",
        "features": [
            {"type": "Feature", "properties": {"area_id": "W"},
             "geometry": {"type": "Polygon", "coordinates": [[[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]]]}},
            {"type": "Feature", "properties": {"area_id": "E"},
             "geometry": {"type": "Polygon", "coordinates": [[[1, 0], [2, 0], [2, 1], [1, 1], [1, 0]]]}},
        ],
    }
    (tmp_path / "a.geojson").write_text(json.dumps(gj))
    rows = [
        ("2020-03-02T00:10:00", "0.5", "0.5"),
        ("2020-03-02T00:20:00", "0.5", "1.5"),
        ("2020-03-02T01:20:00", "0.5", "1.5"),
        ("2020-03-02T01:30:00", "0.5", "7.0"),
    ]
    _write_trips(tmp_path / "t.csv", rows, header=("start_time", "start_latitude", "start_longitude"))
    d, rep = ingest_trips(tmp_path / "t.csv", AreaMap(tmp_path / "a.geojson"), None)
    assert d.area_ids == ["W", "E"]  # polygon file order
    assert d.values.tolist() == [[1, 0], [1, 1]]
    assert rep.skipped["unknown_area"] == 1


def test_missing_column_names_it(tmp_path):
    _write_trips(tmp_path / "t.csv", [("2020-03-02T00:10:00", "A")], header=("when", "area_id"))
    with pytest.raises(SchemaError, match="start_time"):
        ingest_trips(tmp_path / "t.csv", None, None)


def test_empty_span(tmp_path):
    _write_trips(tmp_path / "t.csv", [("2020-03-02T00:10:00", "A")])
    with pytest.raises(EmptyDatasetError):
        ingest_trips(tmp_path / "t.csv", None, (datetime(2021, 1, 1), datetime(2021, 1, 2)))


def test_filter_active_areas():
    d = _demand([[0.5] * 4, [2.0] * 4, [1.1] * 4])
    out, kept = filter_active_areas(d, 1.0)
    assert kept == [1, 2]
    assert out.area_ids == ["a1", "a2"]
    same, kept = filter_active_areas(d, 0.0)
    assert kept == [0, 1, 2] and np.array_equal(same.values, d.values)
    with pytest.raises(EmptyDatasetError):
        filter_active_areas(d, 5.0)


def test_bundle_round_trip(tmp_path):
    d, f, w = generate_synthetic(n_areas=4, hours=240, seed=3, correlation_plan=2)
    save_bundle(tmp_path / "b", d, f, w)
    b = load_bundle(tmp_path / "b")
    assert b.demand.area_ids == d.area_ids
    assert np.array_equal(b.demand.values, d.values)
    assert np.array_equal(b.weather.values, w.values)
    for g in ("demographic", "functionality", "transport"):
        assert np.array_equal(b.features.group(g), f.group(g))


def test_feature_bundle_needs_two_columns():
    with pytest.raises(ValueError):
        FeatureBundle(np.ones((3, 1)), np.ones((3, 2)), np.ones((3, 2)))


# --- windows -------------------------------------------------------------------


def test_window_count_and_split():
    rng = np.random.default_rng(0)
    d = _demand(rng.poisson(5, (3, 100)))
    sets = make_windows(d, None, 48, 1, SplitSpec(), levels=2)
    assert len(sets.train) + len(sets.val) + len(sets.test) == 52
    assert SplitSpec().counts(50) == (30, 10, 10)


def test_window_constraint():
    d = _demand(np.ones((2, 200)))
    make_windows(d, None, 48, 1, levels=2)
    with pytest.raises(ConfigError, match="T mod 2\\^L"):
        make_windows(d, None, 50, 1, levels=2)


def test_splits_are_chronological_and_leak_free():
    rng = np.random.default_rng(1)
    d = _demand(rng.poisson(5, (3, 400)))
    M = 6
    sets = make_windows(d, None, 16, M, levels=2)
    tr, va, te = sets.train.t_index, sets.val.t_index, sets.test.t_index
    assert tr.max() < va.min() < te.min()
    # last training target hour precedes the first validation target hour
    assert tr.max() + M < va.min() + 1
    assert va.max() + M < te.min() + 1
    assert sets.train_hours == tr.max() + M + 1


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 5), st.integers(0, 10**6), st.sampled_from([8, 16]), st.integers(1, 4))
def test_window_coverage(n, seed, T, M):
    rng = np.random.default_rng(seed)
    vals = rng.gamma(2.0, 3.0, (n, 120))
    d = _demand(vals)
    w = WeatherSeries(["rain"], rng.normal(size=(1, 120)))
    sets = make_windows(d, w, T, M, levels=2)
    for part in (sets.train, sets.val, sets.test):
        for k in (0, len(part) - 1):
            s = part[k]
            t = s.t_index
            raw_x = sets.normalizer.inverse(s.x)
            np.testing.assert_allclose(raw_x, vals[:, t - T + 1: t + 1], atol=1e-9)
            np.testing.assert_array_equal(s.y, vals[:, t + 1: t + 1 + M])
            np.testing.assert_allclose(sets.weather_normalizer.inverse(s.w), w.values[:, t - T + 1: t + 1], atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 12), elements=st.floats(-1e6, 1e6)))
def test_normalizer_round_trip(v):
    norm = Normalizer.fit(v)
    np.testing.assert_allclose(norm.inverse(norm.transform(v)), v, atol=1e-9, rtol=1e-12)


def test_normalizer_constant_rows():
    norm = Normalizer.fit(np.full((2, 5), 3.0))
    assert np.all(norm.std == 1.0)
    assert np.all(norm.transform(np.full((2, 5), 3.0)) == 0)


def test_normalizer_fit_on_training_hours_only():
    vals = np.concatenate([np.ones((1, 60)), np.full((1, 140), 100.0)], axis=1)
    sets = make_windows(_demand(vals), None, 8, 1, levels=1)
    # the first training windows cover just the low regime plus the transition
    expect = Normalizer.fit(vals[:, : sets.train_hours])
    assert np.allclose(sets.normalizer.mean, expect.mean)
    assert sets.train_hours < 200


# --- synthetic -----------------------------------------------------------------


def test_synthetic_deterministic():
    a = generate_synthetic(n_areas=6, hours=400, seed=11, correlation_plan=3)
    b = generate_synthetic(n_areas=6, hours=400, seed=11, correlation_plan=3)
    assert np.array_equal(a[0].values, b[0].values)
    assert np.array_equal(a[1].demographic, b[1].demographic)
    assert np.array_equal(a[2].values, b[2].values)


def test_synthetic_noise_free_is_weekly_periodic():
    d, _, _ = generate_synthetic(n_areas=4, hours=168 * 4, seed=2, correlation_plan=2,
                                 noise_scale=0, trend_scale=0, weather_scale=0)
    assert np.all(d.values >= 0)
    pred = d.values[:, :-168]
    truth = d.values[:, 168:]
    assert np.mean(np.abs(pred - truth)) == 0.0


def test_synthetic_group_of_one_rejected():
    with pytest.raises(ValueError):
        generate_synthetic(n_areas=5, hours=400, correlation_plan=[[0, 1], [2, 3], [4]])


def test_synthetic_too_short_rejected():
    with pytest.raises(ValueError):
        generate_synthetic(n_areas=4, hours=100, min_window=24)
