import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icn.dataset import FEATURE_GROUPS, FeatureBundle, generate_synthetic
from icn.dilation import DilatedInput, SpatialMatchTable, build_match_table, dilate, pearson
from icn.errors import DimensionError


def oracle_matches(m):
    """Double-loop argmax of the textbook Pearson formula; first maximum wins."""
    n = m.shape[0]
    out = []
    for i in range(n):
        best, best_j = -np.inf, -1
        for j in range(n):
            if j == i:
                continue
            r = pearson(m[i], m[j])
            if r > best:
                best, best_j = r, j
        out.append(best_j)
    return out


def _bundle(rng, n, dup=False, min_k=2):
    mats = []
    for _ in range(3):
        k = int(rng.integers(min_k, 7))
        if dup:  # few distinct rows, so ties are common
            base = rng.integers(-2, 3, (max(2, n // 3), k)).astype(float)
            m = base[rng.integers(0, len(base), n)]
        else:
            m = rng.normal(size=(n, k))
        mats.append(m)
    return FeatureBundle(*mats)


def test_pearson_examples():
    assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    assert pearson([1, 2, 3], [1, 1, 2]) == pytest.approx(0.8660, abs=1e-4)


def test_pearson_zero_variance_and_lengths():
    assert pearson([1, 1, 1], [1, 2, 3]) == 0.0
    with pytest.raises(DimensionError):
        pearson([1, 2], [1, 2, 3])


def test_small_example_matches_brute_force():
    demo = np.array([[1.0, 2, 3], [2, 4, 6], [3, 1, 2]])
    other = np.array([[0.0, 1], [1, 0], [1, 1]])
    f = FeatureBundle(demo, other, other)
    t = build_match_table(f, standardize=False)
    assert list(t.match_d[:2]) == [1, 0]
    assert list(t.match_d) == oracle_matches(demo)


def test_identical_areas_match_with_corr_one():
    rng = np.random.default_rng(0)
    m = rng.normal(size=(5, 4))
    m[3] = m[1]
    t = build_match_table(FeatureBundle(m, m, m), standardize=False)
    assert t.match_d[1] == 3 and t.match_d[3] == 1
    assert t.corr_d[1] == pytest.approx(1.0)


@pytest.mark.parametrize("dup", [False, True])
def test_oracle_equivalence(dup):
    rng = np.random.default_rng(42 + dup)
    for _ in range(50):
        n = int(rng.integers(2, 65))
        f = _bundle(rng, n, dup)
        for standardize in (False, True):
            t = build_match_table(f, standardize)
            for g in FEATURE_GROUPS:
                m = f.group(g)
                if standardize:
                    sd = m.std(axis=0)
                    m = (m - m.mean(axis=0)) / np.where(sd < 1e-12, 1.0, sd)
                assert list(t.match(g)) == oracle_matches(m)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 20), st.integers(0, 10**6), st.floats(1e-3, 1e3))
def test_scale_invariance_and_self_exclusion(n, seed, scale):
    rng = np.random.default_rng(seed)
    # two-column vectors always correlate to exactly +-1, where ties are decided by rounding
    f = _bundle(rng, n, min_k=3)
    scaled = FeatureBundle(f.demographic * scale, f.functionality, f.transport)
    for std in (True, False):
        a, b = build_match_table(f, std), build_match_table(scaled, std)
        assert np.array_equal(a.match_d, b.match_d)
        for g in FEATURE_GROUPS:
            assert np.all(a.match(g) != np.arange(n))
            assert np.all((a.match(g) >= 0) & (a.match(g) < n))


def test_planted_groups_recovered():
    _, f, _ = generate_synthetic(n_areas=16, hours=400, seed=5, correlation_plan=[[0, 1], [2, 3]] + [
        [i, i + 1] for i in range(4, 16, 2)])
    t = build_match_table(f)
    assert list(t.match_d) == [i ^ 1 for i in range(16)]


def test_table_rejects_self_match():
    z = np.zeros(3)
    with pytest.raises(ValueError):
        SpatialMatchTable(np.array([0, 0, 1]), np.array([1, 0, 1]), np.array([1, 0, 1]), z, z, z)


def test_dilate_gather():
    x = np.array([[1.0, 2], [3, 4]])
    z = np.zeros(2)
    t = SpatialMatchTable(np.array([1, 0]), np.array([1, 0]), np.array([1, 0]), z, z, z)
    d = dilate(x, t)
    assert d.shape == (4, 2, 2)
    assert np.array_equal(d.channels[0], x)
    assert np.array_equal(d.channels[1], [[3, 4], [1, 2]])
    assert np.array_equal(d.channels[1], d.channels[2]) and np.array_equal(d.channels[2], d.channels[3])


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.integers(0, 10**6))
def test_dilated_rows_are_original_rows(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 6))
    t = build_match_table(_bundle(rng, n))
    d = dilate(x, t)
    assert np.array_equal(d.channels[0], x)
    for k, g in enumerate(FEATURE_GROUPS, start=1):
        assert np.array_equal(d.channels[k], x[t.match(g)])
    rows = {tuple(r) for r in x}
    assert all(tuple(r) in rows for r in d.channels.reshape(-1, 6))


def test_dilate_twice_rejected():
    rng = np.random.default_rng(0)
    t = build_match_table(_bundle(rng, 4))
    d = dilate(rng.normal(size=(4, 3)), t)
    assert isinstance(d, DilatedInput)
    with pytest.raises(TypeError):
        dilate(d, t)


def test_match_table_serialization(tmp_path):
    rng = np.random.default_rng(3)
    t = build_match_table(_bundle(rng, 6))
    again = SpatialMatchTable.from_dict(t.to_dict())
    assert np.array_equal(again.match_t, t.match_t) and np.array_equal(again.corr_f, t.corr_f)
    t.to_csv(tmp_path / "m.csv", [f"z{i}" for i in range(6)])
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "area_id,match_d,corr_d,match_f,corr_f,match_t,corr_t"
    assert len(lines) == 7
