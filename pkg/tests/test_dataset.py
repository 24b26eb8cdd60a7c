import numpy as np
import pytest

from app.core.errors import (
    BinaryDomain,
    DatasetError,
    KindMismatch,
    MalformedHeader,
    NonConsecutiveTime,
    NonNumericCell,
    WindowError,
)
from app.cyhmm.dataset import (
    FeatureKind,
    IndividualSeries,
    TimeSeriesDataset,
    apply_binary_missing_rule,
    detrend,
    filter_active,
    load_csv,
    write_csv,
)


@pytest.fixture
def csv_file(tmp_path):
    def write(text, name="data.csv"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)
    return write


def _continuous(values, observed=None, sid="a"):
    values = np.asarray(values, dtype=float)
    if observed is None:
        observed = ~np.isnan(values)
    return IndividualSeries(sid, values, observed)


def test_load_csv_basic(csv_file):
    path = csv_file(
        "id,t,f1,f2\n"
        "a,0,1.0,2.0\na,1,1.5,2.5\na,2,2.0,3.0\n"
        "b,0,0.0,1.0\nb,1,0.5,1.5\nb,2,1.0,2.0\n"
    )
    ds = load_csv(path, "continuous")

    assert ds.N == 2
    assert ds.K == 2
    assert ds.feature_names == ("f1", "f2")
    assert [s.T for s in ds] == [3, 3]
    assert ds["b"].values[1, 0] == 0.5


def test_empty_cell_is_missing(csv_file):
    path = csv_file("id,t,f1,f2\na,4,1.0,2.0\na,5,,1.0\na,6,3.0,\n")
    ds = load_csv(path, FeatureKind.CONTINUOUS)

    s = ds["a"]
    assert s.start == 4
    assert s.observed[1].tolist() == [False, True]
    assert s.observed[2].tolist() == [True, False]
    assert np.isnan(s.values[1, 0])


def test_rows_are_sorted_by_id_and_t(csv_file):
    path = csv_file("id,t,f1\nb,1,4\na,1,2\nb,0,3\na,0,1\n")
    ds = load_csv(path, "continuous")

    assert ds.ids == ["a", "b"]
    assert ds["a"].values[:, 0].tolist() == [1.0, 2.0]
    assert ds["b"].values[:, 0].tolist() == [3.0, 4.0]


@pytest.mark.parametrize("text, error", [
    ("t,id,f1\n0,a,1\n", MalformedHeader),
    ("id,t\na,0\n", MalformedHeader),
    ("id,t,f1\na,0,abc\n", NonNumericCell),
    ("id,t,f1\na,zero,1\n", NonNumericCell),
    ("id,t,f1\na,0,1\na,2,1\n", NonConsecutiveTime),
])
def test_load_csv_errors(csv_file, text, error):
    with pytest.raises(error):
        load_csv(csv_file(text), "continuous")


def test_binary_domain(csv_file):
    path = csv_file("id,t,f1,f2\na,0,1,0\na,1,2,1\n")
    with pytest.raises(BinaryDomain):
        load_csv(path, "binary")


def test_unknown_kind(csv_file):
    with pytest.raises(DatasetError):
        load_csv(csv_file("id,t,f1\na,0,1\n"), "ordinal")


def test_write_csv_round_trip(csv_file, tmp_path):
    path = csv_file("id,t,f1,f2\na,3,0.1,\na,4,,2.5\nb,0,1e-3,-7\n")
    ds = load_csv(path, "continuous")
    out = tmp_path / "copy.csv"
    write_csv(ds, str(out))

    assert load_csv(str(out), "continuous").equals(ds)


def test_binary_missing_rule():
    values = np.array([[1, np.nan], [np.nan, np.nan], [0, 1]], dtype=float)
    ds = TimeSeriesDataset((_continuous(values),), ("f1", "f2"), FeatureKind.BINARY)

    ruled = apply_binary_missing_rule(ds)
    s = ruled["a"]
    assert s.observed.tolist() == [[True, True], [False, False], [True, True]]
    assert s.values[0].tolist() == [1.0, 0.0]
    assert apply_binary_missing_rule(ruled).equals(ruled)


def test_binary_missing_rule_needs_binary():
    ds = TimeSeriesDataset((_continuous([[1.0]]),), ("f1",), "continuous")
    with pytest.raises(KindMismatch):
        apply_binary_missing_rule(ds)


def test_detrend_removes_linear_trend():
    t = np.arange(40, dtype=float)
    ds = TimeSeriesDataset((_continuous(np.column_stack([t, np.full(40, 3.0)])),), ("trend", "flat"), "continuous")

    out = detrend(ds, window=5)["a"].values
    assert np.allclose(out[2:-2, 0], 0.0)
    assert np.allclose(out[:, 1], 0.0)


def test_detrend_uses_observed_cells_only():
    values = np.array([[1.0], [np.nan], [3.0], [5.0], [7.0]])
    ds = TimeSeriesDataset((_continuous(values),), ("f",), "continuous")

    out = detrend(ds, window=3)["a"]
    assert not out.observed[1, 0]
    # window around t=2 holds observed 3 and 5
    assert out.values[2, 0] == pytest.approx(3.0 - 4.0)


def _windowed_mean(values, observed, t, half):
    lo, hi = max(0, t - half), min(len(values), t + half + 1)
    seen = values[lo:hi][observed[lo:hi]]
    return seen.mean() if len(seen) else 0.0


@pytest.mark.parametrize("T,window", [(5, 15), (1, 3), (14, 15), (30, 7)])
def test_detrend_subtracts_centered_windowed_mean(T, window):
    rng = np.random.default_rng(T)
    values = rng.normal(size=(T, 2)) + np.arange(T)[:, None]
    values[rng.random((T, 2)) < 0.3] = np.nan
    ds = TimeSeriesDataset((_continuous(values),), ("f1", "f2"), "continuous")

    out = detrend(ds, window)["a"]
    assert out.values.shape == (T, 2)
    observed = ~np.isnan(values)
    for k in range(2):
        for t in np.flatnonzero(observed[:, k]):
            expected = values[t, k] - _windowed_mean(values[:, k], observed[:, k], t, window // 2)
            assert out.values[t, k] == pytest.approx(expected)


@pytest.mark.parametrize("window", [1, 4, 14])
def test_detrend_window_must_be_odd(window):
    ds = TimeSeriesDataset((_continuous([[1.0], [2.0]]),), ("f",), "continuous")
    with pytest.raises(WindowError):
        detrend(ds, window)


def test_detrend_rejects_binary():
    ds = TimeSeriesDataset((_continuous([[1.0], [0.0]]),), ("f",), "binary")
    with pytest.raises(KindMismatch):
        detrend(ds, 3)


def test_filter_active():
    busy = _continuous([[1.0], [1.0], [1.0], [np.nan]], sid="busy")
    idle = _continuous([[1.0], [np.nan], [np.nan], [np.nan]], sid="idle")
    ds = TimeSeriesDataset((busy, idle), ("f",), "continuous")

    assert filter_active(ds, 0.5).ids == ["busy"]
    with pytest.raises(DatasetError):
        filter_active(ds, 1.0)


def test_dataset_invariants():
    a = _continuous([[1.0, 2.0]])
    with pytest.raises(DatasetError):
        TimeSeriesDataset((a, a), ("f1", "f2"), "continuous")
    with pytest.raises(DatasetError):
        TimeSeriesDataset((a,), ("f1",), "continuous")
    with pytest.raises(DatasetError):
        TimeSeriesDataset((), ("f1",), "continuous")


def test_summary_counts_missing():
    ds = TimeSeriesDataset((_continuous([[1.0, np.nan], [np.nan, np.nan]]),), ("f1", "f2"), "continuous")
    summary = ds.summary()

    assert summary["observations"] == 1
    assert summary["missing_fraction"] == pytest.approx(0.75)
