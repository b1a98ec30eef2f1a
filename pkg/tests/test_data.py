import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtpnet.data import (
    NORM_EPS,
    DataError,
    RawSeries,
    denormalize,
    load_csv,
    normalize,
    prepare,
    split,
    synth_multiseasonal,
    windows,
    write_csv,
)


def write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_small_file(tmp_path):
    raw = load_csv(write(tmp_path, "date,a,b\n2020-01-01 00:00:00,1,2\n2020-01-01 01:00:00,3,4\n"
                                   "2020-01-01 02:00:00,5,6.5\n"))
    assert raw.values.shape == (3, 2)
    assert raw.columns == ["a", "b"]
    assert raw.values[2, 1] == 6.5


def test_integer_index_column(tmp_path):
    raw = load_csv(write(tmp_path, "t,x\n0,1\n1,2\n5,3\n"))
    assert raw.timestamps == [0, 1, 5]


def test_ett_style_header(tmp_path):
    header = "date,HUFL,HULL,MUFL,MULL,LUFL,LULL,OT\n"
    rows = "".join(f"2016-07-01 {h:02d}:00:00," + ",".join(["1.0"] * 7) + "\n" for h in range(4))
    assert load_csv(write(tmp_path, header + rows)).values.shape == (4, 7)


@pytest.mark.parametrize("cell", ["abc", "", "nan", "inf"])
def test_bad_cell_names_row_and_column(tmp_path, cell):
    path = write(tmp_path, f"date,a,b\n0,1,2\n1,3,{cell}\n")
    with pytest.raises(DataError, match=r"row 2, column 'b'"):
        load_csv(path)


def test_timestamps_must_increase(tmp_path):
    with pytest.raises(DataError, match="row 3"):
        load_csv(write(tmp_path, "t,x\n0,1\n2,2\n2,3\n"))
    with pytest.raises(DataError):
        load_csv(write(tmp_path, "t,x\n0,1\n1\n"))
    with pytest.raises(DataError):
        load_csv(write(tmp_path, ""))


def test_csv_round_trip(tmp_path):
    raw = synth_multiseasonal(200, 2, (24,), noise_std=0.1, seed=3)
    path = tmp_path / "s.csv"
    write_csv(raw, path)
    back = load_csv(path)
    assert back.timestamps == raw.timestamps
    assert np.array_equal(back.values, raw.values)


@pytest.mark.parametrize(
    "total,ratios,sizes",
    [(10, (0.6, 0.2, 0.2), (6, 2, 2)), (10, (0.7, 0.1, 0.2), (7, 1, 2)), (17420, (0.6, 0.2, 0.2), (10452, 3484, 3484))],
)
def test_split_sizes(total, ratios, sizes):
    assert split(np.zeros((total, 1)), ratios).sizes() == sizes


def test_split_errors():
    with pytest.raises(ValueError):
        split(np.zeros((10, 1)), (0.5, 0.2, 0.2))
    with pytest.raises(ValueError):
        split(np.zeros((10, 1)), (0.6, 0.2, 0.2), min_len=3)


def test_normalize_examples():
    values = np.array([[3.0], [7.0], [3.0], [7.0]] + [[9.0]] * 6)
    bundle = split(values, (0.4, 0.3, 0.3))
    assert bundle.mean[0] == 5.0 and bundle.std[0] == 2.0
    assert abs(normalize(np.array([[9.0]]), bundle)[0, 0] - 2.0) < 1e-8
    flat = split(np.full((10, 1), 4.0))
    assert np.all(normalize(np.full((10, 1), 4.0), flat) == 0.0)
    x = np.random.default_rng(0).normal(size=(20, 3)) * 5 + 1
    b = split(x)
    np.testing.assert_allclose(denormalize(normalize(x, b), b), x, atol=1e-9)
    assert NORM_EPS == 1e-8


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 999))
def test_statistics_ignore_validation_and_test_rows(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(50, 2))
    before = split(x)
    x[30:] = rng.normal(size=(20, 2)) * 100
    after = split(x)
    assert np.array_equal(before.mean, after.mean) and np.array_equal(before.std, after.std)
    assert before.train[1] == before.val[0] and before.val[1] == before.test[0]


def test_window_examples():
    v = np.arange(20, dtype=float).reshape(10, 2)
    assert len(windows(v, (0, 10), 4, 2)) == 5
    assert len(windows(v, (0, 6), 4, 2)) == 1
    with pytest.raises(ValueError):
        windows(v, (0, 5), 4, 2)
    w = windows(v, (2, 10), 3, 2)[1]
    assert w.origin == 3
    assert np.array_equal(w.input, v[3:6]) and np.array_equal(w.target, v[6:8])


@settings(max_examples=100, deadline=None)
@given(length=st.integers(2, 40), lookback=st.integers(1, 10), horizon=st.integers(1, 10),
       stride=st.integers(1, 5), offset=st.integers(0, 5))
def test_window_count_and_reassembly(length, lookback, horizon, stride, offset):
    v = np.arange(2 * (length + offset), dtype=float).reshape(-1, 2)
    span = (offset, offset + length)
    if length < lookback + horizon:
        with pytest.raises(ValueError):
            windows(v, span, lookback, horizon, stride)
        return
    w = windows(v, span, lookback, horizon, stride)
    assert len(w) == (length - lookback - horizon) // stride + 1
    for i in range(len(w)):
        item = w[i]
        block = np.vstack([item.input, item.target])
        assert np.array_equal(block, v[item.origin : item.origin + lookback + horizon])
        assert item.origin >= offset and item.origin + lookback + horizon <= offset + length


def test_synthetic_constructions():
    periodic = synth_multiseasonal(96, 2, (24,), seed=1).values
    np.testing.assert_allclose(periodic[24:], periodic[:-24], atol=1e-12)
    line = synth_multiseasonal(100, 1, (10,), amplitudes=(0.0,), trend_slope=0.5, seed=2).values[:, 0]
    np.testing.assert_allclose(line, 0.5 * np.arange(100), atol=1e-12)
    with pytest.raises(ValueError):
        synth_multiseasonal(100, 1, (96,))


def test_synthetic_spectrum_peaks_at_both_periods():
    length = 960
    col = synth_multiseasonal(length, 1, (24, 96), seed=4).values[:, 0]
    # plain DFT, no FFT routine
    t = np.arange(length)
    freqs = np.arange(1, length // 2)
    mags = np.abs(np.exp(-2j * np.pi * np.outer(freqs, t) / length) @ col)
    top = set(freqs[np.argsort(mags)[-2:]])
    assert top == {length // 24, length // 96}


def test_synthetic_is_seeded():
    a = synth_multiseasonal(300, 3, noise_std=0.3, seed=5)
    b = synth_multiseasonal(300, 3, noise_std=0.3, seed=5)
    assert np.array_equal(a.values, b.values)
    assert a.columns == ["x0", "x1", "x2"]


def test_prepare_uses_train_statistics_for_all_splits():
    raw = synth_multiseasonal(600, 2, (24, 96), trend_slope=0.01, seed=6)
    d = prepare(raw, 48, 24, train_stride=2, eval_stride=3)
    np.testing.assert_allclose(d.normalized[: d.bundle.train[1]].mean(axis=0), 0.0, atol=1e-9)
    assert d.normalized[d.bundle.test[0] :].mean() > 1.0  # the trend keeps rising after the train rows
    assert len(d.train) == (360 - 72) // 2 + 1
    assert len(d.val) == (120 - 72) // 3 + 1


def test_raw_series_head():
    raw = RawSeries(list(range(5)), np.arange(10.0).reshape(5, 2), ["a", "b"])
    assert len(raw.head(3)) == 3 and raw.head(3).timestamps == [0, 1, 2]
