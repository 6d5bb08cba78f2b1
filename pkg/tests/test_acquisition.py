import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taxcal.acquisition import (AlignedDataset, CsvFormatError, NoOverlapError, OutOfRangeError, TimeSeries, align,
                                align_log, moving_average, read_dataset_csv, read_raw_log, resample_linear,
                                write_dataset_csv, write_raw_log)
from taxcal.rig import RawLog
from taxcal.sensor import FtSample, HallSample


def ts(t, v):
    return TimeSeries(np.asarray(t, float), np.asarray(v, float))


@settings(max_examples=50)
@given(st.integers(1, 30), st.integers(0, 2**32 - 1))
def test_moving_average_matches_cumsum(window, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(60, 3))
    out = moving_average(ts(np.arange(60.0), v), window)
    c = np.vstack([np.zeros(3), np.cumsum(v, axis=0)])
    assert np.allclose(out.values, (c[window:] - c[:-window]) / window, atol=1e-12)
    assert out.timestamps[0] == window - 1


def test_moving_average_errors():
    with pytest.raises(ValueError):
        moving_average(ts([0, 1], [[0, 0, 0], [1, 1, 1]]), 3)
    with pytest.raises(ValueError):
        moving_average(ts([0, 1], [[0, 0, 0], [1, 1, 1]]), 0)


def test_resample_never_extrapolates():
    s = ts([0, 1, 2], [[0, 0, 0], [1, 1, 1], [2, 2, 2]])
    assert np.allclose(resample_linear(s, [0, 0.5, 2]).values[:, 0], [0, 0.5, 2])
    with pytest.raises(OutOfRangeError) as exc:
        resample_linear(s, [0.5, 2.5])
    assert exc.value.timestamp == 2.5


def test_timeseries_validation():
    with pytest.raises(ValueError):
        ts([0, 0], [[0, 0, 0], [0, 0, 0]])
    with pytest.raises(ValueError):
        ts([0, 1], [[0, np.nan, 0], [0, 0, 0]])


def test_align_labels_and_overlap():
    ft_t = np.arange(0, 5, 1 / 416.7)
    ft = ts(ft_t, np.column_stack([ft_t, 2 * ft_t, np.ones_like(ft_t)]))
    hall_t = np.arange(0, 501) / 100
    ds = align(ts(hall_t, np.zeros((501, 3))), ft, 100, taxel=3)
    # trailing mean of a ramp lags it by half the window span
    lag = 99 / 2 / 416.7
    assert np.allclose(ds.f[:, 0], ds.t - lag, atol=1e-12)
    assert ds.taxel == 3 and ds.meta["window"] == 100
    with pytest.raises(NoOverlapError):
        align(ts(hall_t + 100, np.zeros((501, 3))), ft, 100)


def test_align_log_no_nan():
    ft = [FtSample(i / 416.7, np.array([0, 0, -float(i % 7)])) for i in range(2000)]
    hall = [HallSample(j / 100, 2, np.array([j, 0, 1.0])) for j in range(480)]
    ds = align_log(RawLog(hall, ft))
    assert list(ds) == [2] and np.all(np.isfinite(ds[2].f))


def test_raw_log_round_trip(tmp_path):
    log = RawLog([HallSample(0.01, 1, np.array([0.1, 0.2, 1 / 3]))],
                 [FtSample(0.0, np.array([1e-17, -2.0, 3.5])), FtSample(0.01, np.array([0, 0, 1.0]))])
    p = tmp_path / "raw.csv"
    write_raw_log(log, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "t,stream,taxel,x,y,z"
    assert lines[2].split(",")[1] == "ft" and lines[3].split(",")[1] == "hall"  # ft first on equal t
    back = read_raw_log(p)
    assert np.array_equal(back.hall[0].b, log.hall[0].b)
    assert np.array_equal(back.ft[0].f, log.ft[0].f)


@pytest.mark.parametrize("body,line", [
    ("t,stream,taxel,x,y,z\n0,ft,,1,2\n", 2),
    ("t,stream,taxel,x,y,z\n0,ft,,1,2,3\n0.1,imu,,1,2,3\n", 3),
    ("t,stream,taxel,x,y,z\n0,hall,a,1,2,3\n", 2),
    ("time,stream\n", 1),
])
def test_raw_log_errors_report_line(tmp_path, body, line):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(CsvFormatError) as exc:
        read_raw_log(p)
    assert exc.value.line == line


def test_dataset_csv_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    sets = {k: AlignedDataset(k, rng.normal(size=(5, 3)), rng.normal(size=(5, 3))) for k in (3, 0)}
    p = tmp_path / "aligned.csv"
    write_dataset_csv(sets, p)
    back = read_dataset_csv(p)
    assert list(back) == [0, 3]
    assert all(np.array_equal(back[k].b, sets[k].b) and np.array_equal(back[k].f, sets[k].f) for k in sets)


def test_aligned_dataset_rejects_nan_and_small():
    with pytest.raises(ValueError):
        AlignedDataset(0, [[np.nan, 0, 0]], [[0, 0, 0]])
    ds = AlignedDataset(1, np.zeros((10, 3)), np.zeros((10, 3)))
    with pytest.raises(ValueError, match="short by 30"):
        ds.check_size()
