"""Windowing, resampling and alignment of the dual-rate streams, plus CSV persistence.

The F/T stream is smoothed with a trailing moving average and linearly
resampled onto the Hall timestamps of the taxel being calibrated. Rows whose
Hall timestamp falls outside the smoothed F/T span are dropped rather than
extrapolated.

CSV formats (UTF-8, LF line endings, floats written with ``repr`` so they
round-trip exactly):

* raw log: ``t,stream,taxel,x,y,z`` with ``stream`` in {hall, ft}; ``taxel``
  is empty on ft rows. Hall values are mT, ft values N.
* aligned dataset: ``taxel,bx,by,bz,fx,fy,fz``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from taxcal.rig import RawLog
from taxcal.sensor import FtSample, HallSample

RAW_HEADER = ["t", "stream", "taxel", "x", "y", "z"]
ALIGNED_HEADER = ["taxel", "bx", "by", "bz", "fx", "fy", "fz"]
MIN_ROWS = 40  # twice the 20 degree-3 features


class CsvFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None, path=None):
        prefix = f"{path}:" if path is not None else ""
        prefix += f"line {line}: " if line is not None else (" " if prefix else "")
        super().__init__(prefix + message)
        self.line = line


class OutOfRangeError(ValueError):
    def __init__(self, t: float, lo: float, hi: float):
        super().__init__(f"target timestamp {t!r} lies outside the source span [{lo!r}, {hi!r}]")
        self.timestamp = t


class NoOverlapError(ValueError):
    pass


@dataclass(frozen=True)
class TimeSeries:
    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=float).reshape(-1)
        v = np.asarray(self.values, dtype=float)
        v = v.reshape(t.size, -1) if v.ndim == 1 else v
        if v.ndim != 2 or v.shape[0] != t.size:
            raise ValueError("values must have one row per timestamp")
        if np.any(np.diff(t) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise ValueError("time series must be finite")
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.timestamps.size


def moving_average(s: TimeSeries, window: int) -> TimeSeries:
    """Trailing mean over ``window`` samples, stamped at each window's last sample."""
    if window < 1:
        raise ValueError("window must be >= 1")
    if len(s) < window:
        raise ValueError(f"series of length {len(s)} is shorter than the window {window}")
    if window == 1:
        return s
    windows = np.lib.stride_tricks.sliding_window_view(s.values, window, axis=0)
    return TimeSeries(s.timestamps[window - 1:], windows.mean(axis=-1))


def resample_linear(s: TimeSeries, target_timestamps) -> TimeSeries:
    """Componentwise linear interpolation onto ``target_timestamps``; never extrapolates."""
    target = np.asarray(target_timestamps, dtype=float).reshape(-1)
    if target.size == 0:
        return TimeSeries(target, np.zeros((0, s.values.shape[1])))
    lo, hi = s.timestamps[0], s.timestamps[-1]
    bad = np.flatnonzero((target < lo) | (target > hi))
    if bad.size:
        raise OutOfRangeError(float(target[bad[0]]), float(lo), float(hi))
    out = np.column_stack([np.interp(target, s.timestamps, s.values[:, c]) for c in range(s.values.shape[1])])
    return TimeSeries(target, out)


@dataclass(frozen=True)
class AlignedDataset:
    """Paired (B [mT], F [N]) rows for one taxel, in time order."""

    taxel: int
    b: np.ndarray
    f: np.ndarray
    t: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float).reshape(-1, 3)
        f = np.asarray(self.f, dtype=float).reshape(-1, 3)
        if b.shape != f.shape:
            raise ValueError("b and f must have the same number of rows")
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(f))):
            raise ValueError("aligned dataset must not contain NaN or infinite values")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "f", f)
        if self.t is not None:
            object.__setattr__(self, "t", np.asarray(self.t, dtype=float).reshape(-1))

    def __len__(self) -> int:
        return self.b.shape[0]

    def subset(self, idx) -> AlignedDataset:
        t = None if self.t is None else self.t[idx]
        return AlignedDataset(self.taxel, self.b[idx], self.f[idx], t, dict(self.meta))

    def check_size(self, minimum: int = MIN_ROWS) -> None:
        if len(self) < minimum:
            raise ValueError(f"taxel {self.taxel}: {len(self)} aligned rows, need at least {minimum} "
                             f"(short by {minimum - len(self)})")


def align(hall: TimeSeries, ft: TimeSeries, window: int = 100, taxel: int = 0) -> AlignedDataset:
    """Smooth ``ft`` with a ``window``-sample trailing mean and resample it onto ``hall`` timestamps."""
    smoothed = moving_average(ft, window)
    lo, hi = smoothed.timestamps[0], smoothed.timestamps[-1]
    keep = (hall.timestamps >= lo) & (hall.timestamps <= hi)
    if not np.any(keep):
        raise NoOverlapError(f"taxel {taxel}: Hall and smoothed F/T streams do not overlap in time")
    t = hall.timestamps[keep]
    labels = resample_linear(smoothed, t)
    meta = {
        "window": window,
        "hall_rate": _rate(hall.timestamps),
        "ft_rate": _rate(ft.timestamps),
        "t_start": float(t[0]),
        "t_end": float(t[-1]),
    }
    return AlignedDataset(taxel, hall.values[keep], labels.values, t, meta)


def _rate(t: np.ndarray) -> float:
    return float((t.size - 1) / (t[-1] - t[0])) if t.size > 1 else float("nan")


def hall_series(log: RawLog, taxel: int) -> TimeSeries:
    rows = [s for s in log.hall if s.taxel == taxel]
    return TimeSeries(np.array([s.t for s in rows]), np.array([s.b for s in rows]).reshape(-1, 3))


def ft_series(log: RawLog) -> TimeSeries:
    return TimeSeries(np.array([s.t for s in log.ft]), np.array([s.f for s in log.ft]).reshape(-1, 3))


def align_log(log: RawLog, window: int = 100) -> dict[int, AlignedDataset]:
    """Aligned dataset per recorded taxel, keyed and ordered by taxel id."""
    ft = ft_series(log)
    return {taxel: align(hall_series(log, taxel), ft, window, taxel) for taxel in log.taxels}


# CSV ------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def _write_rows(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_raw_log(log: RawLog, path) -> None:
    """Write samples merged in time order (ft before hall on equal timestamps)."""
    rows = [(s.t, 0, "", "ft", s.f) for s in log.ft] + [(s.t, 1, s.taxel, "hall", s.b) for s in log.hall]
    rows.sort(key=lambda r: (r[0], r[1], -1 if r[2] == "" else r[2]))
    _write_rows(path, RAW_HEADER,
                ([_fmt(t), stream, str(taxel), _fmt(v[0]), _fmt(v[1]), _fmt(v[2])]
                 for t, _, taxel, stream, v in rows))


def _read_csv(path, header):
    text = Path(path).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text))
    try:
        first = next(reader)
    except StopIteration:
        raise CsvFormatError("empty file, expected a header", 1, path) from None
    if first != header:
        raise CsvFormatError(f"expected header {','.join(header)!r}, got {','.join(first)!r}", 1, path)
    for row in reader:
        if len(row) != len(header):
            raise CsvFormatError(f"expected {len(header)} columns, got {len(row)}", reader.line_num, path)
        yield reader.line_num, row


def read_raw_log(path) -> RawLog:
    log = RawLog()
    for line, row in _read_csv(path, RAW_HEADER):
        try:
            t = float(row[0])
            v = np.array([float(row[3]), float(row[4]), float(row[5])])
        except ValueError as exc:
            raise CsvFormatError(str(exc), line, path) from None
        if row[1] == "ft":
            if row[2] != "":
                raise CsvFormatError("ft rows must leave the taxel column empty", line, path)
            log.ft.append(FtSample(t, v))
        elif row[1] == "hall":
            try:
                taxel = int(row[2])
            except ValueError:
                raise CsvFormatError(f"invalid taxel id {row[2]!r}", line, path) from None
            log.hall.append(HallSample(t, taxel, v))
        else:
            raise CsvFormatError(f"unknown stream {row[1]!r}", line, path)
    return log


def write_dataset_csv(datasets, path) -> None:
    """Write one or more aligned datasets (a single dataset, a list, or a {taxel: ds} dict)."""
    if isinstance(datasets, AlignedDataset):
        datasets = [datasets]
    elif isinstance(datasets, dict):
        datasets = [datasets[k] for k in sorted(datasets)]
    rows = []
    for ds in datasets:
        for b, f in zip(ds.b, ds.f):
            rows.append([str(ds.taxel), *map(_fmt, b), *map(_fmt, f)])
    _write_rows(path, ALIGNED_HEADER, rows)


def read_dataset_csv(path) -> dict[int, AlignedDataset]:
    by_taxel: dict[int, tuple[list, list]] = {}
    for line, row in _read_csv(path, ALIGNED_HEADER):
        try:
            taxel = int(row[0])
            vals = [float(x) for x in row[1:]]
        except ValueError as exc:
            raise CsvFormatError(str(exc), line, path) from None
        bs, fs = by_taxel.setdefault(taxel, ([], []))
        bs.append(vals[:3])
        fs.append(vals[3:])
    return {k: AlignedDataset(k, np.array(b).reshape(-1, 3), np.array(f).reshape(-1, 3))
            for k, (b, f) in sorted(by_taxel.items())}
