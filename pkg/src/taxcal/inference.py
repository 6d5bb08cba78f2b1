"""Runtime force estimation from live Hall samples."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from taxcal.calibration import CalibrationModel, TaxelModel, poly_features


@dataclass(frozen=True, slots=True)
class ForceEstimate:
    t: float
    taxel: int
    f: np.ndarray


@dataclass(frozen=True, slots=True)
class StreamError:
    t: float
    taxel: int
    message: str


def predict(model: TaxelModel, b) -> np.ndarray:
    """Force [N] for one field reading (3,) or a batch (n, 3) [mT]."""
    b = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(b)):
        raise ValueError("field reading must be finite")
    return poly_features(model.standardize(b)) @ model.weights


def run_stream(model: CalibrationModel, samples: Iterable, tare: int = 0) -> Iterator[ForceEstimate | StreamError]:
    """Convert HallSamples into ForceEstimates one by one.

    With ``tare > 0`` the first ``tare`` samples of each taxel are held back,
    their mean prediction is taken as that taxel's rest offset, and every
    estimate of the taxel (held-back ones included) is reported with the
    offset subtracted. Memory stays bounded by ``tare`` samples per taxel.
    Samples for taxels the model does not cover produce a StreamError and the
    stream continues.
    """
    offsets: dict[int, np.ndarray] = {}
    pending: dict[int, deque] = {}
    for s in samples:
        taxel = s.taxel
        if taxel not in model.taxels:
            yield StreamError(s.t, taxel, f"no calibration for taxel {taxel}")
            continue
        try:
            f = predict(model.taxels[taxel], s.b)
        except ValueError as exc:
            yield StreamError(s.t, taxel, str(exc))
            continue
        if tare <= 0:
            yield ForceEstimate(s.t, taxel, f)
        elif taxel in offsets:
            yield ForceEstimate(s.t, taxel, f - offsets[taxel])
        else:
            buf = pending.setdefault(taxel, deque())
            buf.append((s.t, f))
            if len(buf) == tare:
                yield from _flush(taxel, buf, offsets)
                del pending[taxel]
    for taxel, buf in sorted(pending.items()):
        yield from _flush(taxel, buf, offsets)


def _flush(taxel, buf, offsets):
    offsets[taxel] = np.mean([f for _, f in buf], axis=0)
    for t, f in buf:
        yield ForceEstimate(t, taxel, f - offsets[taxel])
