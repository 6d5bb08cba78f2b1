"""Degree-3 polynomial least-squares calibration, metrics and the model file.

Feature ordering: every monomial ``bx**i * by**j * bz**k`` with
``i + j + k <= 3``, sorted by total degree, then by ``(i, j, k)`` in
descending lexicographic order, so degree 1 reads ``bx, by, bz``. Index 0 is
the constant term. The field is standardized per taxel with train-set mean
and standard deviation before expansion.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np

from taxcal.acquisition import MIN_ROWS, AlignedDataset

DEGREE = 3
FEATURE_ORDERING = "poly3-graded-lex-ijk-v1"
FORMAT_VERSION = 1


def monomial_exponents(degree: int = DEGREE) -> list[tuple[int, int, int]]:
    exps = [e for e in product(range(degree + 1), repeat=3) if sum(e) <= degree]
    return sorted(exps, key=lambda e: (sum(e), tuple(-x for x in e)))


EXPONENTS = monomial_exponents()
N_FEATURES = len(EXPONENTS)


def poly_features(b) -> np.ndarray:
    """Degree-3 monomials of one field vector (shape (20,)) or of an (n, 3) batch (shape (n, 20))."""
    b = np.asarray(b, dtype=float)
    single = b.ndim == 1
    b = b.reshape(-1, 3)
    if not np.all(np.isfinite(b)):
        raise ValueError("field values must be finite")
    x, y, z = b[:, 0], b[:, 1], b[:, 2]
    x2, y2, z2 = x * x, y * y, z * z
    one = np.ones_like(x)
    out = np.column_stack([
        one,
        x, y, z,
        x2, x * y, x * z, y2, y * z, z2,
        x2 * x, x2 * y, x2 * z, x * y2, x * y * z, x * z2, y2 * y, y2 * z, y * z2, z2 * z,
    ])
    return out[0] if single else out


@dataclass(frozen=True)
class Metrics:
    r2: float
    mse: float
    r2_per_component: np.ndarray
    mse_per_component: np.ndarray
    n: int
    r2_defined: bool = True

    def as_dict(self) -> dict:
        def clean(v):
            return None if not np.isfinite(v) else float(v)
        return {
            "r2": clean(self.r2),
            "mse": float(self.mse),
            "r2_per_component": [clean(v) for v in self.r2_per_component],
            "mse_per_component": [float(v) for v in self.mse_per_component],
            "n": int(self.n),
            "r2_defined": bool(self.r2_defined),
        }

    @classmethod
    def from_dict(cls, d: dict) -> Metrics:
        def val(v):
            return float("nan") if v is None else float(v)
        return cls(val(d["r2"]), float(d["mse"]), np.array([val(v) for v in d["r2_per_component"]]),
                   np.array(d["mse_per_component"], dtype=float), int(d["n"]), bool(d["r2_defined"]))


@dataclass(frozen=True)
class TaxelModel:
    taxel: int
    weights: np.ndarray  # (20, 3)
    mean: np.ndarray
    scale: np.ndarray
    degree: int = DEGREE
    feature_ordering: str = FEATURE_ORDERING
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (N_FEATURES, 3) or not np.all(np.isfinite(w)):
            raise ValueError(f"weights must be a finite ({N_FEATURES}, 3) matrix")
        if self.degree != DEGREE or self.feature_ordering != FEATURE_ORDERING:
            raise ValueError(f"unsupported feature contract degree={self.degree} ordering={self.feature_ordering!r}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float).reshape(3))
        object.__setattr__(self, "scale", np.asarray(self.scale, dtype=float).reshape(3))

    def standardize(self, b) -> np.ndarray:
        return (np.asarray(b, dtype=float) - self.mean) / self.scale


@dataclass(frozen=True)
class CalibrationModel:
    taxels: dict[int, TaxelModel]
    fingerprint: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for k, m in self.taxels.items():
            if k != m.taxel:
                raise ValueError(f"taxel key {k} does not match model taxel {m.taxel}")

    def __getitem__(self, taxel: int) -> TaxelModel:
        return self.taxels[taxel]


class CalibrationError(ValueError):
    def __init__(self, taxel, message):
        super().__init__(f"taxel {taxel}: {message}")
        self.taxel = taxel


class ModelFileError(ValueError):
    pass


class ModelVersionError(ModelFileError):
    pass


class ModelChecksumError(ModelFileError):
    pass


def split(n_rows: int, test_fraction: float = 0.2, seed=0, mode: str = "row", block: int = 100):
    """Random train/test partition of ``range(n_rows)``; returns sorted index arrays.

    ``mode="row"`` shuffles single rows. ``mode="block"`` shuffles contiguous
    blocks of ``block`` rows, which keeps neighbouring (correlated) rows on
    the same side of the split.
    """
    if isinstance(n_rows, AlignedDataset):
        n_rows = len(n_rows)
    if n_rows < 5:
        raise ValueError(f"need at least 5 rows to split, got {n_rows}")
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    n_test = int(np.floor(test_fraction * n_rows + 0.5))
    if mode == "row":
        order = rng.permutation(n_rows)
    elif mode == "block":
        starts = np.arange(0, n_rows, block)
        order = np.concatenate([np.arange(s, min(s + block, n_rows)) for s in rng.permutation(starts)])
    else:
        raise ValueError(f"unknown split mode {mode!r}")
    return np.sort(order[n_test:]), np.sort(order[:n_test])


def fit_least_squares(features, targets) -> np.ndarray:
    """Minimum-norm least-squares solution of ``features @ W ~= targets`` (SVD based)."""
    x = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("features and targets must be finite")
    if x.shape[0] != y.shape[0]:
        raise ValueError("features and targets must have the same number of rows")
    if x.shape[0] < x.shape[1]:
        raise ValueError(f"need at least {x.shape[1]} rows, got {x.shape[0]}")
    w, *_ = np.linalg.lstsq(x, y, rcond=None)
    return w


def predict_batch(model: TaxelModel, b) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    return poly_features(model.standardize(b)) @ model.weights


def evaluate(model: TaxelModel, rows: AlignedDataset) -> Metrics:
    """Pooled and per-component R^2 and MSE of ``model`` on ``rows``."""
    if len(rows) == 0:
        raise ValueError("cannot evaluate on an empty test set")
    return score(rows.f, predict_batch(model, rows.b))


def score(truth, pred) -> Metrics:
    truth = np.asarray(truth, dtype=float).reshape(-1, 3)
    pred = np.asarray(pred, dtype=float).reshape(-1, 3)
    err = pred - truth
    ss_res = np.sum(err**2, axis=0)
    ss_tot = np.sum((truth - truth.mean(axis=0)) ** 2, axis=0)
    mse_c = ss_res / truth.shape[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        r2_c = np.where(ss_tot > 0, 1.0 - ss_res / ss_tot, np.nan)
    defined = bool(ss_tot.sum() > 0)
    r2 = 1.0 - ss_res.sum() / ss_tot.sum() if defined else float("nan")
    return Metrics(float(r2), float(mse_c.mean()), r2_c, mse_c, truth.shape[0], defined)


def fit_taxel(ds: AlignedDataset, seed, test_fraction: float = 0.2, split_mode: str = "row"):
    """Split, standardize, fit and score one taxel; returns ``(TaxelModel, Metrics)``."""
    try:
        ds.check_size(MIN_ROWS)
        train_idx, test_idx = split(len(ds), test_fraction, seed, split_mode)
        train, test = ds.subset(train_idx), ds.subset(test_idx)
        mean = train.b.mean(axis=0)
        scale = train.b.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        w = fit_least_squares(poly_features((train.b - mean) / scale), train.f)
        meta = {"n_train": len(train), "n_test": len(test), "seed": _seed_repr(seed),
                "split_mode": split_mode, "test_fraction": test_fraction, "rows_sha256": dataset_digest(ds)}
        model = TaxelModel(ds.taxel, w, mean, scale, meta=meta)
        return model, evaluate(model, test)
    except ValueError as exc:
        if isinstance(exc, CalibrationError):
            raise
        raise CalibrationError(ds.taxel, str(exc).removeprefix(f"taxel {ds.taxel}: ")) from exc


def _seed_repr(seed):
    return list(seed) if isinstance(seed, (list, tuple)) else seed


def taxel_seed(master_seed: int, taxel: int) -> list[int]:
    return [int(master_seed), int(taxel)]


def dataset_digest(ds: AlignedDataset) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(ds.b).tobytes())
    h.update(np.ascontiguousarray(ds.f).tobytes())
    return h.hexdigest()


def calibrate(datasets, seed: int = 0, test_fraction: float = 0.2, split_mode: str = "row",
              workers: int = 1, fingerprint: str = ""):
    """Fit one model per taxel. Returns ``(CalibrationModel, {taxel: Metrics})`` sorted by taxel."""
    if isinstance(datasets, dict):
        items = sorted(datasets.items())
    else:
        items = sorted((ds.taxel, ds) for ds in datasets)
    if len({k for k, _ in items}) != len(items):
        raise ValueError("duplicate taxel ids in calibration input")

    def job(item):
        taxel, ds = item
        return fit_taxel(ds, taxel_seed(seed, taxel), test_fraction, split_mode)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(job, items))
    else:
        results = [job(it) for it in items]
    models = {k: r[0] for (k, _), r in zip(items, results)}
    metrics = {k: r[1] for (k, _), r in zip(items, results)}
    meta = {"seed": int(seed), "test_fraction": test_fraction, "split_mode": split_mode}
    return CalibrationModel(models, fingerprint, meta), metrics


def format_report(metrics: dict[int, Metrics]) -> str:
    """Per-taxel test scores in the layout of the published table, with an Average row."""
    lines = ["Test scores for each taxel", f"{'Taxel':<8}{'R²':>9}{'MSE [N²]':>13}", "-" * 30]
    r2s, mses = [], []
    for taxel in sorted(metrics):
        m = metrics[taxel]
        lines.append(f"{taxel:<8}{_num(m.r2):>9}{_num(m.mse):>13}")
        r2s.append(m.r2)
        mses.append(m.mse)
    lines.append("-" * 30)
    lines.append(f"{'Average':<8}{_num(np.mean(r2s)):>9}{_num(np.mean(mses)):>13}")
    return "\n".join(lines) + "\n"


def _num(v: float) -> str:
    return "n/a" if not np.isfinite(v) else f"{v:.5f}"


# model file -------------------------------------------------------------------

def _canonical(payload: dict) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False).encode()


def model_to_dict(model: CalibrationModel, metrics: dict[int, Metrics] | None = None) -> dict:
    taxels = []
    for k in sorted(model.taxels):
        m = model.taxels[k]
        entry = {
            "taxel": k,
            "mean": m.mean.tolist(),
            "scale": m.scale.tolist(),
            "weights": m.weights.reshape(-1).tolist(),
            "meta": m.meta,
        }
        if metrics and k in metrics:
            entry["metrics"] = metrics[k].as_dict()
        taxels.append(entry)
    return {
        "format_version": FORMAT_VERSION,
        "feature_ordering": FEATURE_ORDERING,
        "degree": DEGREE,
        "fingerprint": model.fingerprint,
        "meta": model.meta,
        "taxels": taxels,
    }


def save_model(model: CalibrationModel, path, metrics: dict[int, Metrics] | None = None) -> None:
    payload = model_to_dict(model, metrics)
    payload["checksum"] = "sha256:" + hashlib.sha256(_canonical(payload)).hexdigest()
    text = json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n"
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def load_model(path, with_metrics: bool = False):
    """Load and verify a model file; optionally also return the stored metrics."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        if '"checksum": "sha256:' in text[:200]:
            raise ModelChecksumError(f"{path}: checksum verification failed (file truncated or corrupted)") from exc
        raise ModelFileError(f"{path}: malformed model file: {exc}") from exc
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise ModelFileError(f"{path}: not a taxcal model file")
    if payload["format_version"] != FORMAT_VERSION:
        raise ModelVersionError(f"{path}: unsupported format_version {payload['format_version']!r} "
                                f"(this build reads version {FORMAT_VERSION})")
    stored = payload.pop("checksum", None)
    actual = "sha256:" + hashlib.sha256(_canonical(payload)).hexdigest()
    if stored != actual:
        raise ModelChecksumError(f"{path}: checksum verification failed")
    if payload.get("feature_ordering") != FEATURE_ORDERING or payload.get("degree") != DEGREE:
        raise ModelFileError(f"{path}: incompatible feature ordering {payload.get('feature_ordering')!r}")
    taxels, metrics = {}, {}
    for e in payload["taxels"]:
        k = int(e["taxel"])
        if k in taxels:
            raise ModelFileError(f"{path}: duplicate taxel {k}")
        w = np.array(e["weights"], dtype=float).reshape(N_FEATURES, 3)
        taxels[k] = TaxelModel(k, w, e["mean"], e["scale"], meta=e.get("meta", {}))
        if "metrics" in e:
            metrics[k] = Metrics.from_dict(e["metrics"])
    model = CalibrationModel(taxels, payload.get("fingerprint", ""), payload.get("meta", {}))
    return (model, metrics) if with_metrics else model
