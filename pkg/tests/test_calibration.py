import json
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taxcal.acquisition import AlignedDataset
from taxcal.calibration import (EXPONENTS, CalibrationError, ModelChecksumError, ModelFileError, ModelVersionError,
                                calibrate, fit_least_squares, format_report, load_model, poly_features, save_model,
                                score, split)
from taxcal.inference import predict


def planted_dataset(taxel=0, n=500, seed=0, noise=0.0):
    rng = np.random.default_rng(seed)
    b = rng.normal([0.5, -0.3, 4.0], [0.4, 0.4, 1.0], size=(n, 3))
    w = rng.normal(size=(20, 3))
    z = (b - b.mean(axis=0)) / b.std(axis=0)
    f = poly_features(z) @ w + noise * rng.normal(size=(n, 3))
    return AlignedDataset(taxel, b, f)


def test_exponent_order():
    assert EXPONENTS[:4] == [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)]
    assert EXPONENTS[4:10] == [(2, 0, 0), (1, 1, 0), (1, 0, 1), (0, 2, 0), (0, 1, 1), (0, 0, 2)]
    assert EXPONENTS[-1] == (0, 0, 3) and len(set(EXPONENTS)) == 20


def test_poly_features_batch_shape():
    assert poly_features(np.ones((7, 3))).shape == (7, 20)
    with pytest.raises(ValueError):
        poly_features([np.inf, 0, 0])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["row", "block"]), st.integers(5, 3000))
def test_split_partitions(seed, mode, n):
    train, test = split(n, 0.2, seed, mode)
    assert len(test) == int(np.floor(0.2 * n + 0.5))
    assert np.array_equal(np.sort(np.concatenate([train, test])), np.arange(n))
    t2, s2 = split(n, 0.2, seed, mode)
    assert np.array_equal(train, t2) and np.array_equal(test, s2)


def test_split_block_keeps_runs_together():
    _, test = split(1000, 0.2, 1, "block", block=100)
    blocks = sorted({i // 100 for i in test})
    assert len(blocks) == 2
    assert np.array_equal(test, np.concatenate([np.arange(b * 100, b * 100 + 100) for b in blocks]))


def test_split_errors():
    with pytest.raises(ValueError):
        split(4)
    with pytest.raises(ValueError):
        split(10, 1.0)
    with pytest.raises(ValueError):
        split(10, mode="fold")


def test_fit_recovers_planted_model():
    ds = planted_dataset()
    model, metrics = calibrate({0: ds})
    m = metrics[0]
    assert m.r2 == pytest.approx(1.0, abs=1e-12) and m.mse < 1e-20
    assert np.allclose(predict(model.taxels[0], ds.b), ds.f, atol=1e-9)


def test_fit_rank_deficient_is_min_norm():
    x = np.column_stack([np.ones(50), np.arange(50.0), np.arange(50.0)])
    w = fit_least_squares(x, np.arange(50.0)[:, None])
    assert np.allclose(w[1], w[2])


def test_constant_field_column_handled():
    ds = planted_dataset()
    b = ds.b.copy()
    b[:, 0] = 1.0
    model, m = calibrate({0: AlignedDataset(0, b, ds.f)})
    assert np.all(np.isfinite(model.taxels[0].weights)) and model.taxels[0].scale[0] == 1.0


def test_too_few_rows_names_taxel():
    with pytest.raises(CalibrationError) as exc:
        calibrate({2: planted_dataset(2, n=30)})
    assert exc.value.taxel == 2 and "short by 10" in str(exc.value)


def test_score_constant_truth():
    m = score(np.ones((10, 3)), np.ones((10, 3)))
    assert not m.r2_defined and np.isnan(m.r2) and m.mse == 0
    assert "n/a" in format_report({0: m})


def test_score_pooled_definition():
    rng = np.random.default_rng(3)
    y, p = rng.normal(size=(40, 3)), rng.normal(size=(40, 3))
    m = score(y, p)
    assert m.r2 == pytest.approx(1 - ((p - y) ** 2).sum() / ((y - y.mean(0)) ** 2).sum())
    assert m.mse == pytest.approx(((p - y) ** 2).mean())


def test_parallel_equals_serial():
    sets = {k: planted_dataset(k, seed=k, noise=0.1) for k in range(4)}
    a, ma = calibrate(sets, seed=5)
    b, mb = calibrate(sets, seed=5, workers=4)
    assert all(np.array_equal(a.taxels[k].weights, b.taxels[k].weights) for k in sets)
    assert format_report(ma) == format_report(mb)


def test_model_file_round_trip(tmp_path):
    model, metrics = calibrate({k: planted_dataset(k, seed=k, noise=0.1) for k in (0, 1)})
    p = tmp_path / "m.json"
    save_model(model, p, metrics)
    back, m2 = load_model(p, with_metrics=True)
    for k in (0, 1):
        assert np.array_equal(back.taxels[k].weights, model.taxels[k].weights)
        assert np.array_equal(back.taxels[k].mean, model.taxels[k].mean)
        assert m2[k].r2 == metrics[k].r2
    doc = json.loads(p.read_text())
    assert doc["feature_ordering"] == "poly3-graded-lex-ijk-v1" and doc["checksum"].startswith("sha256:")


def test_model_file_corruption(tmp_path):
    model, metrics = calibrate({0: planted_dataset()})
    p = tmp_path / "m.json"
    save_model(model, p, metrics)
    text = p.read_text()
    p.write_text(text[: len(text) // 2])
    with pytest.raises(ModelChecksumError):
        load_model(p)
    doc = json.loads(text)
    doc["taxels"][0]["weights"][0] += 1.0
    p.write_text(json.dumps(doc))
    with pytest.raises(ModelChecksumError):
        load_model(p)
    doc = json.loads(text)
    doc["format_version"] = 99
    p.write_text(json.dumps(doc))
    with pytest.raises(ModelVersionError):
        load_model(p)
    p.write_text("[1, 2]")
    with pytest.raises(ModelFileError):
        load_model(p)


def test_batch_throughput():
    model, _ = calibrate({0: planted_dataset()})
    b = np.random.default_rng(0).normal(size=(200_000, 3))
    predict(model.taxels[0], b[:10])
    t0 = time.perf_counter()
    predict(model.taxels[0], b)
    rate = len(b) / (time.perf_counter() - t0)
    assert rate >= 1e5
