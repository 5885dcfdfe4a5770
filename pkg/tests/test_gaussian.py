import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from statsmodels.stats.proportion import proportion_confint

from chaincodes import (GaussianModel, ProbabilityMeasure, WeightSequence, build_from_single_measure,
                        build_radial_partitions, canonical_metric, check_expected_sup, check_increment_condition,
                        check_tail_bound, estimate_sup, iid, normalize_diameter, rbf, sample, validate_metric)
from chaincodes.errors import ModelError, ParameterError
from chaincodes.gaussian import BATCH, wilson
from oracles import expected_max_iid, normal_two_sided_tail


def random_model(seed, m=5):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(m, m))
    return GaussianModel([f"p{i}" for i in range(m)], A @ A.T / m)


def codes_for(model, r=2.0, depth=10):
    metric = canonical_metric(model, math.sqrt(2))
    tree = build_radial_partitions(normalize_diameter(metric), r, depth)
    return metric, build_from_single_measure(tree, ProbabilityMeasure.uniform(model.n))


def test_canonical_metric_examples():
    assert canonical_metric(iid(2)).dist[0, 1] == pytest.approx(math.sqrt(2), abs=1e-15)
    with pytest.warns(UserWarning, match="pseudometric"):
        assert canonical_metric(GaussianModel("ab", np.ones((2, 2)))).dist[0, 1] == 0.0
    assert canonical_metric(GaussianModel("ab", np.diag([1.0, 4.0]))).dist[0, 1] == pytest.approx(math.sqrt(5))
    with pytest.raises(ParameterError):
        canonical_metric(iid(2), scale=0.0)


def test_model_validation():
    with pytest.raises(ModelError):
        GaussianModel("ab", [[1.0, 0.5], [0.4, 1.0]])
    with pytest.raises(ModelError):
        GaussianModel("ab", [[1.0, 2.0], [2.0, 1.0]])
    gen = GaussianModel.from_json({"kind": "rbf", "points": [[0, 0], [1, 0]], "lengthscale": 1.0})
    assert gen.cov[0, 1] == pytest.approx(math.exp(-0.5))


def test_zero_covariance_samples_zero():
    x = sample(GaussianModel("abc", np.zeros((3, 3))), 1000, 0)
    assert x.shape == (1000, 3) and not x.any()


def test_identity_sample_variance():
    x = sample(iid(3), 100_000, 7)
    assert np.all(np.abs(x.var(axis=0) - 1) <= 0.015)


def test_sampling_is_deterministic_and_thread_independent(monkeypatch):
    model = random_model(3)
    n = 2 * BATCH + 17
    monkeypatch.setenv("CHAINING_THREADS", "1")
    serial = sample(model, n, 11)
    monkeypatch.setenv("CHAINING_THREADS", "4")
    parallel = sample(model, n, 11)
    assert np.array_equal(serial, parallel)
    assert np.array_equal(parallel, sample(model, n, 11))
    assert not np.array_equal(serial, sample(model, n, 12))


def test_sample_covariance_consistency():
    model = random_model(5, m=6)
    n = 100_000
    x = sample(model, n, 2)
    K = model.cov
    khat = x.T @ x / n
    tol = 5 * np.sqrt((np.outer(np.diag(K), np.diag(K)) + K**2) / n)
    assert np.mean(np.abs(khat - K) <= tol) >= 0.99


def test_estimate_sup_examples():
    one = estimate_sup(iid(3), ["p0"], 100_000, 0)
    assert abs(one.value) <= 3 * one.half_width and one.half_width < 0.01
    for m, seed in ((2, 1), (4, 2)):
        est = estimate_sup(iid(m), None, 100_000, seed)
        assert est.samples == 100_000 and est.seed == seed
        assert abs(est.value - expected_max_iid(m)) <= 3 * est.half_width
    with pytest.raises(ParameterError):
        estimate_sup(iid(2), [], 10, 0)


def test_estimate_sup_centered():
    est = estimate_sup(iid(2), ["p0", "p1"], 50_000, 4, centered_at="p0")
    # |X_1 - X_0| ~ |N(0, 2)| has mean 2 / sqrt(pi)
    assert est.value == pytest.approx(2 / math.sqrt(math.pi), abs=3 * est.half_width)


def test_wilson_matches_reference():
    for k, n in ((0, 100), (3, 1000), (500, 1000), (1000, 1000)):
        lo, hi = wilson(k, n)
        ref = proportion_confint(k, n, alpha=0.05, method="wilson")
        assert lo == pytest.approx(ref[0], abs=1e-9) and hi == pytest.approx(ref[1], abs=1e-9)


def test_increment_scaled_metric_passes():
    model = random_model(1)
    res = check_increment_condition(model, canonical_metric(model, math.sqrt(2)), [0.5, 1, 1.5, 2], 50_000, 3)
    assert res.passed and len(res.rows) == 4 * 10


def test_increment_unscaled_metric_at_u1():
    model = iid(2)
    res = check_increment_condition(model, canonical_metric(model), [0.0, 1.0], 100_000, 5)
    at0, at1 = res.rows
    assert at0.rate == 1.0 and at0.ok
    assert at1.rate == pytest.approx(normal_two_sided_tail(1.0), abs=0.01)
    assert at1.bound == pytest.approx(2 * math.exp(-1)) and at1.ok


def test_increment_flags_zero_distance_pairs():
    model = GaussianModel("abc", [[1, 1, 0], [1, 1, 0], [0, 0, 1]])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        metric = canonical_metric(model, math.sqrt(2))
    res = check_increment_condition(model, metric, [1.0], 1000, 0)
    assert res.skipped == ["a-b"] and len(res.rows) == 2


def test_tail_bound_examples():
    model = random_model(8)
    metric, vlc = codes_for(model)
    res = check_tail_bound(model, metric, vlc, WeightSequence.dyadic(), "p0", [2.0, 10.0], 100_000, 9)
    at2, at10 = res.rows
    assert at2.low <= math.exp(-4) and at10.rate == 0.0
    assert res.passed


def test_tail_bound_degenerate_model():
    model = GaussianModel("abc", np.zeros((3, 3)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        metric = canonical_metric(model, math.sqrt(2))
    tree = build_radial_partitions(metric, 2, 3)
    vlc = build_from_single_measure(tree, ProbabilityMeasure.uniform(3))
    res = check_tail_bound(model, metric, vlc, WeightSequence.dyadic(), "a", [0.0, 1.0], 1000, 0)
    assert all(r.rate == 0.0 for r in res.rows)


def test_expected_sup_holds():
    model = random_model(4, m=8)
    metric, vlc = codes_for(model)
    res = check_expected_sup(model, metric, vlc, WeightSequence.dyadic(), 50_000, 1)
    assert res.passed


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 12))
def test_canonical_metric_is_metric(seed, m):
    model = random_model(seed, m)
    assert validate_metric(canonical_metric(model)) == []
    pts = np.random.default_rng(seed).uniform(0, 1, size=(m, 2))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert validate_metric(canonical_metric(rbf(pts, 0.5))) == []
