import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chaincodes import (MetricSpace, ProbabilityMeasure, ball, covering_number, diameter, euclidean,
                        normalize_diameter, validate_metric)
from chaincodes.errors import DegenerateSpaceError, StructuralError
from oracles import brute_covering
from strategies import spaces


def test_validate_single_point():
    assert validate_metric(MetricSpace(["x"], [[0.0]])) == []


def test_validate_line_is_metric(line3):
    assert validate_metric(line3) == []


def test_validate_reports_triangle_violation():
    bad = MetricSpace("abc", [[0, 1, 3], [1, 0, 1], [3, 1, 0]])
    problems = validate_metric(bad)
    assert len(problems) == 1
    assert "triangle" in problems[0] and "(a,b,c)" in problems[0]


def test_validate_reports_asymmetry_and_diagonal():
    bad = MetricSpace("ab", [[0.1, 1.0], [0.5, 0]])
    text = " ".join(validate_metric(bad))
    assert "self-distance" in text and "asymmetric" in text


def test_shape_mismatch_is_structural():
    with pytest.raises(StructuralError):
        MetricSpace("abc", [[0, 1], [1, 0]])


def test_ball_closed_boundary(line3):
    assert ball(line3, "a", 0.5) == {"a", "b"}
    assert ball(line3, "a", 0.49) == {"a"}
    assert ball(line3, "b", diameter(line3)) == {"a", "b", "c"}


def test_ball_unknown_center(line3):
    with pytest.raises(KeyError):
        ball(line3, "z", 1.0)


def test_diameter_examples(line3):
    assert diameter(MetricSpace(["x"], [[0.0]])) == 0.0
    assert diameter(line3) == 1.0
    assert diameter(normalize_diameter(MetricSpace("ab", [[0, 2.0], [2.0, 0]]))) == 1.0


def test_normalize_examples(line3):
    assert np.array_equal(normalize_diameter(line3).dist, line3.dist)
    scaled = MetricSpace(line3.labels, line3.dist * 5)
    assert np.allclose(normalize_diameter(scaled).dist, line3.dist, atol=0, rtol=1e-15)
    with pytest.raises(DegenerateSpaceError):
        normalize_diameter(MetricSpace("ab", [[0, 0], [0, 0]]))


def test_covering_examples(line3):
    c = covering_number(line3, 0.5)
    assert (c.count, c.exact, c.centers) == (1, True, ("b",))
    assert covering_number(line3, 0.4).count == 3
    assert covering_number(line3, 1.0).count == 1


def test_covering_flags_greedy_above_limit():
    space = euclidean(np.linspace(0, 1, 25))
    c = covering_number(space, 0.1)
    assert not c.exact
    assert c.count >= brute_like_lower_bound(space, 0.1)


def brute_like_lower_bound(space, eps):
    # points pairwise > 2 eps apart need distinct balls
    chosen = []
    for i in range(space.n):
        if all(space.dist[i, j] > 2 * eps for j in chosen):
            chosen.append(i)
    return len(chosen)


def test_json_roundtrip_and_generator(line3):
    again = MetricSpace.from_json(json.loads(json.dumps(line3.to_json())))
    assert again.labels == line3.labels and np.array_equal(again.dist, line3.dist)
    gen = MetricSpace.from_json({"kind": "euclidean", "points": [[0, 0], [3, 4]]})
    assert gen.dist[0, 1] == 5.0 and gen.labels == ("p0", "p1")


def test_dist_is_read_only(line3):
    with pytest.raises(ValueError):
        line3.dist[0, 1] = 3.0


def test_measure_validation():
    with pytest.raises(ValueError):
        ProbabilityMeasure([0.5, 0.6])
    with pytest.raises(ValueError):
        ProbabilityMeasure([1.5, -0.5])
    assert ProbabilityMeasure.uniform(4).mass([0, 1]) == 0.5


@settings(max_examples=40, deadline=None)
@given(spaces(max_n=10), st.floats(0, 1), st.floats(0, 1))
def test_ball_monotone(space, r1, r2):
    lo, hi = sorted((r1, r2))
    for t in space.labels:
        small, big = ball(space, t, lo), ball(space, t, hi)
        assert t in small and small <= big


@settings(max_examples=40, deadline=None)
@given(spaces(max_n=9), st.floats(0, 0.6), st.floats(0, 0.6))
def test_covering_monotone_and_matches_brute_force(space, e1, e2):
    lo, hi = sorted((e1, e2))
    a, b = covering_number(space, lo), covering_number(space, hi)
    assert b.count <= a.count
    assert a.count == brute_covering(space.dist.tolist(), lo)


@settings(max_examples=30, deadline=None)
@given(spaces(max_n=12, normalized=False))
def test_covering_zero_counts_distinct_points(space):
    distinct = len({tuple(row) for row in np.round(space.dist, 12)})
    assert covering_number(space, 0.0).count == distinct


@settings(max_examples=30, deadline=None)
@given(spaces(min_n=2, max_n=15, normalized=False), st.floats(0.01, 0.8))
def test_exact_never_exceeds_greedy(space, eps):
    exact = covering_number(space, eps)
    greedy = covering_number(space, eps, exact_limit=0)
    assert exact.exact and not greedy.exact
    assert exact.count <= greedy.count


@settings(max_examples=30, deadline=None)
@given(spaces(min_n=2, max_n=10, normalized=False))
def test_normalize_idempotent(space):
    if diameter(space) == 0:
        return
    once = normalize_diameter(space)
    assert np.allclose(normalize_diameter(once).dist, once.dist, atol=1e-15)
