"""Acceptance gate: one test per criterion, each recording a PASS/FAIL line.

Instance suites are drawn from fixed seeds so every run checks the same
instances. The summary lines appear at the end of the pytest report.
"""
import math
import time
import warnings

import numpy as np
import pytest

from chaincodes import (GaussianModel, ProbabilityMeasure, WeightSequence, assign_lower_codes,
                        bednorz_partition_bound, build_from_labeled_net, build_from_measures,
                        build_from_single_measure, build_radial_partitions, canonical_metric, check_expected_sup,
                        check_increment_condition, check_tail_bound, estimate_sup, euclidean, fernique_self_bound,
                        ft_functional, greedy_gaussian_partition, iid, kraft_sum, normalize_diameter,
                        optimize_majorizing_measure, rbf, refinement_bound, sigma_code, validate_admissible,
                        verify_len_diff)
from chaincodes.functionals import ft_values, sigma_prime_series
from chaincodes.vlc import level_measure_mixture, measure_conditionals
from conftest import record
from oracles import expected_max_iid, ft_quadrature

SUITE_SEED = 20240601
TOL = 1e-12
U_INCREMENT = (0.5, 1.0, 1.5, 2.0)
U_TAIL = (1.0, 1.5, 2.0)
MC_N = 100_000


def _space(rng):
    n = int(rng.integers(2, 51))
    dim = int(rng.integers(1, 4))
    if rng.random() < 0.3:
        # clustered layout: tight groups far apart stress deep trees
        centers = rng.uniform(0, 1, size=(int(rng.integers(2, 6)), dim))
        pts = centers[rng.integers(0, len(centers), n)] + rng.normal(scale=0.01, size=(n, dim))
    else:
        pts = rng.uniform(0, 1, size=(n, dim))
    space = euclidean(pts)
    return normalize_diameter(space) if space.dist.max() > 0 else space


def _instance(rng):
    space = _space(rng)
    r = float(rng.choice([2.0, 3.0, 4.0]))
    mu = ProbabilityMeasure.normalized(rng.dirichlet(np.ones(space.n)) + 1e-3)
    tree = build_radial_partitions(space, r, int(rng.integers(2, 13)))
    return space, r, mu, tree


@pytest.fixture(scope="module")
def code_suite():
    """60 random (space, r, measure) instances with all four code constructions."""
    rng = np.random.default_rng(SUITE_SEED)
    start = time.perf_counter()
    suite = []
    for _ in range(60):
        space, r, mu, tree = _instance(rng)
        codes = {
            "measures": build_from_measures(tree, mu, measure_conditionals(tree, mu)),
            "labeled-net": build_from_labeled_net(tree),
            "single-measure": build_from_single_measure(tree, mu),
            "lower": assign_lower_codes(tree),
        }
        suite.append((space, r, mu, tree, codes))
    return suite, time.perf_counter() - start


def _random_psd(rng):
    m = int(rng.integers(3, 21))
    if rng.random() < 0.5:
        A = rng.normal(size=(m, m))
        cov = A @ A.T / m
        return GaussianModel([f"p{i}" for i in range(m)], cov)
    return rbf(rng.uniform(0, 1, size=(m, 2)), float(rng.uniform(0.2, 1.0)))


@pytest.fixture(scope="module")
def gaussian_suite():
    rng = np.random.default_rng(SUITE_SEED + 1)
    out = []
    for i in range(10):
        model = _random_psd(rng)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            metric = canonical_metric(model, math.sqrt(2))
        tree = build_radial_partitions(normalize_diameter(metric), 2.0, 14)
        vlc = build_from_single_measure(tree, ProbabilityMeasure.uniform(model.n))
        out.append((i, model, metric, vlc))
    return out


def test_c01_kraft_suite(code_suite):
    suite, build_time = code_suite
    start = time.perf_counter()
    worst = 0.0
    for *_, codes in suite:
        for vlc in codes.values():
            worst = max(worst, max(kraft_sum(vlc.lengths[k]) for k in range(1, vlc.depth + 1)))
    elapsed = build_time + time.perf_counter() - start
    ok = worst <= 1 + TOL and elapsed < 10 and len(suite) >= 50
    record("1. Kraft suite", ok, f"{len(suite)} instances x 4 codes, max Kraft sum {worst:.12g}, {elapsed:.2f}s")
    assert ok


def test_c02_admissibility_suite(code_suite):
    suite, _ = code_suite
    problems = [(name, p) for *_, codes in suite for name, vlc in codes.items() for p in validate_admissible(vlc)]
    record("2. Admissibility suite", not problems, f"{len(problems)} violations")
    assert not problems


def test_c03_ft_oracle():
    rng = np.random.default_rng(SUITE_SEED + 3)
    worst = 0.0
    for _ in range(100):
        space = _space(rng)
        w = rng.dirichlet(np.ones(space.n))
        w[rng.random(space.n) < 0.2] = 0.0
        i = int(rng.integers(space.n))
        w[i] += 1e-3
        mu = ProbabilityMeasure.normalized(w)
        got = ft_functional(space, mu, space.labels[i])
        ref = ft_quadrature(space.dist[i], mu.weights, float(space.dist.max()))
        worst = max(worst, abs(got - ref))
    line = euclidean([[0.0], [0.5], [1.0]], ["a", "b", "c"])
    value = ft_functional(line, ProbabilityMeasure.uniform(3), "a")
    oracle = ft_quadrature(line.dist[0], [1 / 3] * 3, 1.0)
    ok = worst <= 1e-6 and abs(value - oracle) <= 1e-6
    record("3. Exact functional oracle", ok, f"max |step-sum - quad| = {worst:.2e}; 3-point I(a) = {value!r}")
    assert ok


def test_c04_refinement_inequality(code_suite):
    suite, _ = code_suite
    worst = -math.inf
    for space, *_, codes in suite:
        for vlc in codes.values():
            for t in space.labels:
                worst = max(worst, sigma_code(vlc, t) - refinement_bound(vlc, t))
    ok = worst <= TOL
    record("4. sigma_C <= refinement bound", ok, f"max(sigma_C - bound) = {worst:.3e}")
    assert ok


def test_c05_single_measure_certificate(code_suite):
    suite, _ = code_suite
    worst, where, factor_two = -math.inf, None, -math.inf
    for n_inst, (space, r, mu, tree, codes) in enumerate(suite):
        vlc = codes["single-measure"]
        slack = r / (r - 1)  # sum_{k>0} r**(1-k)
        for t in space.labels:
            sc = sigma_code(vlc, t, ideal=True)
            bb = bednorz_partition_bound(tree, mu, t)
            gap = sc - (bb + slack)
            factor_two = max(factor_two, sc - 2 * bb)
            if gap > worst:
                worst, where = gap, (n_inst, t)
    ok = worst <= TOL
    record("5. Certificate sigma_C(ideal) <= partition bound + sum r^(1-k)", ok,
           f"max excess {worst:.4g} at instance/point {where}; factor-2 form max excess {factor_two:.3e}")
    assert factor_two <= TOL
    assert ok


def test_c06_mixture_comparison(code_suite):
    suite, _ = code_suite
    p = WeightSequence.dyadic()
    worst = -math.inf
    for space, r, mu, tree, _ in suite:
        for vlc in (build_from_measures(tree, mu), build_from_measures(tree, mu, measure_conditionals(tree, mu))):
            other = build_from_single_measure(tree, level_measure_mixture(vlc, p))
            for k in range(1, tree.depth + 1):
                slack = math.log2(2 / p.p(k)) + 1
                diff = other.point_lengths()[k] - vlc.point_lengths()[k] - slack
                worst = max(worst, float(diff.max()))
    ok = worst <= 0
    record("6. Mixture code lengths l' <= l + log2(2/p_k) + 1", ok, f"max excess {worst:.3g}")
    assert ok


def test_c07_sigma_prime_constant():
    value = sigma_prime_series(WeightSequence.dyadic(), 2.0, 1.0)
    ok = value <= 3
    record("7. sigma' <= 3 (dyadic p, rho_k = 2^-k)", ok, f"sigma' = {value!r}")
    assert ok


def test_c08_increment_condition(gaussian_suite):
    start = time.perf_counter()
    failures = []
    for i, model, metric, _ in gaussian_suite:
        res = check_increment_condition(model, metric, U_INCREMENT, MC_N, SUITE_SEED + i)
        failures += [(i, r.label, r.u) for r in res.rows if not r.ok]
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 120
    record("8. Increment condition", ok, f"{len(failures)} failing (pair, u) rows, {elapsed:.1f}s")
    assert ok


def test_c09_tail_bound(gaussian_suite):
    failures, worst = [], 0.0
    for i, model, metric, vlc in gaussian_suite:
        res = check_tail_bound(model, metric, vlc, WeightSequence.dyadic(), model.labels[0], U_TAIL, MC_N,
                             SUITE_SEED + 100 + i)
        failures += [(i, r.u) for r in res.rows if not r.ok]
        worst = max([worst] + [r.rate for r in res.rows])
    ok = not failures
    record("9. Tail bound P[dev > sigma_bar(u+1)] <= exp(-u^2)", ok, f"{len(failures)} violations; max observed rate {worst:.3g}")
    assert ok


def test_c10_expected_sup(gaussian_suite):
    failures, ratios = [], []
    for i, model, metric, vlc in gaussian_suite:
        res = check_expected_sup(model, metric, vlc, WeightSequence.dyadic(), MC_N, SUITE_SEED + 200 + i)
        ratios.append(res.estimate.value / res.bound)
        if not res.passed:
            failures.append(i)
    ok = not failures
    record("10. Expected sup: E sup <= 2 sup sigma_bar", ok, f"max E_sup / bound = {max(ratios):.3f}")
    assert ok


def test_c11_gaussian_anchors():
    e2 = estimate_sup(iid(2), None, MC_N, SUITE_SEED + 11)
    e4 = estimate_sup(iid(4), None, MC_N, SUITE_SEED + 12)
    ok = abs(e2.value - 0.5642) <= 0.01 and abs(e4.value - 1.0294) <= 0.01
    ok = ok and abs(expected_max_iid(2) - 0.5642) < 1e-4 and abs(expected_max_iid(4) - 1.0294) < 1e-4
    record("11. Gaussian anchors", ok, f"E max2 = {e2.value:.4f}, E max4 = {e4.value:.4f}")
    assert ok


def _len_diff_ratio(model, seed):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        metric = normalize_diameter(canonical_metric(model, math.sqrt(2)))
    tree = greedy_gaussian_partition(model, metric, 2.0, 16, n=4000, seed=seed)
    return verify_len_diff(model, assign_lower_codes(tree), 2.0, MC_N, seed).sup_ratio


def test_c12_lower_bound_stability():
    start = time.perf_counter()
    iid_ratios = {m: _len_diff_ratio(iid(m), SUITE_SEED + m) for m in (2, 4, 8, 16)}
    C = max(iid_ratios.values())
    rng = np.random.default_rng(SUITE_SEED + 12)
    rbf_ratios = []
    for i in range(10):
        m = int(rng.integers(4, 17))
        model = rbf(rng.uniform(0, 1, size=(m, 2)), float(rng.uniform(0.2, 1.0)))
        rbf_ratios.append(_len_diff_ratio(model, SUITE_SEED + 300 + i))
    elapsed = time.perf_counter() - start
    worst = max(list(iid_ratios.values()) + rbf_ratios)
    ok = worst <= 1.5 * C and elapsed < 300
    record("12. Lower-bound ratio stability", ok,
           f"C = {C:.4f} (iid), max ratio {worst:.4f} <= 1.5C = {1.5 * C:.4f}; {elapsed:.1f}s")
    assert ok


def test_c13_optimizer_sanity(code_suite):
    suite, _ = code_suite
    bad = []
    for n_inst, (space, *_rest) in enumerate(suite[:20]):
        mm = optimize_majorizing_measure(space, iters=60, seed=n_inst)
        if mm.value > mm.baseline + TOL:
            bad.append((n_inst, "baseline"))
        fs = fernique_self_bound(space, iters=60, seed=n_inst)
        for mu in (mm.measure, fs.measure):
            w = np.asarray(mu.weights)
            vals = ft_values_safe(space, mu)
            live = w > 0
            if float(np.dot(w[live], vals[live])) > vals.max() + TOL:
                bad.append((n_inst, "self-average"))
    ok = not bad
    record("13. Optimizer sanity", ok, f"{len(bad)} violations over 20 instances")
    assert ok


def ft_values_safe(space, mu):
    w = np.asarray(mu.weights)
    if np.all(w > 0):
        return ft_values(space, mu)
    return np.array([ft_functional(space, mu, t) if w[i] > 0 else math.inf for i, t in enumerate(space.labels)])
