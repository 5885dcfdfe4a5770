"""Greedy partitions driven by expected suprema, and the matching lower codes.

``G(A) = E sup_{t in A} X_t`` is estimated by Monte Carlo. One sample
matrix is drawn per build and reused for every candidate evaluation
(common random numbers), so the argmax is stable and the build is a
deterministic function of the seed.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateSpaceError, ParameterError, StructuralError
from .gaussian import GaussianModel, McEstimate, canonical_metric, estimate_sup, sample, sup_from_samples
from .metric import BALL_TOL, TRIANGLE_TOL, MetricSpace, diameter
from .partition import PartitionTree, _make_level
from .vlc import VlcSequence, _ceil_bits

log = logging.getLogger(__name__)

LOWER_STEP = 2.0  # 2*log2(i+1) at i = 1: a lone child still costs two bits


@dataclass
class GreedyTrace:
    """Near-ties met while choosing centers (overlapping confidence intervals)."""

    ties: list[tuple[int, str, str]] = field(default_factory=list)


def greedy_gaussian_partition(model: GaussianModel, metric: MetricSpace, r: float, max_depth: int,
                              n: int = 10_000, seed: int = 0, trace: GreedyTrace | None = None) -> PartitionTree:
    """Partition each cell by repeatedly carving around the point whose small ball has the largest G.

    At level ``k`` inside parent ``B``: choose ``t_i`` maximizing
    ``G(B(t, r**-(k+1)/2) & B_{i-1})`` over the uncarved points, carve
    ``A_i = B(t_i, r**-k/2) & B_{i-1}``, record ``i`` as the child index.
    Exact ties go to the smallest label.
    """
    if r < 2:
        raise ParameterError(f"ratio r={r} must be at least 2")
    if max_depth < 1:
        raise ParameterError("max_depth must be at least 1")
    if tuple(metric.labels) != model.labels:
        raise StructuralError("metric and model labels differ")
    if diameter(metric) > 1 + TRIANGLE_TOL:
        raise ParameterError("metric must be normalized to diameter <= 1")
    x = sample(model, n, seed)
    N = metric.n
    d = metric.dist
    by_label = sorted(range(N), key=lambda i: metric.labels[i])
    g_cache: dict[frozenset, McEstimate] = {}

    def G(points) -> McEstimate:
        key = frozenset(points)
        if key not in g_cache:
            g_cache[key] = sup_from_samples(x, sorted(key))
        return g_cache[key]

    levels = [_make_level(N, [tuple(range(N))], [by_label[0]], [-1], [1])]
    for k in range(1, max_depth + 1):
        prev = levels[-1]
        if k > 1 and all(metric.set_diameter(c) == 0.0 for c in prev.cells):
            break
        select = r ** (-k - 1) / 2
        carve = r ** (-k) / 2
        cells, reps, parents, child_index = [], [], [], []
        for j, parent in enumerate(prev.cells):
            members = set(parent)
            remaining = [i for i in by_label if i in members]
            i_child = 0
            while remaining:
                scored = []
                for t in remaining:
                    near = [s for s in remaining if d[t, s] <= select + BALL_TOL]
                    scored.append((G(near), t))
                best_val = max(e.value for e, _ in scored)
                best = next((e, t) for e, t in scored if e.value == best_val)
                rivals = [(e, t) for e, t in scored if t != best[1] and e.high >= best[0].low]
                if rivals and trace is not None:
                    runner = max(rivals, key=lambda et: et[0].value)
                    trace.ties.append((k, metric.labels[best[1]], metric.labels[runner[1]]))
                    log.debug("level %d: near-tie between %s and %s", k,
                              metric.labels[best[1]], metric.labels[runner[1]])
                t_i = best[1]
                cell = [s for s in remaining if d[t_i, s] <= carve + BALL_TOL]
                i_child += 1
                cells.append(cell)
                reps.append(t_i)
                parents.append(j)
                child_index.append(i_child)
                taken = set(cell)
                remaining = [s for s in remaining if s not in taken]
        levels.append(_make_level(N, cells, reps, parents, child_index))
    return PartitionTree(metric, float(r), tuple(levels), "greedy-gaussian")


def assign_lower_codes(tree: PartitionTree) -> VlcSequence:
    """Lengths ``len_k = len_{k-1} + 2 log2(i_k + 1)`` from sibling indices ``i_k``.

    The integer channel is the ceiling of the ideal length. Past the
    stored depth each point is its own only child, adding two bits per level.
    """
    lengths = [np.zeros(1, dtype=np.int64)]
    ideal = [np.zeros(1)]
    for k in range(1, tree.depth + 1):
        lvl = tree.levels[k]
        if len(lvl.child_index) != len(lvl.cells) or min(lvl.child_index, default=1) < 1:
            raise StructuralError(f"level {k} lacks child indices")
        row = np.array([ideal[k - 1][p] + 2 * math.log2(i + 1) for p, i in zip(lvl.parents, lvl.child_index)])
        if np.any(np.asarray(lvl.parents) < 0):
            raise StructuralError(f"level {k} has cells without a parent")
        ideal.append(row)
        lengths.append(np.array([_ceil_bits(v) for v in row], dtype=np.int64))
    return VlcSequence(tree, tuple(lengths), tuple(ideal), "lower", LOWER_STEP)


def len_diff_sum(vlc: VlcSequence, t, ideal: bool = True) -> float:
    """``sum_k r**-k sqrt(len_k(t) - len_{k-1}(t))`` over all levels, tail included."""
    i = vlc.tree.space.index(t)
    L = vlc.point_lengths(ideal)[:, i]
    r = vlc.r
    parts = [r ** (-k) * math.sqrt(max(L[k] - L[k - 1], 0.0)) for k in range(1, len(L))]
    K = len(L) - 1
    if vlc.tail_step:
        parts.append(math.sqrt(vlc.tail_step) * r ** (-(K + 1)) / (1 - 1 / r))
    return math.fsum(parts)


@dataclass
class LenDiffReport:
    labels: tuple[str, ...]
    sums: np.ndarray
    g_hat: McEstimate
    c0: float
    scale: float

    @property
    def ratios(self) -> np.ndarray:
        return self.scale * self.sums / (self.g_hat.value + self.c0)

    @property
    def sup_ratio(self) -> float:
        return float(self.ratios.max())

    def to_csv(self) -> str:
        lines = ["point,S,G_hat,ratio"]
        for s, v, q in zip(self.labels, self.sums, self.ratios):
            lines.append(f"{s},{float(self.scale * v)!r},{self.g_hat.value!r},{float(q)!r}")
        return "\n".join(lines) + "\n"


def verify_len_diff(model: GaussianModel, vlc: VlcSequence, r: float | None = None, n: int = 100_000,
                    seed: int = 0) -> LenDiffReport:
    """Ratio of the refinement sum to ``G(T) + diam(T)`` at every point.

    The sum is computed on the code's (normalized) space and rescaled to
    the canonical metric of ``model``, so the ratio is scale-free.
    """
    if r is not None and abs(r - vlc.r) > 1e-12:
        raise ParameterError("r does not match the code's tree")
    space = canonical_metric_quiet(model)
    c0 = diameter(space)
    inner = diameter(vlc.tree.space)
    scale = c0 / inner if inner > 0 else 1.0
    g = estimate_sup(model, None, n, seed)
    if g.value + c0 <= 0:
        raise DegenerateSpaceError("G(T) + diam(T) vanishes")
    sums = np.array([len_diff_sum(vlc, t) for t in vlc.tree.space.labels])
    return LenDiffReport(vlc.tree.space.labels, sums, g, c0, scale)


@dataclass
class SudakovReport:
    g_union: McEstimate
    g_pieces: list[McEstimate]
    separation: float
    m: int

    @property
    def scale(self) -> float:
        return self.separation * math.sqrt(math.log2(self.m))

    @property
    def min_piece(self) -> float:
        return min(e.value for e in self.g_pieces)

    @property
    def constant(self) -> float:
        """Fitted ``(G(H) - min_l G(H_l)) / (a sqrt(log2 m))``."""
        return (self.g_union.value - self.min_piece) / self.scale


def sudakov_check(model: GaussianModel, points: Sequence, b_sets: Sequence[Sequence] | None = None,
                  a: float | None = None, n: int = 100_000, seed: int = 0) -> SudakovReport:
    """Diagnostic fit of the separation constant in Sudakov-type minoration.

    ``a`` defaults to the smallest canonical distance among ``points`` and
    must be positive; ``b_sets[l]`` (default ``{points[l]}``) are the
    clusters around each point.
    """
    idx = [model.index(s) for s in points]
    m = len(idx)
    if m < 2:
        raise ParameterError("need at least two separated points")
    d = canonical_metric_quiet(model).dist
    sub = d[np.ix_(idx, idx)][np.triu_indices(m, 1)]
    a = float(sub.min()) if a is None else float(a)
    if not a > 0 or sub.min() < a - TRIANGLE_TOL:
        raise ParameterError(f"points are not {a!r}-separated in the canonical metric")
    pieces = [[i] for i in idx] if b_sets is None else [[model.index(s) for s in h] for h in b_sets]
    if len(pieces) != m:
        raise ParameterError("one cluster per point is required")
    x = sample(model, n, seed)
    union = sorted({i for h in pieces for i in h})
    return SudakovReport(sup_from_samples(x, union), [sup_from_samples(x, h) for h in pieces], a, m)


def canonical_metric_quiet(model: GaussianModel) -> MetricSpace:
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return canonical_metric(model)
