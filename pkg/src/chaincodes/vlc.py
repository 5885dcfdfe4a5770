"""Admissible sequences of variable-length codes over a partition tree.

A code is stored by its length function only: level ``k`` maps each cell
(equivalently, its representative) to an integer codeword length. The
Kraft-McMillan inequality guarantees a prefix code with those lengths
exists; :func:`emit_codewords` materializes a canonical one on request.

Every sequence also carries real-valued *ideal* lengths, ``log2(1/mass)``
before rounding, so that inequalities stated without rounding slack can
be checked exactly.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InfiniteLengthError, StructuralError
from .metric import TRIANGLE_TOL, ProbabilityMeasure
from .partition import PartitionTree
from .weights import WeightSequence

KRAFT_TOL = 1e-12
# ceil(x - CEIL_SLACK) keeps dyadic masses from rounding up a whole bit
CEIL_SLACK = 1e-12


def kraft_sum(lengths) -> float:
    return math.fsum(2.0 ** -float(x) for x in lengths)


def _ceil_bits(x: float) -> int:
    return int(math.ceil(x - CEIL_SLACK))


def shannon_lengths(weights, min_length: int = 1) -> list[int]:
    """Shannon codeword lengths ``ceil(log2(1/w))``, floored at ``min_length``."""
    out = []
    for w in weights:
        w = float(w)
        if not w > 0:
            raise InfiniteLengthError(f"weight {w!r} needs an infinite codeword")
        out.append(max(min_length, _ceil_bits(-math.log2(w))))
    return out


@dataclass(frozen=True, eq=False)
class VlcSequence:
    """Per-level codeword lengths for the cells of ``tree``.

    ``lengths[k][j]`` is the integer length of cell ``j`` at level ``k``;
    level 0 is the single empty codeword. Past the stored depth of a
    terminal tree, every point's length grows by ``tail_step`` bits per
    level (0 for measure-based codes).
    """

    tree: PartitionTree
    lengths: tuple[np.ndarray, ...]
    ideal: tuple[np.ndarray, ...]
    method: str = "manual"
    tail_step: float = 0.0
    measures: tuple[np.ndarray, ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.lengths) != len(self.tree.levels) or len(self.ideal) != len(self.tree.levels):
            raise StructuralError("one length vector per tree level is required")
        ls = []
        for k, (lv, row) in enumerate(zip(self.tree.levels, self.lengths)):
            row = np.asarray(row, dtype=np.int64)
            if row.shape != (len(lv),):
                raise StructuralError(f"level {k}: expected {len(lv)} lengths, got {row.shape}")
            row.setflags(write=False)
            ls.append(row)
        ids = []
        for k, (lv, row) in enumerate(zip(self.tree.levels, self.ideal)):
            row = np.asarray(row, dtype=float)
            if row.shape != (len(lv),):
                raise StructuralError(f"level {k}: expected {len(lv)} ideal lengths")
            row.setflags(write=False)
            ids.append(row)
        object.__setattr__(self, "lengths", tuple(ls))
        object.__setattr__(self, "ideal", tuple(ids))

    @classmethod
    def from_lengths(cls, tree: PartitionTree, lengths: Sequence, method: str = "manual") -> "VlcSequence":
        """Wrap hand-written integer lengths for levels 1..depth (level 0 implied)."""
        ls = [np.zeros(1, dtype=np.int64)] + [np.asarray(x, dtype=np.int64) for x in lengths]
        return cls(tree, tuple(ls), tuple(np.asarray(x, dtype=float) for x in ls), method)

    @property
    def depth(self) -> int:
        return self.tree.depth

    @property
    def r(self) -> float:
        return self.tree.r

    def resolution(self, k: int) -> float:
        """``rho_k``: ``diam(T)`` at level 0, ``r**-k`` afterwards."""
        if k == 0:
            return float(self.tree.space.dist.max()) if self.tree.n > 1 else 0.0
        return self.tree.r ** (-k)

    def point_lengths(self, ideal: bool = False) -> np.ndarray:
        """Array ``L[k, i] = length_k(point i)`` for ``k = 0..depth``."""
        src = self.ideal if ideal else self.lengths
        out = np.empty((self.depth + 1, self.tree.n), dtype=float)
        for k, lvl in enumerate(self.tree.levels):
            out[k] = src[k][lvl.assignment]
        return out

    def length(self, k: int, t, ideal: bool = False) -> float:
        i = self.tree.space.index(t)
        if k <= self.depth:
            src = self.ideal if ideal else self.lengths
            return float(src[k][self.tree.levels[k].assignment[i]])
        base = self.length(self.depth, t, ideal)
        self.tree.level(k)  # raises past the depth of a non-terminal tree
        return base + self.tail_step * (k - self.depth)

    def to_json(self) -> dict:
        lab = self.tree.space.labels
        levels = []
        for k, lvl in enumerate(self.tree.levels):
            levels.append([
                {
                    "cell": j,
                    "representative": lab[lvl.representatives[j]],
                    "length": int(self.lengths[k][j]),
                    "ideal_length": float(self.ideal[k][j]),
                }
                for j in range(len(lvl))
            ])
        return {
            "method": self.method,
            "r": self.tree.r,
            "tail_step": self.tail_step,
            "tree": self.tree.to_json(),
            "levels": levels,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "VlcSequence":
        tree = PartitionTree.from_json(obj["tree"])
        lengths = [[row["length"] for row in lvl] for lvl in obj["levels"]]
        ideal = [[row["ideal_length"] for row in lvl] for lvl in obj["levels"]]
        return cls(tree, tuple(np.asarray(x) for x in lengths), tuple(np.asarray(x) for x in ideal),
                   obj.get("method", "manual"), float(obj.get("tail_step", 0.0)))

    @classmethod
    def load(cls, path) -> "VlcSequence":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def canonical_codewords(lengths: Sequence[int]) -> list[str]:
    """Canonical prefix code for lengths satisfying Kraft (order preserved)."""
    if kraft_sum(lengths) > 1 + KRAFT_TOL:
        raise StructuralError("lengths violate the Kraft-McMillan inequality")
    order = sorted(range(len(lengths)), key=lambda j: (lengths[j], j))
    words = [""] * len(lengths)
    code, prev = 0, 0
    for j in order:
        ell = int(lengths[j])
        code <<= ell - prev
        words[j] = format(code, "b").zfill(ell) if ell else ""
        code += 1
        prev = ell
    return words


def emit_codewords(vlc: VlcSequence) -> list[list[str]]:
    return [canonical_codewords([int(x) for x in row]) for row in vlc.lengths]


# -- conditional measure families -------------------------------------------

Conditionals = Callable[[int, int], ProbabilityMeasure]


def _spread(tree: PartitionTree, k: int, cells: Sequence[int], masses: Sequence[float]) -> np.ndarray:
    w = np.zeros(tree.n)
    lvl = tree.levels[k]
    for j, m in zip(cells, masses):
        pts = list(lvl.cells[j])
        w[pts] = m / len(pts)
    return w


def uniform_conditionals(tree: PartitionTree) -> Conditionals:
    """``nu_{k+1}(.|B)`` splitting B's mass equally over its children."""

    def nu(k: int, parent: int) -> ProbabilityMeasure:
        kids = tree.children(k, parent)
        return ProbabilityMeasure.normalized(_spread(tree, k + 1, kids, [1.0] * len(kids)))

    return nu


def measure_conditionals(tree: PartitionTree, mu: ProbabilityMeasure) -> Conditionals:
    """``nu_{k+1}(.|B) = mu(.|B)``."""

    def nu(k: int, parent: int) -> ProbabilityMeasure:
        w = np.zeros(tree.n)
        pts = list(tree.levels[k].cells[parent])
        w[pts] = mu.weights[pts]
        return ProbabilityMeasure.normalized(w)

    return nu


def _cell_masses(tree: PartitionTree, k: int, w: np.ndarray) -> np.ndarray:
    return np.array([math.fsum(w[list(c)]) for c in tree.levels[k].cells])


def _from_cell_masses(tree, masses, method, tail_step=0.0, measures=None) -> VlcSequence:
    lengths = [np.zeros(1, dtype=np.int64)]
    ideal = [np.zeros(1)]
    for k in range(1, tree.depth + 1):
        m = masses[k]
        lengths.append(np.asarray(shannon_lengths(m), dtype=np.int64))
        ideal.append(-np.log2(m))
    return VlcSequence(tree, tuple(lengths), tuple(ideal), method, tail_step,
                       None if measures is None else tuple(measures))


def build_from_measures(tree: PartitionTree, mu1: ProbabilityMeasure, conditionals: Conditionals | None = None,
                        method: str = "measures") -> VlcSequence:
    """Shannon codes for the measures ``mu_{k+1} = sum_B nu_{k+1}(.|B) mu_k(B)``.

    ``mu1`` is a measure on points; ``conditionals(k, j)`` returns
    ``nu_{k+1}(.|B)`` for cell ``j`` of level ``k`` (default: equal split
    over children). Point-level measures ``mu_1..mu_depth`` are kept on
    the result for mixture constructions.
    """
    if len(mu1) != tree.n:
        raise StructuralError("mu1 does not match the tree's space")
    conditionals = uniform_conditionals(tree) if conditionals is None else conditionals
    if tree.depth == 0:
        return _from_cell_masses(tree, [np.ones(1)], method, measures=[])
    w = np.asarray(mu1.weights, dtype=float)
    point_measures = [w]
    masses = [np.ones(1), _cell_masses(tree, 1, w)]
    if np.any(masses[1] <= 0):
        raise InfiniteLengthError("mu1 gives zero mass to a level-1 cell")
    for k in range(1, tree.depth):
        lvl = tree.levels[k]
        nxt = np.zeros(tree.n)
        for j, cell in enumerate(lvl.cells):
            nu = np.asarray(conditionals(k, j).weights, dtype=float)
            outside = np.ones(tree.n, dtype=bool)
            outside[list(cell)] = False
            if nu[outside].sum() > 1e-12:
                raise StructuralError(f"conditional for level-{k} cell {j} puts mass outside the cell")
            kids = tree.children(k, j)
            kid_mass = [math.fsum(nu[list(tree.levels[k + 1].cells[c])]) for c in kids]
            if min(kid_mass) <= 0:
                raise StructuralError(f"conditional for level-{k} cell {j} misses a child cell")
            nu = np.where(outside, 0.0, nu)
            nxt += nu / nu.sum() * masses[k][j]
        point_measures.append(nxt)
        masses.append(_cell_masses(tree, k + 1, nxt))
    return _from_cell_masses(tree, masses, method, measures=point_measures)


def _labels_valid(tree: PartitionTree, labels) -> None:
    for k in range(1, tree.depth + 1):
        lvl = tree.levels[k]
        by_parent: dict[int, list[int]] = {}
        for j, p in enumerate(lvl.parents):
            by_parent.setdefault(p, []).append(int(labels[k][j]))
        for p, got in by_parent.items():
            if sorted(got) != list(range(1, len(got) + 1)):
                raise StructuralError(f"level {k}: labels under cell {p} are {sorted(got)}, not 1..{len(got)}")


def build_from_labeled_net(tree: PartitionTree, labels=None) -> VlcSequence:
    """Codes driven by sibling labels ``L(A)``.

    Each sibling set gets subprobability weights ``6 / (pi**2 L(A)**2)``,
    completed to a probability by splitting the slack evenly among the
    siblings, then fed through :func:`build_from_measures`.
    ``labels[k][j]`` defaults to the tree's ``child_index``.
    """
    if labels is None:
        labels = [lvl.child_index for lvl in tree.levels]
    else:
        labels = [[1]] + [list(x) for x in labels]
    _labels_valid(tree, labels)

    def completed(k: int, kids: list[int]) -> list[float]:
        sub = [6.0 / (math.pi**2 * labels[k][c] ** 2) for c in kids]
        slack = (1.0 - math.fsum(sub)) / len(kids)
        return [s + slack for s in sub]

    if tree.depth == 0:
        return build_from_measures(tree, ProbabilityMeasure.uniform(tree.n), method="labeled-net")
    top = list(range(len(tree.levels[1])))
    mu1 = ProbabilityMeasure.normalized(_spread(tree, 1, top, completed(1, top)))

    def nu(k: int, parent: int) -> ProbabilityMeasure:
        kids = tree.children(k, parent)
        return ProbabilityMeasure.normalized(_spread(tree, k + 1, kids, completed(k + 1, kids)))

    return build_from_measures(tree, mu1, nu, method="labeled-net")


def build_from_single_measure(tree: PartitionTree, mu: ProbabilityMeasure) -> VlcSequence:
    """Level-``k`` lengths ``ceil(log2(1/mu(A)))`` for every cell ``A``."""
    if len(mu) != tree.n:
        raise StructuralError("measure does not match the tree's space")
    w = np.asarray(mu.weights, dtype=float)
    masses = [_cell_masses(tree, k, w) for k in range(tree.depth + 1)]
    for k, m in enumerate(masses):
        if np.any(m <= 0):
            raise InfiniteLengthError(f"measure gives zero mass to a level-{k} cell")
    return _from_cell_masses(tree, masses, "single-measure")


def mixture_from_codes(vlc: VlcSequence, p: WeightSequence, max_tail_levels: int = 2000) -> ProbabilityMeasure:
    """Normalized ``sum_k p_k sum_s 2**-len_k(s) delta_s`` over representatives."""
    tree = vlc.tree
    w = np.zeros(tree.n)
    K = tree.depth
    for k in range(1, K + 1):
        lvl = tree.levels[k]
        pk = p.p(k)
        for j, rep in enumerate(lvl.representatives):
            w[rep] += pk * 2.0 ** -float(vlc.lengths[k][j])
    if tree.terminal and K >= 1:
        lvl = tree.levels[K]
        base = 2.0 ** -vlc.lengths[K].astype(float)
        tail = 0.0
        for j in range(1, max_tail_levels + 1):
            term = p.p(K + j) * 2.0 ** (-vlc.tail_step * j)
            tail += term
            if term < 1e-300 or term < 1e-18 * tail:
                break
        for j, rep in enumerate(lvl.representatives):
            w[rep] += tail * base[j]
    if K == 0:
        w[tree.levels[0].representatives[0]] = 1.0
    return ProbabilityMeasure.normalized(w)


def level_measure_mixture(vlc: VlcSequence, p: WeightSequence) -> ProbabilityMeasure:
    """``sum_k p_k mu_k`` over the level measures kept by :func:`build_from_measures`.

    Levels past the stored depth reuse ``mu_K``, so it takes the leftover
    weight ``p_K + p_{K+1} + ...``.
    """
    if not vlc.measures:
        raise StructuralError("sequence carries no level measures")
    K = len(vlc.measures)
    w = np.zeros(vlc.tree.n)
    for k, m in enumerate(vlc.measures[:-1], start=1):
        w += p.p(k) * m
    w += p.tail_sum(K - 1) * vlc.measures[-1]
    return ProbabilityMeasure.normalized(w)


def validate_admissible(vlc: VlcSequence, tol: float = KRAFT_TOL) -> list[str]:
    """Report violations of Kraft, monotone lengths, refinement and resolution."""
    tree = vlc.tree
    space = tree.space
    problems = []
    if int(vlc.lengths[0].size) != 1 or int(vlc.lengths[0][0]) != 0:
        problems.append("level 0 must be a single empty codeword")
    for k in range(1, tree.depth + 1):
        s = kraft_sum(vlc.lengths[k])
        if s > 1 + tol:
            problems.append(f"level {k}: Kraft sum {s!r} > 1")
        if np.any(vlc.lengths[k] < 1):
            problems.append(f"level {k}: codeword shorter than 1 bit")
    L = vlc.point_lengths()
    for k in range(1, tree.depth + 1):
        bad = np.flatnonzero(L[k] < L[k - 1])
        for i in bad:
            problems.append(
                f"level {k}: length of {space.labels[i]} drops from {int(L[k - 1, i])} to {int(L[k, i])}"
            )
    if vlc.tail_step < 0:
        problems.append("negative tail step")
    for k, lvl in enumerate(tree.levels):
        for j, cell in enumerate(lvl.cells):
            rep = lvl.representatives[j]
            if rep not in cell:
                problems.append(f"level {k}: projection of cell {j} is not idempotent")
                continue
            if k > 0:
                parent = int(tree.levels[k - 1].assignment[rep])
                if not set(cell) <= set(tree.levels[k - 1].cells[parent]):
                    problems.append(f"level {k}: cell {j} does not refine level {k - 1}")
                rho = vlc.resolution(k)
                far = float(space.dist[rep, list(cell)].max())
                if far > rho + TRIANGLE_TOL:
                    problems.append(f"level {k}: cell {j} exceeds resolution {rho!r} ({far!r})")
    return problems
