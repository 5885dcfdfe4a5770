"""Finite metric spaces and probability measures on them.

Distances live in a dense matrix; every space in this package is small
enough that O(n^2) storage is cheaper than any index structure.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateSpaceError, StructuralError

TRIANGLE_TOL = 1e-9
# slack for closed-ball membership; absorbs rounding in normalized distances
BALL_TOL = 1e-12
EXACT_COVER_LIMIT = 20


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MetricSpace:
    """Finite point set ``labels`` with distance matrix ``dist``.

    Construction only checks shapes and finiteness. Metric axioms are
    reported by :func:`validate_metric` so that broken inputs can still be
    loaded and diagnosed.
    """

    labels: tuple[str, ...]
    dist: np.ndarray
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        dist = np.asarray(self.dist, dtype=float)
        if len(labels) == 0:
            raise StructuralError("a metric space needs at least one point")
        if dist.ndim != 2 or dist.shape != (len(labels), len(labels)):
            raise StructuralError(
                f"distance matrix shape {dist.shape} does not match "
                f"{len(labels)} labels"
            )
        if len(set(labels)) != len(labels):
            raise StructuralError("labels must be unique")
        if not np.all(np.isfinite(dist)):
            raise StructuralError("distances must be finite")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "dist", _frozen(dist))
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(labels)})

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n(self) -> int:
        return len(self.labels)

    def index(self, point) -> int:
        """Resolve a label (or an already-integer index) to a row index."""
        if isinstance(point, (int, np.integer)) and not isinstance(point, bool):
            if 0 <= point < self.n:
                return int(point)
            raise KeyError(f"point index {point} out of range")
        try:
            return self._index[str(point)]
        except KeyError:
            raise KeyError(f"unknown point {point!r}") from None

    def indices(self, points: Iterable) -> list[int]:
        return [self.index(p) for p in points]

    def restrict(self, points: Iterable) -> "MetricSpace":
        idx = self.indices(points)
        return MetricSpace([self.labels[i] for i in idx], self.dist[np.ix_(idx, idx)])

    def ball_indices(self, center: int, radius: float, within=None) -> np.ndarray:
        row = self.dist[center]
        mask = row <= radius + BALL_TOL
        if within is not None:
            sub = np.zeros(self.n, dtype=bool)
            sub[np.asarray(list(within), dtype=int)] = True
            mask &= sub
        return np.flatnonzero(mask)

    def set_diameter(self, points: Sequence[int]) -> float:
        idx = np.asarray(list(points), dtype=int)
        if idx.size <= 1:
            return 0.0
        return float(self.dist[np.ix_(idx, idx)].max())

    def to_json(self) -> dict:
        return {"labels": list(self.labels), "dist": self.dist.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "MetricSpace":
        """Accept either an explicit matrix or a ``{"kind": "euclidean"}`` generator."""
        if "kind" in obj:
            kind = obj["kind"]
            if kind != "euclidean":
                raise StructuralError(f"unknown metric generator kind {kind!r}")
            pts = np.asarray(obj["points"], dtype=float)
            if pts.ndim == 1:
                pts = pts[:, None]
            labels = obj.get("labels") or [f"p{i}" for i in range(len(pts))]
            return euclidean(pts, labels)
        if "labels" not in obj or "dist" not in obj:
            raise StructuralError('metric JSON needs "labels" and "dist"')
        return cls(obj["labels"], obj["dist"])

    @classmethod
    def load(cls, path) -> "MetricSpace":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def euclidean(points, labels=None) -> MetricSpace:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if labels is None:
        labels = [f"p{i}" for i in range(len(pts))]
    diff = pts[:, None, :] - pts[None, :, :]
    return MetricSpace(labels, np.sqrt((diff**2).sum(-1)))


@dataclass(frozen=True, eq=False)
class ProbabilityMeasure:
    """Weight vector aligned with a metric space's labels."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise StructuralError("weights must be a non-empty vector")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise StructuralError("weights must be finite and nonnegative")
        if abs(math.fsum(w) - 1.0) > 1e-12:
            raise StructuralError(f"weights sum to {math.fsum(w)!r}, not 1")
        object.__setattr__(self, "weights", _frozen(w))

    def __len__(self) -> int:
        return self.weights.size

    @classmethod
    def normalized(cls, weights) -> "ProbabilityMeasure":
        w = np.asarray(weights, dtype=float)
        total = math.fsum(w)
        if total <= 0:
            raise StructuralError("cannot normalize a zero measure")
        return cls(w / total)

    @classmethod
    def uniform(cls, n: int) -> "ProbabilityMeasure":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def dirac(cls, n: int, i: int) -> "ProbabilityMeasure":
        w = np.zeros(n)
        w[i] = 1.0
        return cls(w)

    def mass(self, points) -> float:
        idx = np.asarray(list(points), dtype=int)
        return math.fsum(self.weights[idx]) if idx.size else 0.0

    def to_json(self, space: MetricSpace | None = None) -> dict:
        out = {"weights": self.weights.tolist()}
        if space is not None:
            out["labels"] = list(space.labels)
        return out

    @classmethod
    def from_json(cls, obj: dict, space: MetricSpace | None = None) -> "ProbabilityMeasure":
        w = np.asarray(obj["weights"], dtype=float)
        if space is not None and "labels" in obj:
            order = [list(obj["labels"]).index(s) for s in space.labels]
            w = w[order]
        if space is not None and w.size != space.n:
            raise StructuralError("measure length does not match the space")
        return cls.normalized(w)


def validate_metric(space: MetricSpace, tol: float = TRIANGLE_TOL) -> list[str]:
    """List every violated metric axiom; empty means ``space`` is a (pseudo)metric."""
    d = space.dist.tolist()
    arr = space.dist
    lab = space.labels
    problems = []
    for i in np.flatnonzero(np.abs(np.diag(arr)) > tol):
        problems.append(f"nonzero self-distance at {lab[i]}: {d[i][i]!r}")
    for i, j in zip(*np.nonzero(np.triu(arr < -tol))):
        problems.append(f"negative distance d({lab[i]},{lab[j]}) = {d[i][j]!r}")
    asym = np.abs(arr - arr.T) > tol
    for i, j in zip(*np.nonzero(np.triu(asym, 1))):
        problems.append(f"asymmetric pair ({lab[i]},{lab[j]}): {d[i][j]!r} vs {d[j][i]!r}")
    n = space.n
    for k in range(n):
        # excess[i, j] = d(i,j) - d(i,k) - d(k,j)
        excess = arr - (arr[:, k][:, None] + arr[k, :][None, :])
        for i, j in zip(*np.nonzero(excess > tol)):
            if i < j and k != i and k != j:
                problems.append(
                    f"triangle violation ({lab[i]},{lab[k]},{lab[j]}): "
                    f"d({lab[i]},{lab[j]}) = {d[i][j]!r} > "
                    f"{d[i][k]!r} + {d[k][j]!r}"
                )
    return problems


def ball(space: MetricSpace, center, radius: float) -> frozenset:
    """Closed ball ``{s : d(center, s) <= radius}`` as a set of labels."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    c = space.index(center)
    return frozenset(space.labels[i] for i in space.ball_indices(c, radius))


def diameter(space: MetricSpace) -> float:
    return float(space.dist.max()) if space.n > 1 else 0.0


def normalize_diameter(space: MetricSpace) -> MetricSpace:
    diam = diameter(space)
    if diam <= 0:
        raise DegenerateSpaceError("cannot normalize a space of zero diameter")
    return MetricSpace(space.labels, space.dist / diam)


@dataclass(frozen=True)
class Covering:
    count: int
    exact: bool
    centers: tuple[str, ...]


def _greedy_cover(masks: list[int], full: int) -> list[int]:
    chosen = []
    covered = 0
    while covered != full:
        gains = [bin(m & ~covered).count("1") for m in masks]
        best = max(range(len(masks)), key=lambda c: (gains[c], -c))
        chosen.append(best)
        covered |= masks[best]
    return chosen


def _exact_cover(masks: list[int], full: int, incumbent: list[int]) -> list[int]:
    best = list(incumbent)
    n = len(masks)
    # candidates able to cover each point, largest balls first
    covering = [
        sorted((c for c in range(n) if masks[c] >> i & 1), key=lambda c: -bin(masks[c]).count("1"))
        for i in range(n)
    ]

    def rec(covered: int, used: list[int]):
        nonlocal best
        if covered == full:
            if len(used) < len(best):
                best = list(used)
            return
        if len(used) + 1 >= len(best):
            return
        left = full & ~covered
        gain = max(bin(m & left).count("1") for m in masks)
        if len(used) + -(-bin(left).count("1") // gain) >= len(best):
            return
        i = (left & -left).bit_length() - 1
        for c in covering[i]:
            used.append(c)
            rec(covered | masks[c], used)
            used.pop()

    rec(0, [])
    return best


def covering_number(space: MetricSpace, eps: float, exact_limit: int = EXACT_COVER_LIMIT) -> Covering:
    """Smallest number of closed ``eps``-balls (centered in the space) covering it.

    Exact by branch and bound up to ``exact_limit`` points; above that the
    greedy set-cover value is returned with ``exact=False`` (an upper bound).
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    n = space.n
    masks = []
    for c in range(n):
        m = 0
        for i in space.ball_indices(c, eps):
            m |= 1 << int(i)
        masks.append(m)
    full = (1 << n) - 1
    chosen = _greedy_cover(masks, full)
    exact = n <= exact_limit
    if exact:
        chosen = _exact_cover(masks, full, chosen)
    return Covering(len(chosen), exact, tuple(space.labels[c] for c in sorted(chosen)))
