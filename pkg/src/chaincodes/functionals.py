"""Chaining functionals on finite metric spaces and code sequences.

Information quantities and codeword lengths are in bits. The only natural
logarithm is the one inside ``sigma_bar`` (and its components), which
measures a sub-Gaussian tail exponent rather than a code length.

Series over levels ``k >= 1`` are infinite. Past the stored depth, lengths
grow linearly (``tail_step`` bits per level) and ``-ln p_k`` grows by
``ln 2`` per level, so every summand has the form
``coef * x**j * sqrt(c + a*j)`` with ``x = 1/r``. Terms are summed until a
closed-form bound on the remainder falls below ``tol``; that bound is added
to the value and reported as the tail error.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AdmissibilityError, DivergenceError, InfiniteLengthError, StructuralError
from .metric import MetricSpace, ProbabilityMeasure, diameter
from .partition import PartitionTree
from .vlc import VlcSequence
from .weights import WeightSequence

LN2 = math.log(2.0)
TAIL_TOL = 1e-9


@dataclass
class BoundReport:
    """Per-point values of one functional plus the aggregate ``sup``."""

    functional: str
    labels: tuple[str, ...]
    values: np.ndarray
    tail_bounds: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.labels = tuple(self.labels)
        self.values = np.asarray(self.values, dtype=float)
        if self.tail_bounds is None:
            self.tail_bounds = np.zeros_like(self.values)
        self.tail_bounds = np.asarray(self.tail_bounds, dtype=float)
        if self.values.shape != (len(self.labels),) or self.tail_bounds.shape != self.values.shape:
            raise StructuralError("report values must align with labels")
        if np.any(self.tail_bounds < 0):
            raise StructuralError("tail bounds must be nonnegative")

    @property
    def sup(self) -> float:
        return float(self.values.max())

    @property
    def argsup(self) -> str:
        return self.labels[int(np.argmax(self.values))]

    def to_json(self) -> dict:
        return {
            "functional": self.functional,
            "sup": self.sup,
            "argsup": self.argsup,
            "points": [
                {"point": s, "value": float(v), "tail_bound": float(b)}
                for s, v, b in zip(self.labels, self.values, self.tail_bounds)
            ],
            "metadata": self.metadata,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BoundReport":
        pts = obj["points"]
        return cls(obj["functional"], [p["point"] for p in pts], [p["value"] for p in pts],
                   [p.get("tail_bound", 0.0) for p in pts], dict(obj.get("metadata", {})))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["point", "functional", "value", "tail_bound"])
        for s, v, b in zip(self.labels, self.values, self.tail_bounds):
            writer.writerow([s, self.functional, repr(float(v)), repr(float(b))])
        return buf.getvalue()

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


# -- Fernique-Talagrand -------------------------------------------------------

def _ft_point(dist_row: np.ndarray, w: np.ndarray, diam: float) -> float:
    order = np.argsort(dist_row, kind="stable")
    ds = dist_row[order]
    ws = w[order]
    inside = np.cumsum(ws)
    outside = np.concatenate([np.cumsum(ws[::-1])[::-1][1:], [0.0]])
    # last index of each distinct distance: the closed ball at that radius
    last = np.flatnonzero(np.append(ds[1:] != ds[:-1], True))
    if inside[last[0]] <= 0:
        raise DivergenceError("the measure gives no mass to the zero-radius ball")
    total = []
    for a, j in enumerate(last):
        lo = ds[j]
        hi = ds[last[a + 1]] if a + 1 < len(last) else max(diam, lo)
        if hi <= lo or outside[j] <= 0:
            continue
        if inside[j] <= 0.5:
            bits = -math.log2(inside[j])
        else:
            bits = -math.log1p(-outside[j]) / LN2
        total.append((hi - lo) * math.sqrt(max(bits, 0.0)))
    return math.fsum(total)


def ft_functional(space: MetricSpace, mu: ProbabilityMeasure, t) -> float:
    """``I_mu(t) = int_0^diam sqrt(log2(1 / mu(B(t, eps)))) d eps``, exactly.

    The ball mass is a step function of ``eps`` that only changes at the
    distances ``d(t, s)``, so the integral is a finite sum.
    """
    i = space.index(t)
    return _ft_point(space.dist[i], np.asarray(mu.weights), diameter(space))


def ft_values(space: MetricSpace, mu: ProbabilityMeasure) -> np.ndarray:
    w = np.asarray(mu.weights)
    diam = diameter(space)
    return np.array([_ft_point(space.dist[i], w, diam) for i in range(space.n)])


def m_functional(space: MetricSpace, mu: ProbabilityMeasure, nu: ProbabilityMeasure) -> float:
    """``M(mu, nu) = sum_t nu(t) I_mu(t)``."""
    w = np.asarray(mu.weights)
    diam = diameter(space)
    terms = [nu.weights[i] * _ft_point(space.dist[i], w, diam)
             for i in np.flatnonzero(np.asarray(nu.weights) > 0)]
    return math.fsum(terms)


# -- code-length series -------------------------------------------------------

def _sqrt_geometric_bound(c: float, a: float, x: float) -> float:
    """Upper bound on ``sum_{j>=0} x**j sqrt(c + a*j)`` (exact when ``a == 0``)."""
    if a == 0:
        return math.sqrt(c) / (1 - x)
    if c <= 0:
        return math.sqrt(a) * x / (1 - x) ** 2
    # sqrt is concave: sqrt(c + a j) <= sqrt(c) + a j / (2 sqrt(c))
    return math.sqrt(c) / (1 - x) + a / (2 * math.sqrt(c)) * x / (1 - x) ** 2


def _tail_sum(coef: float, c: float, a: float, x: float, tol: float) -> tuple[float, float]:
    """``sum_{j>=0} coef x**j sqrt(c + a j)`` as (upper value, remainder bound)."""
    if a == 0:
        return coef * math.sqrt(max(c, 0.0)) / (1 - x), 0.0
    parts = []
    j = 0
    while True:
        scale = coef * x**j
        bound = scale * _sqrt_geometric_bound(c + a * j, a, x)
        if bound <= tol or scale == 0.0:
            return math.fsum(parts) + bound, bound
        parts.append(scale * math.sqrt(c + a * j))
        j += 1


def _level_series(lengths, r: float, rho0: float, tail_step: float, alpha: float, beta: float,
                  gamma: float, p: WeightSequence | None, tol: float) -> tuple[float, float]:
    """``sum_{k>=1} rho_{k-1} sqrt(alpha*len_k + beta + gamma*(-ln p_k))``.

    ``lengths`` holds ``len_1..len_K``; ``rho_0 = rho0`` and
    ``rho_k = r**-k`` otherwise.
    """
    lengths = [float(x) for x in lengths]
    K = len(lengths)
    if gamma and p is None:
        raise ValueError("a level weight sequence is required")
    if gamma and p.finite:
        raise DivergenceError("finitely supported level weights make the series diverge")
    m = len(p.head) if (gamma and p is not None) else 0

    def ell(k):
        if k <= K:
            return lengths[k - 1]
        base = lengths[-1] if K else 0.0
        return base + tail_step * (k - K)

    def arg(k):
        v = alpha * ell(k) + beta
        if gamma:
            v -= gamma * p.log_p(k)
        if v < 0:
            raise DivergenceError(f"negative argument under square root at level {k}")
        return v

    k0 = max(K, m, 1) + 1
    x = 1.0 / r
    parts = [rho0 * math.sqrt(arg(1))]
    parts += [r ** (-(k - 1)) * math.sqrt(arg(k)) for k in range(2, k0)]
    slope = alpha * tail_step + (gamma * LN2 if gamma else 0.0)
    tail, err = _tail_sum(r ** (-(k0 - 1)), arg(k0), slope, x, tol)
    return math.fsum(parts) + tail, err


def _point_lengths(vlc: VlcSequence, t, ideal: bool) -> np.ndarray:
    i = vlc.tree.space.index(t)
    return vlc.point_lengths(ideal)[1:, i]


def sigma_bar_detail(vlc: VlcSequence, p: WeightSequence, t, tol: float = TAIL_TOL,
                     ideal: bool = False) -> tuple[float, float]:
    return _level_series(_point_lengths(vlc, t, ideal), vlc.r, vlc.resolution(0), vlc.tail_step,
                         LN2, LN2, 1.0, p, tol)


def sigma_bar(vlc: VlcSequence, p: WeightSequence, t, tol: float = TAIL_TOL, ideal: bool = False) -> float:
    """``sum_k rho_{k-1} sqrt(ln(2**(len_k(t)+1) / p_k))`` including the tail bound."""
    return sigma_bar_detail(vlc, p, t, tol, ideal)[0]


def sigma_code_lengths(lengths, r: float, rho0: float = 1.0, tail_step: float = 0.0,
                       tol: float = TAIL_TOL) -> float:
    """``sum_k rho_{k-1} sqrt(len_k)`` for explicit ``len_1..len_K``."""
    return _level_series(lengths, r, rho0, tail_step, 1.0, 0.0, 0.0, None, tol)[0]


def sigma_code(vlc: VlcSequence, t, ideal: bool = False, tol: float = TAIL_TOL) -> float:
    return sigma_code_lengths(_point_lengths(vlc, t, ideal), vlc.r, vlc.resolution(0), vlc.tail_step, tol)


def sigma_code_ln(vlc: VlcSequence, t, tol: float = TAIL_TOL) -> float:
    """``sum_k rho_{k-1} sqrt((len_k(t) + 1) ln 2)``."""
    return _level_series(_point_lengths(vlc, t, False), vlc.r, vlc.resolution(0), vlc.tail_step,
                         LN2, LN2, 0.0, None, tol)[0]


def sigma_prime(vlc: VlcSequence, p: WeightSequence, t=None, tol: float = TAIL_TOL) -> float:
    """``sum_k rho_{k-1} sqrt(ln(2 / p_k))``; the same for every point."""
    return sigma_prime_series(p, vlc.r, vlc.resolution(0), tol)


def sigma_prime_series(p: WeightSequence, r: float, rho0: float = 1.0, tol: float = TAIL_TOL) -> float:
    return _level_series([], r, rho0, 0.0, 0.0, LN2, 1.0, p, tol)[0]


def refinement_lengths(lengths, r: float, tail_step: float = 0.0) -> float:
    """``2 sum_k r**(1-k) sqrt(len_k - len_{k-1})`` with ``len_0 = 0``."""
    prev = 0.0
    parts = []
    for k, cur in enumerate(lengths, start=1):
        inc = float(cur) - prev
        if inc < -1e-12:
            raise AdmissibilityError(f"codeword length decreases at level {k}")
        parts.append(r ** (1 - k) * math.sqrt(max(inc, 0.0)))
        prev = float(cur)
    K = len(lengths)
    if tail_step:
        parts.append(math.sqrt(tail_step) * r ** (-K) / (1 - 1 / r))
    return 2 * math.fsum(parts)


def refinement_bound(vlc: VlcSequence, t, ideal: bool = False) -> float:
    return refinement_lengths(_point_lengths(vlc, t, ideal), vlc.r, vlc.tail_step)


def _chain_masses(tree: PartitionTree, mu: ProbabilityMeasure, t) -> list[float]:
    i = tree.space.index(t)
    out = []
    for lvl in tree.levels:
        out.append(mu.mass(lvl.cells[int(lvl.assignment[i])]))
    return out


def bednorz_partition_bound(tree: PartitionTree, mu: ProbabilityMeasure, t) -> float:
    """``sum_k r**(1-k) sqrt(log2(mu(A_{k-1}(t)) / mu(A_k(t))))``."""
    masses = _chain_masses(tree, mu, t)
    if min(masses) <= 0:
        raise InfiniteLengthError(f"zero-mass cell on the chain of {t!r}")
    parts = []
    for k in range(1, len(masses)):
        bits = math.log2(masses[k - 1] / masses[k])
        parts.append(tree.r ** (1 - k) * math.sqrt(max(bits, 0.0)))
    return math.fsum(parts)


def _child_conditionals(tree: PartitionTree, k: int, parent: int, mu: ProbabilityMeasure) -> np.ndarray:
    lvl = tree.level(k)
    pmass = mu.mass(tree.level(k - 1).cells[parent])
    kids = tree.children(k - 1, parent)
    if pmass <= 0:
        raise InfiniteLengthError(f"level-{k - 1} cell {parent} has zero mass")
    return np.array([mu.mass(lvl.cells[c]) for c in kids]) / pmass


def conditional_entropy(tree: PartitionTree, k: int, parent: int, mu: ProbabilityMeasure) -> float:
    """``H_{A_k|B}(mu)`` in bits for cell ``parent`` of level ``k-1``."""
    q = _child_conditionals(tree, k, parent, mu)
    q = q[q > 0]
    return max(0.0, -math.fsum(q * np.log2(q)))


def cross_entropy(tree: PartitionTree, k: int, parent: int, mu: ProbabilityMeasure,
                  nu: ProbabilityMeasure) -> float:
    """``-sum_A mu(A|B) log2 nu(A|B)`` over the level-``k`` children of ``parent``."""
    q = _child_conditionals(tree, k, parent, mu)
    v = _child_conditionals(tree, k, parent, nu)
    live = q > 0
    if np.any(v[live] <= 0):
        raise DivergenceError("nu vanishes on a child cell where mu is positive")
    return -math.fsum(q[live] * np.log2(v[live]))


def entropy_chain_bound(tree: PartitionTree, mu: ProbabilityMeasure) -> float:
    """``sum_k r**(1-k) sum_{B in A_{k-1}} mu(B) sqrt(H_{A_k|B}(mu))``."""
    parts = []
    for k in range(1, tree.depth + 1):
        for j, cell in enumerate(tree.levels[k - 1].cells):
            mb = mu.mass(cell)
            parts.append(tree.r ** (1 - k) * mb * math.sqrt(conditional_entropy(tree, k, j, mu)))
    return math.fsum(parts)


# -- reports -------------------------------------------------------------------

POINTWISE = ("ft", "sigma-bar", "sigma-code", "refinement", "bednorz")


def evaluate(functional: str, *, space: MetricSpace | None = None, vlc: VlcSequence | None = None,
             tree: PartitionTree | None = None, mu: ProbabilityMeasure | None = None,
             nu: ProbabilityMeasure | None = None, p: WeightSequence | None = None,
             tol: float = TAIL_TOL) -> BoundReport:
    """Evaluate a functional at every point and wrap it in a :class:`BoundReport`."""
    p = WeightSequence.dyadic() if p is None else p
    if tree is None and vlc is not None:
        tree = vlc.tree
    if space is None and tree is not None:
        space = tree.space
    meta: dict = {}
    if tree is not None:
        meta.update(r=tree.r, depth=tree.depth, terminal=tree.terminal)
    if vlc is not None:
        meta["construction"] = vlc.method
    labels = space.labels
    tails = None
    if functional == "ft":
        values = ft_values(space, mu)
    elif functional == "m":
        labels, values = ("*",), [m_functional(space, mu, nu)]
    elif functional == "sigma-bar":
        pairs = [sigma_bar_detail(vlc, p, t, tol) for t in labels]
        values, tails = [v for v, _ in pairs], [e for _, e in pairs]
        meta["p"] = {"head": list(p.head), "tail_mass": p.tail_mass}
    elif functional == "sigma-code":
        values = [sigma_code(vlc, t, tol=tol) for t in labels]
    elif functional == "refinement":
        values = [refinement_bound(vlc, t) for t in labels]
    elif functional == "bednorz":
        values = [bednorz_partition_bound(tree, mu, t) for t in labels]
    elif functional == "entropy-chain":
        labels, values = ("*",), [entropy_chain_bound(tree, mu)]
    else:
        raise ValueError(f"unknown functional {functional!r}")
    return BoundReport(functional, labels, values, tails, meta)
