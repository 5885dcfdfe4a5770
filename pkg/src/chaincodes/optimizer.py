"""Heuristic search over probability measures on a finite metric space.

Neither objective is convex in the measure, so results carry the uniform
baseline and the full objective trace instead of optimality certificates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .functionals import LN2
from .metric import MetricSpace, ProbabilityMeasure, diameter

FLOOR = 1e-15
# relative-gap multiplier in the adversary's exponentiated step
ADVERSARY_GAIN = 10.0


class _BallProfile:
    """Per-point step structure of ``eps -> mu(B(t, eps))``.

    For point ``t`` the integral is ``sum_j len_j sqrt(-log2 m_j)`` where
    ``m_j`` is the mass of the ``j``-th distinct closed ball around ``t``.
    """

    def __init__(self, space: MetricSpace):
        self.n = space.n
        diam = diameter(space)
        self.balls = []  # per point: (membership matrix [J, n], interval lengths [J])
        for i in range(space.n):
            row = space.dist[i]
            radii = np.unique(row)
            ends = np.append(radii[1:], max(diam, radii[-1]))
            widths = ends - radii
            keep = (widths > 0) & (radii < radii[-1])
            member = row[None, :] <= radii[keep][:, None]
            self.balls.append((member.astype(float), widths[keep]))

    def values(self, w: np.ndarray) -> np.ndarray:
        return ft_values_fast(self, w)

    def gradients(self, w: np.ndarray) -> np.ndarray:
        """``G[t, s] = d I_mu(t) / d mu(s)``."""
        out = np.zeros((self.n, self.n))
        for t, (member, widths) in enumerate(self.balls):
            if widths.size == 0:
                continue
            m = np.clip(member @ w, FLOOR, None)
            bits = np.clip(-np.log2(m), FLOOR, None)
            coef = -widths / (2 * np.sqrt(bits) * m * LN2)
            coef[m >= 1.0] = 0.0
            out[t] = coef @ member
        return out


def ft_values_fast(profile: _BallProfile, w: np.ndarray) -> np.ndarray:
    vals = np.zeros(profile.n)
    for t, (member, widths) in enumerate(profile.balls):
        if widths.size == 0:
            continue
        m = member @ w
        if m[0] <= 0:
            vals[t] = math.inf
            continue
        vals[t] = float(widths @ np.sqrt(np.clip(-np.log2(np.clip(m, None, 1.0)), 0.0, None)))
    return vals


@dataclass
class MeasureSearch:
    measure: ProbabilityMeasure
    value: float
    baseline: float
    trace: list[float] = field(default_factory=list)


def _normalize(w: np.ndarray) -> np.ndarray:
    w = np.clip(w, FLOOR, None)
    return w / w.sum()


def optimize_majorizing_measure(space: MetricSpace, iters: int = 200, tol: float = 1e-9, seed: int = 0,
                                restarts: int = 3) -> MeasureSearch:
    """Search for ``mu`` with small ``sup_t I_mu(t)``.

    An adversarial distribution ``q`` over points follows exponentiated
    gradient ascent on the relative gaps ``(I_mu(t) - max) / max`` (step
    ``1/sqrt(iter)``); ``mu`` answers
    with a multiplicative step against ``sum_t q_t grad I_mu(t)``. The
    trace records the best value so far, starting from the uniform measure.
    """
    n = space.n
    uniform = np.full(n, 1.0 / n)
    if n == 1:
        return MeasureSearch(ProbabilityMeasure(np.ones(1)), 0.0, 0.0, [0.0])
    prof = _BallProfile(space)
    baseline = float(prof.values(uniform).max())
    best_w, best = uniform, baseline
    trace = [baseline]
    rng = np.random.default_rng(seed)
    starts = [uniform] + [_normalize(0.5 * uniform + 0.5 * rng.dirichlet(np.ones(n)))
                          for _ in range(max(restarts, 1) - 1)]
    for w in starts:
        q = np.full(n, 1.0 / n)
        local = [math.inf]
        for it in range(1, iters + 1):
            vals = prof.values(w)
            top = float(vals.max())
            if top < best:
                best, best_w = top, w.copy()
            local.append(min(local[-1], top))
            trace.append(best)
            if len(local) > 11 and local[-11] - local[-1] < tol:
                break
            eta = 1.0 / math.sqrt(it)
            q = q * np.exp(ADVERSARY_GAIN * eta * (vals - top) / max(top, FLOOR))
            q /= q.sum()
            g = q @ prof.gradients(w)
            w = _normalize(w * np.exp(-0.5 * eta * g / max(np.abs(g).max(), FLOOR)))
    return MeasureSearch(ProbabilityMeasure.normalized(best_w), best, baseline, trace)


def _project_simplex(v: np.ndarray) -> np.ndarray:
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1
    ind = np.arange(1, v.size + 1)
    rho = np.flatnonzero(u - css / ind > 0)[-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


def self_average(prof: _BallProfile, w: np.ndarray) -> float:
    live = w > 0
    vals = prof.values(np.where(live, w, 0.0))
    return float(np.dot(w[live], vals[live]))


@dataclass
class SelfBound:
    measure: ProbabilityMeasure
    value: float
    sup_ft: float
    baseline: float
    trace: list[float] = field(default_factory=list)


def fernique_self_bound(space: MetricSpace, iters: int = 200, tol: float = 1e-9, seed: int = 0) -> SelfBound:
    """Hill-climb ``M(mu, mu) = sum_t mu(t) I_mu(t)`` over the simplex.

    Each round tries a projected gradient step and a random pairwise mass
    transfer, keeping whichever improves the objective.
    """
    n = space.n
    if n == 1:
        return SelfBound(ProbabilityMeasure(np.ones(1)), 0.0, 0.0, 0.0, [0.0])
    prof = _BallProfile(space)
    rng = np.random.default_rng(seed)
    w = np.full(n, 1.0 / n)
    best = baseline = self_average(prof, w)
    trace = [best]
    for it in range(1, iters + 1):
        soft = _normalize(w + 1e-12)
        grad = prof.values(soft) + soft @ prof.gradients(soft)
        step = 0.5 / math.sqrt(it)
        cand = [_project_simplex(w + step * grad / max(np.abs(grad).max(), FLOOR))]
        i, j = rng.choice(n, 2, replace=False)
        moved = w.copy()
        delta = moved[j] * rng.uniform(0.1, 1.0)
        moved[i] += delta
        moved[j] -= delta
        cand.append(moved)
        for c in cand:
            c = c / c.sum()
            v = self_average(prof, c)
            if v > best:
                best, w = v, c
        trace.append(best)
        if len(trace) > 11 and trace[-1] - trace[-11] < tol:
            break
    mu = ProbabilityMeasure.normalized(w)
    # points whose zero-radius ball is massless have I_mu = inf
    sup_ft = float(prof.values(np.asarray(mu.weights)).max())
    return SelfBound(mu, best, sup_ft, baseline, trace)
