"""Centered Gaussian processes on a finite index set.

Sampling is split into fixed-size batches, each drawn from its own stream
keyed by ``(seed, batch index)``. Results therefore do not depend on how
many worker threads run the batches (``CHAINING_THREADS`` caps them).
"""
from __future__ import annotations

import json
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ModelError, ParameterError, StructuralError
from .metric import MetricSpace, diameter
from .vlc import VlcSequence
from .weights import WeightSequence

BATCH = 8192
Z95 = 1.959963984540054
SYM_TOL = 1e-12
PSD_TOL = 1e-10
JITTERS = (1e-12, 1e-11, 1e-10, 1e-9, 1e-8)


def worker_count() -> int:
    env = os.environ.get("CHAINING_THREADS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


@dataclass(frozen=True, eq=False)
class GaussianModel:
    labels: tuple[str, ...]
    cov: np.ndarray
    _factor: list = field(default_factory=list, init=False, repr=False)

    def __post_init__(self):
        labels = tuple(str(s) for s in self.labels)
        cov = np.array(self.cov, dtype=float)
        if cov.ndim != 2 or cov.shape != (len(labels), len(labels)):
            raise StructuralError(f"covariance shape {cov.shape} does not match {len(labels)} labels")
        if not np.all(np.isfinite(cov)):
            raise ModelError("covariance entries must be finite")
        if np.abs(cov - cov.T).max(initial=0.0) > SYM_TOL:
            raise ModelError("covariance is not symmetric")
        cov = (cov + cov.T) / 2
        if len(labels) and np.linalg.eigvalsh(cov).min() < -PSD_TOL:
            raise ModelError("covariance is not positive semidefinite")
        cov.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "cov", cov)

    @property
    def n(self) -> int:
        return len(self.labels)

    def index(self, point) -> int:
        if isinstance(point, (int, np.integer)) and not isinstance(point, bool):
            if 0 <= point < self.n:
                return int(point)
            raise KeyError(f"point index {point} out of range")
        try:
            return self.labels.index(str(point))
        except ValueError:
            raise KeyError(f"unknown point {point!r}") from None

    def factor(self) -> np.ndarray:
        """Lower-triangular ``L`` with ``L @ L.T ~= cov``.

        Zero-variance coordinates are left out of the factorization (their
        rows are exactly zero), so a zero covariance samples exact zeros.
        """
        if self._factor:
            return self._factor[0]
        live = np.flatnonzero(np.diag(self.cov) > 0)
        L = np.zeros_like(self.cov)
        if live.size:
            sub = self.cov[np.ix_(live, live)]
            for jitter in (0.0,) + JITTERS:
                try:
                    Ls = np.linalg.cholesky(sub + jitter * np.eye(live.size))
                    break
                except np.linalg.LinAlgError:
                    continue
            else:
                raise ModelError("Cholesky factorization failed even with jitter 1e-8")
            L[np.ix_(live, live)] = Ls
        self._factor.append(L)
        return L

    def to_json(self) -> dict:
        return {"labels": list(self.labels), "cov": self.cov.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "GaussianModel":
        """Explicit ``cov`` or an ``{"kind": "rbf"}`` / ``{"kind": "iid"}`` generator."""
        kind = obj.get("kind")
        if kind == "rbf":
            pts = np.asarray(obj["points"], dtype=float)
            return rbf(pts, float(obj["lengthscale"]), obj.get("labels"))
        if kind == "iid":
            return iid(int(obj["m"]), float(obj.get("variance", 1.0)))
        if kind is not None:
            raise StructuralError(f"unknown covariance generator {kind!r}")
        if "cov" not in obj:
            raise StructuralError('covariance JSON needs "cov"')
        labels = obj.get("labels") or [f"p{i}" for i in range(len(obj["cov"]))]
        return cls(labels, obj["cov"])

    @classmethod
    def load(cls, path) -> "GaussianModel":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def rbf(points, lengthscale: float, labels=None) -> GaussianModel:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    sq = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
    labels = labels or [f"p{i}" for i in range(len(pts))]
    return GaussianModel(labels, np.exp(-sq / (2 * lengthscale**2)))


def iid(m: int, variance: float = 1.0) -> GaussianModel:
    return GaussianModel([f"p{i}" for i in range(m)], variance * np.eye(m))


@dataclass(frozen=True)
class McEstimate:
    value: float
    half_width: float
    samples: int
    seed: int

    @property
    def low(self) -> float:
        return self.value - self.half_width

    @property
    def high(self) -> float:
        return self.value + self.half_width


def canonical_metric(model: GaussianModel, scale: float = 1.0) -> MetricSpace:
    """``d(s,t) = scale * sqrt(K_ss + K_tt - 2 K_st)``.

    Under ``scale = 1`` a Gaussian increment only has tails
    ``2 exp(-u**2 / 2)``; ``scale = sqrt(2)`` gives the ``2 exp(-u**2)``
    increment condition used by the chaining bounds.
    """
    if not scale > 0:
        raise ParameterError("scale must be positive")
    K = model.cov
    diag = np.diag(K)
    sq = diag[:, None] + diag[None, :] - 2 * K
    if sq.min(initial=0.0) < -PSD_TOL:
        raise ModelError("negative squared distance: covariance is not PSD")
    d = scale * np.sqrt(np.clip(sq, 0.0, None))
    np.fill_diagonal(d, 0.0)
    d = (d + d.T) / 2
    off = ~np.eye(model.n, dtype=bool)
    if np.any(d[off] == 0):
        warnings.warn("canonical metric is only a pseudometric (distinct points at distance 0)",
                      stacklevel=2)
    return MetricSpace(model.labels, d)


def _batches(n: int) -> list[tuple[int, int]]:
    return [(b, min(BATCH, n - b * BATCH)) for b in range(-(-n // BATCH))]


def map_batches(model: GaussianModel, n: int, seed: int, fn: Callable[[np.ndarray], object]) -> list:
    """Apply ``fn`` to every batch of samples, in batch order."""
    if n < 1:
        raise ParameterError("need at least one sample")
    L = model.factor()

    def run(job):
        b, size = job
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), b]))
        z = rng.standard_normal((size, model.n))
        return fn(z @ L.T)

    jobs = _batches(n)
    workers = min(worker_count(), len(jobs))
    if workers <= 1:
        return [run(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, jobs))


def sample(model: GaussianModel, n: int, seed: int) -> np.ndarray:
    """``n`` independent draws of ``N(0, cov)``, shape ``(n, model.n)``."""
    return np.vstack(map_batches(model, n, seed, lambda x: x))


def _mean_stats(x: np.ndarray) -> tuple[int, float, float]:
    return x.size, float(x.sum()), float((x * x).sum())


def _merge(stats) -> tuple[int, float, float]:
    n = sum(s[0] for s in stats)
    return n, math.fsum(s[1] for s in stats), math.fsum(s[2] for s in stats)


def _estimate(stats, seed) -> McEstimate:
    n, s, ss = _merge(stats)
    mean = s / n
    var = max(ss / n - mean * mean, 0.0) * n / max(n - 1, 1)
    return McEstimate(mean, Z95 * math.sqrt(var / n), n, int(seed))


def mean_estimate(values: np.ndarray, seed: int = -1) -> McEstimate:
    return _estimate([_mean_stats(np.asarray(values, dtype=float))], seed)


def estimate_sup(model: GaussianModel, subset: Sequence | None, n: int, seed: int,
                 centered_at=None) -> McEstimate:
    """Monte Carlo ``E sup_{t in subset} X_t`` (or ``E sup |X_t - X_t0|``)."""
    idx = list(range(model.n)) if subset is None else [model.index(s) for s in subset]
    if not idx:
        raise ParameterError("subset must be nonempty")
    c = None if centered_at is None else model.index(centered_at)

    def stat(x):
        if c is None:
            v = x[:, idx].max(axis=1)
        else:
            v = np.abs(x[:, idx] - x[:, [c]]).max(axis=1)
        return _mean_stats(v)

    return _estimate(map_batches(model, n, seed, stat), seed)


def sup_from_samples(x: np.ndarray, subset: Sequence[int]) -> McEstimate:
    """``E sup`` over ``subset`` from a pre-drawn sample matrix (common random numbers)."""
    return mean_estimate(x[:, list(subset)].max(axis=1))


def wilson(k: int, n: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n == 0:
        return 0.0, 1.0
    ph = k / n
    denom = 1 + z * z / n
    center = (ph + z * z / (2 * n)) / denom
    half = z / denom * math.sqrt(ph * (1 - ph) / n + z * z / (4 * n * n))
    return max(0.0, center - half), min(1.0, center + half)


@dataclass
class TailRow:
    label: str
    u: float
    rate: float
    low: float
    high: float
    bound: float

    @property
    def ok(self) -> bool:
        return self.low <= self.bound


@dataclass
class TailCheck:
    """Empirical exceedance rates against an analytic tail bound."""

    name: str
    rows: list[TailRow]
    samples: int
    seed: int
    skipped: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.ok for r in self.rows)

    def to_csv(self) -> str:
        lines = ["check,item,u,rate,wilson_low,wilson_high,bound,ok"]
        for r in self.rows:
            lines.append(f"{self.name},{r.label},{r.u!r},{r.rate!r},{r.low!r},{r.high!r},{r.bound!r},"
                         f"{'PASS' if r.ok else 'FAIL'}")
        return "\n".join(lines) + "\n"


def check_increment_condition(model: GaussianModel, metric: MetricSpace, u_grid: Sequence[float], n: int,
                              seed: int, exponent: float = 1.0) -> TailCheck:
    """Empirical ``P[|X_s - X_t| >= u d(s,t)]`` against ``2 exp(-u**2 / exponent)``.

    ``exponent = 1`` is the sub-Gaussian increment condition; pass
    ``exponent = 2`` to test the unscaled canonical metric against the
    Gaussian tail. Zero-distance pairs are skipped and listed.
    """
    if tuple(metric.labels) != model.labels:
        raise StructuralError("metric and model labels differ")
    us = np.asarray(list(u_grid), dtype=float)
    iu, ju = np.triu_indices(model.n, 1)
    d = metric.dist[iu, ju]
    live = d > 0
    skipped = [f"{model.labels[i]}-{model.labels[j]}" for i, j in zip(iu[~live], ju[~live])]
    iu, ju, d = iu[live], ju[live], d[live]

    def count(x):
        inc = np.abs(x[:, iu] - x[:, ju])
        return np.stack([(inc >= u * d).sum(axis=0) for u in us])

    hits = sum(map_batches(model, n, seed, count)) if iu.size else np.zeros((us.size, 0), dtype=int)
    rows = []
    for a, u in enumerate(us):
        bound = 2 * math.exp(-u * u / exponent)
        for b, (i, j) in enumerate(zip(iu, ju)):
            k = int(hits[a, b])
            lo, hi = wilson(k, n)
            rows.append(TailRow(f"{model.labels[i]}-{model.labels[j]}", float(u), k / n, lo, hi, bound))
    return TailCheck("increment", rows, n, int(seed), skipped)


def _code_scale(metric: MetricSpace, vlc: VlcSequence) -> float:
    """Ratio between ``metric`` and the (normalized) space the codes live on."""
    if tuple(metric.labels) != tuple(vlc.tree.space.labels):
        raise StructuralError("metric and code labels differ")
    inner = diameter(vlc.tree.space)
    outer = diameter(metric)
    if inner == 0:
        return 1.0 if outer == 0 else math.inf
    return outer / inner


def sigma_bar_values(metric: MetricSpace, vlc: VlcSequence, p: WeightSequence) -> np.ndarray:
    """``sigma_bar(t)`` for every point, in the units of ``metric``."""
    from .functionals import sigma_bar

    scale = _code_scale(metric, vlc)
    return np.array([scale * sigma_bar(vlc, p, t) for t in metric.labels])


def check_tail_bound(model: GaussianModel, metric: MetricSpace, vlc: VlcSequence, p: WeightSequence, t0,
                   u_grid: Sequence[float], n: int, seed: int) -> TailCheck:
    """Empirical ``P[exists t: |X_t - X_t0| > sigma_bar(t)(u+1)]`` against ``exp(-u**2)``.

    ``vlc`` may live on the normalized copy of ``metric``; its functional is
    rescaled to ``metric``'s units.
    """
    sig = sigma_bar_values(metric, vlc, p)
    if not np.all(np.isfinite(sig)):
        raise ParameterError("sigma_bar is not finite")
    c = model.index(t0)
    us = np.asarray(list(u_grid), dtype=float)

    def count(x):
        dev = np.abs(x - x[:, [c]])
        return np.array([(dev > sig * (u + 1)).any(axis=1).sum() for u in us])

    hits = sum(map_batches(model, n, seed, count))
    rows = []
    for a, u in enumerate(us):
        k = int(hits[a])
        lo, hi = wilson(k, n)
        rows.append(TailRow(f"t0={model.labels[c]}", float(u), k / n, lo, hi, math.exp(-u * u)))
    return TailCheck("tail", rows, n, int(seed))


@dataclass
class ExpectedSupCheck:
    estimate: McEstimate
    bound: float

    @property
    def passed(self) -> bool:
        return self.estimate.low <= self.bound


def check_expected_sup(model: GaussianModel, metric: MetricSpace, vlc: VlcSequence, p: WeightSequence, n: int,
                    seed: int) -> ExpectedSupCheck:
    """``E sup X_t`` (Monte Carlo) against ``2 sup_t sigma_bar(t)``."""
    sig = sigma_bar_values(metric, vlc, p)
    return ExpectedSupCheck(estimate_sup(model, None, n, seed), 2 * float(sig.max()))
