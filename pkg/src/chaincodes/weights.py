"""Probability mass functions over chaining levels ``k >= 1``."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .errors import StructuralError


@dataclass(frozen=True)
class WeightSequence:
    """``p_k`` for ``k >= 1``: explicit ``head`` values, then a dyadic tail.

    For ``k > len(head)``, ``p_k = tail_mass * 2**-(k - len(head))``. The
    default (empty head, unit tail) is ``p_k = 2**-k``. A zero ``tail_mass``
    gives finite support, which makes every infinite chaining series diverge.
    """

    head: tuple[float, ...] = ()
    tail_mass: float = 1.0

    def __post_init__(self):
        head = tuple(float(x) for x in self.head)
        object.__setattr__(self, "head", head)
        if any(not x > 0 for x in head):
            raise StructuralError("level weights must be positive")
        if self.tail_mass < 0:
            raise StructuralError("tail mass must be nonnegative")
        total = math.fsum(head) + self.tail_mass
        if abs(total - 1.0) > 1e-12:
            raise StructuralError(f"level weights sum to {total!r}, not 1")

    @classmethod
    def dyadic(cls) -> "WeightSequence":
        return cls()

    @classmethod
    def from_values(cls, values) -> "WeightSequence":
        """Explicit head; whatever mass is left over becomes a dyadic tail."""
        values = tuple(float(v) for v in values)
        left = 1.0 - math.fsum(values)
        if left < -1e-12:
            raise StructuralError("level weights exceed total mass 1")
        return cls(values, max(left, 0.0))

    @classmethod
    def load(cls, path) -> "WeightSequence":
        with open(path) as fh:
            obj = json.load(fh)
        values = obj["p"] if isinstance(obj, dict) else obj
        return cls.from_values(values)

    @property
    def finite(self) -> bool:
        return self.tail_mass == 0.0

    def p(self, k: int) -> float:
        if k < 1:
            raise ValueError("levels start at 1")
        m = len(self.head)
        if k <= m:
            return self.head[k - 1]
        return self.tail_mass * 2.0 ** (-(k - m))

    def log_p(self, k: int) -> float:
        """Natural log of ``p_k``; ``-inf`` outside a finite support."""
        m = len(self.head)
        if k <= m:
            return math.log(self.head[k - 1])
        if self.tail_mass == 0.0:
            return -math.inf
        return math.log(self.tail_mass) - (k - m) * math.log(2.0)

    def tail_sum(self, K: int) -> float:
        """``sum_{k > K} p_k``."""
        m = len(self.head)
        if K < m:
            return math.fsum(self.head[K:]) + self.tail_mass
        return self.tail_mass * 2.0 ** (-(K - m))
