"""Increasing sequences of partitions with geometric diameter decay.

Level ``k`` holds a partition of the index set whose cells have diameter at
most ``r**-k``. Each cell keeps a representative point, a link to the cell
of level ``k-1`` containing it, and its 1-based position among its
siblings in construction order.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ParameterError, StructuralError
from .metric import TRIANGLE_TOL, MetricSpace, diameter


@dataclass(frozen=True, eq=False)
class Level:
    cells: tuple[tuple[int, ...], ...]
    representatives: tuple[int, ...]
    parents: tuple[int, ...]
    child_index: tuple[int, ...]
    assignment: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.cells)


def _make_level(n, cells, reps, parents, child_index) -> Level:
    cells = tuple(tuple(sorted(int(i) for i in c)) for c in cells)
    assignment = np.full(n, -1, dtype=int)
    for j in reversed(range(len(cells))):
        assignment[list(cells[j])] = j
    assignment.setflags(write=False)
    return Level(cells, tuple(int(x) for x in reps), tuple(int(x) for x in parents),
                 tuple(int(x) for x in child_index), assignment)


@dataclass(frozen=True, eq=False)
class PartitionTree:
    """Nested partitions ``levels[0] = {T}, levels[1], ...`` of ``space``.

    When every cell of the last stored level has diameter zero the tree is
    *terminal*: deeper levels are implied to repeat the last one, so
    queries past the stored depth are answered from it.
    """

    space: MetricSpace
    r: float
    levels: tuple[Level, ...]
    method: str = "manual"

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    @property
    def n(self) -> int:
        return self.space.n

    @property
    def terminal(self) -> bool:
        last = self.levels[-1]
        return all(self.space.set_diameter(c) == 0.0 for c in last.cells)

    def level(self, k: int) -> Level:
        if k < 0:
            raise ParameterError(f"level {k} is negative")
        if k > self.depth:
            if not self.terminal:
                raise ParameterError(
                    f"level {k} beyond stored depth {self.depth} of a non-terminal tree"
                )
            return self.levels[-1]
        return self.levels[k]

    def cell_of(self, k: int, t) -> int:
        """Index of the level-``k`` cell containing point ``t``."""
        return int(self.level(k).assignment[self.space.index(t)])

    def cell_labels(self, k: int, j: int) -> frozenset:
        return frozenset(self.space.labels[i] for i in self.level(k).cells[j])

    def children(self, k: int, j: int) -> list[int]:
        """Cells of level ``k+1`` whose parent is cell ``j`` of level ``k``."""
        nxt = self.level(k + 1)
        if k + 1 > self.depth:
            return [j]
        return [c for c, p in enumerate(nxt.parents) if p == j]

    def chain(self, t, depth: int | None = None) -> list[int]:
        depth = self.depth if depth is None else depth
        i = self.space.index(t)
        return [int(self.level(k).assignment[i]) for k in range(depth + 1)]

    @classmethod
    def from_cells(cls, space: MetricSpace, r: float, levels: Sequence, representatives=None,
                   method: str = "manual") -> "PartitionTree":
        """Build a tree from label lists per level (level 0 excluded).

        Parents are inferred from containment and ``child_index`` from the
        listed order. Invalid input is kept as-is so that
        :func:`validate_tree` can report it.
        """
        n = space.n
        built = [_make_level(n, [tuple(range(n))], [0], [-1], [1])]
        for k, cells in enumerate(levels, start=1):
            idx_cells = [space.indices(c) for c in cells]
            prev = built[-1]
            parents = []
            for c in idx_cells:
                owners = {int(prev.assignment[i]) for i in c}
                parents.append(owners.pop() if len(owners) == 1 and -1 not in owners else -1)
            counters: dict[int, int] = {}
            child_index = []
            for p in parents:
                counters[p] = counters.get(p, 0) + 1
                child_index.append(counters[p])
            if representatives is not None:
                reps = space.indices(representatives[k - 1])
            else:
                reps = [min(c, key=lambda i: space.labels[i]) if c else -1 for c in idx_cells]
            built.append(_make_level(n, idx_cells, reps, parents, child_index))
        return cls(space, float(r), tuple(built), method)

    def to_json(self) -> dict:
        lab = self.space.labels
        return {
            "r": self.r,
            "method": self.method,
            "space": self.space.to_json(),
            "levels": [
                {
                    "cells": [[lab[i] for i in c] for c in lvl.cells],
                    "representatives": [lab[i] for i in lvl.representatives],
                    "parents": list(lvl.parents),
                    "child_index": list(lvl.child_index),
                }
                for lvl in self.levels
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PartitionTree":
        space = MetricSpace.from_json(obj["space"])
        n = space.n
        levels = []
        for lvl in obj["levels"]:
            cells = [space.indices(c) for c in lvl["cells"]]
            reps = space.indices(lvl["representatives"])
            levels.append(_make_level(n, cells, reps, lvl["parents"], lvl["child_index"]))
        if not levels:
            raise StructuralError("tree JSON has no levels")
        return cls(space, float(obj["r"]), tuple(levels), obj.get("method", "manual"))

    @classmethod
    def load(cls, path) -> "PartitionTree":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def _carve(space: MetricSpace, parent: list[int], radius: float) -> list[list[int]]:
    remaining = sorted(parent, key=lambda i: space.labels[i])
    cells = []
    while remaining:
        center = remaining[0]
        row = space.dist[center]
        cell = [i for i in remaining if row[i] <= radius + 1e-12]
        cells.append(cell)
        taken = set(cell)
        remaining = [i for i in remaining if i not in taken]
    return cells


def build_radial_partitions(space: MetricSpace, r: float, max_depth: int) -> PartitionTree:
    """Carve each cell into balls of radius ``r**-k / 2`` around greedy centers.

    Centers are taken in label order among the points not yet carved, so
    the build is deterministic. Stops at ``max_depth`` or at the first level
    whose cells all have diameter zero; level 1 is always stored.
    """
    if r < 2:
        raise ParameterError(f"ratio r={r} must be at least 2")
    if max_depth < 1:
        raise ParameterError("max_depth must be at least 1")
    if diameter(space) > 1 + TRIANGLE_TOL:
        raise ParameterError("space must be normalized to diameter <= 1")
    n = space.n
    levels = [_make_level(n, [tuple(range(n))], [min(range(n), key=lambda i: space.labels[i])], [-1], [1])]
    for k in range(1, max_depth + 1):
        prev = levels[-1]
        if k > 1 and all(space.set_diameter(c) == 0.0 for c in prev.cells):
            break
        radius = r ** (-k) / 2
        cells, reps, parents, child_index = [], [], [], []
        for j, parent in enumerate(prev.cells):
            for i, cell in enumerate(_carve(space, list(parent), radius), start=1):
                cells.append(cell)
                reps.append(cell[0])
                parents.append(j)
                child_index.append(i)
        levels.append(_make_level(n, cells, reps, parents, child_index))
    return PartitionTree(space, float(r), tuple(levels), "radial")


def validate_tree(tree: PartitionTree, space: MetricSpace | None = None, tol: float = TRIANGLE_TOL) -> list[str]:
    """Report every broken tree invariant; an empty list means the tree is valid."""
    space = tree.space if space is None else space
    if tuple(space.labels) != tuple(tree.space.labels):
        return ["tree labels do not match the space"]
    problems = []
    n = space.n
    everything = set(range(n))
    lvl0 = tree.levels[0]
    if len(lvl0.cells) != 1 or set(lvl0.cells[0]) != everything:
        problems.append("level 0 is not the single cell T")
    for k, lvl in enumerate(tree.levels):
        seen: set[int] = set()
        for j, cell in enumerate(lvl.cells):
            overlap = seen & set(cell)
            if overlap:
                problems.append(f"level {k}: cell {j} overlaps earlier cells at {sorted(overlap)}")
            seen |= set(cell)
            if not cell:
                problems.append(f"level {k}: cell {j} is empty")
                continue
            if lvl.representatives[j] not in cell:
                problems.append(f"level {k}: representative of cell {j} lies outside it")
            if k > 0:
                bound = tree.r ** (-k)
                diam = space.set_diameter(cell)
                if diam > bound + tol:
                    problems.append(f"level {k}: cell {j} has diameter {diam!r} > {bound!r}")
        if seen != everything:
            problems.append(f"level {k}: cells miss points {sorted(everything - seen)}")
        if k == 0:
            continue
        prev = tree.levels[k - 1]
        by_parent: dict[int, list[int]] = {}
        for j, cell in enumerate(lvl.cells):
            owners = {int(prev.assignment[i]) for i in cell}
            if len(owners) != 1 or -1 in owners:
                problems.append(f"level {k}: cell {j} is not inside a single level-{k - 1} cell")
                continue
            (owner,) = owners
            if not set(cell) <= set(prev.cells[owner]):
                problems.append(f"level {k}: cell {j} is not inside a single level-{k - 1} cell")
                continue
            if lvl.parents[j] != owner:
                problems.append(f"level {k}: cell {j} parent link {lvl.parents[j]} should be {owner}")
            by_parent.setdefault(owner, []).append(lvl.child_index[j])
        for owner, idx in by_parent.items():
            if sorted(idx) != list(range(1, len(idx) + 1)):
                problems.append(f"level {k}: children of cell {owner} have labels {sorted(idx)}")
    return problems


def cell_of(tree: PartitionTree, k: int, t) -> int:
    return tree.cell_of(k, t)
