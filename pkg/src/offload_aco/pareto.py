"""Dominance, non-dominated filtering and the exhaustive Pareto oracle.

Both objectives (time, cpu) are minimized. Comparisons are exact.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .callgraph import (
    DEFAULT_PATH_BOUND,
    DualPlacementGraph,
    ObjectiveVector,
    PathSolution,
    enumerate_paths,
)

__all__ = [
    "PathSolution",
    "ParetoArchive",
    "dominates",
    "filter",
    "nondominated_mask",
    "pareto_front",
]


def dominates(u: ObjectiveVector, v: ObjectiveVector) -> bool:
    """True iff ``u`` is no worse than ``v`` in both objectives and better in one."""
    return (
        u.time_ms <= v.time_ms
        and u.cpu_units <= v.cpu_units
        and (u.time_ms < v.time_ms or u.cpu_units < v.cpu_units)
    )


def nondominated_mask(times: Sequence[float], cpus: Sequence[float]) -> np.ndarray:
    """Boolean mask of the non-dominated points among ``(times[i], cpus[i])``.

    Sort-and-sweep, O(n log n). Points with equal cost are all kept.
    """
    t = np.asarray(times, dtype=np.float64)
    c = np.asarray(cpus, dtype=np.float64)
    n = t.shape[0]
    keep = np.zeros(n, dtype=bool)
    if n == 0:
        return keep
    order = np.lexsort((c, t))
    best_cpu = np.inf  # lowest cpu among strictly smaller times
    i = 0
    while i < n:
        j = i
        ti = t[order[i]]
        while j < n and t[order[j]] == ti:
            j += 1
        group = order[i:j]
        group_min = c[group[0]]  # sorted by cpu within equal time
        if group_min < best_cpu:
            keep[group[c[group] == group_min]] = True
            best_cpu = group_min
        i = j
    return keep


class ParetoArchive:
    """Set of mutually non-dominated path solutions.

    Inserting a dominated candidate leaves the archive unchanged; inserting a
    candidate evicts the members it dominates. Distinct paths with equal cost
    are all retained, an identical path is stored once.
    """

    def __init__(self, solutions: Iterable[PathSolution] = ()):
        self._items: dict[tuple[str, ...], PathSolution] = {}
        for s in solutions:
            self.insert(s)

    def insert(self, candidate: PathSolution) -> bool:
        """Add ``candidate`` unless dominated. Returns True if the archive changed."""
        if candidate.nodes in self._items:
            return False
        cost = candidate.cost
        for s in self._items.values():
            if dominates(s.cost, cost):
                return False
        for key in [k for k, s in self._items.items() if dominates(cost, s.cost)]:
            del self._items[key]
        self._items[candidate.nodes] = candidate
        return True

    @property
    def solutions(self) -> list[PathSolution]:
        """Members sorted by time, then cpu, then node sequence."""
        return sorted(self._items.values(), key=lambda s: (s.cost.time_ms, s.cost.cpu_units, s.nodes))

    def costs(self) -> set[tuple[float, float]]:
        return {s.cost.as_tuple() for s in self._items.values()}

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self.solutions)

    def __contains__(self, item: PathSolution) -> bool:
        s = self._items.get(item.nodes)
        return s is not None and s.cost == item.cost

    def __eq__(self, other) -> bool:
        if not isinstance(other, ParetoArchive):
            return NotImplemented
        return self._items == other._items

    def __repr__(self) -> str:
        return f"ParetoArchive({sorted(self.costs())})"


def filter(candidates: Iterable[PathSolution]) -> ParetoArchive:  # noqa: A001
    """Archive of exactly the candidates that no other candidate dominates."""
    cands = list(candidates)
    archive = ParetoArchive()
    if not cands:
        return archive
    mask = nondominated_mask([s.cost.time_ms for s in cands], [s.cost.cpu_units for s in cands])
    for s, keep in zip(cands, mask):
        if keep:
            archive._items.setdefault(s.nodes, s)
    return archive


def pareto_front(d: DualPlacementGraph, bound: int = DEFAULT_PATH_BOUND) -> ParetoArchive:
    """True front of ``d`` by exhaustive enumeration. Raises PathBoundExceeded when too large."""
    return filter(enumerate_paths(d, bound))
