"""A small DPLL solver with projected all-SAT enumeration.

Enumeration decides the projection variables first, in index order and
false-first. Each model found is recorded as a blocking clause over the
projection variables and the search backtracks chronologically to the most
recent projection decision, which is where the blocking clause stops being
falsified. Projected models therefore come out once each, in lexicographic
order of their bit vectors.
"""

from __future__ import annotations

import sys
from collections import defaultdict
from typing import Iterator, Optional, Sequence


class Solver:
    def __init__(self, num_vars: int, clauses: Sequence[Sequence[int]]) -> None:
        self.n = num_vars
        self.clauses: list[list[int]] = []
        self.occ: dict[int, list[int]] = defaultdict(list)
        self.units: list[int] = []
        self.empty = False
        self.val: list[Optional[bool]] = [None] * (num_vars + 1)
        self.trail: list[int] = []
        self.blocking: list[tuple[int, ...]] = []
        for c in clauses:
            self.add_clause(c)

    def add_clause(self, clause: Sequence[int]) -> None:
        lits = list(dict.fromkeys(clause))
        if any(-l in lits for l in lits):
            return  # tautology
        if not lits:
            self.empty = True
            return
        idx = len(self.clauses)
        self.clauses.append(lits)
        for l in lits:
            self.occ[l].append(idx)
        if len(lits) == 1:
            self.units.append(lits[0])

    # -- assignment bookkeeping ------------------------------------------

    def _value(self, lit: int) -> Optional[bool]:
        v = self.val[abs(lit)]
        if v is None:
            return None
        return v if lit > 0 else not v

    def _assign(self, lit: int) -> None:
        self.val[abs(lit)] = lit > 0
        self.trail.append(lit)

    def _undo(self, mark: int) -> None:
        while len(self.trail) > mark:
            self.val[abs(self.trail.pop())] = None

    def _propagate(self, start: int) -> bool:
        i = start
        while i < len(self.trail):
            lit = self.trail[i]
            i += 1
            for ci in self.occ.get(-lit, ()):
                unassigned = 0
                last = 0
                satisfied = False
                for l in self.clauses[ci]:
                    v = self._value(l)
                    if v is True:
                        satisfied = True
                        break
                    if v is None:
                        unassigned += 1
                        last = l
                        if unassigned > 1:
                            break
                if satisfied or unassigned > 1:
                    continue
                if unassigned == 0:
                    return False
                self._assign(last)
        return True

    def _init(self) -> bool:
        self._undo(0)
        if self.empty:
            return False
        for u in self.units:
            v = self._value(u)
            if v is False:
                return False
            if v is None:
                self._assign(u)
        return self._propagate(0)

    # -- search -----------------------------------------------------------

    def _complete(self, order: Sequence[int], idx: int = 0) -> bool:
        """Extend the current partial assignment to a full model, or fail."""
        while idx < len(order) and self.val[order[idx]] is not None:
            idx += 1
        if idx == len(order):
            return True
        v = order[idx]
        for lit in (-v, v):
            mark = len(self.trail)
            self._assign(lit)
            if self._propagate(mark) and self._complete(order, idx + 1):
                return True
            self._undo(mark)
        return False

    def solve(self) -> Optional[dict[int, bool]]:
        if not self._init():
            return None
        order = list(range(1, self.n + 1))
        if not self._complete(order):
            return None
        model = {v: bool(self.val[v]) for v in range(1, self.n + 1)}
        self._undo(0)
        return model

    def models(self, project: Sequence[int]) -> Iterator[tuple[bool, ...]]:
        """Yield each distinct model restricted to ``project``."""
        if not self._init():
            return
        rest = [v for v in range(1, self.n + 1) if v not in set(project)]
        limit = max(sys.getrecursionlimit(), 4 * (self.n + 50))
        sys.setrecursionlimit(limit)
        yield from self._enumerate(list(project), 0, rest)
        self._undo(0)

    def _enumerate(self, project: list[int], idx: int, rest: list[int]) -> Iterator[tuple[bool, ...]]:
        while idx < len(project) and self.val[project[idx]] is not None:
            idx += 1
        if idx == len(project):
            mark = len(self.trail)
            if self._complete(rest):
                proj = tuple(bool(self.val[v]) for v in project)
                self.blocking.append(tuple(-v if b else v for v, b in zip(project, proj)))
                self._undo(mark)
                yield proj
            else:
                self._undo(mark)
            return
        v = project[idx]
        for lit in (-v, v):
            mark = len(self.trail)
            self._assign(lit)
            if self._propagate(mark):
                yield from self._enumerate(project, idx + 1, rest)
            self._undo(mark)


def all_models(num_vars: int, clauses: Sequence[Sequence[int]], project: Sequence[int]) -> Iterator[tuple[bool, ...]]:
    return Solver(num_vars, clauses).models(project)
