"""Directed transfer graphs and the graph algorithms the protocols rely on.

Vertices are party ids (plain strings, totally ordered by string comparison).
Every arc carries an asset id. Graphs are immutable and hashable, so derived
quantities such as the longest simple path are cached per graph.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import cached_property, lru_cache
from itertools import combinations
from typing import Iterable, Mapping, Union

EXACT_FVS_LIMIT = 12


class GraphError(ValueError):
    """Raised for structurally invalid graphs."""


@dataclass(frozen=True)
class Asset:
    id: str
    owner: str
    amount: int = 1
    ledger: str = "main"

    def __post_init__(self) -> None:
        if self.amount < 0:
            raise GraphError(f"asset {self.id!r} has negative amount")


@dataclass(frozen=True, order=True)
class Arc:
    id: str
    src: str
    dst: str
    asset: str = ""

    def __post_init__(self) -> None:
        if self.src == self.dst:
            raise GraphError(f"arc {self.id!r} is a self-loop on {self.src!r}")


@dataclass(frozen=True)
class Digraph:
    vertices: frozenset
    arcs: frozenset

    def __post_init__(self) -> None:
        seen: dict[str, Arc] = {}
        triples = set()
        for arc in self.arcs:
            if arc.src not in self.vertices or arc.dst not in self.vertices:
                raise GraphError(f"arc {arc.id!r} has an endpoint outside the vertex set")
            if arc.id in seen:
                raise GraphError(f"duplicate arc id {arc.id!r}")
            seen[arc.id] = arc
            triple = (arc.src, arc.dst, arc.asset)
            if triple in triples:
                raise GraphError(f"arc {arc.id!r} duplicates an existing (from, to, asset) triple")
            triples.add(triple)

    @classmethod
    def from_arcs(cls, arcs: Iterable[Arc], vertices: Iterable[str] = ()) -> "Digraph":
        arcs = frozenset(arcs)
        verts = set(vertices)
        for a in arcs:
            verts.add(a.src)
            verts.add(a.dst)
        return cls(frozenset(verts), arcs)

    @cached_property
    def arc_by_id(self) -> dict[str, Arc]:
        return {a.id: a for a in self.arcs}

    @cached_property
    def sorted_arcs(self) -> tuple[Arc, ...]:
        return tuple(sorted(self.arcs))

    @cached_property
    def sorted_vertices(self) -> tuple[str, ...]:
        return tuple(sorted(self.vertices))

    @cached_property
    def successors(self) -> dict[str, tuple[str, ...]]:
        out: dict[str, set[str]] = {v: set() for v in self.vertices}
        for a in self.arcs:
            out[a.src].add(a.dst)
        return {v: tuple(sorted(s)) for v, s in out.items()}

    @cached_property
    def predecessors(self) -> dict[str, tuple[str, ...]]:
        inc: dict[str, set[str]] = {v: set() for v in self.vertices}
        for a in self.arcs:
            inc[a.dst].add(a.src)
        return {v: tuple(sorted(s)) for v, s in inc.items()}

    def out_arcs(self, v: str) -> tuple[Arc, ...]:
        return tuple(a for a in self.sorted_arcs if a.src == v)

    def in_arcs(self, v: str) -> tuple[Arc, ...]:
        return tuple(a for a in self.sorted_arcs if a.dst == v)

    def has_edge(self, u: str, v: str) -> bool:
        return v in self.successors.get(u, ())

    def remove_vertices(self, removed: Iterable[str]) -> "Digraph":
        gone = set(removed)
        return Digraph(
            frozenset(v for v in self.vertices if v not in gone),
            frozenset(a for a in self.arcs if a.src not in gone and a.dst not in gone),
        )


@dataclass(frozen=True)
class UGraph:
    """Undirected simple graph: one edge per unordered vertex pair."""

    vertices: frozenset
    edges: frozenset  # frozensets of two party ids

    @cached_property
    def neighbours(self) -> dict[str, tuple[str, ...]]:
        nb: dict[str, set[str]] = {v: set() for v in self.vertices}
        for e in self.edges:
            u, v = sorted(e)
            nb[u].add(v)
            nb[v].add(u)
        return {v: tuple(sorted(s)) for v, s in nb.items()}

    def has_edge(self, u: str, v: str) -> bool:
        return frozenset((u, v)) in self.edges

    def with_edges(self, pairs: Iterable[tuple[str, str]]) -> "UGraph":
        extra = {frozenset(p) for p in pairs if p[0] != p[1]}
        return UGraph(self.vertices, self.edges | frozenset(extra))


AnyGraph = Union[Digraph, UGraph]


def _adjacency(g: AnyGraph) -> Mapping[str, tuple[str, ...]]:
    return g.neighbours if isinstance(g, UGraph) else g.successors


def _reachable(start: str, adj: Mapping[str, Iterable[str]]) -> set[str]:
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


def is_strongly_connected(g: Digraph) -> bool:
    """True when every vertex reaches every other one along directed arcs."""
    if not g.vertices:
        return False
    root = g.sorted_vertices[0]
    return (
        len(_reachable(root, g.successors)) == len(g.vertices)
        and len(_reachable(root, g.predecessors)) == len(g.vertices)
    )


def is_acyclic(g: Digraph) -> bool:
    indeg = {v: len(g.predecessors[v]) for v in g.vertices}
    queue = deque(v for v, d in indeg.items() if d == 0)
    removed = 0
    while queue:
        u = queue.popleft()
        removed += 1
        for v in g.successors[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                queue.append(v)
    return removed == len(g.vertices)


def feedback_vertex_set(g: Digraph) -> set[str]:
    """A set of parties whose removal leaves ``g`` acyclic.

    Up to ``EXACT_FVS_LIMIT`` vertices the search is exact: subsets are tried
    by increasing size in lexicographic order, so the first hit is a minimum
    set and ties go to the smallest party ids. Larger graphs use a local-ratio
    cycle-cutting heuristic followed by a reverse-delete pass.
    """
    if is_acyclic(g):
        return set()
    if len(g.vertices) <= EXACT_FVS_LIMIT:
        return _exact_fvs(g)
    return _local_ratio_fvs(g)


def _exact_fvs(g: Digraph) -> set[str]:
    verts = g.sorted_vertices
    for k in range(1, len(verts) + 1):
        for subset in combinations(verts, k):
            if is_acyclic(g.remove_vertices(subset)):
                return set(subset)
    return set(verts)  # unreachable: removing everything is acyclic


def _cyclic_core(g: Digraph) -> Digraph:
    """Strip vertices with no incoming or no outgoing arcs until none remain."""
    while True:
        dead = [v for v in g.vertices if not g.successors[v] or not g.predecessors[v]]
        if not dead:
            return g
        g = g.remove_vertices(dead)


def _shortest_cycle(g: Digraph) -> list[str]:
    best: list[str] | None = None
    for start in g.sorted_vertices:
        parent = {start: None}
        queue = deque([start])
        found = None
        while queue and found is None:
            u = queue.popleft()
            for v in g.successors[u]:
                if v == start:
                    found = u
                    break
                if v not in parent:
                    parent[v] = u
                    queue.append(v)
        if found is None:
            continue
        cycle = [found]
        while parent[cycle[-1]] is not None:
            cycle.append(parent[cycle[-1]])
        if best is None or len(cycle) < len(best):
            best = cycle
    assert best is not None
    return best


def _local_ratio_fvs(g: Digraph) -> set[str]:
    weight = {v: 1.0 for v in g.vertices}
    chosen: list[str] = []
    work = _cyclic_core(g)
    while work.vertices:
        cycle = _shortest_cycle(work)
        delta = min(weight[v] for v in cycle)
        zeroed = []
        for v in cycle:
            weight[v] -= delta
            if weight[v] <= 1e-12:
                zeroed.append(v)
        for v in sorted(zeroed):
            chosen.append(v)
        work = _cyclic_core(work.remove_vertices(zeroed))
    result = list(chosen)
    for v in reversed(chosen):
        trial = [u for u in result if u != v]
        if is_acyclic(g.remove_vertices(trial)):
            result = trial
    return set(result)


@lru_cache(maxsize=1024)
def max_path_length(g: AnyGraph) -> int:
    """Vertex count of the longest simple path (directed for a Digraph)."""
    if not g.vertices:
        return 0
    adj = _adjacency(g)
    n = len(g.vertices)
    best = 1

    def extend(v: str, visited: set[str], length: int) -> bool:
        nonlocal best
        if length > best:
            best = length
            if best == n:
                return True
        for w in adj[v]:
            if w not in visited:
                visited.add(w)
                done = extend(w, visited, length + 1)
                visited.discard(w)
                if done:
                    return True
        return False

    for v in sorted(g.vertices):
        if extend(v, {v}, 1):
            break
    return best


def to_undirected(g: AnyGraph) -> UGraph:
    """Symmetric closure: a pair of opposite arcs becomes a single edge."""
    if isinstance(g, UGraph):
        return g
    edges = frozenset(frozenset((a.src, a.dst)) for a in g.arcs)
    return UGraph(frozenset(g.vertices), edges)


def solution_subgraph(g: Digraph, assignment: Mapping[str, bool]) -> Digraph:
    """The digraph formed by the arcs an assignment sets true."""
    missing = [a.id for a in g.arcs if a.id not in assignment]
    if missing:
        raise GraphError(f"assignment does not cover arcs {sorted(missing)}")
    return Digraph.from_arcs(a for a in g.arcs if assignment[a.id])


def subgraph_of_arcs(g: Digraph, arc_ids: Iterable[str]) -> Digraph:
    return Digraph.from_arcs(g.arc_by_id[i] for i in arc_ids)
