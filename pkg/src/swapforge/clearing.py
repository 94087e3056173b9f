"""Market clearing: from party predicates to executable swap schemes.

The pipeline is

1. enumerate solutions of the conjunction of every party predicate,
2. order them by strict inclusion into a DAG and list its root-to-leaf paths,
3. find redundancy providers (parties for which completing two solutions
   together would break their predicate),
4. assign hashlocks along each path, reusing the locks of the solution a path
   extends,
5. for the priority-based protocol, guard each scheme with the negated
   circuits of the higher-ranked schemes it conflicts with.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Iterable, Mapping, Optional, Sequence

from .crypto import Circuit, Conj, Hashlock, Neg, all_of, derive_secret, make_hashlock
from .graph import Digraph, feedback_vertex_set, is_acyclic, is_strongly_connected, subgraph_of_arcs
from .predicate import Expr, evaluate_on, to_cnf
from .sat import Solver

DEFAULT_LIMIT = 16


class ClearingError(ValueError):
    pass


@dataclass(frozen=True)
class Solution:
    id: int
    arcs: frozenset  # ids of the arcs set true

    def assignment(self, g: Digraph) -> dict[str, bool]:
        return {a.id: a.id in self.arcs for a in g.arcs}

    def vertices(self, g: Digraph) -> frozenset:
        return frozenset(v for i in self.arcs for v in (g.arc_by_id[i].src, g.arc_by_id[i].dst))

    def subgraph(self, g: Digraph) -> Digraph:
        return subgraph_of_arcs(g, self.arcs)

    @property
    def label(self) -> str:
        return f"s{self.id}"

    def includes(self, other: "Solution") -> bool:
        """``other`` is strictly contained in this solution."""
        return other.arcs < self.arcs


def canonical_key(arcs: Iterable[str]) -> tuple:
    ids = tuple(sorted(arcs))
    return (len(ids), ids)


def enumerate_solutions(phi: Expr, g: Digraph, limit: int = DEFAULT_LIMIT) -> list[Solution]:
    """Non-trivial, strongly connected models of ``phi`` over the arcs of ``g``.

    Models are produced by projected all-SAT over the Tseytin encoding. The
    result is truncated at ``limit`` and then sorted canonically (fewest arcs
    first, then by the sorted arc ids), which fixes the solution ids.
    """
    arc_ids = [a.id for a in g.sorted_arcs]
    cnf = to_cnf(phi, extra_vars=arc_ids)
    unknown = set(cnf.var_map) - set(arc_ids)
    if unknown:
        raise ClearingError(f"predicates mention unknown arcs {sorted(unknown)}")
    project = [cnf.var_map[a] for a in arc_ids]
    found: list[frozenset] = []
    for bits in Solver(cnf.num_vars, cnf.clauses).models(project):
        true_arcs = frozenset(a for a, b in zip(arc_ids, bits) if b)
        if not true_arcs:
            continue
        if not is_strongly_connected(subgraph_of_arcs(g, true_arcs)):
            continue
        found.append(true_arcs)
        if len(found) >= limit:
            break
    found.sort(key=canonical_key)
    return [Solution(i + 1, arcs) for i, arcs in enumerate(found)]


# --------------------------------------------------------------- inclusion


@dataclass
class SolutionDag:
    nodes: list  # Solutions
    edges: set  # (parent id, child id), child strictly includes parent

    @property
    def by_id(self) -> dict[int, Solution]:
        return {s.id: s for s in self.nodes}

    def children(self, sid: int) -> list[int]:
        return sorted(c for p, c in self.edges if p == sid)

    def parents(self, sid: int) -> list[int]:
        return sorted(p for p, c in self.edges if c == sid)

    @property
    def roots(self) -> list[int]:
        return sorted(s.id for s in self.nodes if not self.parents(s.id))

    @property
    def leaves(self) -> list[int]:
        return sorted(s.id for s in self.nodes if not self.children(s.id))


def build_solution_dag(solutions: Sequence[Solution]) -> SolutionDag:
    """Hasse diagram of strict inclusion between solutions."""
    edges = set()
    for s in solutions:
        for t in solutions:
            if not t.includes(s):
                continue
            if any(u.includes(s) and t.includes(u) for u in solutions):
                continue
            edges.add((s.id, t.id))
    return SolutionDag(list(solutions), edges)


def enumerate_paths(dag: SolutionDag) -> list[tuple[int, ...]]:
    """Every root-to-leaf path; an isolated root is a path of length one."""
    paths: list[tuple[int, ...]] = []

    def walk(prefix: tuple[int, ...]) -> None:
        kids = dag.children(prefix[-1])
        if not kids:
            paths.append(prefix)
            return
        for k in kids:
            walk(prefix + (k,))

    for r in dag.roots:
        walk((r,))
    return paths


# ------------------------------------------------------- conflicts and RPs


def conflict_parties(a: Solution, b: Solution, preds: Mapping[str, Expr], g: Digraph) -> set[str]:
    """Parties in both solutions whose predicate fails when both complete."""
    union = a.arcs | b.arcs
    shared = a.vertices(g) & b.vertices(g)
    return {x for x in shared if x in preds and not evaluate_on(preds[x], union)}


def solutions_conflict(a: Solution, b: Solution, preds: Mapping[str, Expr], g: Digraph) -> bool:
    return bool(conflict_parties(a, b, preds, g))


def find_redundancy_providers(
    preds: Mapping[str, Expr],
    solutions: Sequence[Solution],
    g: Digraph,
    mode: str = "A",
    restrictions: Optional[Mapping[str, Expr]] = None,
) -> set[str]:
    """Parties for which two solutions cannot both complete.

    In mode B a party only counts when the union keeps its same-token
    restriction intact; if the shared token already makes the pair
    impossible, no extra lock is needed.
    """
    rps: set[str] = set()
    for a, b in combinations(solutions, 2):
        for x in conflict_parties(a, b, preds, g):
            if mode == "B" and restrictions and x in restrictions:
                if not evaluate_on(restrictions[x], a.arcs | b.arcs):
                    continue
            rps.add(x)
    return rps


# ------------------------------------------------------- hashlock planning


@dataclass
class SchemePlan:
    id: int
    solution: Solution
    prefix: tuple  # solution ids from a DAG root to this solution
    paths: tuple  # full root-to-leaf paths sharing this prefix
    hashlocks: tuple  # Hashlocks
    generators: dict  # lock digest -> party
    secrets: dict  # lock digest -> Secret
    leaders: frozenset  # escrow-first parties
    rps: frozenset  # redundancy providers holding a lock in this scheme
    arcs: frozenset
    circuit: Circuit = None
    guard: Circuit = None  # the circuit actually used on contracts
    priority: int = 0

    @property
    def key(self) -> tuple:
        return (self.solution.id, self.prefix)

    @property
    def label(self) -> str:
        return f"S{self.id}"

    def locks_of(self, party: str) -> list[Hashlock]:
        return [h for h in self.hashlocks if h.generator == party]


def _fresh_locks(parties: Iterable[str], sol: Solution, seed, store: dict) -> list[Hashlock]:
    out = []
    for x in sorted(set(parties)):
        key = (x, sol.id)
        if key not in store:
            secret = derive_secret(seed, x, sol.id)
            store[key] = (make_hashlock(secret), secret)
        out.append(store[key][0])
    return out


def assign_hashlocks(
    dag: SolutionDag,
    paths: Sequence[tuple[int, ...]],
    g: Digraph,
    rps: Iterable[str] = (),
    seed: int | str = 0,
) -> list[SchemePlan]:
    """One scheme per distinct (solution, lock set) reachable along the paths.

    At a root the generators are a feedback vertex set of the solution graph
    plus its redundancy providers. Each later step adds locks only for the
    parties new to that step: a feedback vertex set of the delta graph, the
    redundancy providers touching it, and whatever extra leaders are needed
    to cut cycles of the full solution graph that no existing leader breaks.
    """
    rps = set(rps)
    by_id = dag.by_id
    store: dict = {}
    plans: dict[tuple, SchemePlan] = {}
    order: list[tuple] = []
    for q in paths:
        locks: list[Hashlock] = []
        leaders: set[str] = set()
        gens_rp: set[str] = set()
        prev: Optional[Solution] = None
        for depth, sid in enumerate(q):
            sol = by_id[sid]
            gs = sol.subgraph(g)
            if prev is None:
                new_leaders = feedback_vertex_set(gs)
                new_rps = rps & set(gs.vertices)
            else:
                delta = subgraph_of_arcs(g, sol.arcs - prev.arcs)
                new_leaders = feedback_vertex_set(delta)
                residual = gs.remove_vertices(leaders | new_leaders)
                if not is_acyclic(residual):
                    new_leaders |= feedback_vertex_set(residual)
                new_rps = rps & set(delta.vertices)
            leaders |= new_leaders
            gens_rp |= new_rps
            locks = locks + [h for h in _fresh_locks(new_leaders | new_rps, sol, seed, store) if h not in locks]
            key = (sol.id, frozenset(h.digest for h in locks))
            prefix = tuple(q[: depth + 1])
            if key in plans:
                plan = plans[key]
                if q not in plan.paths:
                    plan.paths = plan.paths + (q,)
            else:
                secrets = {store[k][0].digest: store[k][1] for k in store}
                plan = SchemePlan(
                    id=0,
                    solution=sol,
                    prefix=prefix,
                    paths=(q,),
                    hashlocks=tuple(locks),
                    generators={h.digest: h.generator for h in locks},
                    secrets={h.digest: secrets[h.digest] for h in locks},
                    leaders=frozenset(leaders),
                    rps=frozenset(gens_rp),
                    arcs=sol.arcs,
                    circuit=all_of(locks),
                )
                plans[key] = plan
                order.append(key)
            prev = sol
    result = [plans[k] for k in order]
    result.sort(key=lambda p: (p.solution.id, p.prefix))
    for i, p in enumerate(result):
        p.id = i + 1
        p.guard = p.circuit
        p.priority = i
    return result


def base_plan(g: Digraph, generators: Iterable[str], seed: int | str = 0) -> SchemePlan:
    """The single scheme of a plain swap over the whole graph."""
    sol = Solution(1, frozenset(a.id for a in g.arcs))
    gens = set(generators)
    if not gens:
        raise ClearingError("a swap needs at least one hashlock generator")
    if not is_acyclic(g.remove_vertices(gens)):
        raise ClearingError("the hashlock generators do not cut every cycle")
    locks = _fresh_locks(gens, sol, seed, {})
    return SchemePlan(
        id=1,
        solution=sol,
        prefix=(1,),
        paths=((1,),),
        hashlocks=tuple(locks),
        generators={h.digest: h.generator for h in locks},
        secrets={h.digest: derive_secret(seed, h.generator, sol.id) for h in locks},
        leaders=frozenset(gens),
        rps=frozenset(),
        arcs=sol.arcs,
        circuit=all_of(locks),
        guard=all_of(locks),
    )


# ------------------------------------------------------------- selection


def union_compatible(arcs: frozenset, preds: Mapping[str, Expr]) -> bool:
    return all(evaluate_on(p, arcs) for p in preds.values())


def maximal_compatible_set(
    plans: Sequence[SchemePlan],
    preds: Mapping[str, Expr],
    completed: Iterable[int],
    selected: Sequence[int] = (),
    excluded: Iterable[int] = (),
) -> list[int]:
    """Greedy extension of ``selected`` by escrow-complete schemes in id order.

    A scheme joins when completing it together with everything already chosen
    keeps every party predicate true.
    """
    done = set(completed)
    skip = set(excluded)
    by_id = {p.id: p for p in plans}
    chosen = list(selected)
    arcs = frozenset().union(*(by_id[i].arcs for i in chosen)) if chosen else frozenset()
    for p in sorted(plans, key=lambda p: p.id):
        if p.id in chosen or p.id not in done or p.id in skip:
            continue
        trial = arcs | p.arcs
        if union_compatible(trial, preds):
            chosen.append(p.id)
            arcs = trial
    return chosen


# --------------------------------------------------------------- ranking


def rank_solutions(solutions: Sequence[Solution], ranking: Optional[Sequence] = None) -> list[int]:
    """Preference order as a list of solution ids, most preferred first.

    ``ranking`` may list solution ids or arc-id sets; it must be a permutation
    of the solutions. By default larger solutions come first, ties by id.
    """
    if ranking is None:
        return [s.id for s in sorted(solutions, key=lambda s: (-len(s.arcs), s.id))]
    by_arcs = {s.arcs: s.id for s in solutions}
    ids: list[int] = []
    for item in ranking:
        if isinstance(item, int):
            ids.append(item)
        else:
            arcs = frozenset(item)
            if arcs not in by_arcs:
                raise ClearingError(f"ranking entry {sorted(arcs)} is not a solution")
            ids.append(by_arcs[arcs])
    if sorted(ids) != sorted(s.id for s in solutions):
        raise ClearingError("ranking must be a permutation of the solutions")
    return ids


def order_schemes(plans: Sequence[SchemePlan], order: Sequence[int]) -> list[SchemePlan]:
    """Renumber schemes so that ids follow the solution preference order."""
    pos = {sid: i for i, sid in enumerate(order)}
    ranked = sorted(plans, key=lambda p: (pos[p.solution.id], p.prefix))
    out = []
    for i, p in enumerate(ranked):
        out.append(replace(p, id=i + 1, priority=i))
    return out


def build_circuits_B(
    plans: Sequence[SchemePlan], order: Sequence[int], preds: Mapping[str, Expr], g: Digraph
) -> list[SchemePlan]:
    """Guard every scheme with the negation of each higher-ranked conflicting
    scheme's circuit, over every path variant of that scheme."""
    ranked = order_schemes(plans, order)
    pos = {sid: i for i, sid in enumerate(order)}
    out = []
    for p in ranked:
        negs = []
        for o in ranked:
            if pos[o.solution.id] < pos[p.solution.id] and solutions_conflict(o.solution, p.solution, preds, g):
                negs.append(Neg(o.circuit))
        guard = Conj(tuple(negs) + (p.circuit,)) if negs else p.circuit
        out.append(replace(p, guard=guard))
    return out


# ------------------------------------------------------------ full market


@dataclass
class MarketPlan:
    protocol: str
    solutions: list
    dag: SolutionDag
    paths: list
    rps: set
    schemes: list
    preds: dict  # party -> P_x used for conflicts (S_x, plus r_x in mode B)
    order: list = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return bool(self.solutions)


def plan_market(
    g: Digraph,
    safety: Mapping[str, Expr],
    restrictions: Mapping[str, Expr],
    protocol: str,
    *,
    limit: int = DEFAULT_LIMIT,
    ranking: Optional[Sequence] = None,
    seed: int | str = 0,
) -> MarketPlan:
    from .predicate import conj, conjoin_all

    if protocol == "B":
        preds = {x: conj(safety[x], restrictions.get(x, conj())) for x in safety}
    else:
        preds = dict(safety)
    phi = conjoin_all(preds[x] for x in sorted(preds))
    solutions = enumerate_solutions(phi, g, limit)
    dag = build_solution_dag(solutions)
    paths = enumerate_paths(dag)
    rps = find_redundancy_providers(preds, solutions, g, protocol, restrictions)
    schemes = assign_hashlocks(dag, paths, g, rps, seed)
    order: list[int] = []
    if protocol == "B" and solutions:
        order = rank_solutions(solutions, ranking)
        schemes = build_circuits_B(schemes, order, preds, g)
    return MarketPlan(protocol, solutions, dag, paths, rps, schemes, preds, order)


def describe_plan(plan: MarketPlan, g: Digraph) -> str:
    lines = [f"protocol {plan.protocol}: {len(plan.solutions)} solution(s)"]
    for s in plan.solutions:
        lines.append(f"  {s.label}: {{{', '.join(sorted(s.arcs))}}}")
    if plan.dag.edges:
        lines.append("inclusion edges: " + ", ".join(f"s{a} < s{b}" for a, b in sorted(plan.dag.edges)))
    lines.append("paths: " + "; ".join("->".join(f"s{i}" for i in q) for q in plan.paths))
    lines.append("redundancy providers: " + (", ".join(sorted(plan.rps)) or "none"))
    if plan.order:
        lines.append("preference: " + " > ".join(f"s{i}" for i in plan.order))
    for p in plan.schemes:
        lines.append(f"scheme {p.label} = ({p.solution.label}, {'->'.join(f's{i}' for i in p.prefix)})")
        lines.append(f"  leaders: {', '.join(sorted(p.leaders))}")
        for h in p.hashlocks:
            lines.append(f"  lock {h.label} {h.hex[:16]}")
        lines.append(f"  circuit: {p.circuit}")
        if p.guard != p.circuit:
            lines.append(f"  guarded: {p.guard}")
    return "\n".join(lines)
