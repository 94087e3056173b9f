"""Protocol drivers and the post-run auditor.

A run is prepared once (market clearing, hashlock planning, verification
context) and can then be executed under many behavior assignments. Each round
the engine lets every party agent look at the public ledger state and queue
transactions, then advances the world clock.

Three drivers share the same agents:

* ``base``: a single swap over the whole graph with a fixed set of hashlock
  generators, directed or pathless hashkeys.
* ``A``: every solution becomes one or more schemes; each arc gets its own
  escrowed copy of the asset, circuits of compatible schemes are OR-ed, and a
  shared select program decides which schemes may redeem.
* ``B``: one contract per token with one clause per scheme, guarded by the
  negations of higher-ranked conflicting schemes; hashkeys are broadcast over
  an undirected graph and contracts wait for the hard timeout.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence

from .behavior import CONFORMING, Behavior
from .clearing import MarketPlan, SchemePlan, base_plan, maximal_compatible_set, plan_market, solutions_conflict
from .crypto import (
    Hashkey,
    KeyMode,
    VerifyContext,
    extend_hashkey,
    leader_hashkey,
    make_keyring,
    path_admissible,
    Hashlock,
)
from .graph import Arc, Asset, Digraph, UGraph, feedback_vertex_set, max_path_length, to_undirected
from .ledger import Clause, ContractStatus, EscrowContract, World, contract_id
from .predicate import conj, evaluate
from .scenario import Scenario


class EngineError(RuntimeError):
    pass


class AuditError(ValueError):
    """The trace is malformed."""


# ------------------------------------------------------------------- setup


def split_assets(g: Digraph, assets: Mapping[str, Asset]) -> tuple[Digraph, dict]:
    """Give every arc its own asset copy (``token@arc``) where a token labels
    several arcs, as the per-arc escrow protocols require."""
    counts = Counter(a.asset for a in g.arcs)
    new_assets = dict(assets)
    arcs = []
    for a in g.sorted_arcs:
        if counts[a.asset] > 1:
            base = assets[a.asset]
            nid = f"{a.asset}@{a.id}"
            new_assets[nid] = Asset(nid, base.owner, base.amount, base.ledger)
            arcs.append(Arc(a.id, a.src, a.dst, nid))
        else:
            arcs.append(a)
    for a in g.arcs:
        if counts[a.asset] > 1:
            new_assets.pop(a.asset, None)
    return Digraph(g.vertices, frozenset(arcs)), new_assets


def broadcast_graph(g: Digraph) -> UGraph:
    """Undirected graph over which hashkeys travel in the priority protocol:
    the symmetric closure of ``g`` plus an edge between every two recipients
    of the same token.  A key shown on a shared contract by one recipient
    must be relayable by the others, or a conforming co-recipient could be
    left unable to falsify a negated clause on its own outgoing contract."""
    pairs = []
    groups: dict[tuple, list[str]] = {}
    for a in g.arcs:
        groups.setdefault((a.src, a.asset), []).append(a.dst)
    for dsts in groups.values():
        ds = sorted(dsts)
        pairs += [(u, v) for i, u in enumerate(ds) for v in ds[i + 1 :]]
    return to_undirected(g).with_edges(pairs)


@dataclass
class RunSetup:
    name: str
    protocol: str
    g: Digraph
    assets: dict
    specs: dict
    safety: dict
    liveness: dict
    restrictions: dict
    preds: dict
    schemes: list
    behaviors: dict
    mode: KeyMode
    mpl: int
    broadcast: Optional[UGraph]
    keyring: object
    seed: int
    rps: frozenset = frozenset()
    market: Optional[MarketPlan] = None
    offchain: dict = field(default_factory=lambda: {"gamma": 0, "omega": 0, "omega_prime": 0})

    @property
    def feasible(self) -> bool:
        return bool(self.schemes)

    @property
    def parties(self) -> list[str]:
        return list(self.g.sorted_vertices)

    @property
    def ctx(self) -> VerifyContext:
        return VerifyContext(self.mode, self.g, self.mpl, self.broadcast)

    @property
    def expiry(self) -> int:
        return self.ctx.lock_expiry()

    def behavior(self, x: str) -> Behavior:
        return self.behaviors.get(x, CONFORMING)

    def conforming(self, x: str) -> bool:
        return self.behavior(x).conforming

    def with_behaviors(self, behaviors: Mapping[str, Behavior]) -> "RunSetup":
        return replace(self, behaviors=dict(behaviors))

    def with_schemes(self, schemes: Sequence[SchemePlan]) -> "RunSetup":
        return replace(self, schemes=list(schemes))


def prepare(scenario: Scenario, protocol: Optional[str] = None, *, seed: Optional[int] = None) -> RunSetup:
    """Clear the market (or build the single base scheme) for one protocol."""
    protocol = protocol or scenario.protocol
    seed = scenario.seed if seed is None else seed
    safety = scenario.safety()
    restrictions = scenario.restrictions()
    keyring = make_keyring(scenario.signature, seed, scenario.key_seeds)
    if protocol == "B":
        g, assets = scenario.graph, dict(scenario.assets)
        mode = KeyMode.UNDIRECTED
        broadcast = broadcast_graph(g)
        preds = {x: conj(safety[x], restrictions[x]) for x in safety}
    else:
        g, assets = split_assets(scenario.graph, scenario.assets)
        mode = KeyMode.PATHLESS if scenario.key_mode == "pathless" else KeyMode.DIRECTED
        broadcast = None
        preds = dict(safety)
    market = None
    rps: frozenset = frozenset()
    if protocol == "base":
        gens = scenario.generators or sorted(feedback_vertex_set(g))
        schemes = [base_plan(g, gens, seed)]
    else:
        market = plan_market(
            scenario.graph,
            safety,
            restrictions,
            protocol,
            limit=scenario.limit,
            ranking=scenario.ranking,
            seed=seed,
        )
        schemes = market.schemes
        rps = frozenset(market.rps)
    return RunSetup(
        name=scenario.name,
        protocol=protocol,
        g=g,
        assets=assets,
        specs=dict(scenario.specs),
        safety=safety,
        liveness=scenario.liveness(),
        restrictions=restrictions,
        preds=preds,
        schemes=list(schemes),
        behaviors=dict(scenario.behaviors),
        mode=mode,
        mpl=max_path_length(scenario.graph),
        broadcast=broadcast,
        keyring=keyring,
        seed=seed,
        rps=rps,
        market=market,
    )


# ------------------------------------------------------------------ agents


class PartyAgent:
    """One party's decision logic, run once per round."""

    def __init__(self, party: str, behavior: Behavior, sim: "Simulation") -> None:
        self.x = party
        self.b = behavior
        self.sim = sim
        self.private: dict[bytes, list[Hashkey]] = {}
        self.sent: set[tuple] = set()
        self.crash_round = behavior.crash_round(sim.setup.mpl)
        self.my_locks: dict[bytes, tuple[Hashlock, object, list[int]]] = {}
        for p in sim.setup.schemes:
            for h in p.hashlocks:
                if h.generator != party:
                    continue
                entry = self.my_locks.setdefault(h.digest, (h, p.secrets[h.digest], []))
                entry[2].append(p.id)
        self.my_plans = [p for p in sim.setup.schemes if party in sim.vertices[p.id]]

    # -- helpers ----------------------------------------------------------

    def active(self, r: int) -> bool:
        return self.crash_round is None or r < self.crash_round

    def _withheld(self, digest: bytes) -> bool:
        return any(self.b.withholds_hashkey(pid) for pid in self.sim.lock_schemes.get(digest, ()))

    def _targets(self, digest: bytes, *, any_endpoint: bool = False) -> list[EscrowContract]:
        """Open contracts with an open lock ``digest`` this party may present to."""
        world = self.sim.world
        undirected = self.sim.setup.mode is KeyMode.UNDIRECTED
        out = []
        for cid in sorted(world.contracts):
            c = world.contracts[cid]
            if c.status is not ContractStatus.OPEN or digest not in c.lock_states:
                continue
            if c.lock_states[digest].status.value != "open":
                continue
            if undirected or any_endpoint:
                if self.x not in c.endpoints:
                    continue
            elif self.x not in c.recipients:
                continue
            out.append(c)
        return out

    def _submit(self, c: EscrowContract, key: Hashkey) -> None:
        tag = (c.id, key.digest, key.path)
        if tag in self.sent:
            return
        self.sent.add(tag)
        self.sim.world.submit_hashkey(self.x, c.id, key)

    def receive_private(self, keys: Iterable[Hashkey]) -> None:
        for k in keys:
            self.private.setdefault(k.digest, []).append(k)

    # -- the round --------------------------------------------------------

    def act(self, r: int) -> None:
        if not self.active(r):
            return
        self._escrow(r)
        self._release(r)
        self._relay(r)
        if self.b.kind == "leak" and r == self.b.round:
            self._leak(r)
        if not self.b.conforming:
            self._use_private(r)
        if self.b.kind == "forge":
            self._forge(r)

    def _escrow(self, r: int) -> None:
        sim = self.sim
        if r >= sim.setup.mpl:
            return
        need: dict[str, list[Clause]] = {}
        for p in self.my_plans:
            if self.b.withholds_escrow(p.id):
                continue
            if self.x not in p.leaders and not sim.incoming_complete(self.x, p.id):
                continue
            for a in sim.out_arcs[(self.x, p.id)]:
                need.setdefault(a.asset, []).append(Clause(p.id, p.guard, a.dst, p.priority))
        world = sim.world
        for asset in sorted(need):
            clauses = need[asset]
            c = world.contracts.get(contract_id(asset))
            if c is None:
                if world.holdings.get(asset) == self.x:
                    world.submit_escrow(self.x, asset, clauses)
                continue
            if c.owner != self.x or c.status is not ContractStatus.OPEN:
                continue
            missing = [cl for cl in clauses if not c.has_scheme(cl.scheme)]
            if missing:
                world.extend_circuit(self.x, c.id, missing)

    def _release(self, r: int) -> None:
        sim = self.sim
        if r > sim.setup.mpl:
            return
        for digest in sorted(self.my_locks):
            lock, secret, pids = self.my_locks[digest]
            if self._withheld(digest):
                continue
            if not sim.release_allowed(pids):
                continue
            if not all(sim.incoming_complete(self.x, pid) for pid in pids):
                continue
            key = sim.leader_key(self.x, digest)
            for c in self._targets(digest):
                self._submit(c, key)

    def _relay(self, r: int) -> None:
        sim = self.sim
        world = sim.world
        mode = sim.setup.mode
        if mode is KeyMode.DIRECTED:
            sources = world.contracts_of_owner(self.x)
        else:
            sources = [world.contracts[k] for k in sorted(world.contracts)]
        neighbours = set(sim.setup.broadcast.neighbours.get(self.x, ())) if mode is KeyMode.UNDIRECTED else None
        deadline = sim.setup.ctx.deadline
        best: dict[bytes, Hashkey] = {}
        for c in sources:
            for digest, key in c.unlock_keys.items():
                # Every signature layer travels with a key, so any suffix is
                # a key in its own right.  Keep the longest usable one: the
                # deadline grows with the number of signatures.
                for j in range(len(key.path)):
                    k = key.suffix(j)
                    if self.x in k.path:
                        continue
                    if neighbours is not None and k.path[0] not in neighbours:
                        continue
                    if r + 1 > deadline(len(k.path) + 1):
                        break
                    cur = best.get(digest)
                    if cur is None or (len(k.path), k.path) > (len(cur.path), cur.path):
                        best[digest] = k
                    break
        for digest in sorted(best):
            if self._withheld(digest):
                continue
            targets = self._targets(digest)
            if not targets:
                continue
            ext = extend_hashkey(best[digest], self.x, sim.setup.keyring)
            for c in targets:
                self._submit(c, ext)

    def _leak(self, r: int) -> None:
        sim = self.sim
        target = self.b.target
        keys = [sim.leader_key(self.x, d) for d in sorted(self.my_locks)]
        sim.world.record("leak", self.x, {"to": target, "locks": [k.digest.hex() for k in keys]})
        if target == self.x:
            for k in keys:
                for c in self._targets(k.digest):
                    self._submit(c, k)
        elif target in sim.agents:
            sim.agents[target].receive_private(keys)

    def _use_private(self, r: int) -> None:
        keyring = self.sim.setup.keyring
        for digest in sorted(self.private):
            for k in self.private[digest]:
                if self.x in k.path:
                    if k.path[0] != self.x:
                        continue
                    mine = k
                else:
                    mine = extend_hashkey(k, self.x, keyring)
                for c in self._targets(digest):
                    self._submit(c, mine)

    def _forge(self, r: int) -> None:
        """Present every key this party can assemble by stripping outer
        signature layers and prepending itself."""
        world = self.sim.world
        keyring = self.sim.setup.keyring
        known: list[Hashkey] = [k for ks in self.private.values() for k in ks]
        for cid in sorted(world.contracts):
            known += [world.contracts[cid].unlock_keys[d] for d in sorted(world.contracts[cid].unlock_keys)]
        for k in known:
            for j in range(len(k.path)):
                suf = k.suffix(j)
                if self.x in suf.path:
                    continue
                forged = extend_hashkey(suf, self.x, keyring)
                for c in self._targets(k.digest, any_endpoint=True):
                    self._submit(c, forged)

    def votes_against(self, proposal: Sequence[int]) -> set[int]:
        if self.b.conforming:
            return set()
        return {pid for pid in proposal if self.b.withholds_hashkey(pid) or self.b.withholds_escrow(pid)}


# ------------------------------------------------------------- simulation


@dataclass
class RunResult:
    setup: RunSetup
    world: Optional[World]
    report: "AuditReport"

    @property
    def trace(self):
        return self.world.trace if self.world is not None else None

    @property
    def verdicts(self) -> dict:
        return self.report.verdicts

    @property
    def completion_round(self) -> Optional[int]:
        return self.report.completion_round


class Simulation:
    def __init__(self, setup: RunSetup) -> None:
        if not setup.feasible:
            raise EngineError("no schemes to run")
        self.setup = setup
        self.world = World(setup.g, setup.assets, setup.ctx, setup.keyring, strict_priority=setup.protocol == "B")
        self.plans = {p.id: p for p in setup.schemes}
        self.vertices = {p.id: p.solution.vertices(setup.g) for p in setup.schemes}
        self.in_arcs: dict[tuple, list[Arc]] = {}
        self.out_arcs: dict[tuple, list[Arc]] = {}
        for p in setup.schemes:
            for x in self.vertices[p.id]:
                self.in_arcs[(x, p.id)] = [setup.g.arc_by_id[i] for i in sorted(p.arcs) if setup.g.arc_by_id[i].dst == x]
                self.out_arcs[(x, p.id)] = [setup.g.arc_by_id[i] for i in sorted(p.arcs) if setup.g.arc_by_id[i].src == x]
        self.lock_schemes: dict[bytes, list[int]] = {}
        self.secrets: dict[bytes, object] = {}
        for p in setup.schemes:
            for h in p.hashlocks:
                self.lock_schemes.setdefault(h.digest, []).append(p.id)
                self.secrets[h.digest] = p.secrets[h.digest]
        self._leader_keys: dict[tuple, Hashkey] = {}
        self.selected: list[int] = [p.id for p in setup.schemes] if setup.protocol != "A" else []
        self.rejected: set[int] = set()
        self.rng = random.Random(f"select/{setup.seed}")
        self.agents = {x: PartyAgent(x, setup.behavior(x), self) for x in setup.parties}

    # -- shared views -----------------------------------------------------

    def arc_escrowed(self, a: Arc, pid: int) -> bool:
        c = self.world.contracts.get(contract_id(a.asset))
        if c is None:
            return False
        return any(cl.scheme == pid and cl.recipient == a.dst for cl in c.clauses)

    def incoming_complete(self, x: str, pid: int) -> bool:
        return all(self.arc_escrowed(a, pid) for a in self.in_arcs.get((x, pid), ()))

    def escrow_complete(self, pid: int) -> bool:
        g = self.setup.g
        return all(self.arc_escrowed(g.arc_by_id[i], pid) for i in self.plans[pid].arcs)

    def release_allowed(self, pids: Sequence[int]) -> bool:
        return any(pid in self.selected for pid in pids)

    def leader_key(self, x: str, digest: bytes) -> Hashkey:
        tag = (x, digest)
        if tag not in self._leader_keys:
            self._leader_keys[tag] = leader_hashkey(self.secrets[digest], x, self.setup.keyring)
        return self._leader_keys[tag]

    # -- select phase (shared program plus recorded messages) --------------

    def _select(self, r: int) -> None:
        complete = [pid for pid in sorted(self.plans) if self.escrow_complete(pid)]
        while True:
            cand = maximal_compatible_set(
                self.setup.schemes, self.setup.preds, complete, self.selected, self.rejected
            )
            added = cand[len(self.selected) :]
            if not added:
                return
            voters = sorted(v for v in self.setup.rps if self.agents[v].active(r))
            if voters:
                proposer = self.rng.choice(voters)
                self.world.record("select_propose", proposer, {"schemes": added})
                # A deviating proposer leaves out what it means to sabotage.
                noes: set[int] = set(self.agents[proposer].votes_against(added))
                for v in voters:
                    if v == proposer:
                        continue
                    against = self.agents[v].votes_against(added)
                    self.world.record("select_vote", v, {"schemes": added, "reject": sorted(against)})
                    noes |= against
                if noes:
                    self.rejected |= noes
                    continue
            self.selected = cand
            return

    def run(self) -> RunResult:
        expiry = self.world.expiry
        for r in range(expiry):
            if self.setup.protocol == "A":
                self._select(r)
            for x in sorted(self.agents):
                self.agents[x].act(r)
            self.world.step_round()
        if not self.world.all_settled:
            raise EngineError("contracts left open after the lock expiry round")
        report = audit(self.world.trace.events, self.setup)
        return RunResult(self.setup, self.world, report)


def execute(setup: RunSetup, behaviors: Optional[Mapping[str, Behavior]] = None) -> RunResult:
    if behaviors is not None:
        setup = setup.with_behaviors(behaviors)
    if not setup.feasible:
        return RunResult(setup, None, AuditReport.infeasible_report(setup))
    return Simulation(setup).run()


def run_base_swap(
    scenario: Scenario,
    generators: Optional[Iterable[str]] = None,
    behaviors: Optional[Mapping[str, Behavior]] = None,
) -> RunResult:
    """The plain swap over the whole graph; ``generators`` default to the
    scenario's choice or a minimum feedback vertex set."""
    sc = scenario if generators is None else scenario.with_overrides(generators=list(generators))
    return execute(prepare(sc, "base"), behaviors)


def run_protocol_a(scenario: Scenario, behaviors: Optional[Mapping[str, Behavior]] = None) -> RunResult:
    return execute(prepare(scenario, "A"), behaviors)


def run_protocol_b(scenario: Scenario, behaviors: Optional[Mapping[str, Behavior]] = None) -> RunResult:
    return execute(prepare(scenario, "B"), behaviors)


def run_scenario(
    scenario: Scenario, protocol: Optional[str] = None, behaviors: Optional[Mapping[str, Behavior]] = None
) -> RunResult:
    return execute(prepare(scenario, protocol), behaviors)


def standalone_setup(setup: RunSetup, scheme_id: int) -> RunSetup:
    """The same run restricted to one scheme with its plain circuit; its
    completion round is the scheme's own swap time."""
    p = next(p for p in setup.schemes if p.id == scheme_id)
    alone = replace(p, guard=p.circuit, priority=0)
    return replace(setup, schemes=[alone], behaviors={})


# ------------------------------------------------------------------- audit


@dataclass
class Verdict:
    party: str
    conforming: bool
    safety_ok: bool
    liveness_ok: bool
    collateral: int
    completion_round: Optional[int]
    paid: tuple = ()
    received: tuple = ()


@dataclass
class AuditReport:
    verdicts: dict
    assignment: dict
    completion_round: Optional[int]
    completed_schemes: list
    conservation_violations: list = field(default_factory=list)
    double_triggers: list = field(default_factory=list)
    unauthorized_unlocks: list = field(default_factory=list)
    overpay_violations: list = field(default_factory=list)
    level_violations: list = field(default_factory=list)
    level_splits: list = field(default_factory=list)
    feasible: bool = True

    @classmethod
    def infeasible_report(cls, setup: RunSetup) -> "AuditReport":
        verdicts = {
            x: Verdict(x, setup.conforming(x), True, False, 0, None) for x in setup.parties
        }
        return cls(verdicts, {a.id: False for a in setup.g.arcs}, None, [], feasible=False)

    @property
    def safety_violations(self) -> list[str]:
        return [x for x, v in sorted(self.verdicts.items()) if v.conforming and not v.safety_ok]

    @property
    def safe(self) -> bool:
        return not (
            self.safety_violations
            or self.conservation_violations
            or self.double_triggers
            or self.unauthorized_unlocks
            or self.overpay_violations
        )


_REQUIRED = ("round", "ledger", "type", "contract", "party", "detail")


def audit(events: Sequence[Mapping], setup: RunSetup) -> AuditReport:
    """Judge a run from its trace and the static party specifications."""
    g = setup.g
    for i, ev in enumerate(events):
        if any(k not in ev for k in _REQUIRED) or not isinstance(ev["detail"], dict):
            raise AuditError(f"event {i} is missing trace fields")
    holdings = {a.id: a.owner for a in setup.assets.values()}
    owner: dict[str, str] = {}
    recipients: dict[str, set] = {}
    amount: dict[str, int] = {}
    asset_of: dict[str, str] = {}
    settled: Counter = Counter()
    escrowed: Counter = Counter()
    collateral: Counter = Counter()
    assignment = {a.id: False for a in g.arcs}
    trigger_round: dict[str, list[int]] = {}
    levels: dict[str, list[tuple[str, int]]] = {}
    report = AuditReport({}, assignment, None, [])
    ctx = setup.ctx
    for ev in events:
        t, d, cid, party = ev["type"], ev["detail"], ev["contract"], ev["party"]
        if t == "escrow":
            asset = d["asset"]
            if holdings.get(asset) != party:
                report.conservation_violations.append(f"{cid}: escrow of {asset} by non-holder {party}")
            holdings[asset] = cid
            owner[cid], amount[cid], asset_of[cid] = party, d["amount"], asset
            recipients[cid] = set(d["arcs"])
            escrowed[party] += d["amount"]
            collateral[party] = max(collateral[party], escrowed[party])
        elif t == "extend":
            recipients.setdefault(cid, set()).update(d["arcs"])
        elif t in ("trigger", "refund"):
            if cid not in owner:
                raise AuditError(f"{t} for unknown contract {cid}")
            settled[cid] += 1
            if settled[cid] > 1:
                report.double_triggers.append(f"{cid} settled {settled[cid]} times")
            asset = asset_of[cid]
            if holdings.get(asset) != cid:
                report.conservation_violations.append(f"{cid}: settles {asset} it does not hold")
            escrowed[owner[cid]] -= amount[cid]
            if t == "trigger":
                holdings[asset] = d["recipient"]
                assignment[d["arc"]] = True
                trigger_round.setdefault(owner[cid], []).append(ev["round"])
                trigger_round.setdefault(d["recipient"], []).append(ev["round"])
                levels.setdefault(owner[cid], []).append((d["arc"], d["scheme"]))
            else:
                holdings[asset] = owner[cid]
        elif t == "unlock":
            if cid not in owner:
                raise AuditError(f"unlock on unknown contract {cid}")
            presenters = recipients[cid] | ({owner[cid]} if setup.mode is KeyMode.UNDIRECTED else set())
            path = tuple(d["path"])
            probe = Hashkey(b"", path, ())
            lock = Hashlock(bytes.fromhex(d["lock"]), d["generator"], d.get("solution", 0))
            ok = path_admissible(probe, lock, ctx, presenters) and ev["round"] <= ctx.deadline(len(path))
            if not ok:
                report.unauthorized_unlocks.append(f"{cid}: path {'-'.join(path)} at round {ev['round']}")
    for asset, holder in holdings.items():
        if holder.startswith("escrow:"):
            report.conservation_violations.append(f"{asset} still escrowed at the end of the run")

    restricted = setup.protocol == "B"
    for x in setup.parties:
        s_ok = evaluate(setup.safety[x], assignment)
        if restricted:
            s_ok = s_ok and evaluate(setup.restrictions[x], assignment)
        l_ok = evaluate(setup.liveness[x], assignment)
        paid = tuple(a.id for a in g.out_arcs(x) if assignment[a.id])
        recv = tuple(a.id for a in g.in_arcs(x) if assignment[a.id])
        rounds = trigger_round.get(x)
        report.verdicts[x] = Verdict(
            x, setup.conforming(x), s_ok, l_ok, collateral[x], max(rounds) if rounds else None, paid, recv
        )
        if setup.conforming(x):
            spec = setup.specs[x]
            out_ok = evaluate(spec.outgoing_constraint, assignment)
            if restricted:
                out_ok = out_ok and evaluate(setup.restrictions[x], assignment)
            if not out_ok:
                report.overpay_violations.append(f"{x} paid {', '.join(paid)}")
    all_rounds = [r for rs in trigger_round.values() for r in rs]
    report.completion_round = max(all_rounds) if all_rounds else None
    report.completed_schemes = [p.id for p in setup.schemes if all(assignment[a] for a in p.arcs)]

    if restricted:
        # The level of a triggered contract is the preference rank of the
        # solution whose clause fired; two schemes of one solution share it.
        by_id = {p.id: p for p in setup.schemes}
        rank = {sid: i + 1 for i, sid in enumerate(setup.market.order)} if setup.market else {}
        for x, lv in sorted(levels.items()):
            if not setup.conforming(x):
                continue
            sols = {by_id[s].solution.id: by_id[s].solution for _, s in lv}
            if len(sols) < 2:
                continue
            report.level_splits.append(f"{x}: outgoing arcs at levels {sorted(rank.get(i, i) for i in sols)}")
            ordered = sorted(sols)
            for i, a in enumerate(ordered):
                for b in ordered[i + 1 :]:
                    if solutions_conflict(sols[a], sols[b], setup.preds, g):
                        report.level_violations.append(
                            f"{x}: outgoing arcs at conflicting levels {rank.get(a, a)} and {rank.get(b, b)}"
                        )
    return report
