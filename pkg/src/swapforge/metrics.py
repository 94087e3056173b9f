"""Monte-Carlo timing and collateral comparison.

Three strategies are compared under one failure model, where every
alternative independently goes through with probability ``q``:

* ``sequential``: the alternatives are tried one after another as plain
  single-scheme swaps; a failed attempt costs the scheme's full timeout.
* ``A``: all alternatives run in parallel under the selection protocol.
* ``B``: all alternatives run in parallel under the priority protocol.

A failing alternative is modelled by its leaders withholding that scheme's
hashkeys, so its escrows refund at the lock expiry.
"""

from __future__ import annotations

import random
import statistics
from dataclasses import dataclass, field, replace
from typing import Optional

from .behavior import Behavior
from .engine import RunSetup, execute, prepare, standalone_setup
from .graph import max_path_length
from .scenario import Scenario

STRATEGIES = ("sequential", "A", "B")


@dataclass(frozen=True)
class RunMetrics:
    strategy: str
    run: int
    seed: int
    completion_round: Optional[int]
    time: Optional[float]
    completed: tuple
    failed_schemes: tuple
    attempts: int
    collateral: dict

    @property
    def succeeded(self) -> bool:
        return bool(self.completed)


@dataclass
class ClosedForms:
    """The analytic predictions, in rounds."""

    q: float
    m_sequential: int
    m_parallel: int
    epsilon: int
    gamma: float = 0.0
    omega: float = 0.0
    omega_prime: float = 0.0

    @property
    def sequential(self) -> float:
        return max((1 / self.q - 1) * self.m_sequential, 0) + self.epsilon

    @property
    def a_best(self) -> float:
        return self.epsilon + self.gamma + self.omega

    @property
    def a_worst(self) -> float:
        return self.m_parallel + self.gamma

    @property
    def b_top(self) -> float:
        return self.epsilon + self.gamma + self.omega_prime

    @property
    def b_fallback(self) -> float:
        return self.m_parallel + self.gamma + self.omega_prime

    def as_dict(self) -> dict:
        return {
            "q": self.q,
            "m_sequential": self.m_sequential,
            "m_parallel": self.m_parallel,
            "epsilon": self.epsilon,
            "gamma": self.gamma,
            "omega": self.omega,
            "omega_prime": self.omega_prime,
            "sequential": self.sequential,
            "a_best": self.a_best,
            "a_worst": self.a_worst,
            "b_top": self.b_top,
            "b_fallback": self.b_fallback,
        }


@dataclass
class BatchReport:
    scenario: str
    runs: int
    seed: int
    q: float
    rows: list = field(default_factory=list)
    closed: dict = field(default_factory=dict)  # strategy -> ClosedForms

    def of(self, strategy: str) -> list[RunMetrics]:
        return [r for r in self.rows if r.strategy == strategy]

    def summary(self) -> dict:
        out = {}
        for s in STRATEGIES:
            rows = self.of(s)
            if not rows:
                continue
            times = [r.time for r in rows if r.time is not None]
            parties = sorted({x for r in rows for x in r.collateral})
            out[s] = {
                "runs": len(rows),
                "success_rate": sum(r.succeeded for r in rows) / len(rows),
                "mean_time": statistics.fmean(times) if times else None,
                "mean_attempts": statistics.fmean(r.attempts for r in rows),
                "max_collateral": {x: max(r.collateral.get(x, 0) for r in rows) for x in parties},
            }
        return out


def scheme_alone(setup: RunSetup, scheme_id: int) -> RunSetup:
    """One scheme run by itself over its own swap digraph, as a plain
    atomic swap would be: its timeouts come from that digraph alone."""
    alone = standalone_setup(setup, scheme_id)
    plan = alone.schemes[0]
    return replace(alone, mpl=max_path_length(plan.solution.subgraph(setup.g)))


def sabotage(setup: RunSetup, failed: set[int]) -> dict:
    """Behaviors that make exactly the ``failed`` schemes miss their hashkeys."""
    withheld: dict[str, set[int]] = {}
    for p in setup.schemes:
        if p.id in failed:
            for x in sorted(p.leaders):
                withheld.setdefault(x, set()).add(p.id)
    return {x: Behavior.withhold_hashkey(ids) for x, ids in sorted(withheld.items())}


def draw_failures(rng: random.Random, scheme_ids, q: float) -> set[int]:
    return {sid for sid in sorted(scheme_ids) if rng.random() >= q}


def offchain_time(setup: RunSetup) -> float:
    off = setup.offchain
    if setup.protocol == "A":
        return off["gamma"] + off["omega"]
    if setup.protocol == "B":
        return off["gamma"] + off["omega_prime"]
    return 0.0


def parallel_run(scenario: Scenario, protocol: str, seed: int, q: float, run: int = 0) -> tuple[RunMetrics, object]:
    """One Monte-Carlo draw for a parallel protocol; also returns the run."""
    setup = prepare(scenario, protocol, seed=seed)
    rng = random.Random(f"failures/{seed}")
    failed = draw_failures(rng, [p.id for p in setup.schemes], q)
    res = execute(setup, sabotage(setup, failed))
    rep = res.report
    rnd = rep.completion_round if rep.completed_schemes else None
    time = None if rnd is None else rnd + offchain_time(setup)
    m = RunMetrics(
        protocol,
        run,
        seed,
        rnd,
        time,
        tuple(rep.completed_schemes),
        tuple(sorted(failed)),
        1,
        {x: v.collateral for x, v in rep.verdicts.items()},
    )
    return m, res


class SequentialBaseline:
    """Retry one alternative at a time until one succeeds.

    The alternative tried first is the one the priority ranking prefers;
    each try is a real run of the plain swap, conforming on success and
    sabotaged on failure.  Runs are deterministic, so each distinct
    outcome is simulated once and reused.
    """

    def __init__(self, scenario: Scenario, seed: int, max_attempts: int = 10_000) -> None:
        self.setup = prepare(scenario, "A", seed=seed)
        self.max_attempts = max_attempts
        order = self.setup.market.order if self.setup.market else []
        first = {}
        for p in self.setup.schemes:
            first.setdefault(p.solution.id, p.id)
        self.scheme_ids = [first[s] for s in order if s in first] or [p.id for p in self.setup.schemes]
        self._cache: dict[tuple[int, bool], object] = {}

    def attempt(self, scheme_id: int, success: bool):
        key = (scheme_id, success)
        if key not in self._cache:
            alone = scheme_alone(self.setup, scheme_id)
            beh = {} if success else sabotage(alone, {scheme_id})
            self._cache[key] = execute(alone, beh).report
        return self._cache[key]

    def timeout(self, scheme_id: int) -> int:
        return scheme_alone(self.setup, scheme_id).expiry

    def epsilon(self, scheme_id: int) -> int:
        return self.attempt(scheme_id, True).completion_round

    def run(self, rng: random.Random, q: float, run: int = 0, seed: int = 0) -> RunMetrics:
        elapsed = 0
        collateral: dict[str, int] = {}
        attempts = 0
        ids = self.scheme_ids
        while attempts < self.max_attempts:
            sid = ids[attempts % len(ids)]
            attempts += 1
            ok = rng.random() < q
            rep = self.attempt(sid, ok)
            for x, v in rep.verdicts.items():
                collateral[x] = max(collateral.get(x, 0), v.collateral)
            if ok:
                elapsed += rep.completion_round
                return RunMetrics("sequential", run, seed, elapsed, float(elapsed), (sid,), (), attempts, collateral)
            # A failed try ends when its last escrow is refunded.
            elapsed += self.timeout(sid)
        return RunMetrics("sequential", run, seed, None, None, (), (), attempts, collateral)


def closed_forms(scenario: Scenario, q: float, seed: Optional[int] = None) -> dict:
    """Predicted times per strategy.

    Epsilon is measured on the top-ranked alternative run by itself: as a
    plain swap for the sequential baseline, and under each protocol's own
    contracts for A and B.
    """
    out = {}
    seq = SequentialBaseline(scenario, scenario.seed if seed is None else seed)
    top = seq.scheme_ids[0]
    for proto in ("A", "B"):
        setup = prepare(scenario, proto, seed=seed)
        if not setup.feasible:
            continue
        first = top
        if setup.market is not None and setup.market.order:
            best = setup.market.order[0]
            first = next((p.id for p in setup.schemes if p.solution.id == best), top)
        eps = execute(standalone_setup(setup, first)).completion_round
        off = setup.offchain
        out[proto] = ClosedForms(
            q, seq.timeout(top), setup.expiry, eps, off["gamma"], off["omega"], off["omega_prime"]
        )
    if out:
        out["sequential"] = replace(out["A"], epsilon=seq.epsilon(top))
    return out


def run_batch(
    scenario: Scenario,
    runs: int,
    seed: int,
    q: Optional[float] = None,
    strategies=STRATEGIES,
) -> BatchReport:
    """``runs`` seeded draws per strategy; run ``i`` uses seed ``seed + i``."""
    q = scenario.q if q is None else q
    if not 0 < q <= 1:
        raise ValueError("q must be in (0, 1]")
    report = BatchReport(scenario.name, runs, seed, q)
    if not prepare(scenario, "A", seed=seed).feasible:
        return report
    report.closed = closed_forms(scenario, q, seed)
    seq = SequentialBaseline(scenario, seed) if "sequential" in strategies else None
    for i in range(runs):
        s = seed + i
        if seq is not None:
            report.rows.append(seq.run(random.Random(f"sequential/{s}"), q, i, s))
        for proto in ("A", "B"):
            if proto in strategies:
                report.rows.append(parallel_run(scenario, proto, s, q, i)[0])
    return report
