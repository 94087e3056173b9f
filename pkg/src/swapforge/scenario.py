"""Scenario files: parties, assets, arcs, predicates and run settings.

Scenarios are TOML documents::

    name = "example1"

    [parties.Alice]
    behavior = "conforming"      # optional, see ``Behavior.parse``
    key_seed = "alice"           # optional

    [assets.xcoin]
    owner = "Alice"
    amount = 1
    ledger = "X"

    [arcs.ac]
    from = "Alice"
    to = "Carol"
    asset = "xcoin"

    [predicates.Alice]
    income = { ac = "arc(ba)" }
    outgoing = "true"            # optional

    [run]
    protocol = "A"               # base | A | B
    key_mode = "directed"        # directed | pathless (B always broadcasts)
    seed = 1
    limit = 16
    ranking = [["ac", "ba", "cb"]]
    generators = ["Alice"]       # base protocol only
    signature = "hmac"           # hmac | ed25519
    runs = 1000
    q = 0.25

Arcs that share one asset form the same-token groups used by the reuse
restriction.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .behavior import Behavior, BehaviorError
from .graph import Arc, Asset, Digraph, GraphError, is_strongly_connected
from .predicate import (
    TRUE,
    PartySpec,
    PredicateError,
    build_liveness,
    build_reuse_restriction,
    build_safety,
    parse,
    validate_spec,
)

PROTOCOLS = ("base", "A", "B")
KEY_MODES = ("directed", "pathless")
BUNDLED = (
    "example1",
    "example2",
    "fig2-three-party",
    "fig3-nested",
    "shortcut-attack",
    "pathless-demo",
    "three-alternatives",
    "infeasible",
)


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    name: str
    graph: Digraph
    assets: dict
    specs: dict  # party -> PartySpec
    behaviors: dict = field(default_factory=dict)
    key_seeds: dict = field(default_factory=dict)
    protocol: str = "A"
    key_mode: str = "directed"
    seed: int = 0
    limit: int = 16
    ranking: Optional[list] = None
    generators: Optional[list] = None
    signature: str = "hmac"
    runs: int = 1000
    q: float = 0.25
    description: str = ""

    @property
    def parties(self) -> list[str]:
        return list(self.graph.sorted_vertices)

    def behavior(self, party: str) -> Behavior:
        return self.behaviors.get(party, Behavior())

    def safety(self) -> dict:
        return {x: build_safety(self.specs[x]) for x in self.parties}

    def liveness(self) -> dict:
        return {x: build_liveness(self.specs[x]) for x in self.parties}

    def restrictions(self) -> dict:
        return {x: build_reuse_restriction(self.specs[x]) for x in self.parties}

    def with_behaviors(self, behaviors: dict) -> "Scenario":
        return replace(self, behaviors=dict(behaviors))

    def with_overrides(self, **kw) -> "Scenario":
        return replace(self, **kw)


def _table(doc: dict, key: str) -> dict:
    val = doc.get(key, {})
    if not isinstance(val, dict):
        raise ScenarioError(f"[{key}] must be a table")
    return val


def scenario_from_dict(doc: dict, name: str = "scenario") -> Scenario:
    parties = _table(doc, "parties")
    assets_doc = _table(doc, "assets")
    arcs_doc = _table(doc, "arcs")
    preds_doc = _table(doc, "predicates")
    run = _table(doc, "run")

    assets: dict[str, Asset] = {}
    for aid, a in assets_doc.items():
        owner = a.get("owner")
        if owner not in parties:
            raise ScenarioError(f"asset {aid!r}: owner {owner!r} is not a declared party")
        try:
            assets[aid] = Asset(aid, owner, int(a.get("amount", 1)), str(a.get("ledger", aid)))
        except GraphError as exc:
            raise ScenarioError(str(exc)) from None

    arcs = []
    for arc_id, a in arcs_doc.items():
        src, dst, asset = a.get("from"), a.get("to"), a.get("asset")
        for end, label in ((src, "from"), (dst, "to")):
            if end not in parties:
                raise ScenarioError(f"arc {arc_id!r}: {label} party {end!r} is not declared")
        if asset not in assets:
            raise ScenarioError(f"arc {arc_id!r}: asset {asset!r} is not declared")
        if assets[asset].owner != src:
            raise ScenarioError(f"arc {arc_id!r}: asset {asset!r} is owned by {assets[asset].owner}, not {src}")
        try:
            arcs.append(Arc(arc_id, src, dst, asset))
        except GraphError as exc:
            raise ScenarioError(str(exc)) from None
    try:
        g = Digraph(frozenset(parties), frozenset(arcs))
    except GraphError as exc:
        raise ScenarioError(str(exc)) from None
    if not is_strongly_connected(g):
        raise ScenarioError("the transfer graph is not strongly connected")

    specs: dict[str, PartySpec] = {}
    for x in sorted(parties):
        pdoc = preds_doc.get(x, {})
        income = {}
        for gamma, text in pdoc.get("income", {}).items():
            try:
                income[gamma] = parse(str(text))
            except PredicateError as exc:
                raise ScenarioError(f"predicate for {x}/{gamma}: {exc}") from None
        try:
            outgoing = parse(str(pdoc["outgoing"])) if "outgoing" in pdoc else TRUE
        except PredicateError as exc:
            raise ScenarioError(f"outgoing constraint for {x}: {exc}") from None
        groups: dict[str, list[str]] = {}
        for a in g.out_arcs(x):
            groups.setdefault(a.asset, []).append(a.id)
        same = tuple(tuple(sorted(v)) for k, v in sorted(groups.items()) if len(v) > 1)
        spec = PartySpec(x, income, outgoing, same)
        try:
            validate_spec(spec, g)
        except PredicateError as exc:
            raise ScenarioError(str(exc)) from None
        specs[x] = spec
    unknown = set(preds_doc) - set(parties)
    if unknown:
        raise ScenarioError(f"predicates for undeclared parties {sorted(unknown)}")

    behaviors = {}
    key_seeds = {}
    for x, pdoc in parties.items():
        pdoc = pdoc or {}
        if "behavior" in pdoc:
            try:
                behaviors[x] = Behavior.parse(str(pdoc["behavior"]))
            except BehaviorError as exc:
                raise ScenarioError(f"party {x}: {exc}") from None
        if "key_seed" in pdoc:
            key_seeds[x] = str(pdoc["key_seed"])

    protocol = str(run.get("protocol", "A"))
    if protocol not in PROTOCOLS:
        raise ScenarioError(f"unknown protocol {protocol!r}")
    key_mode = str(run.get("key_mode", "directed"))
    if key_mode not in KEY_MODES:
        raise ScenarioError(f"unknown key mode {key_mode!r}")
    generators = run.get("generators")
    if generators is not None:
        stray = set(generators) - set(parties)
        if stray:
            raise ScenarioError(f"generators {sorted(stray)} are not declared parties")
    ranking = run.get("ranking")
    if ranking is not None:
        for entry in ranking:
            if not isinstance(entry, int) and not set(entry) <= set(g.arc_by_id):
                raise ScenarioError(f"ranking entry {entry!r} names unknown arcs")
    signature = str(run.get("signature", "hmac"))
    if signature not in ("hmac", "ed25519"):
        raise ScenarioError(f"unknown signature scheme {signature!r}")
    return Scenario(
        name=str(doc.get("name", name)),
        graph=g,
        assets=assets,
        specs=specs,
        behaviors=behaviors,
        key_seeds=key_seeds,
        protocol=protocol,
        key_mode=key_mode,
        seed=int(run.get("seed", 0)),
        limit=int(run.get("limit", 16)),
        ranking=ranking,
        generators=list(generators) if generators is not None else None,
        signature=signature,
        runs=int(run.get("runs", 1000)),
        q=float(run.get("q", 0.25)),
        description=str(doc.get("description", "")),
    )


def loads_scenario(text: str, name: str = "scenario") -> Scenario:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"syntax error: {exc}") from None
    return scenario_from_dict(doc, name)


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("swapforge") / "scenarios" / f"{name}.toml"))


def load_scenario(path: str | Path) -> Scenario:
    """Load a scenario file, or a bundled scenario by name."""
    p = Path(path)
    if not p.exists() and str(path) in BUNDLED:
        p = bundled_path(str(path))
    if not p.exists():
        raise ScenarioError(f"no scenario file or bundled scenario named {str(path)!r}")
    return loads_scenario(p.read_text(), p.stem)
