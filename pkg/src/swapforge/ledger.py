"""Simulated blockchains under a single synchronous round clock.

Parties submit transactions during a round; ``step_round`` advances the clock
and includes every queued transaction, so a transaction submitted at round
``r`` is visible at round ``r + 1``. After inclusion the world expires locks
that reached the lock expiry round and settles contracts whose circuit became
decidable. Every state change is appended to the trace.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence, Union

from .crypto import (
    Circuit,
    Disj,
    Hashkey,
    Keyring,
    LockState,
    LockStatus,
    Tri,
    VerifyContext,
    circuit_atoms,
    evaluate_circuit,
    rejection_reason,
)
from .graph import Asset, Digraph

TRACE_FIELDS = ("round", "ledger", "type", "contract", "party", "detail")


class LedgerError(ValueError):
    pass


class ContractStatus(str, Enum):
    OPEN = "open"
    TRIGGERED = "triggered"
    REFUNDED = "refunded"


@dataclass(frozen=True)
class Clause:
    scheme: int
    guard: Circuit
    recipient: str
    priority: int

    def describe(self) -> dict:
        return {"scheme": self.scheme, "recipient": self.recipient, "priority": self.priority, "guard": str(self.guard)}


@dataclass
class EscrowContract:
    id: str
    owner: str
    asset: Asset
    arcs: dict  # recipient -> arc id
    clauses: list
    locks: dict  # digest -> Hashlock
    lock_states: dict  # digest -> LockState
    deadline: int
    opened_round: int
    unlock_keys: dict = field(default_factory=dict)  # digest -> Hashkey
    status: ContractStatus = ContractStatus.OPEN
    settled_round: Optional[int] = None
    paid_to: Optional[str] = None
    level: Optional[int] = None  # scheme of the triggering clause

    @property
    def circuit(self) -> Circuit:
        return Disj(tuple(c.guard for c in self.clauses)) if len(self.clauses) != 1 else self.clauses[0].guard

    @property
    def recipient_by_scheme(self) -> dict[int, str]:
        return {c.scheme: c.recipient for c in self.clauses}

    @property
    def recipients(self) -> frozenset:
        return frozenset(c.recipient for c in self.clauses)

    @property
    def endpoints(self) -> frozenset:
        return self.recipients | {self.owner}

    def has_scheme(self, scheme: int) -> bool:
        return any(c.scheme == scheme for c in self.clauses)

    def _add_clause(self, clause: Clause) -> bool:
        if any(c.scheme == clause.scheme for c in self.clauses):
            return False
        self.clauses.append(clause)
        self.clauses.sort(key=lambda c: (c.priority, c.scheme))
        for h in circuit_atoms(clause.guard):
            if h.digest not in self.locks:
                self.locks[h.digest] = h
                self.lock_states[h.digest] = LockState.open()
        return True


# -------------------------------------------------------------- transactions


@dataclass(frozen=True)
class Escrow:
    asset: str
    clauses: tuple


@dataclass(frozen=True)
class ExtendCircuit:
    contract: str
    clauses: tuple


@dataclass(frozen=True)
class SubmitHashkey:
    contract: str
    key: Hashkey


@dataclass(frozen=True)
class Claim:
    contract: str


Payload = Union[Escrow, ExtendCircuit, SubmitHashkey, Claim]


@dataclass(frozen=True)
class Transaction:
    sender: str
    payload: Payload
    submit_round: int

    @property
    def visible_round(self) -> int:
        return self.submit_round + 1

    @property
    def sort_key(self) -> tuple:
        return (self.sender, hashlib.sha256(repr(self.payload).encode()).hexdigest())


def contract_id(asset: str) -> str:
    return f"escrow:{asset}"


# --------------------------------------------------------------------- trace


class Trace:
    """Append-only event log."""

    def __init__(self) -> None:
        self._events: list[dict] = []

    def append(self, round: int, ledger: str, type: str, contract: Optional[str], party: Optional[str], detail: dict) -> None:
        self._events.append(
            {"round": round, "ledger": ledger, "type": type, "contract": contract, "party": party, "detail": detail}
        )

    @property
    def events(self) -> tuple:
        return tuple(self._events)

    def __len__(self) -> int:
        return len(self._events)

    def of_type(self, *types: str) -> list[dict]:
        return [e for e in self._events if e["type"] in types]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e, separators=(",", ":")) + "\n" for e in self._events)

    @staticmethod
    def parse_jsonl(text: str) -> list[dict]:
        events = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            ev = json.loads(line)
            if tuple(ev) != TRACE_FIELDS:
                raise LedgerError(f"trace line {lineno}: fields must be {TRACE_FIELDS}")
            events.append(ev)
        return events


# --------------------------------------------------------------------- world


class World:
    def __init__(
        self,
        g: Digraph,
        assets: Mapping[str, Asset],
        ctx: VerifyContext,
        keyring: Keyring,
        *,
        expiry: Optional[int] = None,
        strict_priority: bool = False,
    ) -> None:
        self.g = g
        # With strict priority a clause fires only once every clause ranked
        # above it is known to be false, so the firing clause is the
        # highest-priority clause that ever becomes true.
        self.strict_priority = strict_priority
        self.assets = dict(assets)
        self.ctx = ctx
        self.keyring = keyring
        self.expiry = ctx.lock_expiry() if expiry is None else expiry
        self.now = 0
        self.contracts: dict[str, EscrowContract] = {}
        self.holdings: dict[str, str] = {a.id: a.owner for a in self.assets.values()}
        self.pending: list[Transaction] = []
        self.trace = Trace()
        self.escrowed: dict[str, int] = {}
        self.max_escrowed: dict[str, int] = {}

    # -- submission -------------------------------------------------------

    def submit(self, tx: Transaction) -> None:
        if tx.submit_round != self.now:
            raise LedgerError("transactions are submitted at the current round")
        self.pending.append(tx)

    def submit_escrow(self, party: str, asset: str, clauses: Sequence[Clause]) -> str:
        self.submit(Transaction(party, Escrow(asset, tuple(clauses)), self.now))
        return contract_id(asset)

    def extend_circuit(self, party: str, contract: str, clauses: Sequence[Clause]) -> None:
        self.submit(Transaction(party, ExtendCircuit(contract, tuple(clauses)), self.now))

    def submit_hashkey(self, party: str, contract: str, key: Hashkey) -> None:
        self.submit(Transaction(party, SubmitHashkey(contract, key), self.now))

    def claim(self, party: str, contract: str) -> None:
        self.submit(Transaction(party, Claim(contract), self.now))

    def record(self, type: str, party: Optional[str], detail: dict, *, ledger: str = "offchain", contract=None) -> None:
        """Log an event that is not a ledger transaction (off-chain messages)."""
        self.trace.append(self.now, ledger, type, contract, party, detail)

    # -- the clock --------------------------------------------------------

    def step_round(self) -> None:
        batch = sorted(self.pending, key=lambda t: t.sort_key)
        self.pending = []
        self.now += 1
        for tx in batch:
            self._apply(tx)
        if self.now >= self.expiry:
            self._expire_locks()
        for cid in sorted(self.contracts):
            self._settle(self.contracts[cid])

    def _ledger_of(self, asset_id: str) -> str:
        a = self.assets.get(asset_id)
        return a.ledger if a else "unknown"

    def _apply(self, tx: Transaction) -> None:
        p = tx.payload
        if isinstance(p, Escrow):
            self._apply_escrow(tx.sender, p)
        elif isinstance(p, ExtendCircuit):
            self._apply_extend(tx.sender, p)
        elif isinstance(p, SubmitHashkey):
            self._apply_hashkey(tx.sender, p)
        elif isinstance(p, Claim):
            c = self.contracts.get(p.contract)
            ledger = self._ledger_of(c.asset.id) if c else "unknown"
            self.trace.append(self.now, ledger, "claim", p.contract, tx.sender, {"status": c.status.value if c else "missing"})
        else:
            raise LedgerError(f"unknown payload {p!r}")

    def _reject(self, type: str, party: str, contract: Optional[str], ledger: str, reason: str) -> None:
        self.trace.append(self.now, ledger, type, contract, party, {"reason": reason})

    def _clause_arcs(self, party: str, asset: str, clauses: Sequence[Clause]) -> Optional[dict]:
        arcs = {}
        for cl in clauses:
            match = [a for a in self.g.out_arcs(party) if a.asset == asset and a.dst == cl.recipient]
            if len(match) != 1:
                return None
            arcs[cl.recipient] = match[0].id
        return arcs

    def _apply_escrow(self, party: str, p: Escrow) -> None:
        cid = contract_id(p.asset)
        ledger = self._ledger_of(p.asset)
        asset = self.assets.get(p.asset)
        if asset is None:
            return self._reject("escrow_rejected", party, cid, ledger, "unknown asset")
        if cid in self.contracts:
            return self._reject("escrow_rejected", party, cid, ledger, "asset already escrowed")
        if self.holdings.get(p.asset) != party:
            return self._reject("escrow_rejected", party, cid, ledger, "sender does not own the asset")
        arcs = self._clause_arcs(party, p.asset, p.clauses)
        if not p.clauses or arcs is None:
            return self._reject("escrow_rejected", party, cid, ledger, "clause recipient is not an arc of this asset")
        c = EscrowContract(cid, party, asset, {}, [], {}, {}, self.expiry, self.now)
        for cl in p.clauses:
            c._add_clause(cl)
        c.arcs = arcs
        self.contracts[cid] = c
        self.holdings[p.asset] = cid
        self.escrowed[party] = self.escrowed.get(party, 0) + asset.amount
        self.max_escrowed[party] = max(self.max_escrowed.get(party, 0), self.escrowed[party])
        self.trace.append(
            self.now,
            ledger,
            "escrow",
            cid,
            party,
            {
                "asset": asset.id,
                "amount": asset.amount,
                "arcs": dict(sorted(arcs.items())),
                "clauses": [cl.describe() for cl in c.clauses],
                "deadline": c.deadline,
            },
        )

    def _apply_extend(self, party: str, p: ExtendCircuit) -> None:
        c = self.contracts.get(p.contract)
        if c is None:
            return self._reject("extend_rejected", party, p.contract, "unknown", "no such contract")
        ledger = self._ledger_of(c.asset.id)
        if c.owner != party:
            return self._reject("extend_rejected", party, c.id, ledger, "only the escrower may extend")
        if c.status is not ContractStatus.OPEN:
            return self._reject("extend_rejected", party, c.id, ledger, "contract already settled")
        arcs = self._clause_arcs(party, c.asset.id, p.clauses)
        if arcs is None:
            return self._reject("extend_rejected", party, c.id, ledger, "clause recipient is not an arc of this asset")
        added = [cl for cl in p.clauses if c._add_clause(cl)]
        if not added:
            return
        c.arcs.update(arcs)
        c.arcs = dict(sorted(c.arcs.items()))
        self.trace.append(
            self.now, ledger, "extend", c.id, party, {"arcs": dict(c.arcs), "clauses": [cl.describe() for cl in added]}
        )

    def _apply_hashkey(self, party: str, p: SubmitHashkey) -> None:
        c = self.contracts.get(p.contract)
        if c is None:
            return self._reject("hashkey_rejected", party, p.contract, "unknown", "no such contract")
        ledger = self._ledger_of(c.asset.id)
        digest = p.key.digest
        detail = {"lock": digest.hex(), "path": list(p.key.path)}
        if digest not in c.locks:
            self.trace.append(self.now, ledger, "hashkey_rejected", c.id, party, {**detail, "reason": "no matching lock"})
            return
        if c.status is not ContractStatus.OPEN or c.lock_states[digest].status is not LockStatus.OPEN:
            return  # nothing left to unlock; not worth a trace line
        lock = c.locks[digest]
        presenters = c.endpoints if self.ctx.mode.value == "undirected" else c.recipients
        reason = rejection_reason(lock, p.key, presenters, self.now, self.ctx, self.keyring)
        if reason is not None:
            self.trace.append(self.now, ledger, "hashkey_rejected", c.id, party, {**detail, "reason": reason})
            return
        c.lock_states[digest] = LockState.unlocked(self.now)
        c.unlock_keys[digest] = p.key
        self.trace.append(
            self.now,
            ledger,
            "unlock",
            c.id,
            party,
            {**detail, "generator": lock.generator, "solution": lock.solution, "sig": p.key.sig.hex()},
        )

    def _expire_locks(self) -> None:
        for cid in sorted(self.contracts):
            c = self.contracts[cid]
            if c.status is not ContractStatus.OPEN:
                continue
            for digest in sorted(c.lock_states):
                if c.lock_states[digest].status is LockStatus.OPEN:
                    c.lock_states[digest] = LockState.expired(self.now)
                    self.trace.append(self.now, c.asset.ledger, "lock_expired", c.id, None, {"lock": digest.hex()})

    def _settle(self, c: EscrowContract) -> None:
        if c.status is not ContractStatus.OPEN:
            return
        values = [evaluate_circuit(cl.guard, c.lock_states) for cl in c.clauses]
        for i, cl in enumerate(c.clauses):
            if values[i] is not Tri.TRUE:
                continue
            if self.strict_priority:
                blocked = any(values[j] is Tri.PENDING for j in range(i))
            else:
                blocked = any(values[j] is Tri.PENDING and c.clauses[j].recipient != cl.recipient for j in range(i))
            if blocked:
                return
            self._pay(c, cl)
            return
        if all(v is Tri.FALSE for v in values):
            self._refund(c)

    def _release(self, c: EscrowContract) -> None:
        self.escrowed[c.owner] -= c.asset.amount

    def _pay(self, c: EscrowContract, cl: Clause) -> None:
        c.status = ContractStatus.TRIGGERED
        c.settled_round = self.now
        c.paid_to = cl.recipient
        c.level = cl.scheme
        self.holdings[c.asset.id] = cl.recipient
        self._release(c)
        self.trace.append(
            self.now,
            c.asset.ledger,
            "trigger",
            c.id,
            c.owner,
            {
                "asset": c.asset.id,
                "amount": c.asset.amount,
                "recipient": cl.recipient,
                "arc": c.arcs[cl.recipient],
                "scheme": cl.scheme,
                "priority": cl.priority,
            },
        )

    def _refund(self, c: EscrowContract) -> None:
        c.status = ContractStatus.REFUNDED
        c.settled_round = self.now
        self.holdings[c.asset.id] = c.owner
        self._release(c)
        self.trace.append(
            self.now, c.asset.ledger, "refund", c.id, c.owner, {"asset": c.asset.id, "amount": c.asset.amount}
        )

    # -- views ------------------------------------------------------------

    @property
    def all_settled(self) -> bool:
        return all(c.status is not ContractStatus.OPEN for c in self.contracts.values())

    def contracts_of_owner(self, party: str) -> list[EscrowContract]:
        return [self.contracts[k] for k in sorted(self.contracts) if self.contracts[k].owner == party]

    def contracts_paying(self, party: str) -> list[EscrowContract]:
        return [self.contracts[k] for k in sorted(self.contracts) if party in self.contracts[k].recipients]

    def final_assignment(self) -> dict[str, bool]:
        out = {a.id: False for a in self.g.arcs}
        for c in self.contracts.values():
            if c.status is ContractStatus.TRIGGERED:
                out[c.arcs[c.paid_to]] = True
        return out


def replay_holdings(events: Iterable[Mapping], assets: Mapping[str, Asset]) -> dict[str, str]:
    """Rebuild final asset holders from a trace alone."""
    holdings = {a.id: a.owner for a in assets.values()}
    for ev in events:
        d = ev["detail"]
        if ev["type"] == "escrow":
            holdings[d["asset"]] = ev["contract"]
        elif ev["type"] == "trigger":
            holdings[d["asset"]] = d["recipient"]
        elif ev["type"] == "refund":
            holdings[d["asset"]] = ev["party"]
    return holdings
