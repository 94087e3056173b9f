import json

import pytest

from swapforge.crypto import (
    Atom,
    HmacKeyring,
    KeyMode,
    LockStatus,
    VerifyContext,
    derive_secret,
    leader_hashkey,
    make_hashlock,
)
from swapforge.graph import Arc, Asset, Digraph
from swapforge.ledger import Clause, ContractStatus, LedgerError, Trace, World, contract_id, replay_holdings

RING = HmacKeyring(0)
# Alice's token x may go to Bob or to Carol; both pay her back.
G = Digraph.from_arcs([Arc("ab", "Alice", "Bob", "x"), Arc("ac", "Alice", "Carol", "x"), Arc("ba", "Bob", "Alice", "y"), Arc("ca", "Carol", "Alice", "z")])
ASSETS = {"x": Asset("x", "Alice"), "y": Asset("y", "Bob"), "z": Asset("z", "Carol")}
S_BOB = derive_secret(0, "Bob", 1)
S_CAROL = derive_secret(0, "Carol", 2)
H_BOB, H_CAROL = make_hashlock(S_BOB), make_hashlock(S_CAROL)
CLAUSES = [Clause(1, Atom(H_BOB), "Bob", 0), Clause(2, Atom(H_CAROL), "Carol", 1)]
CX = contract_id("x")


def world(strict=False, expiry=5):
    ctx = VerifyContext(KeyMode.DIRECTED, G, 3)
    return World(G, ASSETS, ctx, RING, expiry=expiry, strict_priority=strict)


def key(secret, who):
    return leader_hashkey(secret, who, RING)


def run_until(w, r):
    while w.now < r:
        w.step_round()


def test_transactions_land_one_round_later():
    w = world()
    w.submit_escrow("Alice", "x", CLAUSES)
    assert CX not in w.contracts
    w.step_round()
    c = w.contracts[CX]
    assert c.opened_round == 1
    assert w.holdings["x"] == CX
    assert c.arcs == {"Bob": "ab", "Carol": "ac"}


def test_submission_must_use_the_current_round():
    from swapforge.ledger import Claim, Transaction

    w = world()
    with pytest.raises(LedgerError):
        w.submit(Transaction("Alice", Claim(CX), 3))


@pytest.mark.parametrize("strict", [False, True])
def test_higher_clause_wins_when_both_unlock_in_time(strict):
    w = world(strict)
    w.submit_escrow("Alice", "x", CLAUSES)
    w.step_round()
    w.submit_hashkey("Carol", CX, key(S_CAROL, "Carol"))
    w.step_round()
    c = w.contracts[CX]
    assert c.lock_states[H_CAROL.digest].status is LockStatus.UNLOCKED
    assert c.status is ContractStatus.OPEN, "the Bob clause is still pending"
    w.submit_hashkey("Bob", CX, key(S_BOB, "Bob"))
    w.step_round()
    assert c.status is ContractStatus.TRIGGERED
    assert (c.paid_to, c.level, c.settled_round) == ("Bob", 1, 3)
    assert w.final_assignment() == {"ab": True, "ac": False, "ba": False, "ca": False}


def test_lower_clause_fires_once_the_higher_lock_expires():
    w = world(strict=True)
    w.submit_escrow("Alice", "x", CLAUSES)
    w.step_round()
    w.submit_hashkey("Carol", CX, key(S_CAROL, "Carol"))
    run_until(w, 4)
    assert w.contracts[CX].status is ContractStatus.OPEN
    w.step_round()
    c = w.contracts[CX]
    assert (c.status, c.paid_to, c.settled_round) == (ContractStatus.TRIGGERED, "Carol", 5)
    assert w.holdings["x"] == "Carol"


def test_strict_priority_waits_even_for_the_same_recipient():
    clauses = [Clause(1, Atom(H_BOB), "Carol", 0), Clause(2, Atom(H_CAROL), "Carol", 1)]
    loose, strict = world(False), world(True)
    for w in (loose, strict):
        w.submit_escrow("Alice", "x", clauses)
        w.step_round()
        w.submit_hashkey("Carol", CX, key(S_CAROL, "Carol"))
        w.step_round()
    assert loose.contracts[CX].status is ContractStatus.TRIGGERED
    assert loose.contracts[CX].level == 2
    assert strict.contracts[CX].status is ContractStatus.OPEN


def test_refund_when_every_lock_expires():
    w = world()
    w.submit_escrow("Alice", "x", CLAUSES)
    run_until(w, 4)
    assert w.escrowed["Alice"] == 1
    w.step_round()
    c = w.contracts[CX]
    assert (c.status, c.settled_round) == (ContractStatus.REFUNDED, 5)
    assert w.holdings["x"] == "Alice"
    assert w.escrowed["Alice"] == 0 and w.max_escrowed["Alice"] == 1
    assert len(w.trace.of_type("lock_expired")) == 2
    assert w.all_settled


def test_invalid_transactions_are_rejected_and_logged():
    w = world()
    w.submit_escrow("Bob", "x", CLAUSES)
    w.step_round()
    assert w.trace.of_type("escrow_rejected")[-1]["detail"]["reason"] == "sender does not own the asset"
    w.submit_escrow("Alice", "x", [Clause(1, Atom(H_BOB), "Zed", 0)])
    w.step_round()
    assert "not an arc" in w.trace.of_type("escrow_rejected")[-1]["detail"]["reason"]
    w.submit_escrow("Alice", "x", CLAUSES)
    w.step_round()
    w.submit_escrow("Alice", "x", CLAUSES)
    # Alice's key for Bob's lock: Alice is not the lock's generator
    w.submit_hashkey("Alice", CX, key(S_BOB, "Alice"))
    w.extend_circuit("Bob", CX, CLAUSES)
    w.step_round()
    reasons = [e["detail"]["reason"] for e in w.trace.events if "reason" in e["detail"]]
    assert "inadmissible path" in reasons
    assert "only the escrower may extend" in reasons
    assert w.contracts[CX].status is ContractStatus.OPEN


def test_extend_adds_clauses_and_locks():
    w = world()
    w.submit_escrow("Alice", "x", CLAUSES[:1])
    w.step_round()
    w.extend_circuit("Alice", CX, CLAUSES[1:])
    w.step_round()
    c = w.contracts[CX]
    assert [cl.scheme for cl in c.clauses] == [1, 2]
    assert set(c.locks) == {H_BOB.digest, H_CAROL.digest}


def test_trace_round_trips_and_replays():
    w = world()
    w.submit_escrow("Alice", "x", CLAUSES)
    w.submit_escrow("Bob", "y", [Clause(1, Atom(H_BOB), "Alice", 0)])
    w.step_round()
    w.submit_hashkey("Bob", CX, key(S_BOB, "Bob"))
    run_until(w, 5)
    text = w.trace.to_jsonl()
    events = Trace.parse_jsonl(text)
    assert events == [json.loads(json.dumps(e)) for e in w.trace.events]
    assert replay_holdings(events, ASSETS) == w.holdings
    assert w.holdings == {"x": "Bob", "y": "Bob", "z": "Carol"}


def test_malformed_trace_is_rejected():
    with pytest.raises(LedgerError, match="line 2"):
        Trace.parse_jsonl('{"round":1,"ledger":"x","type":"t","contract":null,"party":null,"detail":{}}\n{"round":1}\n')
    with pytest.raises(ValueError):
        Trace.parse_jsonl("not json\n")
