"""Hashlocks, path-signed hashkeys and hashlock circuits.

A hashkey for lock ``h = H(s)`` is ``(s, p, sigma)`` where ``p = u_0 ... u_k``
ends at the party that generated ``s`` and the signature nests one layer per
party::

    sigma_k = sig(s, u_k)
    sigma_j = sig(sigma_{j+1}, u_j)

All layers are stored, so anyone holding a key can peel off a prefix and
re-use the inner layers. Verification therefore checks both the signatures
and that the path is admissible for the contract it is presented to.
"""

from __future__ import annotations

import hashlib
import hmac
import random
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Optional, Protocol, Union

from .graph import Arc, Digraph, UGraph, max_path_length, to_undirected


class KeyMode(str, Enum):
    DIRECTED = "directed"
    UNDIRECTED = "undirected"
    PATHLESS = "pathless"


class HashkeyError(ValueError):
    """Malformed hashkey construction."""


# ------------------------------------------------------------ locks, secrets


def hash_secret(value: bytes) -> bytes:
    return hashlib.sha256(value).digest()


@dataclass(frozen=True)
class Secret:
    value: bytes
    generator: str
    solution: int

    def __post_init__(self) -> None:
        if len(self.value) != 32:
            raise HashkeyError("secrets are 32 bytes")


@dataclass(frozen=True, order=True)
class Hashlock:
    digest: bytes
    generator: str = ""
    solution: int = 0

    @property
    def label(self) -> str:
        return f"h[{self.generator}/s{self.solution}]"

    @property
    def hex(self) -> str:
        return self.digest.hex()


def make_hashlock(secret: Secret) -> Hashlock:
    return Hashlock(hash_secret(secret.value), secret.generator, secret.solution)


def derive_secret(seed: int | str, generator: str, solution: int) -> Secret:
    """Seeded 32-byte secret, one per (generator, solution)."""
    rng = random.Random(f"secret/{seed}/{generator}/{solution}")
    return Secret(rng.randbytes(32), generator, solution)


# ----------------------------------------------------------------- signing


class Keyring(Protocol):
    def sign(self, party: str, message: bytes) -> bytes: ...

    def verify(self, party: str, message: bytes, signature: bytes) -> bool: ...


class HmacKeyring:
    """Deterministic simulation signatures: HMAC-SHA256 under a per-party key
    derived from the run seed. Parties cannot sign for each other because the
    simulated agents only ever call ``sign`` with their own id."""

    def __init__(self, seed: int | str = 0, key_seeds: Optional[Mapping[str, str]] = None) -> None:
        self.seed = seed
        self.key_seeds = dict(key_seeds or {})
        self._keys: dict[str, bytes] = {}

    def _key(self, party: str) -> bytes:
        if party not in self._keys:
            material = self.key_seeds.get(party, party)
            self._keys[party] = hashlib.sha256(f"hmac-key/{self.seed}/{material}".encode()).digest()
        return self._keys[party]

    def sign(self, party: str, message: bytes) -> bytes:
        return hmac.new(self._key(party), message, hashlib.sha256).digest()

    def verify(self, party: str, message: bytes, signature: bytes) -> bool:
        return hmac.compare_digest(self.sign(party, message), signature)


class Ed25519Keyring:
    """Real public-key signatures with keys derived from the seed. Ed25519
    signing is deterministic, so runs stay reproducible."""

    def __init__(self, seed: int | str = 0, key_seeds: Optional[Mapping[str, str]] = None) -> None:
        from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey

        self._cls = Ed25519PrivateKey
        self.seed = seed
        self.key_seeds = dict(key_seeds or {})
        self._priv: dict[str, object] = {}

    def _private(self, party: str):
        if party not in self._priv:
            material = self.key_seeds.get(party, party)
            raw = hashlib.sha256(f"ed25519-key/{self.seed}/{material}".encode()).digest()
            self._priv[party] = self._cls.from_private_bytes(raw)
        return self._priv[party]

    def sign(self, party: str, message: bytes) -> bytes:
        return self._private(party).sign(message)

    def verify(self, party: str, message: bytes, signature: bytes) -> bool:
        from cryptography.exceptions import InvalidSignature

        try:
            self._private(party).public_key().verify(signature, message)
        except InvalidSignature:
            return False
        return True


def make_keyring(kind: str, seed: int | str = 0, key_seeds: Optional[Mapping[str, str]] = None) -> Keyring:
    if kind == "hmac":
        return HmacKeyring(seed, key_seeds)
    if kind == "ed25519":
        return Ed25519Keyring(seed, key_seeds)
    raise ValueError(f"unknown signature scheme {kind!r}")


# ----------------------------------------------------------------- hashkeys


@dataclass(frozen=True)
class Hashkey:
    secret: bytes
    path: tuple
    sigs: tuple  # sigs[j] is the layer signed by path[j]

    @property
    def sig(self) -> bytes:
        return self.sigs[0] if self.sigs else b""

    @property
    def digest(self) -> bytes:
        return hash_secret(self.secret)

    def suffix(self, start: int) -> "Hashkey":
        """The key held by ``path[start]`` before the outer layers were added."""
        return Hashkey(self.secret, self.path[start:], self.sigs[start:])

    def to_json(self) -> dict:
        return {"path": list(self.path), "sig": self.sig.hex()}


def leader_hashkey(secret: Union[Secret, bytes], leader: str, keyring: Keyring) -> Hashkey:
    value = secret.value if isinstance(secret, Secret) else secret
    if not leader:
        raise HashkeyError("a hashkey needs a non-empty path")
    return Hashkey(value, (leader,), (keyring.sign(leader, value),))


def extend_hashkey(key: Hashkey, party: str, keyring: Keyring) -> Hashkey:
    if party in key.path:
        raise HashkeyError(f"{party!r} already appears in the hashkey path")
    return Hashkey(key.secret, (party,) + key.path, (keyring.sign(party, key.sig),) + key.sigs)


def signatures_valid(key: Hashkey, keyring: Keyring) -> bool:
    if not key.path or len(key.path) != len(key.sigs):
        return False
    if len(set(key.path)) != len(key.path):
        return False
    message = key.secret
    for party, sig in zip(reversed(key.path), reversed(key.sigs)):
        if not keyring.verify(party, message, sig):
            return False
        message = sig
    return True


def key_deadline(mpl: int, path_len: int) -> int:
    """Last inclusion round at which a key with ``path_len`` parties counts."""
    return mpl + path_len


@dataclass(frozen=True)
class VerifyContext:
    """Static facts a contract needs to judge a hashkey."""

    mode: KeyMode
    graph: Digraph
    mpl: int
    broadcast: Optional[UGraph] = None

    @property
    def adjacency(self) -> UGraph:
        return self.broadcast if self.broadcast is not None else to_undirected(self.graph)

    def deadline(self, path_len: int) -> int:
        # Every mode keeps the per-signature allowance; a pathless key can
        # carry up to n signatures, which is what stretches its locks to
        # MPL + n.  A flat MPL + n deadline for every key would let a
        # coalition present a one-signature key in the very last round.
        return key_deadline(self.mpl, path_len)

    def lock_expiry(self) -> int:
        """Round at which every still-open lock becomes expired."""
        if self.mode is KeyMode.DIRECTED:
            return 2 * self.mpl
        if self.mode is KeyMode.UNDIRECTED:
            return self.mpl + max_path_length(self.adjacency)
        return self.mpl + len(self.graph.vertices)


def path_admissible(key: Hashkey, lock: Hashlock, ctx: VerifyContext, endpoints: Iterable[str]) -> bool:
    """Structural check of the key path against the contract it unlocks.

    ``endpoints`` are the parties that may present the outermost layer: the
    recipient for a directed arc contract, every endpoint for an undirected
    one.
    """
    path = key.path
    if not path or len(set(path)) != len(path):
        return False
    if lock.generator and path[-1] != lock.generator:
        return False
    if any(v not in ctx.graph.vertices for v in path):
        return False
    if path[0] not in set(endpoints):
        return False
    if ctx.mode is KeyMode.DIRECTED:
        return all(ctx.graph.has_edge(path[j], path[j + 1]) for j in range(len(path) - 1))
    if ctx.mode is KeyMode.UNDIRECTED:
        adj = ctx.adjacency
        return all(adj.has_edge(path[j], path[j + 1]) for j in range(len(path) - 1))
    return True


def verify_hashkey(
    lock: Hashlock,
    key: Hashkey,
    arc: Union[Arc, Iterable[str]],
    g: Digraph,
    round: int,
    mode: KeyMode,
    keyring: Keyring,
    *,
    mpl: Optional[int] = None,
    broadcast: Optional[UGraph] = None,
) -> bool:
    """Full validity of ``key`` for ``lock`` on a contract at ``round``.

    ``arc`` is either the directed arc the contract covers (only its
    recipient may present the key) or an explicit collection of admissible
    presenting parties.
    """
    ctx = VerifyContext(mode, g, max_path_length(g) if mpl is None else mpl, broadcast)
    return verify_in_context(lock, key, _presenters(arc, mode), round, ctx, keyring)


def _presenters(arc: Union[Arc, Iterable[str]], mode: KeyMode) -> frozenset:
    if isinstance(arc, Arc):
        return frozenset({arc.src, arc.dst}) if mode is KeyMode.UNDIRECTED else frozenset({arc.dst})
    return frozenset(arc)


def verify_in_context(
    lock: Hashlock, key: Hashkey, presenters: Iterable[str], round: int, ctx: VerifyContext, keyring: Keyring
) -> bool:
    if hash_secret(key.secret) != lock.digest:
        return False
    if not key.path or round > ctx.deadline(len(key.path)):
        return False
    if not path_admissible(key, lock, ctx, presenters):
        return False
    return signatures_valid(key, keyring)


def rejection_reason(
    lock: Hashlock, key: Hashkey, presenters: Iterable[str], round: int, ctx: VerifyContext, keyring: Keyring
) -> Optional[str]:
    """None when the key is valid, else a short reason for the trace."""
    if hash_secret(key.secret) != lock.digest:
        return "wrong secret"
    if not key.path:
        return "empty path"
    if round > ctx.deadline(len(key.path)):
        return "past deadline"
    if not path_admissible(key, lock, ctx, presenters):
        return "inadmissible path"
    if not signatures_valid(key, keyring):
        return "bad signature"
    return None


# ------------------------------------------------------------------ circuits


class Tri(Enum):
    FALSE = 0
    TRUE = 1
    PENDING = 2


class LockStatus(str, Enum):
    OPEN = "open"
    UNLOCKED = "unlocked"
    EXPIRED = "expired"


@dataclass(frozen=True)
class LockState:
    status: LockStatus = LockStatus.OPEN
    round: Optional[int] = None

    @classmethod
    def open(cls) -> "LockState":
        return cls(LockStatus.OPEN)

    @classmethod
    def unlocked(cls, r: int) -> "LockState":
        return cls(LockStatus.UNLOCKED, r)

    @classmethod
    def expired(cls, r: Optional[int] = None) -> "LockState":
        return cls(LockStatus.EXPIRED, r)


@dataclass(frozen=True)
class Atom:
    lock: Hashlock

    def __str__(self) -> str:
        return self.lock.label


@dataclass(frozen=True)
class Neg:
    arg: "Circuit"

    def __str__(self) -> str:
        return f"!{_cwrap(self.arg)}"


@dataclass(frozen=True)
class Conj:
    args: tuple

    def __str__(self) -> str:
        return " & ".join(_cwrap(a) for a in self.args)


@dataclass(frozen=True)
class Disj:
    args: tuple

    def __str__(self) -> str:
        return " | ".join(_cwrap(a) for a in self.args)


Circuit = Union[Atom, Neg, Conj, Disj]


def _cwrap(c: Circuit) -> str:
    return str(c) if isinstance(c, (Atom, Neg)) else f"({c})"


def all_of(locks: Iterable[Hashlock]) -> Circuit:
    atoms = tuple(Atom(h) for h in sorted(set(locks), key=lambda h: (h.solution, h.generator, h.digest)))
    if len(atoms) == 1:
        return atoms[0]
    return Conj(atoms)


def circuit_atoms(c: Circuit) -> set[Hashlock]:
    if isinstance(c, Atom):
        return {c.lock}
    if isinstance(c, Neg):
        return circuit_atoms(c.arg)
    out: set[Hashlock] = set()
    for a in c.args:
        out |= circuit_atoms(a)
    return out


def evaluate_circuit(c: Circuit, states: Mapping[bytes, LockState]) -> Tri:
    """Kleene three-valued evaluation; ``states`` is keyed by lock digest."""
    if isinstance(c, Atom):
        try:
            st = states[c.lock.digest]
        except KeyError:
            raise KeyError(f"no state for lock {c.lock.label}") from None
        if st.status is LockStatus.UNLOCKED:
            return Tri.TRUE
        if st.status is LockStatus.EXPIRED:
            return Tri.FALSE
        return Tri.PENDING
    if isinstance(c, Neg):
        v = evaluate_circuit(c.arg, states)
        return {Tri.TRUE: Tri.FALSE, Tri.FALSE: Tri.TRUE, Tri.PENDING: Tri.PENDING}[v]
    values = [evaluate_circuit(a, states) for a in c.args]
    if isinstance(c, Conj):
        if Tri.FALSE in values:
            return Tri.FALSE
        return Tri.PENDING if Tri.PENDING in values else Tri.TRUE
    if Tri.TRUE in values:
        return Tri.TRUE
    return Tri.PENDING if Tri.PENDING in values else Tri.FALSE
