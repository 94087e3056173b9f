"""Party behaviors: conforming, or one of a fixed menu of deviations.

Text forms (used in scenario files and on the command line)::

    conforming
    crash@escrow | crash@redeem | crash@<round>
    withhold_escrow[:<scheme>,<scheme>...]
    withhold_hashkey[:<scheme>,...]
    leak:<party>@<round>
    forge
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

KINDS = ("conforming", "crash", "withhold_escrow", "withhold_hashkey", "leak", "forge")
PHASES = ("escrow", "redeem")


class BehaviorError(ValueError):
    pass


@dataclass(frozen=True)
class Behavior:
    kind: str = "conforming"
    phase: Optional[str] = None
    round: Optional[int] = None
    schemes: Optional[frozenset] = None  # None means every scheme
    target: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise BehaviorError(f"unknown behavior {self.kind!r}")
        if self.phase is not None and self.phase not in PHASES:
            raise BehaviorError(f"unknown phase {self.phase!r}")

    @classmethod
    def crash_at(cls, phase: Optional[str] = "escrow", round: Optional[int] = None) -> "Behavior":
        return cls("crash", phase=phase, round=round)

    @classmethod
    def withhold_escrow(cls, schemes=None) -> "Behavior":
        return cls("withhold_escrow", schemes=None if schemes is None else frozenset(schemes))

    @classmethod
    def withhold_hashkey(cls, schemes=None) -> "Behavior":
        return cls("withhold_hashkey", schemes=None if schemes is None else frozenset(schemes))

    @classmethod
    def leak_secret_to(cls, party: str, round: int = 0) -> "Behavior":
        return cls("leak", target=party, round=round)

    @classmethod
    def forge_shortcut_keys(cls) -> "Behavior":
        return cls("forge")

    @property
    def conforming(self) -> bool:
        return self.kind == "conforming"

    def crash_round(self, redeem_start: int) -> Optional[int]:
        if self.kind != "crash":
            return None
        if self.round is not None:
            return self.round
        return 0 if self.phase in (None, "escrow") else redeem_start

    def covers(self, scheme: int) -> bool:
        return self.schemes is None or scheme in self.schemes

    def withholds_escrow(self, scheme: int) -> bool:
        return self.kind == "withhold_escrow" and self.covers(scheme)

    def withholds_hashkey(self, scheme: int) -> bool:
        return self.kind == "withhold_hashkey" and self.covers(scheme)

    def __str__(self) -> str:
        if self.kind == "crash":
            return f"crash@{self.round if self.round is not None else (self.phase or 'escrow')}"
        if self.kind in ("withhold_escrow", "withhold_hashkey"):
            if self.schemes is None:
                return self.kind
            return f"{self.kind}:{','.join(str(s) for s in sorted(self.schemes))}"
        if self.kind == "leak":
            return f"leak:{self.target}@{self.round}"
        return self.kind

    @classmethod
    def parse(cls, text: str) -> "Behavior":
        t = text.strip()
        if t in ("conforming", ""):
            return cls()
        if t == "forge":
            return cls.forge_shortcut_keys()
        if t.startswith("crash"):
            _, _, at = t.partition("@")
            at = at or "escrow"
            if at.isdigit():
                return cls.crash_at(None, int(at))
            if at not in PHASES:
                raise BehaviorError(f"crash needs a phase or round, got {at!r}")
            return cls.crash_at(at)
        for kind in ("withhold_escrow", "withhold_hashkey"):
            if t.startswith(kind):
                rest = t[len(kind):]
                if not rest:
                    return cls(kind)
                if not rest.startswith(":"):
                    break
                try:
                    ids = frozenset(int(s) for s in rest[1:].split(",") if s.strip())
                except ValueError:
                    raise BehaviorError(f"bad scheme list in {t!r}") from None
                return cls(kind, schemes=ids)
        if t.startswith("leak:"):
            target, _, at = t[5:].partition("@")
            if not target:
                raise BehaviorError("leak needs a target party")
            try:
                rnd = int(at) if at else 0
            except ValueError:
                raise BehaviorError(f"bad leak round in {t!r}") from None
            return cls.leak_secret_to(target, rnd)
        raise BehaviorError(f"unrecognised behavior {text!r}")


CONFORMING = Behavior()


def random_behavior(rng, parties, schemes, horizon: int) -> Behavior:
    """Draw one deviation from the menu, uniformly by kind.

    ``schemes`` are the scheme ids a withholding party may pick from and
    ``horizon`` bounds the crash round.
    """
    kind = rng.choice(KINDS[1:])
    schemes = sorted(schemes)

    def subset():
        if not schemes or rng.random() < 0.3:
            return None
        k = rng.randint(1, len(schemes))
        return frozenset(rng.sample(schemes, k))

    if kind == "crash":
        pick = rng.random()
        if pick < 0.3:
            return Behavior.crash_at("escrow")
        if pick < 0.6:
            return Behavior.crash_at("redeem")
        return Behavior.crash_at(None, rng.randint(0, max(horizon, 0)))
    if kind == "withhold_escrow":
        return Behavior.withhold_escrow(subset())
    if kind == "withhold_hashkey":
        return Behavior.withhold_hashkey(subset())
    if kind == "leak":
        return Behavior.leak_secret_to(rng.choice(sorted(parties)), rng.randint(0, max(horizon, 0)))
    return Behavior.forge_shortcut_keys()


def random_coalition(rng, parties, schemes, horizon: int, max_size: Optional[int] = None) -> dict:
    """Pick a coalition of deviating parties (at least one party stays conforming)."""
    parties = sorted(parties)
    limit = len(parties) - 1 if max_size is None else min(max_size, len(parties) - 1)
    size = rng.randint(1, max(limit, 1))
    return {x: random_behavior(rng, parties, schemes, horizon) for x in rng.sample(parties, size)}
