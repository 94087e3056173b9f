"""Party predicates over arc variables.

An arc variable is true when the transfer on that arc takes place. Parties
state what they require in exchange for each outgoing asset (income
predicates), what they refuse to pay jointly (outgoing constraint), and, when
one token labels several arcs, the reuse restriction that at most one of those
arcs may fire.

The surface syntax used in scenario files::

    expr    := implies
    implies := or ('=>' implies)?
    or      := and ('|' and)*
    and     := unary ('&' unary)*
    unary   := '!' unary | atom
    atom    := '(' expr ')' | 'true' | 'false' | 'arc' '(' NAME ')' | NAME
             | ('atmost' | 'atleast') '(' INT ';' NAME (',' NAME)* ')'
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping, Sequence, Union


class PredicateError(ValueError):
    """Ill-formed predicate or a failed evaluation."""


class PredicateSyntaxError(PredicateError):
    def __init__(self, message: str, line: int, col: int) -> None:
        super().__init__(f"{message} (line {line}, column {col})")
        self.line = line
        self.col = col


# --------------------------------------------------------------------- AST


@dataclass(frozen=True)
class Const:
    value: bool

    def __str__(self) -> str:
        return "true" if self.value else "false"


@dataclass(frozen=True)
class Var:
    arc: str

    def __str__(self) -> str:
        return self.arc


@dataclass(frozen=True)
class Not:
    arg: "Expr"

    def __str__(self) -> str:
        return f"!{_wrap(self.arg)}"


@dataclass(frozen=True)
class And:
    args: tuple

    def __str__(self) -> str:
        return " & ".join(_wrap(a) for a in self.args)


@dataclass(frozen=True)
class Or:
    args: tuple

    def __str__(self) -> str:
        return " | ".join(_wrap(a) for a in self.args)


@dataclass(frozen=True)
class Implies:
    lhs: "Expr"
    rhs: "Expr"

    def __str__(self) -> str:
        return f"{_wrap(self.lhs)} => {_wrap(self.rhs)}"


@dataclass(frozen=True)
class AtMost:
    k: int
    arcs: tuple

    def __str__(self) -> str:
        return f"atmost({self.k}; {', '.join(self.arcs)})"


@dataclass(frozen=True)
class AtLeast:
    k: int
    arcs: tuple

    def __str__(self) -> str:
        return f"atleast({self.k}; {', '.join(self.arcs)})"


Expr = Union[Const, Var, Not, And, Or, Implies, AtMost, AtLeast]
TRUE = Const(True)
FALSE = Const(False)


def _wrap(e: Expr) -> str:
    if isinstance(e, (Const, Var, Not, AtMost, AtLeast)):
        return str(e)
    return f"({e})"


def conj(*items: Expr) -> Expr:
    """Flattening conjunction that drops ``true`` and collapses singletons."""
    flat: list[Expr] = []
    for it in items:
        if isinstance(it, And):
            flat.extend(it.args)
        elif it == TRUE:
            continue
        else:
            flat.append(it)
    if not flat:
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return And(tuple(flat))


def disj(*items: Expr) -> Expr:
    flat: list[Expr] = []
    for it in items:
        if isinstance(it, Or):
            flat.extend(it.args)
        elif it == FALSE:
            continue
        else:
            flat.append(it)
    if not flat:
        return FALSE
    if len(flat) == 1:
        return flat[0]
    return Or(tuple(flat))


def variables(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.arc}
    if isinstance(e, Const):
        return set()
    if isinstance(e, Not):
        return variables(e.arg)
    if isinstance(e, (And, Or)):
        out: set[str] = set()
        for a in e.args:
            out |= variables(a)
        return out
    if isinstance(e, Implies):
        return variables(e.lhs) | variables(e.rhs)
    if isinstance(e, (AtMost, AtLeast)):
        return set(e.arcs)
    raise PredicateError(f"unknown node {e!r}")


def evaluate(e: Expr, assignment: Mapping[str, bool]) -> bool:
    """Two-valued evaluation; a variable missing from ``assignment`` is an error."""
    if isinstance(e, Var):
        try:
            return bool(assignment[e.arc])
        except KeyError:
            raise PredicateError(f"no value for arc variable {e.arc!r}") from None
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Not):
        return not evaluate(e.arg, assignment)
    if isinstance(e, And):
        return all(evaluate(a, assignment) for a in e.args)
    if isinstance(e, Or):
        return any(evaluate(a, assignment) for a in e.args)
    if isinstance(e, Implies):
        return (not evaluate(e.lhs, assignment)) or evaluate(e.rhs, assignment)
    if isinstance(e, (AtMost, AtLeast)):
        count = 0
        for arc in e.arcs:
            if arc not in assignment:
                raise PredicateError(f"no value for arc variable {arc!r}")
            count += bool(assignment[arc])
        return count <= e.k if isinstance(e, AtMost) else count >= e.k
    raise PredicateError(f"unknown node {e!r}")


def evaluate_on(e: Expr, true_arcs: Iterable[str]) -> bool:
    """Evaluate with every arc in ``true_arcs`` true and all others false."""
    on = set(true_arcs)
    return evaluate(e, {v: v in on for v in variables(e)})


# ------------------------------------------------------------------ parser

_TOKEN = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<nl>\n)|(?P<op>=>|[()!&|;,])|(?P<int>\d+(?![A-Za-z_]))"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_.\-]*)"
)
_KEYWORDS = {"true", "false", "arc", "atmost", "atleast"}


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise PredicateSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind != "ws":
            toks.append(_Tok(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str) -> None:
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Tok:
        tok = self.take()
        if tok.text != text:
            shown = tok.text or "end of input"
            raise PredicateSyntaxError(f"expected {text!r}, found {shown!r}", tok.line, tok.col)
        return tok

    def parse(self) -> Expr:
        e = self.implies()
        tok = self.peek()
        if tok.kind != "eof":
            raise PredicateSyntaxError(f"unexpected {tok.text!r}", tok.line, tok.col)
        return e

    def implies(self) -> Expr:
        lhs = self.disjunction()
        if self.peek().text == "=>":
            self.take()
            return Implies(lhs, self.implies())
        return lhs

    def disjunction(self) -> Expr:
        items = [self.conjunction()]
        while self.peek().text == "|":
            self.take()
            items.append(self.conjunction())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def conjunction(self) -> Expr:
        items = [self.unary()]
        while self.peek().text == "&":
            self.take()
            items.append(self.unary())
        return items[0] if len(items) == 1 else And(tuple(items))

    def unary(self) -> Expr:
        if self.peek().text == "!":
            self.take()
            return Not(self.unary())
        return self.atom()

    def name(self) -> str:
        tok = self.take()
        if tok.kind != "name" or tok.text in _KEYWORDS:
            raise PredicateSyntaxError(f"expected an arc name, found {tok.text or 'end of input'!r}", tok.line, tok.col)
        return tok.text

    def atom(self) -> Expr:
        tok = self.peek()
        if tok.text == "(":
            self.take()
            e = self.implies()
            self.expect(")")
            return e
        if tok.kind == "name":
            if tok.text in ("true", "false"):
                self.take()
                return Const(tok.text == "true")
            if tok.text == "arc":
                self.take()
                self.expect("(")
                name = self.name()
                self.expect(")")
                return Var(name)
            if tok.text in ("atmost", "atleast"):
                self.take()
                self.expect("(")
                ktok = self.take()
                if ktok.kind != "int":
                    raise PredicateSyntaxError("expected an integer bound", ktok.line, ktok.col)
                self.expect(";")
                arcs = [self.name()]
                while self.peek().text == ",":
                    self.take()
                    arcs.append(self.name())
                self.expect(")")
                cls = AtMost if tok.text == "atmost" else AtLeast
                return cls(int(ktok.text), tuple(arcs))
            self.take()
            return Var(tok.text)
        shown = tok.text or "end of input"
        raise PredicateSyntaxError(f"unexpected {shown!r}", tok.line, tok.col)


def parse(text: str) -> Expr:
    """Parse the scenario surface syntax into an expression tree."""
    return _Parser(text).parse()


# ----------------------------------------------------- party specifications


@dataclass
class PartySpec:
    party: str
    income_preds: dict = field(default_factory=dict)  # outgoing arc id -> Expr
    outgoing_constraint: Expr = TRUE
    same_asset_groups: tuple = ()  # tuples of outgoing arc ids sharing one token


def validate_spec(spec: PartySpec, g) -> None:
    """Structural checks against the digraph: keys are outgoing arcs, and
    income predicates only mention arcs incident to the party."""
    out_ids = {a.id for a in g.out_arcs(spec.party)}
    incident = out_ids | {a.id for a in g.in_arcs(spec.party)}
    for gamma, pred in spec.income_preds.items():
        if gamma not in out_ids:
            raise PredicateError(f"{spec.party}: income predicate keyed by {gamma!r}, which is not an outgoing arc")
        stray = variables(pred) - incident
        if stray:
            raise PredicateError(
                f"{spec.party}: income predicate for {gamma!r} mentions non-incident arcs {sorted(stray)}"
            )
    stray = variables(spec.outgoing_constraint) - out_ids
    if stray:
        raise PredicateError(f"{spec.party}: outgoing constraint mentions non-outgoing arcs {sorted(stray)}")
    for group in spec.same_asset_groups:
        if not set(group) <= out_ids:
            raise PredicateError(f"{spec.party}: same-asset group {sorted(group)} has non-outgoing arcs")


def build_income_part(spec: PartySpec) -> Expr:
    return conj(*(Implies(Var(g), spec.income_preds[g]) for g in sorted(spec.income_preds)))


def build_safety(spec: PartySpec, g=None) -> Expr:
    """S_x: every outgoing payment is covered by its income predicate, and the
    outgoing constraint holds."""
    if g is not None:
        validate_spec(spec, g)
    return conj(build_income_part(spec), spec.outgoing_constraint)


def build_liveness(spec: PartySpec) -> Expr:
    """L_x: S_x plus the requirement that at least one income predicate is met."""
    incomes = [spec.income_preds[g] for g in sorted(spec.income_preds)]
    return conj(build_safety(spec), disj(*incomes))


def build_reuse_restriction(spec: PartySpec) -> Expr:
    """r_x: at most one arc of each same-token group fires."""
    parts: list[Expr] = []
    for group in spec.same_asset_groups:
        for a, b in combinations(sorted(group), 2):
            parts.append(Not(And((Var(a), Var(b)))))
    return conj(*parts)


def conjoin_all(preds: Iterable[Expr]) -> Expr:
    """phi(P): the conjunction of every party's predicate."""
    items = list(preds)
    if len(items) == 1:
        return items[0]
    return conj(*items)


# --------------------------------------------------------------- Tseytin CNF


@dataclass
class Cnf:
    clauses: list
    var_map: dict  # arc id -> variable index (auxiliaries are not named)
    num_vars: int

    def arc_vars(self) -> list[int]:
        return [self.var_map[a] for a in sorted(self.var_map)]


Lit = Union[int, bool]


class _Encoder:
    def __init__(self, names: Sequence[str]) -> None:
        self.var_map: dict[str, int] = {}
        for n in names:
            self.var_map[n] = len(self.var_map) + 1
        self.next_var = len(self.var_map) + 1
        self.clauses: list[list[int]] = []
        self.memo: dict[Expr, Lit] = {}

    def fresh(self) -> int:
        v = self.next_var
        self.next_var += 1
        return v

    def var(self, name: str) -> int:
        if name not in self.var_map:
            self.var_map[name] = self.fresh()
        return self.var_map[name]

    @staticmethod
    def neg(lit: Lit) -> Lit:
        return (not lit) if isinstance(lit, bool) else -lit

    def and_gate(self, lits: Sequence[Lit]) -> Lit:
        real: list[int] = []
        for lit in lits:
            if lit is False:
                return False
            if lit is True:
                continue
            real.append(lit)
        real = list(dict.fromkeys(real))
        if not real:
            return True
        if len(real) == 1:
            return real[0]
        if any(-x in real for x in real):
            return False
        out = self.fresh()
        for x in real:
            self.clauses.append([-out, x])
        self.clauses.append([out] + [-x for x in real])
        return out

    def or_gate(self, lits: Sequence[Lit]) -> Lit:
        return self.neg(self.and_gate([self.neg(x) for x in lits]))

    def counter(self, lits: Sequence[Lit], upto: int) -> list[Lit]:
        """Sequential counter registers: result[j] is true iff at least j of
        ``lits`` are true, for j = 0..upto."""
        regs: list[Lit] = [True] + [False] * upto
        for x in lits:
            nxt: list[Lit] = [True]
            for j in range(1, upto + 1):
                nxt.append(self.or_gate([regs[j], self.and_gate([x, regs[j - 1]])]))
            regs = nxt
        return regs

    def lit(self, e: Expr) -> Lit:
        if e in self.memo:
            return self.memo[e]
        if isinstance(e, Const):
            out: Lit = e.value
        elif isinstance(e, Var):
            out = self.var(e.arc)
        elif isinstance(e, Not):
            out = self.neg(self.lit(e.arg))
        elif isinstance(e, And):
            out = self.and_gate([self.lit(a) for a in e.args])
        elif isinstance(e, Or):
            out = self.or_gate([self.lit(a) for a in e.args])
        elif isinstance(e, Implies):
            out = self.or_gate([self.neg(self.lit(e.lhs)), self.lit(e.rhs)])
        elif isinstance(e, AtMost):
            lits = [self.var(a) for a in e.arcs]
            if e.k < 0:
                out = False
            elif e.k >= len(lits):
                out = True
            else:
                out = self.neg(self.counter(lits, e.k + 1)[e.k + 1])
        elif isinstance(e, AtLeast):
            lits = [self.var(a) for a in e.arcs]
            if e.k <= 0:
                out = True
            elif e.k > len(lits):
                out = False
            else:
                out = self.counter(lits, e.k)[e.k]
        else:
            raise PredicateError(f"unknown node {e!r}")
        self.memo[e] = out
        return out


def to_cnf(e: Expr, extra_vars: Iterable[str] = ()) -> Cnf:
    """Tseytin encoding with full gate equivalences.

    Arc variables get the lowest indices in sorted order (including any
    ``extra_vars`` the caller wants to enumerate even if ``e`` ignores them);
    auxiliary gate variables follow. Models projected onto the arc variables
    coincide with the models of ``e``.
    """
    names = sorted(variables(e) | set(extra_vars))
    enc = _Encoder(names)
    root = enc.lit(e)
    if root is True:
        pass
    elif root is False:
        enc.clauses.append([])
    else:
        enc.clauses.append([root])
    return Cnf(enc.clauses, dict(enc.var_map), enc.next_var - 1)


def node_count(e: Expr) -> int:
    if isinstance(e, (Const, Var)):
        return 1
    if isinstance(e, Not):
        return 1 + node_count(e.arg)
    if isinstance(e, (And, Or)):
        return 1 + sum(node_count(a) for a in e.args)
    if isinstance(e, Implies):
        return 1 + node_count(e.lhs) + node_count(e.rhs)
    return 1 + len(e.arcs)
