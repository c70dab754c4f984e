"""Core data model: terms, atoms, rules, facts and the canonical fact store.

Numeric payloads live in the last argument position of a predicate, either
as an exact integer (EDB only) or wrapped in a ``min``/``max`` bound
operator.  A bound fact asserts a one-sided bound on the true value:
``p(t, min(3))`` says the value for ``t`` is at most 3, so every weaker
fact ``p(t, min(k))`` with ``k >= 3`` is implied.  The canonical store
keeps only the dominant bound per (predicate, object tuple).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional, Union

from .errors import ContractViolation, QueryError, SchemaError, SubstitutionError


# ---------------------------------------------------------------------------
# Terms


@dataclass(frozen=True)
class Const:
    """An object constant (lowercase-initial in the concrete syntax)."""

    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Null:
    """A labelled null invented by an existential rule head."""

    nid: int

    def __str__(self):
        return f"_:n{self.nid}"


@dataclass(frozen=True)
class Var:
    """An object variable (uppercase-initial in the concrete syntax)."""

    name: str

    def __str__(self):
        return self.name


ObjectTerm = Union[Const, Null, Var]
GroundTerm = Union[Const, Null]


class Unbounded:
    """Sentinel for a bound that holds for every integer (the paper's infinity)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNBOUNDED"


UNBOUNDED = Unbounded()

BoundPayload = Union[int, Unbounded]


class LinearExpr:
    """A numeric term in normal form ``k0 + k1*m1 + ... + kn*mn``.

    Coefficients are arbitrary-precision integers, all nonzero, over
    distinct numeric variable names.  Instances are immutable and
    hashable; construction normalizes (drops zero coefficients).
    """

    __slots__ = ("const", "terms")

    def __init__(self, const: int = 0, coeffs: Optional[Mapping[str, int]] = None):
        object.__setattr__(self, "const", int(const))
        items = tuple(sorted((v, int(k)) for v, k in (coeffs or {}).items() if int(k) != 0))
        object.__setattr__(self, "terms", items)

    def __setattr__(self, *a):
        raise AttributeError("LinearExpr is immutable")

    @classmethod
    def variable(cls, name: str) -> "LinearExpr":
        return cls(0, {name: 1})

    @property
    def coeffs(self) -> dict:
        return dict(self.terms)

    def variables(self) -> set:
        return {v for v, _ in self.terms}

    def is_constant(self) -> bool:
        return not self.terms

    def constant_value(self) -> int:
        if self.terms:
            raise ContractViolation(f"numeric term {self} is not ground")
        return self.const

    def add(self, other: "LinearExpr") -> "LinearExpr":
        coeffs = self.coeffs
        for v, k in other.terms:
            coeffs[v] = coeffs.get(v, 0) + k
        return LinearExpr(self.const + other.const, coeffs)

    def scale(self, factor: int) -> "LinearExpr":
        return LinearExpr(self.const * factor, {v: k * factor for v, k in self.terms})

    def substitute(self, binding: Mapping[str, int]) -> "LinearExpr":
        """Replace bound variables by integers; unbound ones stay symbolic."""
        const = self.const
        coeffs = {}
        for v, k in self.terms:
            if v in binding:
                value = binding[v]
                if not isinstance(value, int):
                    raise SubstitutionError(f"numeric variable {v} mapped to {value!r}")
                const += k * value
            else:
                coeffs[v] = k
        return LinearExpr(const, coeffs)

    def evaluate(self, binding: Mapping[str, int]) -> int:
        return self.substitute(binding).constant_value()

    def __eq__(self, other):
        return (
            isinstance(other, LinearExpr)
            and self.const == other.const
            and self.terms == other.terms
        )

    def __hash__(self):
        return hash((self.const, self.terms))

    def __str__(self):
        if not self.terms:
            return str(self.const)
        parts = []
        for v, k in self.terms:
            if k == 1:
                chunk = v
            elif k == -1:
                chunk = f"-{v}"
            else:
                chunk = f"{k}*{v}"
            if parts and not chunk.startswith("-"):
                parts.append(f"+ {chunk}")
            elif parts:
                parts.append(f"- {chunk[1:]}")
            else:
                parts.append(chunk)
        if self.const > 0:
            parts.append(f"+ {self.const}")
        elif self.const < 0:
            parts.append(f"- {-self.const}")
        return " ".join(parts)

    def __repr__(self):
        return f"LinearExpr({self})"


# ---------------------------------------------------------------------------
# Atoms


class BoundOp(Enum):
    MIN = "min"
    MAX = "max"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class ObjectAtom:
    pred: str
    args: tuple

    def __str__(self):
        if not self.args:
            return self.pred
        return f"{self.pred}({', '.join(str(a) for a in self.args)})"


@dataclass(frozen=True)
class ExactAtom:
    """Atom of an exact numeric predicate; the numeric term is last."""

    pred: str
    args: tuple
    value: LinearExpr

    def __str__(self):
        inner = [str(a) for a in self.args] + [str(self.value)]
        return f"{self.pred}({', '.join(inner)})"


@dataclass(frozen=True)
class BoundAtom:
    """Atom of a bound numeric predicate, payload wrapped in min/max."""

    pred: str
    args: tuple
    op: BoundOp
    expr: LinearExpr

    def __str__(self):
        inner = [str(a) for a in self.args] + [f"{self.op}({self.expr})"]
        return f"{self.pred}({', '.join(inner)})"


@dataclass(frozen=True)
class Comparison:
    """``lhs rel rhs`` over numeric terms, rel in {'<', '<='}."""

    lhs: LinearExpr
    rel: str
    rhs: LinearExpr

    def __post_init__(self):
        if self.rel not in ("<", "<="):
            raise ContractViolation(f"bad comparison relation {self.rel!r}")

    def __str__(self):
        return f"{self.lhs} {self.rel} {self.rhs}"


Atom = Union[ObjectAtom, ExactAtom, BoundAtom, Comparison]


def atom_object_terms(atom: Atom) -> tuple:
    if isinstance(atom, Comparison):
        return ()
    return atom.args


def atom_numeric_vars(atom: Atom) -> set:
    if isinstance(atom, ObjectAtom):
        return set()
    if isinstance(atom, Comparison):
        return atom.lhs.variables() | atom.rhs.variables()
    if isinstance(atom, ExactAtom):
        return atom.value.variables()
    return atom.expr.variables()


def atom_object_vars(atom: Atom) -> set:
    return {t.name for t in atom_object_terms(atom) if isinstance(t, Var)}


def atom_vars(atom: Atom) -> set:
    return atom_object_vars(atom) | atom_numeric_vars(atom)


# ---------------------------------------------------------------------------
# Rules and facts


@dataclass(frozen=True)
class Span:
    """Source location, excluded from structural equality."""

    line: int = 0
    col: int = 0

    def __str__(self):
        return f"{self.line}:{self.col}"


@dataclass(frozen=True)
class Rule:
    body: tuple
    head: Atom
    existentials: tuple = ()
    span: Span = field(default=Span(), compare=False)

    def __post_init__(self):
        if isinstance(self.head, Comparison):
            raise ContractViolation("rule head must not be a comparison atom")
        head_vars = atom_vars(self.head)
        body_vars = set().union(*(atom_vars(a) for a in self.body)) if self.body else set()
        for ex in self.existentials:
            if ex not in head_vars:
                raise ContractViolation(f"existential variable {ex} unused in head")
            if ex in body_vars:
                raise ContractViolation(f"existential variable {ex} occurs in body")

    def frontier(self) -> set:
        body_vars = set().union(*(atom_vars(a) for a in self.body)) if self.body else set()
        return body_vars & atom_vars(self.head)

    def __str__(self):
        head = str(self.head)
        if self.existentials:
            head = f"exists {', '.join(self.existentials)} {head}"
        if not self.body:
            return f"{head}."
        return f"{', '.join(str(a) for a in self.body)} -> {head}."


@dataclass(frozen=True)
class BoundValue:
    op: BoundOp
    value: BoundPayload

    def __str__(self):
        inner = "unbounded" if self.value is UNBOUNDED else str(self.value)
        return f"{self.op}({inner})"


@dataclass(frozen=True)
class Fact:
    """A ground atom; payload is None (object), int (exact) or BoundValue."""

    pred: str
    args: tuple
    payload: Union[None, int, BoundValue] = None

    def __post_init__(self):
        for a in self.args:
            if isinstance(a, Var):
                raise ContractViolation(f"fact {self.pred} contains variable {a}")

    def has_nulls(self) -> bool:
        return any(isinstance(a, Null) for a in self.args)

    def key(self):
        if isinstance(self.payload, BoundValue):
            return (self.pred, self.args, self.payload.op)
        return (self.pred, self.args)

    def __str__(self):
        inner = [str(a) for a in self.args]
        if isinstance(self.payload, int):
            inner.append(str(self.payload))
        elif isinstance(self.payload, BoundValue):
            inner.append(str(self.payload))
        if not inner:
            return self.pred
        return f"{self.pred}({', '.join(inner)})"


def _check_comparable(f1: Fact, f2: Fact):
    if f1.pred != f2.pred or f1.args != f2.args:
        raise ContractViolation(f"facts {f1} and {f2} differ in predicate or tuple")
    p1, p2 = f1.payload, f2.payload
    if not (isinstance(p1, BoundValue) and isinstance(p2, BoundValue)):
        raise ContractViolation("dominance is defined on bound facts only")
    if p1.op != p2.op:
        raise ContractViolation(f"facts {f1} and {f2} carry different bound operators")


def bound_dominates(op: BoundOp, v1: BoundPayload, v2: BoundPayload) -> bool:
    """True iff value v1 implies value v2 under the bound operator op."""
    if v1 is UNBOUNDED:
        return True
    if v2 is UNBOUNDED:
        return False
    if op is BoundOp.MIN:
        return v1 <= v2
    return v1 >= v2


def dominates(f1: Fact, f2: Fact) -> bool:
    """True iff every interpretation satisfying f1 also satisfies f2."""
    _check_comparable(f1, f2)
    return bound_dominates(f1.payload.op, f1.payload.value, f2.payload.value)


# ---------------------------------------------------------------------------
# Interpretation


class Interpretation:
    """Canonical fact store keeping only dominant bounds.

    Mutation is confined to a single owner (the engine loop); reads are
    safe to share.
    """

    def __init__(self):
        # insertion-ordered containers keep every run deterministic
        self.objects = {}  # pred -> dict args -> None
        self.exacts = {}   # pred -> dict args -> list of ints
        self.bounds = {}   # pred -> dict args -> payload (int | UNBOUNDED)
        self.bound_ops = {}  # pred -> BoundOp
        self._kinds = {}   # pred -> 'object' | 'exact' | 'bound'

    def copy(self) -> "Interpretation":
        out = Interpretation()
        out.objects = {p: dict(s) for p, s in self.objects.items()}
        out.exacts = {p: {a: list(v) for a, v in d.items()} for p, d in self.exacts.items()}
        out.bounds = {p: dict(d) for p, d in self.bounds.items()}
        out.bound_ops = dict(self.bound_ops)
        out._kinds = dict(self._kinds)
        return out

    def _register(self, pred: str, kind: str, op: Optional[BoundOp] = None):
        seen = self._kinds.get(pred)
        if seen is not None and seen != kind:
            raise SchemaError(f"predicate {pred} used both as {seen} and {kind}")
        self._kinds[pred] = kind
        if op is not None:
            prev = self.bound_ops.get(pred)
            if prev is not None and prev != op:
                raise SchemaError(f"predicate {pred} mixes bound operators {prev} and {op}")
            self.bound_ops[pred] = op

    def insert(self, fact: Fact) -> bool:
        """Insert under dominance; returns False iff a stored fact dominates it."""
        payload = fact.payload
        if payload is None:
            self._register(fact.pred, "object")
            store = self.objects.setdefault(fact.pred, {})
            if fact.args in store:
                return False
            store[fact.args] = None
            return True
        if isinstance(payload, int):
            self._register(fact.pred, "exact")
            store = self.exacts.setdefault(fact.pred, {})
            values = store.setdefault(fact.args, [])
            if payload in values:
                return False
            values.append(payload)
            return True
        self._register(fact.pred, "bound", payload.op)
        store = self.bounds.setdefault(fact.pred, {})
        current = store.get(fact.args)
        if current is not None and bound_dominates(payload.op, current, payload.value):
            return False
        store[fact.args] = payload.value
        return True

    def stored_bound(self, pred: str, args: tuple):
        """Stored payload for a bound tuple, or None if absent."""
        return self.bounds.get(pred, {}).get(args)

    def satisfies(self, fact) -> bool:
        """Entailment check for a single ground fact or comparison."""
        if isinstance(fact, Comparison):
            lhs, rhs = fact.lhs, fact.rhs
            if not (lhs.is_constant() and rhs.is_constant()):
                raise QueryError(f"comparison {fact} is not ground")
            if fact.rel == "<":
                return lhs.const < rhs.const
            return lhs.const <= rhs.const
        if fact.has_nulls():
            raise QueryError(f"query fact {fact} contains nulls")
        payload = fact.payload
        if payload is None:
            return fact.args in self.objects.get(fact.pred, {})
        if isinstance(payload, int):
            return payload in self.exacts.get(fact.pred, {}).get(fact.args, [])
        op = self.bound_ops.get(fact.pred)
        if op is not None and op != payload.op:
            raise SchemaError(
                f"predicate {fact.pred} stores {op} bounds, queried with {payload.op}"
            )
        current = self.stored_bound(fact.pred, fact.args)
        if current is None:
            return False
        return bound_dominates(payload.op, current, payload.value)

    def facts(self) -> Iterable[Fact]:
        for pred, tuples in self.objects.items():
            for args in tuples:
                yield Fact(pred, args, None)
        for pred, store in self.exacts.items():
            for args, values in store.items():
                for v in values:
                    yield Fact(pred, args, v)
        for pred, store in self.bounds.items():
            op = self.bound_ops[pred]
            for args, value in store.items():
                yield Fact(pred, args, BoundValue(op, value))

    def __len__(self):
        return sum(1 for _ in self.facts())

    def canonical_lines(self) -> list:
        """Deterministic dump, one fact per line, nulls renamed by first appearance."""
        def sort_key(fact):
            shape = tuple(
                ("n",) if isinstance(a, Null) else ("c", a.name) for a in fact.args
            )
            payload = fact.payload
            if isinstance(payload, BoundValue):
                pv = (2, str(payload.op), -1 if payload.value is UNBOUNDED else 0,
                      0 if payload.value is UNBOUNDED else payload.value)
            elif isinstance(payload, int):
                pv = (1, "", 0, payload)
            else:
                pv = (0, "", 0, 0)
            return (fact.pred, shape, pv, tuple(str(a) for a in fact.args))

        ordered = sorted(self.facts(), key=sort_key)
        renaming = {}
        lines = []
        for fact in ordered:
            args = []
            for a in fact.args:
                if isinstance(a, Null):
                    if a not in renaming:
                        renaming[a] = Null(len(renaming) + 1)
                    args.append(renaming[a])
                else:
                    args.append(a)
            lines.append(str(Fact(fact.pred, tuple(args), fact.payload)))
        return lines


def insert_fact(interp: Interpretation, fact: Fact):
    """Functional wrapper over Interpretation.insert returning (store, changed)."""
    changed = interp.insert(fact)
    return interp, changed


def satisfies(interp: Interpretation, fact) -> bool:
    return interp.satisfies(fact)


# ---------------------------------------------------------------------------
# Substitution


def apply_substitution(atom: Atom, subst: Mapping[str, object]) -> Atom:
    """Apply a substitution mapping object vars to constants/nulls and
    numeric vars to integers.  Partial substitutions leave variables in
    place; numeric terms are re-normalized."""

    def obj(term):
        if isinstance(term, Var) and term.name in subst:
            value = subst[term.name]
            if not isinstance(value, (Const, Null)):
                raise SubstitutionError(
                    f"object variable {term.name} mapped to {value!r}"
                )
            return value
        return term

    def num(expr: LinearExpr) -> LinearExpr:
        binding = {}
        for v in expr.variables():
            if v in subst:
                value = subst[v]
                if not isinstance(value, int):
                    raise SubstitutionError(f"numeric variable {v} mapped to {value!r}")
                binding[v] = value
        return expr.substitute(binding)

    if isinstance(atom, ObjectAtom):
        return ObjectAtom(atom.pred, tuple(obj(t) for t in atom.args))
    if isinstance(atom, ExactAtom):
        return ExactAtom(atom.pred, tuple(obj(t) for t in atom.args), num(atom.value))
    if isinstance(atom, BoundAtom):
        return BoundAtom(atom.pred, tuple(obj(t) for t in atom.args), atom.op, num(atom.expr))
    return Comparison(num(atom.lhs), atom.rel, num(atom.rhs))


def atom_to_fact(atom: Atom) -> Fact:
    """Convert a fully ground non-comparison atom into a Fact."""
    if isinstance(atom, Comparison):
        raise ContractViolation("comparison atoms are not facts")
    args = atom_object_terms(atom)
    for a in args:
        if isinstance(a, Var):
            raise ContractViolation(f"atom {atom} is not ground")
    if isinstance(atom, ObjectAtom):
        return Fact(atom.pred, args, None)
    if isinstance(atom, ExactAtom):
        return Fact(atom.pred, args, atom.value.constant_value())
    return Fact(atom.pred, args, BoundValue(atom.op, atom.expr.constant_value()))


# ---------------------------------------------------------------------------
# Programs and schemas


@dataclass(frozen=True)
class PredInfo:
    kind: str  # 'object' | 'exact' | 'bound'
    arity: int  # total positions including the numeric one
    op: Optional[BoundOp] = None


@dataclass(frozen=True)
class Program:
    rules: tuple
    facts: tuple
    schema: Mapping[str, PredInfo] = field(default_factory=dict, compare=False)

    def with_extra(self, rules=(), facts=(), schema_updates=None) -> "Program":
        schema = dict(self.schema)
        if schema_updates:
            schema.update(schema_updates)
        return Program(self.rules + tuple(rules), self.facts + tuple(facts), schema)


class NullFactory:
    """Monotone per-run counter for invented nulls."""

    def __init__(self, start: int = 0):
        self._counter = itertools.count(start + 1)

    def fresh(self) -> Null:
        return Null(next(self._counter))
