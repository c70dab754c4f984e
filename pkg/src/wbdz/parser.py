"""Concrete syntax: lexer, parser, schema resolution and pretty-printer.

Grammar sketch (one clause per ``.``-terminated statement, ``%`` comments):

    fact    ::= atom '.'
    rule    ::= atom (',' atom)* '->' ['exists' VAR (',' VAR)*] atom '.'
    query   ::= '?-' atom (',' atom)* '.'
    atom    ::= pred ['(' arg (',' arg)* ')'] | expr ('<'|'<='|'>'|'>='|'=') expr
    arg     ::= expr | ('min'|'max') '(' expr ')'

Variables are uppercase-initial; predicates and constants lowercase-initial.
``>=``, ``>`` and ``=`` are desugared to the primitives ``<`` and ``<=``
(an equality becomes the conjunction of both directions).  A ``*`` between
two non-constant terms is rejected: arithmetic stays linear by construction.

Predicate variants are resolved per program: a min/max wrapper anywhere
makes the predicate bound with that operator; a bare numeric payload makes
it exact when the predicate only ever occurs in facts, and bound (max by
default) when it is derived by rules, since exact predicates are EDB-only.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from .errors import ParseError
from .model import (
    BoundAtom,
    BoundOp,
    Comparison,
    Const,
    ExactAtom,
    Fact,
    LinearExpr,
    ObjectAtom,
    PredInfo,
    Program,
    Rule,
    Span,
    Var,
    atom_to_fact,
)


@dataclass
class Diagnostic:
    severity: str
    message: str
    span: Span
    filename: str = "<input>"

    def __str__(self):
        return f"{self.filename}:{self.span.line}:{self.span.col}: {self.severity}: {self.message}"


# ---------------------------------------------------------------------------
# Lexer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>%[^\n]*)
  | (?P<int>\d+)
  | (?P<lname>[a-z][A-Za-z0-9_]*)
  | (?P<uname>[A-Z][A-Za-z0-9_]*)
  | (?P<query>\?-)
  | (?P<arrow>->)
  | (?P<le><=)
  | (?P<ge>>=)
  | (?P<lt><)
  | (?P<gt>>)
  | (?P<eq>=)
  | (?P<plus>\+)
  | (?P<minus>-)
  | (?P<star>\*)
  | (?P<lpar>\()
  | (?P<rpar>\))
  | (?P<comma>,)
  | (?P<dot>\.)
""",
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    span: Span


def tokenize(text: str, filename: str = "<input>"):
    tokens: List[Token] = []
    diagnostics: List[Diagnostic] = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if not match:
            diagnostics.append(
                Diagnostic("error", f"unexpected character {text[pos]!r}", Span(line, col), filename)
            )
            pos += 1
            col += 1
            continue
        kind = match.lastgroup
        chunk = match.group()
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, chunk, Span(line, col)))
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            col = len(chunk) - chunk.rfind("\n")
        else:
            col += len(chunk)
        pos = match.end()
    tokens.append(Token("eof", "", Span(line, col)))
    return tokens, diagnostics


# ---------------------------------------------------------------------------
# Raw syntax tree (predicate variants not yet resolved)


@dataclass
class RawExpr:
    const: int
    coeffs: dict  # variable name -> coefficient
    bare: Optional[Tuple[str, bool]]  # (name, is_lowercase) when a single name token
    span: Span

    def to_linear(self) -> LinearExpr:
        return LinearExpr(self.const, self.coeffs)


@dataclass
class RawArg:
    wrapper: Optional[str]  # 'min' | 'max' | None
    expr: RawExpr
    span: Span


@dataclass
class RawAtom:
    kind: str  # 'pred' | 'cmp'
    pred: Optional[str]
    args: List[RawArg]
    span: Span
    lhs: Optional[RawExpr] = None
    rel: Optional[str] = None
    rhs: Optional[RawExpr] = None


@dataclass
class RawClause:
    body: List[RawAtom]  # empty for facts
    head: RawAtom
    existentials: List[str]
    span: Span


class _Bail(Exception):
    pass


class _Parser:
    def __init__(self, tokens: List[Token], filename: str):
        self.tokens = tokens
        self.pos = 0
        self.filename = filename
        self.diagnostics: List[Diagnostic] = []

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def error(self, message: str, span: Optional[Span] = None):
        span = span or self.peek().span
        self.diagnostics.append(Diagnostic("error", message, span, self.filename))
        raise _Bail()

    def expect(self, kind: str, what: str) -> Token:
        tok = self.peek()
        if tok.kind != kind:
            self.error(f"expected {what}, found {tok.text or 'end of input'!r}")
        return self.advance()

    def sync_to_dot(self):
        while self.peek().kind not in ("dot", "eof"):
            self.advance()
        if self.peek().kind == "dot":
            self.advance()

    # clauses ---------------------------------------------------------------

    def parse_clauses(self) -> List[RawClause]:
        clauses = []
        while self.peek().kind != "eof":
            try:
                clauses.append(self.clause())
            except _Bail:
                self.sync_to_dot()
        return clauses

    def clause(self) -> RawClause:
        start = self.peek().span
        atoms = [self.atom()]
        while self.peek().kind == "comma":
            self.advance()
            atoms.append(self.atom())
        existentials: List[str] = []
        if self.peek().kind == "arrow":
            self.advance()
            if self.peek().kind == "lname" and self.peek().text == "exists":
                self.advance()
                existentials.append(self.expect("uname", "existential variable").text)
                while self.peek().kind == "comma":
                    self.advance()
                    existentials.append(self.expect("uname", "existential variable").text)
            head = self.atom()
            if head.kind == "cmp":
                self.error("rule head cannot be a comparison", head.span)
            self.expect("dot", "'.'")
            return RawClause(atoms, head, existentials, start)
        if len(atoms) > 1:
            self.error("facts consist of a single atom", start)
        if atoms[0].kind == "cmp":
            self.error("a comparison cannot stand alone as a fact", atoms[0].span)
        self.expect("dot", "'.'")
        return RawClause([], atoms[0], [], start)

    def parse_query_atoms(self) -> List[RawAtom]:
        self.expect("query", "'?-'")
        atoms = [self.atom()]
        while self.peek().kind == "comma":
            self.advance()
            atoms.append(self.atom())
        self.expect("dot", "'.'")
        if self.peek().kind != "eof":
            self.error("trailing input after query")
        return atoms

    # atoms ------------------------------------------------------------------

    def atom(self) -> RawAtom:
        tok = self.peek()
        if tok.kind == "lname" and self.peek(1).kind not in (
            "plus", "minus", "star", "le", "ge", "lt", "gt", "eq",
        ):
            pred = self.advance()
            args: List[RawArg] = []
            if self.peek().kind == "lpar":
                self.advance()
                if self.peek().kind != "rpar":
                    args.append(self.arg())
                    while self.peek().kind == "comma":
                        self.advance()
                        args.append(self.arg())
                self.expect("rpar", "')'")
            return RawAtom("pred", pred.text, args, pred.span)
        lhs = self.expr()
        rel_tok = self.peek()
        if rel_tok.kind not in ("le", "ge", "lt", "gt", "eq"):
            self.error("expected a comparison operator")
        self.advance()
        rhs = self.expr()
        for side in (lhs, rhs):
            if side.bare and side.bare[1]:
                self.error("object constants cannot appear in comparisons", side.span)
        return RawAtom("cmp", None, [], rel_tok.span, lhs=lhs, rel=rel_tok.kind, rhs=rhs)

    def arg(self) -> RawArg:
        tok = self.peek()
        if tok.kind == "lname" and tok.text in ("min", "max") and self.peek(1).kind == "lpar":
            op = self.advance().text
            self.advance()
            inner = self.expr()
            if inner.bare and inner.bare[1]:
                self.error("object constants cannot appear inside bound operators", inner.span)
            self.expect("rpar", "')'")
            return RawArg(op, inner, tok.span)
        return RawArg(None, self.expr(), tok.span)

    # expressions -------------------------------------------------------------

    def expr(self) -> RawExpr:
        span = self.peek().span
        const, coeffs, bare = self.term()
        saw_sum = False
        while self.peek().kind in ("plus", "minus"):
            saw_sum = True
            op = self.advance().kind
            c2, k2, b2 = self.term()
            self._no_const_in_arith(bare, span)
            self._no_const_in_arith(b2, span)
            sign = 1 if op == "plus" else -1
            const += sign * c2
            for v, k in k2.items():
                coeffs[v] = coeffs.get(v, 0) + sign * k
            bare = None
        coeffs = {v: k for v, k in coeffs.items() if k}
        return RawExpr(const, coeffs, None if saw_sum else bare, span)

    def term(self):
        const, coeffs, bare = self.factor()
        while self.peek().kind == "star":
            star = self.advance()
            c2, k2, b2 = self.factor()
            self._no_const_in_arith(bare, star.span)
            self._no_const_in_arith(b2, star.span)
            if coeffs and k2:
                self.error("nonlinear product of two variables", star.span)
            if k2:
                const, coeffs = const * c2, {v: k * const for v, k in k2.items()}
            else:
                const, coeffs = const * c2, {v: k * c2 for v, k in coeffs.items()}
            bare = None
        return const, coeffs, bare

    def factor(self):
        tok = self.peek()
        if tok.kind == "int":
            self.advance()
            return int(tok.text), {}, None
        if tok.kind == "minus":
            self.advance()
            c, k, b = self.factor()
            self._no_const_in_arith(b, tok.span)
            return -c, {v: -kk for v, kk in k.items()}, None
        if tok.kind == "uname":
            self.advance()
            return 0, {tok.text: 1}, (tok.text, False)
        if tok.kind == "lname":
            self.advance()
            return 0, {}, (tok.text, True)
        if tok.kind == "lpar":
            self.advance()
            inner = self.expr()
            self.expect("rpar", "')'")
            if inner.bare and inner.bare[1]:
                self.error("object constants cannot appear in arithmetic", tok.span)
            return inner.const, dict(inner.coeffs), inner.bare
        self.error(f"expected a term, found {tok.text or 'end of input'!r}")

    def _no_const_in_arith(self, bare, span):
        if bare and bare[1]:
            self.error("object constants cannot appear in arithmetic", span)


# ---------------------------------------------------------------------------
# Schema resolution


def _numeric_evidence(arg: RawArg, is_last: bool) -> bool:
    """Syntactic evidence that this argument is a numeric payload."""
    if arg.wrapper:
        return True
    if not is_last:
        return False
    e = arg.expr
    if e.bare is None:
        return True  # integer literal or arithmetic
    return False


class _Resolver:
    """Assigns each predicate a variant (object/exact/bound) and arity."""

    def __init__(self, filename: str):
        self.filename = filename
        self.diagnostics: List[Diagnostic] = []
        self.arity = {}
        self.ops = {}           # pred -> 'min' | 'max'
        self.wrapper_span = {}
        self.numeric = set()    # preds with numeric last position
        self.in_rule_head = {}  # pred -> span of a rule-head occurrence
        self.has_fact = set()
        self.spans = {}

    def err(self, message, span):
        self.diagnostics.append(Diagnostic("error", message, span, self.filename))

    def scan(self, clauses: List[RawClause]):
        for clause in clauses:
            for atom in clause.body:
                self._scan_atom(atom, head_of_rule=False, is_fact=False)
            if clause.head.kind == "pred":
                is_fact = not clause.body
                self._scan_atom(clause.head, head_of_rule=not is_fact, is_fact=is_fact)

    def _scan_atom(self, atom: RawAtom, head_of_rule: bool, is_fact: bool):
        if atom.kind != "pred":
            return
        pred = atom.pred
        self.spans.setdefault(pred, atom.span)
        arity = len(atom.args)
        if pred in self.arity and self.arity[pred] != arity:
            self.err(
                f"predicate {pred} used with arity {arity} but earlier with {self.arity[pred]}",
                atom.span,
            )
        self.arity.setdefault(pred, arity)
        if is_fact:
            self.has_fact.add(pred)
        if head_of_rule:
            self.in_rule_head.setdefault(pred, atom.span)
        for i, arg in enumerate(atom.args):
            is_last = i == len(atom.args) - 1
            if arg.wrapper and not is_last:
                self.err("bound operators may only wrap the last argument", arg.span)
            if arg.wrapper:
                prev = self.ops.get(pred)
                if prev is not None and prev != arg.wrapper:
                    self.err(
                        f"predicate {pred} mixes min and max bound operators", arg.span
                    )
                self.ops.setdefault(pred, arg.wrapper)
                self.wrapper_span.setdefault(pred, arg.span)
                self.numeric.add(pred)
            elif _numeric_evidence(arg, is_last):
                self.numeric.add(pred)
            elif not is_last and arg.expr.bare is None:
                self.err("numeric terms may only appear in the last argument", arg.span)

    def schema(self) -> dict:
        out = {}
        for pred, arity in self.arity.items():
            if pred not in self.numeric:
                out[pred] = PredInfo("object", arity)
            elif pred in self.ops:
                out[pred] = PredInfo("bound", arity, BoundOp(self.ops[pred]))
            elif pred in self.in_rule_head and pred not in self.has_fact:
                # exact predicates are EDB-only, so a derived bare numeric
                # payload defaults to a max bound
                out[pred] = PredInfo("bound", arity, BoundOp.MAX)
            else:
                out[pred] = PredInfo("exact", arity)
        return out


# ---------------------------------------------------------------------------
# Conversion of raw clauses to typed model objects


class _Typer:
    def __init__(self, schema: dict, filename: str):
        self.schema = schema
        self.filename = filename
        self.diagnostics: List[Diagnostic] = []

    def err(self, message, span):
        self.diagnostics.append(Diagnostic("error", message, span, self.filename))

    def convert_clause(self, clause: RawClause):
        """Returns a Rule, a Fact, or None on error."""
        numeric_vars, object_vars = set(), set()
        atoms = clause.body + [clause.head]
        for atom in atoms:
            self._collect_var_sorts(atom, numeric_vars, object_vars)
        clash = numeric_vars & object_vars
        if clash:
            self.err(
                f"variables used both as object and numeric: {', '.join(sorted(clash))}",
                clause.span,
            )
            return None

        body = []
        for atom in clause.body:
            conv = self._convert_atom(atom, numeric_vars)
            if conv is None:
                return None
            body.extend(conv)
        head_conv = self._convert_atom(clause.head, numeric_vars)
        if head_conv is None:
            return None
        if len(head_conv) != 1:
            self.err("rule head cannot be a comparison", clause.head.span)
            return None
        head = head_conv[0]

        if not clause.body and not clause.existentials:
            for t in head.args:
                if isinstance(t, Var):
                    self.err(f"fact contains variable {t.name}", clause.span)
                    return None
            if _model_atom_vars(head):
                self.err("fact payload must be a ground integer", clause.span)
                return None
            if isinstance(head, (ExactAtom, BoundAtom)):
                expr = head.value if isinstance(head, ExactAtom) else head.expr
                if not expr.is_constant():
                    self.err("fact payload must be a ground integer", clause.span)
                    return None
            try:
                return atom_to_fact(head)
            except Exception as exc:  # pragma: no cover - defensive
                self.err(str(exc), clause.span)
                return None

        body_vars = set()
        for atom in body:
            body_vars |= _model_atom_vars(atom)
        head_vars = _model_atom_vars(head)
        for ex in clause.existentials:
            if ex in body_vars:
                self.err(f"existential variable {ex} occurs in the body", clause.span)
                return None
            if ex not in head_vars:
                self.err(f"existential variable {ex} unused in head", clause.span)
                return None
        unsafe = head_vars - body_vars - set(clause.existentials)
        if unsafe:
            self.err(
                f"head variables not bound in body: {', '.join(sorted(unsafe))}",
                clause.span,
            )
            return None
        return Rule(tuple(body), head, tuple(clause.existentials), clause.span)

    def _collect_var_sorts(self, atom: RawAtom, numeric_vars: set, object_vars: set):
        if atom.kind == "cmp":
            numeric_vars.update(atom.lhs.coeffs)
            numeric_vars.update(atom.rhs.coeffs)
            return
        info = self.schema.get(atom.pred)
        if info is None:
            return
        for i, arg in enumerate(atom.args):
            is_numeric_pos = info.kind in ("exact", "bound") and i == len(atom.args) - 1
            if is_numeric_pos:
                numeric_vars.update(arg.expr.coeffs)
            else:
                if arg.expr.bare and not arg.expr.bare[1]:
                    object_vars.add(arg.expr.bare[0])

    def _convert_atom(self, atom: RawAtom, numeric_vars: set):
        if atom.kind == "cmp":
            return self._convert_comparison(atom)
        info = self.schema[atom.pred]
        object_args = []
        count = info.arity if info.kind == "object" else info.arity - 1
        for i, arg in enumerate(atom.args[:count]):
            term = self._object_term(arg, numeric_vars)
            if term is None:
                return None
            object_args.append(term)
        if info.kind == "object":
            return [ObjectAtom(atom.pred, tuple(object_args))]
        payload = atom.args[-1]
        expr = payload.expr.to_linear()
        if info.kind == "exact":
            if payload.wrapper:
                self.err(f"predicate {atom.pred} is exact but written with a bound operator", payload.span)
                return None
            return [ExactAtom(atom.pred, tuple(object_args), expr)]
        op = BoundOp(payload.wrapper) if payload.wrapper else info.op
        if payload.wrapper and BoundOp(payload.wrapper) != info.op:
            self.err(
                f"predicate {atom.pred} mixes min and max bound operators", payload.span
            )
            return None
        return [BoundAtom(atom.pred, tuple(object_args), op, expr)]

    def _object_term(self, arg: RawArg, numeric_vars: set):
        if arg.wrapper:
            self.err("bound operators may only wrap the last argument", arg.span)
            return None
        e = arg.expr
        if e.bare is None:
            self.err("numeric term in an object position", arg.span)
            return None
        name, is_lower = e.bare
        if is_lower:
            return Const(name)
        if name in numeric_vars:
            self.err(f"numeric variable {name} in an object position", arg.span)
            return None
        return Var(name)

    def _convert_comparison(self, atom: RawAtom):
        lhs, rhs = atom.lhs.to_linear(), atom.rhs.to_linear()
        rel = atom.rel
        if rel == "lt":
            return [Comparison(lhs, "<", rhs)]
        if rel == "le":
            return [Comparison(lhs, "<=", rhs)]
        if rel == "gt":
            return [Comparison(rhs, "<", lhs)]
        if rel == "ge":
            return [Comparison(rhs, "<=", lhs)]
        return [Comparison(lhs, "<=", rhs), Comparison(rhs, "<=", lhs)]


def _model_atom_vars(atom) -> set:
    from .model import atom_vars

    return atom_vars(atom)


# ---------------------------------------------------------------------------
# Public entry points


def parse_program(text: str, filename: str = "<input>") -> Program:
    """Parse program text; raises ParseError carrying diagnostics on failure."""
    tokens, diagnostics = tokenize(text, filename)
    parser = _Parser(tokens, filename)
    clauses = parser.parse_clauses()
    diagnostics.extend(parser.diagnostics)

    resolver = _Resolver(filename)
    resolver.scan(clauses)
    diagnostics.extend(resolver.diagnostics)
    schema = resolver.schema()

    # exact predicates must never be derived by rules
    for pred, info in schema.items():
        if info.kind == "exact" and pred in resolver.in_rule_head and pred in resolver.has_fact:
            diagnostics.append(
                Diagnostic(
                    "error",
                    f"exact numeric predicate {pred} derived by a rule (exact predicates are EDB-only)",
                    resolver.in_rule_head[pred],
                    filename,
                )
            )

    typer = _Typer(schema, filename)
    rules, facts = [], []
    for clause in clauses:
        converted = typer.convert_clause(clause)
        if isinstance(converted, Rule):
            rules.append(converted)
        elif isinstance(converted, Fact):
            facts.append(converted)
    diagnostics.extend(typer.diagnostics)

    errors = [d for d in diagnostics if d.severity == "error"]
    if errors:
        raise ParseError(errors)
    return Program(tuple(rules), tuple(facts), schema)


@dataclass(frozen=True)
class FactQuery:
    fact: Fact


@dataclass(frozen=True)
class BCQQuery:
    atoms: tuple


def parse_query(text: str, schema: Optional[dict] = None, filename: str = "<query>"):
    """Parse ``?- ...`` text into a FactQuery or BCQQuery."""
    tokens, diagnostics = tokenize(text, filename)
    parser = _Parser(tokens, filename)
    try:
        raw_atoms = parser.parse_query_atoms()
    except _Bail:
        raw_atoms = None
    diagnostics.extend(parser.diagnostics)
    if raw_atoms is None or diagnostics:
        raise ParseError(diagnostics or [Diagnostic("error", "empty query", Span(), filename)])

    resolver = _Resolver(filename)
    for atom in raw_atoms:
        resolver._scan_atom(atom, head_of_rule=False, is_fact=False)
    local = resolver.schema()
    if schema:
        merged = dict(local)
        for pred, info in schema.items():
            if pred in merged:
                mine = merged[pred]
                if mine.arity != info.arity:
                    raise ParseError(
                        [Diagnostic("error", f"predicate {pred} queried with arity {mine.arity}, declared {info.arity}", Span(), filename)]
                    )
                if mine.kind == "bound" and info.kind == "bound" and mine.op != info.op:
                    raise ParseError(
                        [Diagnostic("error", f"predicate {pred} queried with the wrong bound operator", Span(), filename)]
                    )
            merged[pred] = info
        local = merged
    # bare numeric payloads in queries follow the program schema; without a
    # schema they stay exact
    typer = _Typer(local, filename)
    numeric_vars, object_vars = set(), set()
    for atom in raw_atoms:
        typer._collect_var_sorts(atom, numeric_vars, object_vars)
    clash = numeric_vars & object_vars
    if clash:
        raise ParseError(
            [Diagnostic("error", f"variables used both as object and numeric: {', '.join(sorted(clash))}", Span(), filename)]
        )
    atoms = []
    for raw in raw_atoms:
        conv = typer._convert_atom(raw, numeric_vars)
        if conv is None:
            break
        atoms.extend(conv)
    if typer.diagnostics:
        raise ParseError(typer.diagnostics)

    if len(atoms) == 1 and not isinstance(atoms[0], Comparison):
        atom = atoms[0]
        if not _model_atom_vars(atom):
            expr = None
            if isinstance(atom, ExactAtom):
                expr = atom.value
            elif isinstance(atom, BoundAtom):
                expr = atom.expr
            if expr is None or expr.is_constant():
                return FactQuery(atom_to_fact(atom))
    return BCQQuery(tuple(atoms))


# ---------------------------------------------------------------------------
# Rendering


def render_expr(expr: LinearExpr) -> str:
    return str(expr)


def render_atom(atom) -> str:
    return str(atom)


def render_rule(rule: Rule) -> str:
    return str(rule)


def render_fact(fact: Fact) -> str:
    return f"{fact}."


def render(program: Program) -> str:
    """Canonical pretty-print; parse(render(parse(t))) == parse(t)."""
    lines = [render_fact(f) for f in program.facts]
    lines.extend(str(r) for r in program.rules)
    return "\n".join(lines) + ("\n" if lines else "")
