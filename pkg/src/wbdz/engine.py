"""Fixpoint reasoning loop: rule application through exact constraint
solving, value-propagation-graph divergence handling, and the wardedness
termination check for invented nulls.

Each outer iteration first refreshes the value propagation graph (nodes
are bound facts, edges carry affine value maps recorded at firing time;
any value-improving cycle forces the node to the UNBOUNDED sentinel),
then fires every applicable rule.  Triggers are memoized per object
homomorphism and re-fire only when a matched bound value strictly
improved, so bound values converge without redundant solver calls.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Set, Tuple, Union

from . import solver
from .analysis import analyze
from .errors import BudgetExhausted, ContractViolation, QueryError, UncheckedProgramError
from .model import (
    UNBOUNDED,
    BoundAtom,
    BoundOp,
    BoundValue,
    Comparison,
    Const,
    ExactAtom,
    Fact,
    Interpretation,
    LinearExpr,
    Null,
    NullFactory,
    ObjectAtom,
    PredInfo,
    Program,
    Rule,
    Var,
    bound_dominates,
)

DEFAULT_BUDGET = 10**6


@dataclass(frozen=True)
class TraceEvent:
    iteration: int
    rule_index: Optional[int]  # None for base facts and divergence updates
    substitution: tuple        # sorted (var, term) pairs
    fact: Optional[Fact]
    suppressed: Optional[str] = None  # 'dominated' | 'termination-check' | 'infeasible'
    kind: str = "fire"                # 'fire' | 'fact' | 'diverge' | 'suppress'

    def render(self, program: Optional[Program] = None) -> str:
        subst = ", ".join(f"{v}={t}" for v, t in self.substitution)
        if self.kind == "suppress":
            return f"ITER {self.iteration} SUPPRESS {self.suppressed} rule@{self._span(program)} {{{subst}}}"
        if self.kind == "diverge":
            return f"ITER {self.iteration} DIVERGE => {self.fact}"
        if self.kind == "fact":
            return f"ITER {self.iteration} FACT => {self.fact}"
        return f"ITER {self.iteration} FIRE rule@{self._span(program)} {{{subst}}} => {self.fact}"

    def _span(self, program):
        if program is None or self.rule_index is None:
            return str(self.rule_index)
        return str(program.rules[self.rule_index].span)


@dataclass
class RunResult:
    interpretation: Interpretation
    trace: List[TraceEvent]
    iterations: int
    events: int


# ---------------------------------------------------------------------------
# Homomorphism enumeration


@dataclass
class Match:
    binding: Dict[str, object]                   # object var -> Const | Null
    bound_parents: List[Tuple[BoundAtom, tuple, object]]   # (atom, args, stored)
    exact_parents: List[Tuple[ExactAtom, tuple, int]]
    fingerprint: tuple


def _match_args(pattern: tuple, args: tuple, binding: dict) -> Optional[dict]:
    out = None
    for term, value in zip(pattern, args):
        if isinstance(term, Var):
            bound = (out or binding).get(term.name)
            if bound is None:
                if out is None:
                    out = dict(binding)
                out[term.name] = value
            elif bound != value:
                return None
        elif term != value:
            return None
    return out if out is not None else dict(binding)


def _enumerate_matches(rule_index: int, rule: Rule, interp: Interpretation,
                       delta: Optional[Set[tuple]]) -> Iterable[Match]:
    pred_atoms = [a for a in rule.body if not isinstance(a, Comparison)]
    if not pred_atoms:
        if delta is None:
            yield Match({}, [], [], (rule_index,))
        return

    def atom_candidates(atom, binding):
        if isinstance(atom, ObjectAtom):
            for args in interp.objects.get(atom.pred, ()):
                nxt = _match_args(atom.args, args, binding)
                if nxt is not None:
                    yield nxt, None, None
        elif isinstance(atom, ExactAtom):
            for args, values in interp.exacts.get(atom.pred, {}).items():
                nxt = _match_args(atom.args, args, binding)
                if nxt is None:
                    continue
                for value in values:
                    yield dict(nxt), None, (args, value)
        else:
            for args, stored in interp.bounds.get(atom.pred, {}).items():
                nxt = _match_args(atom.args, args, binding)
                if nxt is not None:
                    yield nxt, (args, stored), None

    def extend(order, idx, binding, bounds, exacts):
        if idx == len(order):
            fp_bind = tuple(sorted((v, t) for v, t in binding.items()))
            fp_exact = tuple(v for _, _, v in exacts)
            yield Match(
                binding, [b for b in bounds], [e for e in exacts],
                (rule_index, fp_bind, fp_exact),
            )
            return
        atom = pred_atoms[order[idx]]
        for nxt, bound_hit, exact_hit in atom_candidates(atom, binding):
            new_bounds = bounds + [(atom, bound_hit[0], bound_hit[1])] if bound_hit else bounds
            new_exacts = exacts + [(atom, exact_hit[0], exact_hit[1])] if exact_hit else exacts
            yield from extend(order, idx + 1, nxt, new_bounds, new_exacts)

    indices = list(range(len(pred_atoms)))
    if delta is None:
        yield from extend(indices, 0, {}, [], [])
        return

    # semi-naive seeding: require at least one atom matched in the delta
    for seed_pos, seed_atom in enumerate(pred_atoms):
        seeds = []
        if isinstance(seed_atom, ObjectAtom):
            for args in interp.objects.get(seed_atom.pred, ()):
                if (seed_atom.pred, args) in delta:
                    nxt = _match_args(seed_atom.args, args, {})
                    if nxt is not None:
                        seeds.append((nxt, None, None))
        elif isinstance(seed_atom, ExactAtom):
            for args, values in interp.exacts.get(seed_atom.pred, {}).items():
                if (seed_atom.pred, args) not in delta:
                    continue
                nxt = _match_args(seed_atom.args, args, {})
                if nxt is None:
                    continue
                for value in values:
                    seeds.append((dict(nxt), None, (args, value)))
        else:
            for args, stored in interp.bounds.get(seed_atom.pred, {}).items():
                if (seed_atom.pred, args, seed_atom.op) not in delta:
                    continue
                nxt = _match_args(seed_atom.args, args, {})
                if nxt is not None:
                    seeds.append((nxt, (args, stored), None))
        rest = [i for i in indices if i != seed_pos]
        for nxt, bound_hit, exact_hit in seeds:
            bounds = [(seed_atom, bound_hit[0], bound_hit[1])] if bound_hit else []
            exacts = [(seed_atom, exact_hit[0], exact_hit[1])] if exact_hit else []
            yield from extend(rest, 0, nxt, bounds, exacts)


# ---------------------------------------------------------------------------
# Constraint construction (rule applicability)


def build_constraint(rule: Rule, match: Match, interp: Interpretation) -> solver.LinearConstraintSystem:
    """Linear integer constraints induced by one object homomorphism."""
    system = solver.LinearConstraintSystem()
    for atom, args, stored in match.bound_parents:
        if stored is UNBOUNDED:
            continue  # holds for every integer: no constraint
        expr = atom.expr
        if atom.op is BoundOp.MIN:
            # expr >= stored
            system.add_le({v: -k for v, k in expr.terms}, expr.const - stored)
        else:
            # expr <= stored
            system.add_le(dict(expr.terms), stored - expr.const)
    for atom, args, value in match.exact_parents:
        expr = atom.value
        system.add_eq(dict(expr.terms), value - expr.const)
    for atom in rule.body:
        if not isinstance(atom, Comparison):
            continue
        coeffs = dict(atom.lhs.terms)
        for v, k in atom.rhs.terms:
            coeffs[v] = coeffs.get(v, 0) - k
        bound = atom.rhs.const - atom.lhs.const
        if atom.rel == "<":
            system.add_lt(coeffs, bound)
        else:
            system.add_le(coeffs, bound)
    return system


@dataclass
class Derivation:
    fact: Fact
    match: Match
    witness: Dict[str, int]
    fresh_nulls: Dict[str, Null]


def _derive(rule: Rule, match: Match, interp: Interpretation,
            nulls: NullFactory) -> Optional[Derivation]:
    """Apply one rule under one homomorphism; None when infeasible."""
    system = build_constraint(rule, match, interp)
    head = rule.head
    fresh: Dict[str, Null] = {}

    def head_args():
        out = []
        for term in head.args:
            if isinstance(term, Var):
                if term.name in rule.existentials:
                    if term.name not in fresh:
                        fresh[term.name] = nulls.fresh()
                    out.append(fresh[term.name])
                else:
                    out.append(match.binding[term.name])
            else:
                out.append(term)
        return tuple(out)

    if isinstance(head, ObjectAtom):
        if not solver.feasible(system):
            return None
        return Derivation(Fact(head.pred, head_args(), None), match, {}, fresh)

    expr = head.expr if isinstance(head, BoundAtom) else head.value
    if isinstance(head, ExactAtom):
        if not expr.is_constant():
            raise ContractViolation(
                "exact numeric heads must be ground (exact predicates are EDB-only)"
            )
        if not solver.feasible(system):
            return None
        return Derivation(Fact(head.pred, head_args(), expr.const), match, {}, fresh)

    direction = solver.MINIMIZE if head.op is BoundOp.MIN else solver.MAXIMIZE
    outcome = solver.optimize(system, dict(expr.terms), direction, expr.const)
    if isinstance(outcome, solver.Infeasible):
        return None
    if isinstance(outcome, solver.Unbounded):
        value: object = UNBOUNDED
        witness: Dict[str, int] = {}
    else:
        value = outcome.value
        witness = outcome.witness
    return Derivation(
        Fact(head.pred, head_args(), BoundValue(head.op, value)), match, witness, fresh
    )


def check_applicable(rule: Rule, interp: Interpretation,
                     nulls: Optional[NullFactory] = None) -> Optional[Fact]:
    """First non-dominated fact derivable from the rule, or None."""
    nulls = nulls or NullFactory()
    for match in _enumerate_matches(-1, rule, interp, None):
        derivation = _derive(rule, match, interp, nulls)
        if derivation is None:
            continue
        if not _dominated(interp, derivation.fact):
            return derivation.fact
    return None


def _dominated(interp: Interpretation, fact: Fact) -> bool:
    payload = fact.payload
    if payload is None:
        return fact.args in interp.objects.get(fact.pred, {})
    if isinstance(payload, int):
        return payload in interp.exacts.get(fact.pred, {}).get(fact.args, [])
    stored = interp.stored_bound(fact.pred, fact.args)
    return stored is not None and bound_dominates(payload.op, stored, payload.value)


# ---------------------------------------------------------------------------
# Value propagation graph


@dataclass
class VPGEdge:
    source: tuple  # (pred, args, op)
    target: tuple
    slope: Optional[int]  # None marks an opaque label (flagged conservatively)
    offset: int


class ValuePropagationGraph:
    def __init__(self):
        self.edges: Dict[tuple, Dict[tuple, Set[Tuple[Optional[int], int]]]] = {}
        self.divergent: Set[tuple] = set()

    def add_edge(self, source: tuple, target: tuple, slope: Optional[int], offset: int):
        self.edges.setdefault(source, {}).setdefault(target, set()).add((slope, offset))

    def nodes(self) -> Set[tuple]:
        out = set(self.edges)
        for targets in self.edges.values():
            out |= set(targets)
        return out

    def find_divergent(self, values: Dict[tuple, object]) -> Set[tuple]:
        """Nodes on a value-improving cycle under the current values."""
        flagged: Set[tuple] = set()
        nodes = sorted(self.nodes(), key=repr)
        index = {n: i for i, n in enumerate(nodes)}

        def improving(node, slope, offset):
            value = values.get(node)
            if value is None or value is UNBOUNDED:
                return False
            if slope is None:
                return True  # opaque composition: conservative
            image = slope * value + offset
            return image > value if node[2] is BoundOp.MAX else image < value

        for start in nodes:
            stack = [(start, 1, 0, (start,))]
            steps = 0
            while stack:
                steps += 1
                if steps > 200000:
                    # composition explosion: flag everything still on the stack
                    for node, _, _, path in stack:
                        flagged.update(path)
                    break
                node, slope, offset, path = stack.pop()
                for target, labels in self.edges.get(node, {}).items():
                    if index.get(target, -1) < index[start]:
                        continue  # cycles are rooted at their smallest node
                    for (k, c) in labels:
                        if slope is None or k is None:
                            nslope, noffset = None, 0
                        else:
                            nslope, noffset = k * slope, k * offset + c
                        if target == start:
                            if improving(start, nslope, noffset):
                                flagged.update(path)
                        elif target not in path:
                            stack.append((target, nslope, noffset, path + (target,)))
        return flagged


# ---------------------------------------------------------------------------
# The reasoning loop


class DerivationState:
    def __init__(self, program: Program, budget: int):
        self.program = program
        self.interp = Interpretation()
        self.vpg = ValuePropagationGraph()
        self.nulls = NullFactory()
        self.budget = budget
        self.events = 0
        self.trace: List[TraceEvent] = []
        self.memo: Dict[tuple, Dict[tuple, object]] = {}
        self.lineage: Dict[tuple, Tuple[Optional[int], tuple]] = {}
        self.summaries: Dict[tuple, tuple] = {}
        self.seen_summaries: Set[tuple] = set()
        self.delta: Set[tuple] = set()
        self.iteration = 0
        self._pending_summary = None

    def spend(self):
        self.events += 1
        if self.events > self.budget:
            raise BudgetExhausted(
                f"derivation budget of {self.budget} events exhausted"
            )

    # -- termination summaries ------------------------------------------------
    #
    # Two facts are isomorphic when predicate, constant placement, null
    # pattern and lineage shape coincide.  Lineage recursion is cut off at a
    # fixed depth: an unbounded-depth shape would distinguish every
    # generation of a null-creating cycle and the chase would never close.
    # The cut-off errs toward suppression, which is the safe direction.

    SUMMARY_DEPTH = 2

    @staticmethod
    def _pattern(args) -> tuple:
        pattern = []
        local: Dict[Null, int] = {}
        for a in args:
            if isinstance(a, Null):
                if a not in local:
                    local[a] = len(local)
                pattern.append(("n", local[a]))
            else:
                pattern.append(("c", a.name))
        return tuple(pattern)

    def summary(self, key: tuple, depth: int = SUMMARY_DEPTH) -> tuple:
        cached = self.summaries.get((key, depth))
        if cached is not None:
            return cached
        pred, args = key[0], key[1]
        rule_index, parents = self.lineage.get(key, (None, ()))
        if depth <= 0:
            result = (pred, self._pattern(args), rule_index)
        else:
            result = (pred, self._pattern(args), rule_index,
                      tuple(self.summary(p, depth - 1) for p in parents))
        self.summaries[(key, depth)] = result
        return result

    def check_termination(self, fact: Fact, rule_index: int, parents: tuple) -> bool:
        """True iff the fact is safe to add (no isomorphic precedent)."""
        if not fact.has_nulls():
            return True
        key = fact.key()
        candidate = (fact.pred, self._pattern(fact.args), rule_index,
                     tuple(self.summary(p, self.SUMMARY_DEPTH - 1) for p in parents))
        if candidate in self.seen_summaries:
            return False
        self._pending_summary = (key, candidate)
        return True

    def record_insert(self, fact: Fact, rule_index: Optional[int], parents: tuple):
        key = fact.key()
        if key not in self.lineage:
            self.lineage[key] = (rule_index, parents)
        if fact.has_nulls():
            pending = getattr(self, "_pending_summary", None)
            if pending and pending[0] == key:
                self.seen_summaries.add(pending[1])
                self._pending_summary = None


def update_vpg(state: DerivationState) -> bool:
    """Flag improving cycles and force their nodes to UNBOUNDED."""
    values = {}
    for pred, store in state.interp.bounds.items():
        op = state.interp.bound_ops[pred]
        for args, value in store.items():
            values[(pred, args, op)] = value
    flagged = state.vpg.find_divergent(values)
    changed = False
    for node in sorted(flagged - state.vpg.divergent, key=repr):
        state.vpg.divergent.add(node)
        pred, args, op = node
        fact = Fact(pred, args, BoundValue(op, UNBOUNDED))
        if state.interp.insert(fact):
            changed = True
            state.delta.add(node)
            state.trace.append(
                TraceEvent(state.iteration, None, (), fact, kind="diverge")
            )
    return changed


def _parent_keys(match: Match) -> tuple:
    keys = []
    for atom, args, _stored in match.bound_parents:
        keys.append((atom.pred, args, atom.op))
    for atom, args, _value in match.exact_parents:
        keys.append((atom.pred, args))
    return tuple(keys)


def _object_parent_keys(rule: Rule, match: Match) -> tuple:
    keys = []
    for atom in rule.body:
        if isinstance(atom, ObjectAtom):
            args = tuple(
                match.binding[t.name] if isinstance(t, Var) else t for t in atom.args
            )
            keys.append((atom.pred, args))
    return tuple(keys)


def run(program: Program, budget: int = DEFAULT_BUDGET,
        enforce_checks: bool = True) -> RunResult:
    """Evaluate the program to its fixpoint interpretation."""
    if enforce_checks:
        report = analyze(program)
        if not report.passed():
            raise UncheckedProgramError(report)

    state = DerivationState(program, budget)
    state.iteration = 0
    for fact in program.facts:
        if state.interp.insert(fact):
            state.delta.add(fact.key())
            state.trace.append(TraceEvent(0, None, (), fact, kind="fact"))
            state.record_insert(fact, None, ())

    iteration = 0
    while True:
        iteration += 1
        state.iteration = iteration
        changed = update_vpg(state)
        delta = state.delta if iteration > 1 else None
        state.delta = set()
        for rule_index, rule in enumerate(program.rules):
            # materialize: insertions must not feed this same pass
            matches = list(_enumerate_matches(rule_index, rule, state.interp, delta))
            for match in matches:
                snapshot = {
                    (atom.pred, args, atom.op): stored
                    for atom, args, stored in match.bound_parents
                }
                previous = state.memo.get(match.fingerprint)
                if previous is not None:
                    improved = False
                    for node, stored in snapshot.items():
                        before = previous.get(node)
                        if before is None or (
                            stored != before
                            and bound_dominates(node[2], stored, before)
                        ):
                            improved = True
                            break
                    if not improved:
                        continue
                state.memo[match.fingerprint] = snapshot

                derivation = _derive(rule, match, state.interp, state.nulls)
                subst = tuple(sorted(
                    (v, str(t)) for v, t in match.binding.items()
                ))
                if derivation is None:
                    state.spend()
                    state.trace.append(TraceEvent(
                        iteration, rule_index, subst, None,
                        suppressed="infeasible", kind="suppress",
                    ))
                    continue
                state.spend()
                fact = derivation.fact
                if _dominated(state.interp, fact):
                    state.trace.append(TraceEvent(
                        iteration, rule_index, subst, fact,
                        suppressed="dominated", kind="suppress",
                    ))
                    continue
                parents = _parent_keys(match) + _object_parent_keys(rule, match)
                if not state.check_termination(fact, rule_index, parents):
                    state.trace.append(TraceEvent(
                        iteration, rule_index, subst, fact,
                        suppressed="termination-check", kind="suppress",
                    ))
                    continue
                if state.interp.insert(fact):
                    changed = True
                    state.delta.add(fact.key())
                    state.record_insert(fact, rule_index, parents)
                    state.trace.append(TraceEvent(iteration, rule_index, subst, fact))
                    _record_vpg_edges(state, rule, derivation)
        if not changed:
            break
    return RunResult(state.interp, state.trace, iteration, state.events)


def _record_vpg_edges(state: DerivationState, rule: Rule, derivation: Derivation):
    head = rule.head
    fact = derivation.fact
    if not isinstance(head, BoundAtom) or not isinstance(fact.payload, BoundValue):
        return
    if fact.payload.value is UNBOUNDED:
        return
    target = (fact.pred, fact.args, fact.payload.op)
    head_coeffs = head.expr.coeffs
    value = fact.payload.value
    for atom, args, stored in derivation.match.bound_parents:
        if stored is UNBOUNDED:
            continue
        terms = atom.expr.terms
        if len(terms) != 1:
            continue
        var, body_coeff = terms[0]
        head_coeff = head_coeffs.get(var, 0)
        if head_coeff == 0:
            continue
        source = (atom.pred, args, atom.op)
        if body_coeff in (1, -1):
            slope = head_coeff * body_coeff
            offset = value - slope * stored
            state.vpg.add_edge(source, target, slope, offset)
        else:
            state.vpg.add_edge(source, target, None, 0)


# ---------------------------------------------------------------------------
# Entailment and Boolean conjunctive queries


def entails(program: Program, fact: Fact, budget: int = DEFAULT_BUDGET,
            enforce_checks: bool = True) -> bool:
    """Does the program entail the (null-free, ground) fact?"""
    if fact.has_nulls():
        raise QueryError(f"query fact {fact} contains nulls")
    result = run(program, budget, enforce_checks)
    return result.interpretation.satisfies(fact)


def answer_bcq(program: Program, atoms: Iterable, budget: int = DEFAULT_BUDGET,
               enforce_checks: bool = True) -> bool:
    """Boolean conjunctive query via the one-rule goal reduction."""
    atoms = tuple(atoms)
    if not atoms:
        raise QueryError("empty conjunctive query")
    taken = set(program.schema)
    goal = "goal"
    while goal in taken:
        goal = "_" + goal
    rule = Rule(atoms, ObjectAtom(goal, ()), ())
    schema_updates = {goal: PredInfo("object", 0)}
    for atom in atoms:
        if isinstance(atom, Comparison) or atom.pred in program.schema:
            continue
        if isinstance(atom, ObjectAtom):
            schema_updates[atom.pred] = PredInfo("object", len(atom.args))
        elif isinstance(atom, ExactAtom):
            schema_updates[atom.pred] = PredInfo("exact", len(atom.args) + 1)
        else:
            schema_updates[atom.pred] = PredInfo("bound", len(atom.args) + 1, atom.op)
    extended = program.with_extra(rules=(rule,), schema_updates=schema_updates)
    return entails(extended, Fact(goal, (), None), budget, enforce_checks)


def render_interpretation(interp: Interpretation) -> str:
    return "\n".join(f"{line}." for line in interp.canonical_lines())
