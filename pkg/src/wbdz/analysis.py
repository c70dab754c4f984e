"""Static analyses: affected positions, variable classification, wardedness,
the bound-rule conditions, and type-consistency.

Numeric positions can never carry invented nulls (existentials are confined
to object positions by a separate check), so they are treated as nonaffected
throughout and numeric variables classify as harmless.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set, Tuple

from .errors import ContractViolation
from .model import (
    Atom,
    BoundAtom,
    BoundOp,
    Comparison,
    ExactAtom,
    ObjectAtom,
    Program,
    Rule,
    atom_numeric_vars,
    atom_object_terms,
    atom_object_vars,
    Var,
)

HARMLESS = "harmless"
HARMFUL = "harmful"
DANGEROUS = "dangerous"


@dataclass
class CheckResult:
    name: str
    passed: bool
    witnesses: List[str] = field(default_factory=list)

    def machine_line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        tail = "".join(f" [{w}]" for w in self.witnesses)
        return f"CHECK {self.name} {status}{tail}"


@dataclass
class AnalysisReport:
    checks: List[CheckResult]
    variable_classes: Dict[int, Dict[str, str]] = field(default_factory=dict)

    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def render_text(self) -> str:
        lines = []
        for c in self.checks:
            lines.append(("PASS  " if c.passed else "FAIL  ") + c.name)
            for w in c.witnesses:
                lines.append(f"      {w}")
        return "\n".join(lines)

    def render_machine(self) -> str:
        return "\n".join(c.machine_line() for c in self.checks)


def _rule_label(rule: Rule, index: int) -> str:
    return f"rule {index + 1} at {rule.span}"


def _object_positions(atom: Atom):
    """(predicate, index) pairs for the object positions of a non-comparison atom."""
    if isinstance(atom, Comparison):
        return
    for i, _term in enumerate(atom.args):
        yield (atom.pred, i)


def affected_positions(program: Program) -> Set[Tuple[str, int]]:
    """Least fixpoint of positions that may carry invented nulls."""
    affected: Set[Tuple[str, int]] = set()
    for rule in program.rules:
        if not rule.existentials:
            continue
        head = rule.head
        for i, term in enumerate(atom_object_terms(head)):
            if isinstance(term, Var) and term.name in rule.existentials:
                affected.add((head.pred, i))
    changed = True
    while changed:
        changed = False
        for rule in program.rules:
            frontier = rule.frontier()
            head = rule.head
            for var in frontier:
                occurrences = []
                for atom in rule.body:
                    for (pred, i) in _object_positions(atom):
                        term = atom.args[i]
                        if isinstance(term, Var) and term.name == var:
                            occurrences.append((pred, i))
                if not occurrences:
                    continue  # numeric frontier variable
                if all(pos in affected for pos in occurrences):
                    for i, term in enumerate(atom_object_terms(head)):
                        if isinstance(term, Var) and term.name == var:
                            if (head.pred, i) not in affected:
                                affected.add((head.pred, i))
                                changed = True
    return affected


def nonaffected_positions(program: Program) -> Set[Tuple[str, int]]:
    everything = set()
    for pred, info in program.schema.items():
        arity = info.arity if info.kind == "object" else info.arity - 1
        for i in range(arity):
            everything.add((pred, i))
    return everything - affected_positions(program)


def classify_variable(rule: Rule, var: str, program: Program,
                      affected: Optional[Set[Tuple[str, int]]] = None) -> str:
    """harmless / harmful / dangerous for a body variable of the rule."""
    if affected is None:
        affected = affected_positions(program)
    object_occurrences = []
    seen = False
    for atom in rule.body:
        if var in atom_numeric_vars(atom):
            seen = True
        for (pred, i) in _object_positions(atom):
            term = atom.args[i]
            if isinstance(term, Var) and term.name == var:
                object_occurrences.append((pred, i))
                seen = True
    if not seen:
        raise ContractViolation(f"variable {var} does not occur in the rule body")
    if not object_occurrences:
        return HARMLESS  # numeric variables sit at nonaffected positions
    if any(pos not in affected for pos in object_occurrences):
        return HARMLESS
    if var in rule.frontier():
        return DANGEROUS
    return HARMFUL


def _body_vars(rule: Rule) -> Set[str]:
    out = set()
    for atom in rule.body:
        out |= atom_object_vars(atom) | atom_numeric_vars(atom)
    return out


def check_warded(program: Program) -> AnalysisReport:
    """Every rule's dangerous variables must fit inside one ward atom whose
    shared variables with the rest of the body are all harmless."""
    affected = affected_positions(program)
    witnesses = []
    classes: Dict[int, Dict[str, str]] = {}
    for idx, rule in enumerate(program.rules):
        table = {
            v: classify_variable(rule, v, program, affected) for v in _body_vars(rule)
        }
        classes[idx] = table
        dangerous = {v for v, c in table.items() if c == DANGEROUS}
        if not dangerous:
            continue
        candidates = []
        for atom in rule.body:
            if isinstance(atom, Comparison):
                continue  # comparison atoms never count as wards
            atom_vs = atom_object_vars(atom) | atom_numeric_vars(atom)
            if not dangerous <= atom_vs:
                continue
            rest = set()
            for other in rule.body:
                if other is atom:
                    continue
                rest |= atom_object_vars(other) | atom_numeric_vars(other)
            shared = atom_vs & rest
            if all(table[v] == HARMLESS for v in shared):
                candidates.append(atom)
        if not candidates:
            witnesses.append(
                f"{_rule_label(rule, idx)}: dangerous variables "
                f"{{{', '.join(sorted(dangerous))}}} have no ward"
            )
    report = AnalysisReport([CheckResult("warded", not witnesses, witnesses)])
    report.variable_classes = classes
    return report


def check_warded_bound(program: Program) -> AnalysisReport:
    """Wardedness plus the bound-language side conditions."""
    warded = check_warded(program)
    witnesses = []
    for idx, rule in enumerate(program.rules):
        head = rule.head
        if rule.existentials:
            numeric = atom_numeric_vars(head)
            for ex in rule.existentials:
                if ex in numeric:
                    witnesses.append(
                        f"{_rule_label(rule, idx)}: existential variable {ex} "
                        f"in a numeric position"
                    )
        if isinstance(head, ExactAtom):
            witnesses.append(
                f"{_rule_label(rule, idx)}: exact numeric predicate {head.pred} "
                f"in a rule head (exact predicates are EDB-only)"
            )
    check = CheckResult("warded-bound", warded.passed() and not witnesses,
                        warded.check("warded").witnesses + witnesses)
    report = AnalysisReport([check])
    report.variable_classes = warded.variable_classes
    return report


def _bound_atoms_containing(rule: Rule, var: str):
    for atom in rule.body:
        if isinstance(atom, BoundAtom) and var in atom.expr.variables():
            yield atom


def _exact_atoms_containing(rule: Rule, var: str):
    for atom in rule.body:
        if isinstance(atom, ExactAtom) and var in atom.value.variables():
            yield atom


def check_type_consistency(program: Program) -> AnalysisReport:
    """Per-rule coefficient-sign and min/max placement conditions.

    A variable pinned by an exact numeric body atom is exempt: its value is
    a ground EDB integer and cannot drive divergence.  A variable needs at
    least one body bound atom of the required type; occurrences in atoms of
    the other type are permitted alongside it.
    """
    witnesses = []
    for idx, rule in enumerate(program.rules):
        label = _rule_label(rule, idx)
        head = rule.head
        if isinstance(head, BoundAtom):
            for var, coeff in head.expr.terms:
                if any(True for _ in _exact_atoms_containing(rule, var)):
                    continue
                wanted = head.op if coeff > 0 else _flip(head.op)
                matches = [
                    a for a in _bound_atoms_containing(rule, var) if a.op == wanted
                ]
                if not matches:
                    witnesses.append(
                        f"{label}: head variable {var} (coefficient {coeff}) has no "
                        f"{wanted} bound atom in the body"
                    )
        for atom in rule.body:
            if not isinstance(atom, Comparison):
                continue
            for side, expr in (("left", atom.lhs), ("right", atom.rhs)):
                for var, coeff in expr.terms:
                    if any(True for _ in _exact_atoms_containing(rule, var)):
                        continue
                    if side == "left":
                        wanted = BoundOp.MIN if coeff > 0 else BoundOp.MAX
                    else:
                        wanted = BoundOp.MAX if coeff > 0 else BoundOp.MIN
                    matches = [
                        a for a in _bound_atoms_containing(rule, var) if a.op == wanted
                    ]
                    if not matches:
                        witnesses.append(
                            f"{label}: comparison variable {var} on the {side} side "
                            f"(coefficient {coeff}) needs a {wanted} bound atom"
                        )
    return AnalysisReport([CheckResult("type-consistency", not witnesses, witnesses)])


def _flip(op: BoundOp) -> BoundOp:
    return BoundOp.MAX if op is BoundOp.MIN else BoundOp.MIN


def analyze(program: Program) -> AnalysisReport:
    """All checks staged together; failures in one never suppress another."""
    warded_bound = check_warded_bound(program)
    warded = check_warded(program)
    type_cons = check_type_consistency(program)
    report = AnalysisReport(
        [warded.check("warded"), warded_bound.check("warded-bound"),
         type_cons.check("type-consistency")]
    )
    report.variable_classes = warded.variable_classes
    return report
