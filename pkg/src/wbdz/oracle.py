"""Independent reference semantics for differential testing.

``bounded_fixpoint`` evaluates existential-free programs by naive rounds
over a capped integer domain, with none of the engine's machinery (no
constraint solver, no propagation graph).  Variables matched by bound
atoms are grounded at the endpoints of their implied integer ranges,
which is exhaustive for type-consistent rules: the head payload is always
optimized at a matched endpoint there.  Comparison-only variables are
scanned over the whole [-B, B] range.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple, Union

from .errors import OracleError
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
    ObjectAtom,
    Program,
    Rule,
    Var,
)


@dataclass(frozen=True)
class BoundedConfig:
    value_cap: int = 200
    max_iterations: int = 200

    def __post_init__(self):
        if self.value_cap < 1:
            raise OracleError("value cap must be at least 1")


class CapHit:
    """Outcome marker: some derivation left the bounded domain."""

    def __repr__(self):
        return "CapHit"


CAP_HIT = CapHit()

UNKNOWN = "unknown"


def _match_object_args(pattern: tuple, args: tuple, binding: dict) -> Optional[dict]:
    out = dict(binding)
    for term, value in zip(pattern, args):
        if isinstance(term, Const):
            if term != value:
                return None
        elif isinstance(term, Var):
            if term.name in out:
                if out[term.name] != value:
                    return None
            else:
                out[term.name] = value
        else:  # Null patterns never occur in source rules
            if term != value:
                return None
    return out


def bounded_fixpoint(program: Program, cfg: BoundedConfig = BoundedConfig()):
    """Naive fixpoint of an existential-free program, or CAP_HIT."""
    for rule in program.rules:
        if rule.existentials:
            raise OracleError("bounded oracle does not handle existential rules")
    cap = cfg.value_cap
    for fact in program.facts:
        payload = fact.payload
        value = payload.value if isinstance(payload, BoundValue) else payload
        if isinstance(value, int) and abs(value) > cap:
            return CAP_HIT

    interp = Interpretation()
    for fact in program.facts:
        interp.insert(fact)

    for _ in range(cfg.max_iterations):
        changed = False
        for rule in program.rules:
            derived = list(_rule_consequences(rule, interp, cap))
            for fact in derived:
                if fact is CAP_HIT:
                    return CAP_HIT
                if interp.insert(fact):
                    changed = True
        if not changed:
            return interp
    return CAP_HIT


def _rule_consequences(rule: Rule, interp: Interpretation, cap: int):
    pred_atoms = [a for a in rule.body if not isinstance(a, Comparison)]
    comparisons = [a for a in rule.body if isinstance(a, Comparison)]

    def walk(index: int, binding: dict, lows: dict, highs: dict, pins: dict):
        if index == len(pred_atoms):
            yield from _ground_numerics(rule, binding, lows, highs, pins, comparisons, cap)
            return
        atom = pred_atoms[index]
        if isinstance(atom, ObjectAtom):
            for args in interp.objects.get(atom.pred, ()):
                nxt = _match_object_args(atom.args, args, binding)
                if nxt is not None:
                    yield from walk(index + 1, nxt, lows, highs, pins)
            return
        if isinstance(atom, ExactAtom):
            for args, values in interp.exacts.get(atom.pred, {}).items():
                nxt = _match_object_args(atom.args, args, binding)
                if nxt is None:
                    continue
                for value in values:
                    new_pins = _pin_expr(atom.value, value, pins)
                    if new_pins is not None:
                        yield from walk(index + 1, nxt, lows, highs, new_pins)
            return
        # bound atom: the stored value bounds the matched term on one side
        for args, value in interp.bounds.get(atom.pred, {}).items():
            nxt = _match_object_args(atom.args, args, binding)
            if nxt is None:
                continue
            terms = atom.expr.terms
            if not terms:
                ok = (
                    value is UNBOUNDED
                    or (atom.op is BoundOp.MIN and atom.expr.const >= value)
                    or (atom.op is BoundOp.MAX and atom.expr.const <= value)
                )
                if ok:
                    yield from walk(index + 1, nxt, lows, highs, pins)
                continue
            if len(terms) != 1 or terms[0][1] != 1:
                raise OracleError(
                    f"bounded oracle only grounds single-variable bound atoms, got {atom}"
                )
            var = terms[0][0]
            shift = atom.expr.const
            new_lows, new_highs = dict(lows), dict(highs)
            if value is not UNBOUNDED:
                # min(v): var + shift >= v; max(v): var + shift <= v
                if atom.op is BoundOp.MIN:
                    limit = value - shift
                    if var not in new_lows or limit > new_lows[var]:
                        new_lows[var] = limit
                else:
                    limit = value - shift
                    if var not in new_highs or limit < new_highs[var]:
                        new_highs[var] = limit
            yield from walk(index + 1, nxt, new_lows, new_highs, pins)

    yield from walk(0, {}, {}, {}, {})


def _pin_expr(expr, value: int, pins: dict) -> Optional[dict]:
    """Pin a single-variable exact term to a stored integer."""
    terms = expr.terms
    if not terms:
        return pins if expr.const == value else None
    if len(terms) != 1:
        raise OracleError("bounded oracle only grounds single-variable exact terms")
    var, coeff = terms[0]
    rest = value - expr.const
    if rest % coeff != 0:
        return None
    solved = rest // coeff
    if var in pins and pins[var] != solved:
        return None
    out = dict(pins)
    out[var] = solved
    return out


def _ground_numerics(rule: Rule, binding: dict, lows: dict, highs: dict,
                     pins: dict, comparisons: list, cap: int):
    """Derive the canonical head fact for one object match.

    Bound heads yield only the optimal value over the feasible groundings
    (the dominated weaker facts are implied); a cap hit is reported only
    when that optimum itself leaves the bounded domain.
    """
    head = rule.head
    numeric_vars = set()
    for atom in rule.body + (head,):
        if isinstance(atom, Comparison):
            numeric_vars |= atom.lhs.variables() | atom.rhs.variables()
        elif isinstance(atom, ExactAtom):
            numeric_vars |= atom.value.variables()
        elif isinstance(atom, BoundAtom):
            numeric_vars |= atom.expr.variables()

    comparison_vars = set()
    for cmp_atom in comparisons:
        comparison_vars |= cmp_atom.lhs.variables() | cmp_atom.rhs.variables()

    if isinstance(head, BoundAtom):
        head_expr, minimize = head.expr, head.op is BoundOp.MIN
    elif isinstance(head, ExactAtom):
        head_expr, minimize = head.value, True
    else:
        head_expr, minimize = None, True
    head_coeffs = head_expr.coeffs if head_expr is not None else {}

    fixed: dict = {}
    scan: List[Tuple[str, range]] = []
    for var in sorted(numeric_vars):
        if var in pins:
            fixed[var] = pins[var]
            continue
        lo, hi = lows.get(var), highs.get(var)
        if lo is not None and hi is not None and lo > hi:
            return
        if var in comparison_vars:
            # scan the whole implied range so coupled comparisons stay exact
            lo = -cap if lo is None else max(lo, -cap)
            hi = cap if hi is None else min(hi, cap)
            if lo > hi:
                return
            scan.append((var, range(lo, hi + 1)))
            continue
        coeff = head_coeffs.get(var, 0)
        improving_low = (coeff > 0) == minimize
        if coeff == 0:
            value = lo if lo is not None else (hi if hi is not None else 0)
        elif improving_low:
            if lo is None:
                yield CAP_HIT  # optimum escapes in the improving direction
                return
            value = lo
        else:
            if hi is None:
                yield CAP_HIT
                return
            value = hi
        fixed[var] = value

    names = [v for v, _ in scan]
    best = None
    found = False
    for point in itertools.product(*(r for _, r in scan)):
        assignment = dict(fixed)
        assignment.update(zip(names, point))
        ok = True
        for cmp_atom in comparisons:
            lhs = cmp_atom.lhs.evaluate(assignment)
            rhs = cmp_atom.rhs.evaluate(assignment)
            if cmp_atom.rel == "<" and not lhs < rhs:
                ok = False
                break
            if cmp_atom.rel == "<=" and not lhs <= rhs:
                ok = False
                break
        if not ok:
            continue
        found = True
        if head_expr is None:
            break
        value = head_expr.evaluate(assignment)
        if best is None or (value < best if minimize else value > best):
            best = value

    if not found:
        return
    args = tuple(binding[t.name] if isinstance(t, Var) else t
                 for t in head.args)
    if head_expr is None:
        yield Fact(head.pred, args, None)
        return
    if abs(best) > cap:
        yield CAP_HIT
        return
    if isinstance(head, BoundAtom):
        yield Fact(head.pred, args, BoundValue(head.op, best))
    else:
        yield Fact(head.pred, args, best)


def entails_bounded(program: Program, fact: Fact,
                    cfg: BoundedConfig = BoundedConfig()) -> Union[bool, str]:
    """True/False via the bounded fixpoint, or 'unknown' on a cap hit."""
    result = bounded_fixpoint(program, cfg)
    if result is CAP_HIT:
        return UNKNOWN
    return result.satisfies(fact)


# ---------------------------------------------------------------------------
# Weighted-graph reference


def shortest_paths_reference(edges: Iterable[Tuple[str, str, int]], source: str) -> Dict[str, int]:
    """Single-source shortest distances; unreachable vertices are absent.
    Parallel edges keep their smallest weight."""
    adjacency: Dict[str, Dict[str, int]] = {}
    vertices = {source}
    for u, v, w in edges:
        if w < 0:
            raise OracleError(f"negative weight on edge {u} -> {v}")
        vertices.add(u)
        vertices.add(v)
        slot = adjacency.setdefault(u, {})
        if v not in slot or w < slot[v]:
            slot[v] = w
    dist = {source: 0}
    heap = [(0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist.get(u, float("inf")):
            continue
        for v, w in adjacency.get(u, {}).items():
            nd = d + w
            if nd < dist.get(v, float("inf")):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist
