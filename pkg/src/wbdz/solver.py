"""Exact feasibility and optimization for small integer linear systems.

Constraints are ``sum(c_i * x_i) <= c0`` with integer coefficients over a
handful of free integer variables; everything is computed exactly (no
floating point).  The primary method is a rational simplex (Fractions,
Bland's rule) with branch-and-bound on fractional coordinates.  Textbook
branch-and-bound can crawl forever on thin unbounded regions, so an exact
integer projection (Fourier-Motzkin with dark shadows and splinters)
backs it up as a guaranteed-terminating decision procedure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Tuple

from .errors import SolverError

MAXIMIZE = "maximize"
MINIMIZE = "minimize"

_NODE_BUDGET = 600
_OMEGA_DEPTH = 400


@dataclass(frozen=True)
class Optimal:
    value: int
    witness: Dict[str, int]


@dataclass(frozen=True)
class Unbounded:
    direction: str  # '+' or '-'


@dataclass(frozen=True)
class Infeasible:
    pass


SolveOutcome = object


class LinearConstraintSystem:
    """Ordered variables plus constraints ``coeffs . x <= bound``."""

    def __init__(self, variables: Iterable[str] = ()):
        self.variables: List[str] = list(variables)
        self._vars = set(self.variables)
        self.constraints: List[Tuple[Dict[str, int], int]] = []

    def declare(self, name: str):
        if name not in self._vars:
            self._vars.add(name)
            self.variables.append(name)

    def add_le(self, coeffs: Dict[str, int], bound: int):
        clean = {v: int(k) for v, k in coeffs.items() if int(k) != 0}
        for v in clean:
            self.declare(v)
        self.constraints.append((clean, int(bound)))

    def add_lt(self, coeffs: Dict[str, int], bound: int):
        # strict over integers: shift to <= bound - 1
        self.add_le(coeffs, bound - 1)

    def add_eq(self, coeffs: Dict[str, int], bound: int):
        self.add_le(coeffs, bound)
        self.add_le({v: -k for v, k in coeffs.items()}, -bound)

    def pin(self, name: str, value: int):
        self.add_eq({name: 1}, value)

    def dump(self) -> str:
        lines = []
        for coeffs, bound in self.constraints:
            if coeffs:
                body = " + ".join(f"{k}*{v}" for v, k in sorted(coeffs.items()))
            else:
                body = "0"
            lines.append(f"{body} <= {bound}")
        return "\n".join(lines)


def feasible(system: LinearConstraintSystem) -> bool:
    return isinstance(optimize(system, {}, MAXIMIZE), Optimal)


def optimize(system: LinearConstraintSystem, objective: Dict[str, int],
             direction: str, objective_const: int = 0) -> SolveOutcome:
    """Exact integer optimum of the objective over the system."""
    if direction not in (MAXIMIZE, MINIMIZE):
        raise SolverError(f"bad direction {direction!r}")
    obj = {v: int(k) for v, k in objective.items() if int(k) != 0}
    for v in obj:
        system.declare(v)
    sign = 1 if direction == MAXIMIZE else -1
    scaled = {v: sign * k for v, k in obj.items()}
    outcome = _ilp_maximize(system.variables, system.constraints, scaled)
    if isinstance(outcome, Optimal):
        return Optimal(sign * outcome.value + objective_const, outcome.witness)
    if isinstance(outcome, Unbounded):
        return Unbounded("+" if direction == MAXIMIZE else "-")
    return outcome


# ---------------------------------------------------------------------------
# Interval fast path: every constraint touches at most one variable.


def _interval_solve(variables, constraints, objective):
    lower: Dict[str, Optional[int]] = {v: None for v in variables}
    upper: Dict[str, Optional[int]] = {v: None for v in variables}
    for coeffs, bound in constraints:
        if not coeffs:
            if 0 > bound:
                return Infeasible()
            continue
        (var, k), = coeffs.items()
        if k > 0:
            limit = math.floor(Fraction(bound, k))
            if upper[var] is None or limit < upper[var]:
                upper[var] = limit
        else:
            limit = math.ceil(Fraction(bound, k))
            if lower[var] is None or limit > lower[var]:
                lower[var] = limit
    for v in variables:
        if lower[v] is not None and upper[v] is not None and lower[v] > upper[v]:
            return Infeasible()
    value = 0
    witness = {}
    for v in variables:
        k = objective.get(v, 0)
        if k > 0:
            if upper[v] is None:
                return Unbounded("+")
            witness[v] = upper[v]
        elif k < 0:
            if lower[v] is None:
                return Unbounded("+")
            witness[v] = lower[v]
        else:
            if lower[v] is not None:
                witness[v] = lower[v]
            elif upper[v] is not None:
                witness[v] = upper[v]
            else:
                witness[v] = 0
        value += k * witness[v]
    return Optimal(value, witness)


# ---------------------------------------------------------------------------
# Rational simplex over Ax <= b with free variables (split x = u - w).


class _Simplex:
    """Two-phase tableau simplex, maximizing, everything in Fractions."""

    def __init__(self, variables, constraints, objective):
        self.names = list(variables)
        n = 2 * len(self.names)
        self.n = n
        self.rows = []
        self.rhs = []
        for coeffs, bound in constraints:
            row = [Fraction(0)] * n
            for i, name in enumerate(self.names):
                k = coeffs.get(name, 0)
                if k:
                    row[2 * i] = Fraction(k)
                    row[2 * i + 1] = Fraction(-k)
            self.rows.append(row)
            self.rhs.append(Fraction(bound))
        self.obj = [Fraction(0)] * n
        for i, name in enumerate(self.names):
            k = objective.get(name, 0)
            if k:
                self.obj[2 * i] = Fraction(k)
                self.obj[2 * i + 1] = Fraction(-k)

    def solve(self):
        """Returns ('optimal', value, witness) | ('unbounded',) | ('infeasible',)."""
        m, n = len(self.rows), self.n
        total = n + m
        tableau = [self.rows[i] + [Fraction(1) if j == i else Fraction(0) for j in range(m)]
                   + [self.rhs[i]] for i in range(m)]
        basis = [n + i for i in range(m)]

        if any(self.rhs[i] < 0 for i in range(m)):
            for row in tableau:
                row.insert(total, Fraction(-1))
            aux = total
            cost = [Fraction(0)] * (total + 1)
            cost[aux] = Fraction(-1)
            pivot_row = min(range(m), key=lambda i: tableau[i][-1])
            self._pivot(tableau, basis, pivot_row, aux)
            self._run(tableau, basis, cost, total + 1)
            value = self._objective_value(tableau, basis, cost)
            if value != 0:
                return ("infeasible",)
            if aux in basis:
                row = basis.index(aux)
                for col in range(total):
                    if tableau[row][col] != 0:
                        self._pivot(tableau, basis, row, col)
                        break
                else:
                    del tableau[row]
                    del basis[row]
                    m -= 1
            for row in tableau:
                del row[aux]

        cost = [Fraction(0)] * (total + 1)
        for j in range(n):
            cost[j] = self.obj[j]
        status = self._run(tableau, basis, cost, total)
        if status == "unbounded":
            return ("unbounded",)
        value = self._objective_value(tableau, basis, cost)
        point = [Fraction(0)] * total
        for i, b in enumerate(basis):
            point[b] = tableau[i][-1]
        witness = {}
        for i, name in enumerate(self.names):
            witness[name] = point[2 * i] - point[2 * i + 1]
        return ("optimal", value, witness)

    def _run(self, tableau, basis, cost, width):
        reduced = [cost[j] for j in range(width)]
        for i, b in enumerate(basis):
            cb = cost[b]
            if cb:
                for j in range(width):
                    reduced[j] -= cb * tableau[i][j]
        in_basis = set(basis)
        while True:
            enter = -1
            for j in range(width):  # Bland's rule
                if j not in in_basis and reduced[j] > 0:
                    enter = j
                    break
            if enter < 0:
                return "optimal"
            leave = -1
            best = None
            for i in range(len(tableau)):
                a = tableau[i][enter]
                if a > 0:
                    ratio = tableau[i][-1] / a
                    if best is None or ratio < best or (ratio == best and basis[i] < basis[leave]):
                        best = ratio
                        leave = i
            if leave < 0:
                return "unbounded"
            factor = reduced[enter] / tableau[leave][enter]
            prow = tableau[leave]
            for j in range(width):
                reduced[j] -= factor * prow[j]
            reduced[enter] = Fraction(0)
            in_basis.discard(basis[leave])
            in_basis.add(enter)
            self._pivot(tableau, basis, leave, enter)

    @staticmethod
    def _pivot(tableau, basis, row, col):
        basis[row] = col
        pivot = tableau[row][col]
        if pivot != 1:
            tableau[row] = [x / pivot for x in tableau[row]]
        prow = tableau[row]
        for i, other in enumerate(tableau):
            if i != row and other[col] != 0:
                factor = other[col]
                tableau[i] = [x - factor * y for x, y in zip(other, prow)]

    def _objective_value(self, tableau, basis, cost):
        value = Fraction(0)
        for i, b in enumerate(basis):
            value += cost[b] * tableau[i][-1]
        return value


def _lp_maximize(variables, constraints, objective):
    if not variables:
        for coeffs, bound in constraints:
            if 0 > bound:
                return ("infeasible",)
        return ("optimal", Fraction(0), {})
    return _Simplex(variables, constraints, objective).solve()


# ---------------------------------------------------------------------------
# Exact integer projection (dark shadows + splinters) as decision procedure.
# Internal form: (coeffs, const) meaning coeffs . x + const >= 0 (geq) or = 0 (eq).


def _norm_geqs(geqs):
    out = []
    for coeffs, c in geqs:
        coeffs = {v: k for v, k in coeffs.items() if k}
        if not coeffs:
            if c < 0:
                return None
            continue
        g = math.gcd(*(abs(k) for k in coeffs.values()))
        if g > 1:
            coeffs = {v: k // g for v, k in coeffs.items()}
            c = math.floor(Fraction(c, g))
        out.append((coeffs, c))
    return out


def _symmetric_mod(a, m):
    r = a % m
    if 2 * r > m:
        r -= m
    return r


def _substitute(target, var, repl_coeffs, repl_const, factor_of_var):
    """Replace var by (repl_coeffs . x + repl_const), given var's coefficient
    in its defining equality is +/-1 encoded via factor_of_var."""
    coeffs, c = target
    k = coeffs.get(var)
    if not k:
        return target
    coeffs = dict(coeffs)
    del coeffs[var]
    for v, kk in repl_coeffs.items():
        coeffs[v] = coeffs.get(v, 0) + k * factor_of_var * kk
    return ({v: kk for v, kk in coeffs.items() if kk}, c + k * factor_of_var * repl_const)


def _integer_feasible(eqs, geqs, depth=0, fresh=[0]):
    """Decide integer feasibility of {eqs = 0, geqs >= 0} exactly."""
    if depth > _OMEGA_DEPTH:
        raise SolverError("integer projection recursion too deep")
    geqs = _norm_geqs(geqs)
    if geqs is None:
        return False
    # normalize and scan equalities
    pending = []
    for coeffs, c in eqs:
        coeffs = {v: k for v, k in coeffs.items() if k}
        if not coeffs:
            if c != 0:
                return False
            continue
        g = math.gcd(*(abs(k) for k in coeffs.values()))
        if c % g != 0:
            return False
        pending.append(({v: k // g for v, k in coeffs.items()}, c // g))

    if pending:
        coeffs, c = pending[0]
        rest = pending[1:]
        var = min(coeffs, key=lambda v: (abs(coeffs[v]), v))
        a = coeffs[var]
        if abs(a) == 1:
            # solve the equality for var and substitute it away
            sign = 1 if a == 1 else -1
            repl = {v: -sign * k for v, k in coeffs.items() if v != var}
            repl_c = -sign * c
            new_eqs = [_substitute(e, var, repl, repl_c, 1) for e in rest]
            new_geqs = [_substitute(g_, var, repl, repl_c, 1) for g_ in geqs]
            return _integer_feasible(new_eqs, new_geqs, depth + 1, fresh)
        # coefficient-shrinking step: express var through a fresh variable
        # using symmetric residues modulo |a| + 1, then substitute
        m = abs(a) + 1
        fresh[0] += 1
        sigma = f"_s{fresh[0]}"
        hat = {v: _symmetric_mod(k, m) for v, k in coeffs.items()}
        hat[sigma] = -m
        hat_c = _symmetric_mod(c, m)
        s = hat[var]  # equals -sign(a), a unit
        repl = {v: -s * k for v, k in hat.items() if v != var and k}
        repl_c = -s * hat_c
        new_eqs = [_substitute(e, var, repl, repl_c, 1) for e in [(coeffs, c)] + rest]
        new_geqs = [_substitute(g_, var, repl, repl_c, 1) for g_ in geqs]
        return _integer_feasible(new_eqs, new_geqs, depth + 1, fresh)

    variables = sorted({v for coeffs, _ in geqs for v in coeffs})
    if not variables:
        return True

    # pick the variable with the cheapest elimination
    def cost(v):
        ups = sum(1 for coeffs, _ in geqs if coeffs.get(v, 0) < 0)
        downs = sum(1 for coeffs, _ in geqs if coeffs.get(v, 0) > 0)
        exact = all(
            abs(coeffs.get(v, 0)) <= 1 for coeffs, _ in geqs
        )
        return (not exact, ups * downs, ups + downs, v)

    var = min(variables, key=cost)
    uppers, lowers, others = [], [], []
    for coeffs, c in geqs:
        k = coeffs.get(var, 0)
        if k < 0:
            uppers.append((-k, {v: kk for v, kk in coeffs.items() if v != var}, c))
        elif k > 0:
            lowers.append((k, {v: kk for v, kk in coeffs.items() if v != var}, c))
        else:
            others.append((coeffs, c))
    if not uppers or not lowers:
        return _integer_feasible([], others, depth + 1, fresh)

    real, dark, all_exact = [], [], True
    for b_coef, p_coeffs, p_c in lowers:
        for a_coef, q_coeffs, q_c in uppers:
            merged = dict()
            for v, k in p_coeffs.items():
                merged[v] = merged.get(v, 0) + a_coef * k
            for v, k in q_coeffs.items():
                merged[v] = merged.get(v, 0) + b_coef * k
            const = a_coef * p_c + b_coef * q_c
            real.append((dict(merged), const))
            slack = (a_coef - 1) * (b_coef - 1)
            dark.append((dict(merged), const - slack))
            if slack:
                all_exact = False

    if all_exact:
        return _integer_feasible([], others + real, depth + 1, fresh)
    if _integer_feasible([], others + dark, depth + 1, fresh):
        return True
    if not _integer_feasible([], others + real, depth + 1, fresh):
        return False
    # splinters: largest-coefficient lower bound against largest upper coefficient
    b_coef, p_coeffs, p_c = max(lowers, key=lambda t: t[0])
    a_max = max(a for a, _, _ in uppers)
    limit = (a_max * b_coef - a_max - b_coef) // a_max
    base = dict(p_coeffs)
    base[var] = b_coef
    for i in range(limit + 1):
        if _integer_feasible([(dict(base), p_c - i)], geqs, depth + 1, fresh):
            return True
    return False


def _geqs_of(constraints):
    # coeffs . x <= bound  ->  -coeffs . x + bound >= 0
    return [({v: -k for v, k in coeffs.items()}, bound) for coeffs, bound in constraints]


def _omega_feasible(constraints) -> bool:
    return _integer_feasible([], _geqs_of(constraints))


def _pin_witness(variables, constraints):
    """Recover one integer point of a system known to be feasible."""
    pinned = list(constraints)
    witness = {}
    for var in variables:
        radius = 1
        while not _omega_feasible(
            pinned + [({var: 1}, radius), ({var: -1}, radius)]
        ):
            radius *= 2
            if radius > 2 ** 300:
                raise SolverError("witness bracket search ran away")
        lo, hi = -radius, radius
        while lo < hi:
            mid = (lo + hi) // 2
            if _omega_feasible(pinned + [({var: 1}, mid), ({var: -1}, -lo)]):
                hi = mid
            else:
                lo = mid + 1
        witness[var] = lo
        pinned.append(({var: 1}, lo))
        pinned.append(({var: -1}, -lo))
    return witness


# ---------------------------------------------------------------------------
# Branch and bound with exact-projection fallback.


def _direction_gcd_prune(constraints) -> bool:
    """Detect an integer-free strip between opposing parallel constraints."""
    best: Dict[tuple, List[Optional[Fraction]]] = {}
    for coeffs, bound in constraints:
        if not coeffs:
            continue
        items = sorted(coeffs.items())
        g = math.gcd(*(abs(k) for _, k in items))
        lead = items[0][1]
        sign = 1 if lead > 0 else -1
        key = tuple((v, sign * k // g) for v, k in items)
        limit = Fraction(sign * bound, g)
        entry = best.setdefault(key, [None, None])
        if sign > 0:
            if entry[1] is None or limit < entry[1]:
                entry[1] = limit  # direction . x <= limit
        else:
            if entry[0] is None or limit > entry[0]:
                entry[0] = limit  # direction . x >= limit
    for lo, hi in best.values():
        if lo is not None and hi is not None and math.ceil(lo) > math.floor(hi):
            return True
    return False


def _round_candidates(variables, constraints, witness):
    """Try floor/ceil roundings of an LP point; return a feasible point or None."""
    frac_vars = [v for v in variables if witness[v].denominator != 1]
    if len(frac_vars) > 12:
        return None
    options = [[math.floor(witness[v]), math.ceil(witness[v])] for v in frac_vars]

    def ok(point):
        return all(
            sum(k * point.get(v, 0) for v, k in coeffs.items()) <= bound
            for coeffs, bound in constraints
        )

    base = {v: int(witness[v]) for v in variables if witness[v].denominator == 1}
    stack = [(0, dict(base))]
    while stack:
        idx, point = stack.pop()
        if idx == len(frac_vars):
            if ok(point):
                return point
            continue
        for choice in options[idx]:
            nxt = dict(point)
            nxt[frac_vars[idx]] = choice
            stack.append((idx + 1, nxt))
    return None


def _optimize_by_projection(variables, constraints, objective, upper: int):
    if not _omega_feasible(constraints):
        return Infeasible()
    start = _pin_witness(variables, constraints)
    lo = sum(objective.get(v, 0) * start.get(v, 0) for v in variables)
    hi = upper
    while lo < hi:
        mid = (lo + hi + 1) // 2
        probe = constraints + [({v: -k for v, k in objective.items()}, -mid)]
        if _omega_feasible(probe):
            lo = mid
        else:
            hi = mid - 1
    best_cons = constraints + [({v: -k for v, k in objective.items()}, -lo)]
    witness = _pin_witness(variables, best_cons)
    value = sum(objective.get(v, 0) * witness.get(v, 0) for v in variables)
    if value != lo:
        raise SolverError("projection optimum does not match its witness")
    return Optimal(lo, witness)


def _ilp_maximize(variables, constraints, objective):
    if all(len(coeffs) <= 1 for coeffs, _ in constraints):
        return _interval_solve(variables, constraints, objective)
    if _direction_gcd_prune(constraints):
        return Infeasible()
    lp = _lp_maximize(variables, constraints, objective)
    if lp[0] == "infeasible":
        return Infeasible()
    if lp[0] == "unbounded":
        if _omega_feasible(constraints):
            return Unbounded("+")
        return Infeasible()

    _, lp_value, lp_witness = lp
    best: Optional[Tuple[int, Dict[str, int]]] = None
    seed = _round_candidates(variables, constraints, lp_witness)
    if seed is not None:
        best = (sum(objective.get(v, 0) * seed[v] for v in variables), seed)

    stack = [tuple()]
    nodes = 0
    while stack:
        nodes += 1
        if nodes > _NODE_BUDGET:
            return _optimize_by_projection(
                variables, constraints, objective, math.floor(lp_value)
            )
        extra = stack.pop()
        node = _lp_maximize(variables, constraints + list(extra), objective)
        if node[0] == "infeasible":
            continue
        if node[0] == "unbounded":
            raise SolverError("branched relaxation cannot be unbounded")
        _, value, witness = node
        if best is not None and value <= best[0]:
            continue
        frac_var = None
        for v in variables:
            if witness[v].denominator != 1:
                frac_var = v
                break
        if frac_var is None:
            point = {v: int(witness[v]) for v in variables}
            score = sum(objective.get(v, 0) * point[v] for v in variables)
            if best is None or score > best[0]:
                best = (score, point)
            continue
        split = witness[frac_var]
        stack.append(extra + (({frac_var: 1}, math.floor(split)),))
        stack.append(extra + (({frac_var: -1}, -math.ceil(split)),))
    if best is None:
        return Infeasible()
    return Optimal(best[0], best[1])
