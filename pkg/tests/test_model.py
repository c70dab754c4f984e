"""Tests for the core data model: dominance, canonical store, substitution."""

import itertools
import random

import pytest
from hypothesis import given, strategies as st

from wbdz.errors import ContractViolation, QueryError, SchemaError, SubstitutionError
from wbdz.model import (
    UNBOUNDED,
    BoundOp,
    BoundValue,
    BoundAtom,
    Comparison,
    Const,
    ExactAtom,
    Fact,
    Interpretation,
    LinearExpr,
    Null,
    ObjectAtom,
    Var,
    apply_substitution,
    atom_to_fact,
    dominates,
    insert_fact,
    satisfies,
)


def mk(pred, names, payload=None):
    return Fact(pred, tuple(Const(n) for n in names), payload)


def minf(pred, names, value):
    return mk(pred, names, BoundValue(BoundOp.MIN, value))


def maxf(pred, names, value):
    return mk(pred, names, BoundValue(BoundOp.MAX, value))


class TestDominates:
    def test_min_smaller_dominates(self):
        # A(t, min(3)) implies A(t, min(k)) for k >= 3
        assert dominates(minf("a", ["t"], 3), minf("a", ["t"], 5))
        assert not dominates(minf("a", ["t"], 5), minf("a", ["t"], 3))

    def test_reflexive(self):
        assert dominates(maxf("a", ["t"], 5), maxf("a", ["t"], 5))

    def test_unbounded_dominates_everything(self):
        assert dominates(maxf("a", ["t"], UNBOUNDED), maxf("a", ["t"], 10**9))
        assert dominates(minf("a", ["t"], UNBOUNDED), minf("a", ["t"], -(10**9)))
        assert not dominates(maxf("a", ["t"], 10**9), maxf("a", ["t"], UNBOUNDED))

    def test_mismatch_rejected(self):
        with pytest.raises(ContractViolation):
            dominates(minf("a", ["t"], 3), minf("b", ["t"], 3))
        with pytest.raises(ContractViolation):
            dominates(minf("a", ["t"], 3), maxf("a", ["t"], 3))
        with pytest.raises(ContractViolation):
            dominates(mk("a", ["t"]), mk("a", ["t"]))

    @given(
        op=st.sampled_from([BoundOp.MIN, BoundOp.MAX]),
        values=st.lists(st.integers(-100, 100) | st.just(UNBOUNDED), min_size=3, max_size=3),
    )
    def test_partial_order(self, op, values):
        def f(v):
            return Fact("p", (Const("t"),), BoundValue(op, v))

        a, b, c = (f(v) for v in values)
        assert dominates(a, a)
        if dominates(a, b) and dominates(b, a):
            assert a.payload.value == b.payload.value
        if dominates(a, b) and dominates(b, c):
            assert dominates(a, c)


class TestInsert:
    def test_dominated_insert_is_noop(self):
        interp = Interpretation()
        interp.insert(maxf("a", ["t"], 5))
        _, changed = insert_fact(interp, maxf("a", ["t"], 3))
        assert not changed
        assert interp.stored_bound("a", (Const("t"),)) == 5

    def test_improving_insert_replaces(self):
        interp = Interpretation()
        interp.insert(minf("path", ["b"], 7))
        _, changed = insert_fact(interp, minf("path", ["b"], 4))
        assert changed
        assert interp.stored_bound("path", (Const("b"),)) == 4

    def test_insert_into_empty(self):
        interp = Interpretation()
        _, changed = insert_fact(interp, mk("edge", ["a", "b"], 5))
        assert changed

    def test_exact_for_bound_pred_is_schema_error(self):
        interp = Interpretation()
        interp.insert(maxf("a", ["t"], 5))
        with pytest.raises(SchemaError):
            interp.insert(mk("a", ["t"], 3))

    def test_mixed_ops_rejected(self):
        interp = Interpretation()
        interp.insert(maxf("a", ["t"], 5))
        with pytest.raises(SchemaError):
            interp.insert(minf("a", ["s"], 5))

    @given(
        st.lists(
            st.tuples(
                st.sampled_from(["p", "q"]),
                st.sampled_from(["s", "t"]),
                st.integers(-20, 20) | st.just(UNBOUNDED),
            ),
            max_size=12,
        ),
        st.randoms(),
    )
    def test_order_independent_and_idempotent(self, entries, rng):
        facts = [minf(p, [t], v) for p, t, v in entries]
        base = Interpretation()
        for f in facts:
            base.insert(f)
        shuffled = list(facts)
        rng.shuffle(shuffled)
        other = Interpretation()
        for f in shuffled + shuffled:  # idempotence: double insertion
            other.insert(f)
        assert sorted(base.canonical_lines()) == sorted(other.canonical_lines())


class TestSatisfies:
    def test_bound_dominance(self):
        interp = Interpretation()
        interp.insert(minf("path", ["b"], 4))
        assert satisfies(interp, minf("path", ["b"], 7))
        assert not satisfies(interp, minf("path", ["b"], 3))

    def test_empty_interpretation(self):
        assert not satisfies(Interpretation(), maxf("a", ["t"], 0))

    def test_ground_comparison(self):
        interp = Interpretation()
        assert satisfies(interp, Comparison(LinearExpr(3), "<=", LinearExpr(5)))
        assert not satisfies(interp, Comparison(LinearExpr(5), "<", LinearExpr(5)))

    def test_null_query_rejected(self):
        interp = Interpretation()
        interp.insert(Fact("family", (Null(1), Const("p")), None))
        with pytest.raises(QueryError):
            satisfies(interp, Fact("family", (Null(1), Const("p")), None))

    def test_exact_membership(self):
        interp = Interpretation()
        interp.insert(mk("edge", ["a", "b"], 5))
        assert satisfies(interp, mk("edge", ["a", "b"], 5))
        assert not satisfies(interp, mk("edge", ["a", "b"], 6))

    @given(
        stored=st.integers(-50, 50),
        better=st.integers(0, 30),
        queried=st.integers(-80, 80),
    )
    def test_monotone_under_dominance(self, stored, better, queried):
        weak = Interpretation()
        weak.insert(maxf("a", ["t"], stored))
        strong = Interpretation()
        strong.insert(maxf("a", ["t"], stored + better))
        q = maxf("a", ["t"], queried)
        if satisfies(weak, q):
            assert satisfies(strong, q)


class TestSubstitution:
    def test_numeric_evaluation(self):
        atom = BoundAtom(
            "path",
            (Var("W"),),
            BoundOp.MIN,
            LinearExpr(0, {"X": 1, "Y": 1}),
        )
        out = apply_substitution(atom, {"W": Const("b"), "X": 2, "Y": 3})
        assert out == BoundAtom("path", (Const("b"),), BoundOp.MIN, LinearExpr(5))
        assert atom_to_fact(out) == minf("path", ["b"], 5)

    def test_identity_on_ground(self):
        atom = ExactAtom("p", (Const("a"),), LinearExpr(3))
        assert apply_substitution(atom, {}) == atom

    def test_null_propagation(self):
        atom = ObjectAtom("family", (Var("F"), Var("P")))
        out = apply_substitution(atom, {"F": Null(1), "P": Const("alice")})
        assert out == ObjectAtom("family", (Null(1), Const("alice")))

    def test_sort_mismatch(self):
        with pytest.raises(SubstitutionError):
            apply_substitution(ObjectAtom("p", (Var("X"),)), {"X": 3})
        with pytest.raises(SubstitutionError):
            apply_substitution(
                BoundAtom("p", (), BoundOp.MIN, LinearExpr.variable("X")),
                {"X": Const("a")},
            )


class TestLinearExpr:
    @given(
        const=st.integers(-50, 50),
        coeffs=st.dictionaries(st.sampled_from("XYZ"), st.integers(-5, 5), max_size=3),
        binding=st.dictionaries(st.sampled_from("XYZ"), st.integers(-10, 10), min_size=3),
    )
    def test_normalization_preserves_evaluation(self, const, coeffs, binding):
        expr = LinearExpr(const, coeffs)
        rebuilt = LinearExpr(expr.const, expr.coeffs)
        assert rebuilt == expr  # normalization is a projection
        expected = const + sum(k * binding[v] for v, k in coeffs.items())
        assert expr.evaluate(binding) == expected

    def test_add_and_scale(self):
        a = LinearExpr(1, {"X": 2})
        b = LinearExpr(-1, {"X": -2, "Y": 1})
        assert a.add(b) == LinearExpr(0, {"Y": 1})
        assert a.scale(0) == LinearExpr(0)

    def test_str_roundtrippable_forms(self):
        assert str(LinearExpr(0, {"X": 1, "Y": 1}).add(LinearExpr(1))) == "X + Y + 1"
        assert str(LinearExpr(-3)) == "-3"
        assert str(LinearExpr(0, {"X": -1})) == "-X"


class TestCanonicalDump:
    def test_null_renaming_is_deterministic(self):
        a = Interpretation()
        a.insert(Fact("family", (Null(7), Const("alice")), None))
        a.insert(Fact("family", (Null(3), Const("bob")), None))
        b = Interpretation()
        b.insert(Fact("family", (Null(12), Const("bob")), None))
        b.insert(Fact("family", (Null(40), Const("alice")), None))
        assert a.canonical_lines() == b.canonical_lines()
