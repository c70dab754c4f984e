"""Oracle tests: Dijkstra reference and the bounded brute-force fixpoint."""

import pytest

from wbdz.errors import OracleError
from wbdz.model import BoundOp, BoundValue, Const, Fact
from wbdz.oracle import (
    CAP_HIT,
    UNKNOWN,
    BoundedConfig,
    bounded_fixpoint,
    entails_bounded,
    shortest_paths_reference,
)
from wbdz.parser import parse_program


def minf(pred, names, value):
    return Fact(pred, tuple(Const(n) for n in names), BoundValue(BoundOp.MIN, value))


GRAPH = """
path(a, min(0)).
edge(a, b, min(3)).
edge(b, c, min(4)).
edge(a, c, min(10)).
path(V, min(X)), edge(V, W, min(Y)) -> path(W, min(X + Y)).
"""

DIVERGENT = """
a(max(0)).
a(max(X)) -> a(max(X + 1)).
"""


class TestShortestPathsReference:
    def test_hand_computed(self):
        dist = shortest_paths_reference([("a", "b", 3), ("b", "c", 4), ("a", "c", 10)], "a")
        assert dist == {"a": 0, "b": 3, "c": 7}

    def test_single_vertex(self):
        assert shortest_paths_reference([], "v") == {"v": 0}

    def test_disconnected_vertex_absent(self):
        dist = shortest_paths_reference([("a", "b", 1), ("c", "d", 1)], "a")
        assert "c" not in dist and "d" not in dist

    def test_negative_weight_rejected(self):
        with pytest.raises(OracleError):
            shortest_paths_reference([("a", "b", -1)], "a")

    def test_parallel_edges_keep_minimum(self):
        dist = shortest_paths_reference([("a", "b", 9), ("a", "b", 2)], "a")
        assert dist["b"] == 2


class TestBoundedFixpoint:
    def test_matches_dijkstra(self):
        program = parse_program(GRAPH)
        result = bounded_fixpoint(program, BoundedConfig(100))
        assert result is not CAP_HIT
        dist = shortest_paths_reference([("a", "b", 3), ("b", "c", 4), ("a", "c", 10)], "a")
        for vertex, d in dist.items():
            stored = result.stored_bound("path", (Const(vertex),))
            assert stored == d

    def test_facts_only(self):
        program = parse_program("p(a). edge(a, b, 5).")
        result = bounded_fixpoint(program)
        assert result.satisfies(Fact("p", (Const("a"),), None))
        assert result.satisfies(Fact("edge", (Const("a"), Const("b")), 5))

    def test_divergent_program_hits_cap(self):
        program = parse_program(DIVERGENT)
        assert bounded_fixpoint(program, BoundedConfig(50)) is CAP_HIT

    def test_existential_rule_rejected(self):
        program = parse_program("p(X) -> exists F q(F, X).")
        with pytest.raises(OracleError):
            bounded_fixpoint(program)

    def test_comparison_gate(self):
        text = """
        v(a, min(3)).
        cap(a, max(10)).
        v(T, min(X)), cap(T, max(Y)), X <= Y -> ok(T).
        """
        result = bounded_fixpoint(parse_program(text), BoundedConfig(50))
        assert result.satisfies(Fact("ok", (Const("a"),), None))
        text_blocked = text.replace("min(3)", "min(30)")
        result = bounded_fixpoint(parse_program(text_blocked), BoundedConfig(50))
        assert not result.satisfies(Fact("ok", (Const("a"),), None))

    def test_coupled_comparisons_interior_point(self):
        # feasible only at interior x = 5; endpoint grounding alone would miss it
        text = """
        lo(a, min(3)).
        hi(a, max(10)).
        lo(T, min(X)), hi(T, max(Y)), 5 <= X, X <= 9, X <= Y -> ok(T).
        """
        result = bounded_fixpoint(parse_program(text), BoundedConfig(50))
        assert result.satisfies(Fact("ok", (Const("a"),), None))


class TestEntailsBounded:
    def test_true_and_false(self):
        program = parse_program(GRAPH)
        assert entails_bounded(program, minf("path", ["c"], 8), BoundedConfig(100)) is True
        assert entails_bounded(program, minf("path", ["c"], 6), BoundedConfig(100)) is False

    def test_unknown_on_divergence(self):
        program = parse_program(DIVERGENT)
        fact = Fact("a", (), BoundValue(BoundOp.MAX, 10))
        assert entails_bounded(program, fact, BoundedConfig(50)) == UNKNOWN

    def test_false_on_empty_program(self):
        program = parse_program("")
        assert entails_bounded(program, Fact("p", (Const("a"),), None)) is False

    def test_monotone_in_cap(self):
        program = parse_program(GRAPH)
        fact = minf("path", ["c"], 7)
        answers = [entails_bounded(program, fact, BoundedConfig(cap)) for cap in (20, 100, 1000)]
        # once true, raising the cap never flips it to false
        for earlier, later in zip(answers, answers[1:]):
            if earlier is True:
                assert later is True
