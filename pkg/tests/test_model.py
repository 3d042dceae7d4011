import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from consym.errors import DimensionError, ModelError, ResourceLimitError
from consym.model import (Clause, Context, Evidence, Model, all_states, build_model, dump_model,
                          exact_distribution, log_weight, log_weights_all, marginals_from_table,
                          parse_assignment, parse_model, reduce, reduction_constant, restrict)

from conftest import models


def test_reduce_drops_falsified_literal():
    m = build_model(["P", "Q", "R", "S"], [(1.25, ["P", "Q"]), (0.5, ["R", "Q", "S"])])
    red = reduce(m, Context.from_names(m, {"R": 0}))
    assert red.names == ("P", "Q", "S")
    got = {(c.weight, tuple(red.names[v] + ("" if s else "'") for v, s in c.literals))
           for c in red.clauses}
    assert got == {(1.25, ("P", "Q")), (0.5, ("Q", "S"))}
    assert red.origin == (0, 1, 3)


def test_reduce_removes_satisfied_clause():
    m = build_model(["P", "Q"], [(2.0, ["P", "Q"]), (1.0, ["!P"])])
    red = reduce(m, Context.from_names(m, {"P": 1}))
    assert red.names == ("Q",)
    assert red.clauses == ()
    assert reduction_constant(m, Context.from_names(m, {"P": 1})) == 2.0


def test_reduce_composes_origin():
    m = build_model(["A", "B", "C", "D"], [(1.0, ["A", "D"])])
    once = reduce(m, Context(((1, 0),)))
    twice = reduce(once, Context(((0, 1),)))
    assert twice.names == ("C", "D")
    assert twice.origin == (2, 3)


@settings(max_examples=60, deadline=None)
@given(models(min_n=2, max_n=7), st.data())
def test_reduction_preserves_weights_up_to_constant(model, data):
    k = data.draw(st.integers(1, model.n))
    vs = data.draw(st.lists(st.integers(0, model.n - 1), min_size=1, max_size=k, unique=True))
    ctx = Context(tuple((v, data.draw(st.integers(0, 1))) for v in vs))
    red = reduce(model, ctx)
    const = reduction_constant(model, ctx)
    for row in all_states(model.n):
        if all(row[v] == x for v, x in ctx.bindings):
            lhs = log_weight(model, row)
            rhs = log_weight(red, restrict(row, red)) + const
            assert math.isclose(lhs, rhs, abs_tol=1e-9)


def test_log_weight_sums_satisfied_clauses():
    m = build_model(["A", "B"], [(1.5, ["A"]), (2.0, ["!A", "B"]), (-0.5, ["!B"])])
    assert log_weight(m, [1, 0]) == 1.5 - 0.5
    assert log_weight(m, [1, 1]) == 3.5
    assert log_weight(m, [0, 0]) == 2.0 - 0.5


def test_single_clause_marginal_closed_form():
    m = build_model(["P"], [(math.log(3), ["P"])])
    probs = exact_distribution(m)
    assert np.allclose(marginals_from_table(probs, 1), [0.75])


def test_exact_distribution_with_evidence_is_conditional():
    m = build_model(["A", "B"], [(1.0, ["!A", "B"]), (0.3, ["A"])])
    p = exact_distribution(m, evidence=Evidence(((0, 1),)))
    assert p[0b00] == 0 and p[0b10] == 0
    assert math.isclose(p[0b11] / p[0b01], math.e)


def test_oracle_scale_guard():
    m = Model(tuple(f"v{i}" for i in range(21)))
    with pytest.raises(ResourceLimitError, match="oracle scale exceeded"):
        log_weights_all(m)


def test_empty_model_is_uniform():
    m = Model(("a", "b", "c"))
    assert np.allclose(marginals_from_table(exact_distribution(m), 3), 0.5)


@settings(max_examples=40, deadline=None)
@given(models())
def test_text_round_trip(model):
    assert parse_model(dump_model(model)) == model


@pytest.mark.parametrize("text, msg", [
    ("var A\n1.0 : B\n", "unknown variable"),
    ("var A\nabc : A\n", "bad weight"),
    ("var A\nnan : A\n", "non-finite"),
    ("var A\nvar A\n", "duplicate"),
    ("var A\n1.0 : A | A\n", "repeated"),
    ("var A\nhello\n", "cannot parse"),
])
def test_parse_errors(text, msg):
    with pytest.raises(ModelError, match=msg):
        parse_model(text)


def test_context_validation():
    with pytest.raises(ModelError):
        Context(((0, 1), (0, 0)))
    with pytest.raises(ModelError):
        Context(((0, 2),))
    with pytest.raises(ModelError):
        Context(((0, 1),)).union(Context(((0, 1),)))


def test_assignment_parsing():
    m = build_model(["A", "B"], [])
    assert parse_assignment("A=1\n# comment\nB = 0\n", m).bindings == ((0, 1), (1, 0))
    with pytest.raises(ModelError):
        parse_assignment("A=2\n", m)
    with pytest.raises(ModelError):
        parse_assignment("C=1\n", m)


def test_state_shape_checked():
    m = build_model(["A", "B"], [(1.0, ["A"])])
    with pytest.raises(DimensionError):
        log_weight(m, [1, 0, 1])


def test_clause_rejects_non_finite_weight():
    with pytest.raises(ModelError):
        Clause(((0, True),), float("inf"))
