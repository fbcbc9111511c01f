"""Randomized checks against the recursive reference model."""

from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from lfpbench.evaluator import defined_set, gamma, lfp_stages
from lfpbench.formula import alpha_normal, free_variables
from lfpbench.parser import parse_formula
from lfpbench.render import render

from oracles import NaiveModel
from strategies import SIG, close_free, formulas, structures

SETTINGS = settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@SETTINGS
@given(structures(), formulas(depth=4))
def test_evaluator_matches_reference(m, f):
    f = close_free(f, ["x", "y"])
    assert defined_set(f, m, ["x", "y"]) == NaiveModel(m).defined(f, ["x", "y"])


@SETTINGS
@given(formulas(depth=4))
def test_render_parse_round_trip(f):
    assert parse_formula(render(f), SIG) == f


@SETTINGS
@given(structures(), formulas(depth=3, relvars=("T",)), st.data())
def test_gamma_monotone_and_matches_reference(m, body, data):
    body = close_free(body, ["x"])
    universe = [(i,) for i in range(m.size)]
    small = data.draw(st.sets(st.sampled_from(universe)))
    big = small | data.draw(st.sets(st.sampled_from(universe)))
    g_small = gamma(body, "T", ("x",), m, small)
    g_big = gamma(body, "T", ("x",), m, big)
    assert g_small <= g_big
    assert g_small == NaiveModel(m).gamma(body, "T", ("x",), frozenset(small))


@SETTINGS
@given(structures(max_size=5), formulas(depth=3, relvars=("T",)))
def test_stage_strategies_agree(m, body):
    body = close_free(body, ["x"])
    a = lfp_stages(body, "T", ("x",), m, strategy="naive")
    b = lfp_stages(body, "T", ("x",), m, strategy="semi-naive")
    ref = NaiveModel(m).stages(body, "T", ("x",))
    assert a.stages == b.stages
    assert [b.stage_set(k) for k in range(len(ref))] == ref


@SETTINGS
@given(formulas(depth=4))
def test_alpha_normal_idempotent(f):
    assert alpha_normal(alpha_normal(f)) == alpha_normal(f)
    assert free_variables(alpha_normal(f)) == free_variables(f)
