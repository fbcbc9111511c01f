import itertools

import numpy as np
import pytest

from lfpbench.constructions import (
    PreorderFormula,
    containment_preorder,
    height_formula,
    interpret,
    longest_strict_chain,
    relativize,
    relativize_partitioned,
    sop_from_chain,
    stage_preorder_formula,
)
from lfpbench.dividing import verify_witness
from lfpbench.evaluator import EvaluationError, closure_ordinal, defined_set, evaluate, lfp_stages
from lfpbench.formula import FormulaError, PartitionedFormula
from lfpbench.library import partitioned, reach
from lfpbench.parser import parse_formula
from lfpbench.structures import disjoint_union, linear_order, pure_set, successor

from corpus import fo_for, lfp_for, structures

LT = {"<": 2}


def pf(text, sig=None, x=None, y=None):
    return partitioned(parse_formula(text, sig or {}), x, y)


def _is_preorder(rel):
    refl = bool(np.all(np.diag(rel)))
    # rel o rel contained in rel
    comp = (rel.astype(np.int64) @ rel.astype(np.int64)) > 0
    return refl and not np.any(comp & ~rel)


FO = [(m, name, phi) for m in structures(8) for name, phi in fo_for(m, max_y=1)]


@pytest.mark.parametrize("m, name, phi", FO, ids=[f"{m.name}-{n}" for m, n, _ in FO])
def test_containment_preorder_is_preorder(m, name, phi):
    lam = containment_preorder(phi)
    rel = lam.relation(m)
    assert _is_preorder(rel)
    # and it is inclusion of the defined sets
    ext = [frozenset(defined_set(phi.formula, m, list(phi.x), {phi.y[0]: b})) for b in range(m.size)]
    for b1, b2 in itertools.product(range(m.size), repeat=2):
        assert rel[b1, b2] == (ext[b1] <= ext[b2])


def test_containment_preorder_two_parameters():
    phi = pf("y < x & x < z", LT, ["x"], ["y", "z"])
    lam = containment_preorder(phi)
    assert lam.arity == 2 and _is_preorder(lam.relation(linear_order(5)))


@pytest.mark.parametrize("m", range(1, 9))
def test_height_of_order_containment(m):
    lam = containment_preorder(pf("x < y", LT))
    h = height_formula(lam)
    st = lfp_stages(h.body, h.rel, h.vars, linear_order(m))
    assert st.closure == m
    assert st.levels() == [[(i,)] for i in range(m)]


def test_height_avoids_relation_clash():
    lam = PreorderFormula(pf("T(x,y) | x = y", {"T": 2}))
    h = height_formula(lam)
    assert h.rel != "T"


def test_height_of_equality_is_one_stage():
    lam = containment_preorder(pf("x = y"))
    h = height_formula(lam)
    assert closure_ordinal(h.body, h.rel, h.vars, pure_set(5)) == 1


def test_longest_chain_and_sop():
    m = linear_order(6)
    lam = containment_preorder(pf("x < y", LT))
    chain = longest_strict_chain(lam, m)
    assert chain == [(i,) for i in range(6)]
    cert = sop_from_chain(lam, chain, m)
    assert cert.n == 6 and verify_witness(cert, lam.phi, m)


def test_longest_chain_in_antichain():
    lam = containment_preorder(pf("x = y"))
    assert longest_strict_chain(lam, pure_set(4)) == [(0,)]


LFPS = [(m, name, f) for m in structures(8) for name, f in lfp_for(m) if m.size <= 6]


@pytest.mark.parametrize("m, name, f", LFPS, ids=[f"{m.name}-{n}" for m, n, _ in LFPS])
def test_stage_preorder(m, name, f):
    lam = stage_preorder_formula(f.body, f.rel, f.vars)
    rel = lam.relation(m)
    assert _is_preorder(rel)
    assert np.all(rel | rel.T)
    st = lfp_stages(f.body, f.rel, f.vars, m)
    classes = len({tuple(row) for row in rel})
    assert classes == max(st.closure, 1)
    # within the fixed point it is exactly the stage comparison
    for b, c in itertools.product(sorted(st.fixpoint), repeat=2):
        i = np.ravel_multi_index(b, (m.size,) * len(b))
        j = np.ravel_multi_index(c, (m.size,) * len(c))
        assert rel[i, j] == (st.stages[b] <= st.stages[c])


ROUND_TRIP = [(m, name, f) for m in [successor(n) for n in range(1, 13)] + [linear_order(n) for n in range(1, 13)]
              for name, f in lfp_for(m) if name != "nothing"]


@pytest.mark.parametrize("m, name, f", ROUND_TRIP, ids=[f"{m.name}-{n}" for m, n, _ in ROUND_TRIP])
def test_height_of_stage_preorder_round_trip(m, name, f):
    lam = stage_preorder_formula(f.body, f.rel, f.vars)
    h = height_formula(lam)
    assert closure_ordinal(h.body, h.rel, h.vars, m) == closure_ordinal(f.body, f.rel, f.vars, m)


def test_empty_fixpoint_round_trip_is_one():
    # a preorder on a nonempty set has at least one class
    f = dict(lfp_for(successor(4)))["nothing"]
    h = height_formula(stage_preorder_formula(f.body, f.rel, f.vars))
    assert closure_ordinal(f.body, f.rel, f.vars, successor(4)) == 0
    assert closure_ordinal(h.body, h.rel, h.vars, successor(4)) == 1


def test_stage_preorder_rejects_bad_bodies():
    with pytest.raises(EvaluationError):
        stage_preorder_formula(parse_formula("!T(x)", free_relvars=True), "T", ("x",))
    with pytest.raises(FormulaError):
        stage_preorder_formula(parse_formula("x = p | T(x)", free_relvars=True), "T", ("x",))


def test_stage_preorder_binary():
    b = parse_formula("S(x,y) | E z. (S(x,z) & T(z,y))", {"S": 2}, free_relvars=True)
    lam = stage_preorder_formula(b, "T", ("x", "y"))
    assert lam.arity == 2
    m = successor(5)
    classes = len({tuple(row) for row in lam.relation(m)})
    assert classes == closure_ordinal(b, "T", ("x", "y"), m)


def _same_relation(f, g, m, vars_):
    return defined_set(f, m, vars_) == defined_set(g, m, vars_)


def test_interpret_identity_order():
    lam = containment_preorder(pf("x < y", LT))
    for text in ["x < y", "E z. x < z & z < y", "x = y", "A z. (z < x -> z < y | z = y)"]:
        phi = pf(text, LT)
        out = interpret(phi, lam)
        for m in [linear_order(4), linear_order(6)]:
            assert _same_relation(out.formula, phi.formula, m, ["x", "y"]), text


def test_interpret_lfp():
    lam = containment_preorder(pf("x < y", LT))
    f = parse_formula("[lfp T(x). A y. (y < x -> T(y))](u) & E v. v < u", LT)
    out = interpret(PartitionedFormula(f, ("u",), ()), lam)
    assert defined_set(out.formula, linear_order(5), ["u"]) == {(i,) for i in range(1, 5)}


def test_interpret_pairs_lexicographically():
    lex = PreorderFormula(pf("x1 < y1 | (x1 = y1 & (x2 < y2 | x2 = y2))", LT, ["x1", "x2"], ["y1", "y2"]), linear=True)
    out = interpret(pf("E z. x < z & z < y", LT), lex)
    assert out.x == ("x_1", "x_2") and out.y == ("y_1", "y_2")
    m = linear_order(3)
    got = defined_set(out.formula, m, list(out.x + out.y))
    # pairs as numbers in base 3: strictly between means at least two apart
    want = {a + b for a in itertools.product(range(3), repeat=2) for b in itertools.product(range(3), repeat=2)
            if 3 * b[0] + b[1] - (3 * a[0] + a[1]) >= 2}
    assert got == want


def test_interpret_rejects_other_relations():
    lam = containment_preorder(pf("x < y", LT))
    with pytest.raises(FormulaError, match="relation S"):
        interpret(pf("S(x,y)", {"S": 2}), lam)


def test_relativize_sentence():
    m = disjoint_union(successor(3), linear_order(3))
    s = parse_formula("E x. A y. (x = y | x < y)", LT)
    assert not evaluate(s, m)
    assert evaluate(relativize(s, "R"), m)
    # no order among the left elements
    assert evaluate(relativize(parse_formula("A x. A y. !x < y", LT), "L"), m)
    assert not evaluate(relativize(parse_formula("A x. A y. !x < y", LT), "R"), m)


def test_relativize_reach_into_left_part():
    r = reach()
    m = disjoint_union(successor(3), linear_order(4))
    got = defined_set(relativize(r, "L"), m, ["u"])
    assert got == defined_set(r, successor(3), ["u"])


def test_relativize_partitioned_keeps_partition():
    phi = pf("x < y", LT)
    out = relativize_partitioned(phi, "R")
    assert (out.x, out.y) == (phi.x, phi.y)
    m = disjoint_union(pure_set(2), linear_order(3))
    assert defined_set(out.formula, m, ["x", "y"]) == {(2, 3), (2, 4), (3, 4)}
