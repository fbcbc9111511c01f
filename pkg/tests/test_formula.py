import pytest

from lfpbench.formula import (
    FALSE,
    And,
    Atom,
    Eq,
    Exists,
    Forall,
    FormulaError,
    Lfp,
    Not,
    Or,
    PartitionedFormula,
    Polarity,
    alpha_normal,
    children,
    desugar_implications,
    free_variables,
    fresh_name,
    polarity,
    standardize_apart,
    substitute_relation,
)
from lfpbench.parser import ParseError, Signature, parse_definitions, parse_formula
from lfpbench.render import render
from lfpbench.structures import linear_order, paley, successor
from lfpbench.evaluator import defined_set

from corpus import LFP_TEXTS

REACH = "[lfp T(x). (A y. !S(y,x)) | E y. (S(y,x) & T(y))](u)"


def test_parse_quantifiers_and_connectives():
    f = parse_formula("E x. A y. (x = y | R(x,y))", {"R": 2})
    assert f == Exists("x", Forall("y", Or(Eq("x", "y"), Atom("R", ("x", "y")))))


def test_parse_reach_is_positive_lfp():
    f = parse_formula(REACH, {"S": 2})
    assert isinstance(f, Lfp)
    assert f.rel == "T" and f.vars == ("x",) and f.args == ("u",)
    assert polarity(f.body, "T") is Polarity.POSITIVE


def test_negative_lfp_rejected_with_position():
    with pytest.raises(ParseError) as err:
        parse_formula("[lfp T(x). !T(x)](u)")
    assert "negatively" in str(err.value)
    assert err.value.pos == 0


def test_mixed_lfp_rejected():
    with pytest.raises(ParseError, match="both positively and negatively"):
        parse_formula("[lfp T(x). T(x) & !T(x)](u)")


@pytest.mark.parametrize(
    "text, message",
    [
        ("E x. (S(x,", "expected a variable"),
        ("S(x)", "arity 2"),
        ("Q(x,y)", "undeclared"),
        ("x = y y", "unexpected"),
        ("[lfp T(x,y). T(x,y)](u)", "binds 2 variables"),
        ("[lfp t(x). x = x](u)", "uppercase"),
    ],
)
def test_parse_errors(text, message):
    with pytest.raises(ParseError, match=message):
        parse_formula(text, {"S": 2})


def test_parse_error_reports_line_and_column():
    with pytest.raises(ParseError) as err:
        parse_formula("E x.\n  S(x,)", {"S": 2})
    assert err.value.line == 2
    assert err.value.column == 7


def test_implication_is_right_associative_and_weakest():
    f = parse_formula("P(x) & Q(x) -> P(x) | Q(x) -> Q(x)", {"P": 1, "Q": 1})
    assert render(f) == "P(x) & Q(x) -> P(x) | Q(x) -> Q(x)"
    assert f.right.left == Or(Atom("P", ("x",)), Atom("Q", ("x",)))


@pytest.mark.parametrize(
    "text, expected",
    [("S(x,y) & T(y)", Polarity.POSITIVE), ("T(x) -> S(x,x)", Polarity.NEGATIVE), ("T(x) & !T(x)", Polarity.MIXED), ("S(x,x)", Polarity.ABSENT)],
)
def test_polarity(text, expected):
    f = parse_formula(text, {"S": 2}, free_relvars=True)
    assert polarity(f, "T") is expected
    # the implication antecedent counts as one flip, exactly as in the desugared formula
    assert polarity(desugar_implications(f), "T") is expected


def test_polarity_of_inner_lfp_variable_is_invisible_outside():
    f = parse_formula("[lfp T(x). T(x) | S(x,x)](u) & !T(u)", {"S": 2}, free_relvars=True)
    assert polarity(f, "T") is Polarity.NEGATIVE


def test_substitute_false():
    f = parse_formula("S(y,x) & T(y)", {"S": 2}, free_relvars=True)
    assert render(substitute_relation(f, "T", FALSE, ("w",))) == "S(y,x) & false"


def test_substitute_equality():
    f = parse_formula("E y. (S(y,x) & T(y))", {"S": 2}, free_relvars=True)
    g = parse_formula("w = w")
    assert render(substitute_relation(f, "T", g, ("w",))) == "E y. S(y,x) & y = y"


def test_substitute_avoids_capture():
    g = parse_formula("E z. S(z,w)", {"S": 2})
    f = parse_formula("T(z)", {"S": 2}, free_relvars=True)
    out = substitute_relation(f, "T", g, ("w",))
    # the bound z must not capture the argument z
    assert free_variables(out) == ["z"]
    assert isinstance(out, Exists) and out.var != "z"
    m = successor(3)
    assert defined_set(out, m, ["z"]) == {(1,), (2,)}


def test_substitute_arity_mismatch():
    f = parse_formula("T(x)", free_relvars=True)
    with pytest.raises(FormulaError):
        substitute_relation(f, "T", parse_formula("x = y"), ("x", "y"))


@pytest.mark.parametrize(
    "text, expected",
    [("E x. R(x,y)", ["y"]), ("x = y & R(y,z)", ["x", "y", "z"]), ("[lfp T(x). T(x) | R(x,x)](u)", ["u"])],
)
def test_free_variables(text, expected):
    assert free_variables(parse_formula(text, {"R": 2})) == expected


def test_free_variables_include_lfp_parameters():
    f = parse_formula("[lfp T(x). R(x,p) | T(x)](u)", {"R": 2})
    # first occurrence in the text: the parameter p comes before the argument u
    assert free_variables(f) == ["p", "u"]


def test_render_simple():
    assert render(Exists("x", Atom("R", ("x",)))) == "E x. R(x)"


def _nested(depth: int) -> str:
    inner = "S(x,x)"
    for d in range(depth):
        rel = f"T{d}"
        inner = f"[lfp {rel}(x). {inner} | E y. (S(y,x) & {rel}(y))](x)"
    return inner


@pytest.mark.parametrize("text", [REACH, _nested(3), "!(A x. E y. x = y -> !S(x,y)) | true & false"] + [t for _, t in LFP_TEXTS.values()])
def test_round_trip(text):
    sig = {"S": 2, "<": 2, "E": 2}
    f = parse_formula(text, sig)
    assert parse_formula(render(f), sig) == f


def test_round_trip_nested_three_deep_has_three_lfps():
    f = parse_formula(_nested(3), {"S": 2})
    depth = 0
    while isinstance(f, Lfp):
        depth += 1
        f = f.body.left
    assert depth == 3


def test_alpha_normal_identifies_renamed_binders():
    a = parse_formula("E y. S(x,y) & [lfp T(z). S(z,z) | T(z)](x)", {"S": 2})
    b = parse_formula("E w. S(x,w) & [lfp U(v). S(v,v) | U(v)](x)", {"S": 2})
    assert a != b
    assert alpha_normal(a) == alpha_normal(b)
    assert free_variables(alpha_normal(a)) == ["x"]


def test_fresh_name():
    assert fresh_name("y", {"y", "y1"}) == "y2"
    assert fresh_name("x", set()) == "x1"


def test_partitioned_formula_default_and_transpose():
    f = parse_formula("x < y & y < z", {"<": 2})
    phi = PartitionedFormula.default(f)
    assert phi.x == ("x",) and phi.y == ("y", "z")
    t = phi.transpose()
    assert t.x == ("y", "z") and t.y == ("x",)
    inst = phi.instance(("a",), ("b", "c"))
    assert render(inst) == "a < b & b < c"


def test_partitioned_formula_rejects_overlap_and_missing():
    f = parse_formula("x < y", {"<": 2})
    with pytest.raises(FormulaError):
        PartitionedFormula(f, ("x",), ("x",))
    with pytest.raises(FormulaError):
        PartitionedFormula(f, ("x",), ())


def test_signature_rejects_bad_arity():
    with pytest.raises(FormulaError):
        Signature({"R": 0})


def test_definitions_and_main():
    text = "# header\ndef lt2(a,b) := E c. a < c & c < b\n\nlt2(x,y) & !(x = y)\n"
    macros, main = parse_definitions(text, {"<": 2})
    assert set(macros) == {"lt2"}
    f = parse_formula(main, {"<": 2}, macros)
    assert render(f) == "(E c. x < c & c < y) & !(x = y)"


def test_macro_with_unlisted_free_variable_rejected():
    with pytest.raises(ParseError, match="free variables"):
        parse_definitions("def bad(a) := a < b\n", {"<": 2})


def test_formulas_are_hashable_values():
    a = parse_formula(REACH, {"S": 2})
    b = parse_formula(REACH, {"S": 2})
    assert a == b and hash(a) == hash(b)
    assert And(a, Not(b)) != And(b, a)


def _binders_shadow(f, bound=frozenset()):
    if isinstance(f, (Exists, Forall)):
        return f.var in bound or _binders_shadow(f.body, bound | {f.var})
    if isinstance(f, Lfp):
        return bool(bound & set(f.vars)) or _binders_shadow(f.body, bound | set(f.vars))
    return any(_binders_shadow(c, bound) for c in children(f))


def test_standardize_apart_names_by_subtree():
    S = {"S": 2}
    f = parse_formula("(E y. S(x,y) & E x. S(y,x)) | E z. S(x,z) & E x. S(z,x)", S)
    g = standardize_apart(f)
    assert free_variables(g) == ["x"]
    # the two disjuncts are alpha-equivalent, so they become equal
    assert g.left == g.right
    assert not _binders_shadow(g)
    assert all("#" in v for v in [g.left.var, g.left.body.right.var])


def test_standardize_apart_preserves_meaning():
    for rel, text in LFP_TEXTS.values():
        m = {"S": successor(5), "E": paley(5)}.get(rel) or linear_order(5)
        f = parse_formula(text, m.arities)
        g = standardize_apart(f)
        fv = free_variables(f)
        assert free_variables(g) == fv
        assert not _binders_shadow(g)
        assert defined_set(g, m, fv) == defined_set(f, m, fv)
