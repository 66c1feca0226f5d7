import pytest
from hypothesis import given, settings, strategies as st

from loopinv.formulas import (
    And, Atom, LinExpr, Or, Rel, VarId, conj, disj, normalize_atom,
)
from loopinv.parser import (
    ParseError, RenderStyle, parse_formula, parse_task, print_task,
)
from loopinv.programs import Assign, Assume, If, Seq, Skip, make_task, seq

FIG1 = """
assume x >= 1;
y = 0;
while (y < 1000) {
    x = x + y;
    y = y + 1;
}
assert x >= y;
"""

PROBLEM7 = """
assume x <= 10;
assume y >= 0;
while (*) {
    x = x + 10;
    y = y + 10;
}
assume x == 20;
assert y != 0;
"""


def lx(**kw):
    const = kw.pop("const", 0)
    return LinExpr.make({VarId(n): c for n, c in kw.items()}, const)


def test_parse_fig1():
    t = parse_task(FIG1)
    assert t.init == conj([normalize_atom(lx(x=1), ">=", LinExpr.of(1)),
                           normalize_atom(lx(y=1), "==", LinExpr.of(0))])
    assert t.guard == normalize_atom(lx(y=1), "<", LinExpr.of(1000))
    assert t.body == Seq((Assign(VarId("x"), lx(x=1, y=1)),
                          Assign(VarId("y"), lx(y=1, const=1))))
    assert t.post == normalize_atom(lx(x=1), ">=", lx(y=1))
    kinds = {v.name: v.kind for v in t.vars}
    assert kinds == {"x": "mutable", "y": "mutable"}


def test_parse_problem7_star_guard_and_trailing_assume():
    t = parse_task(PROBLEM7)
    assert t.guard is None
    # post folds `assume x == 20` as a negated disjunct: x != 20 || y != 0
    expected = disj([normalize_atom(lx(x=1), "!=", LinExpr.of(20)),
                     normalize_atom(lx(y=1), "!=", LinExpr.of(0))])
    assert t.post == expected


def test_parse_empty_body_rejected():
    with pytest.raises(ParseError, match="empty"):
        parse_task("while (x < 1) {} assert true;")


def test_parse_nested_loop_rejected():
    src = "while (x < 1) { while (x < 2) { x = x + 1; } } assert true;"
    with pytest.raises(ParseError, match="nested"):
        parse_task(src)


def test_parse_nonlinear_rejected():
    with pytest.raises(ParseError, match="nonlinear|expected"):
        parse_task("while (x < 1) { x = x * y; } assert true;")


def test_parse_syntax_error_has_location():
    with pytest.raises(ParseError, match=r"at \d+:\d+"):
        parse_formula("x >= ")


def test_parse_formula_conjunction():
    f = parse_formula("x >= y && x >= 1 && y >= 0")
    assert isinstance(f, And) and len(f.args) == 3


def test_parse_formula_three_n():
    f = parse_formula("3*n == x + y")
    assert isinstance(f, Atom) and f.rel is Rel.EQ
    # sign-normalized equality: 3n - x - y == 0 up to global sign
    coeffs = f.expr.coeff_map()
    vals = {v.name: c for v, c in coeffs.items()}
    assert vals in ({"n": 3, "x": -1, "y": -1}, {"n": -3, "x": 1, "y": 1})


def test_parse_if_else_and_star():
    src = """
    assume n >= 0;
    i = 0; x = 0; y = 0;
    while (i < n) {
        i = i + 1;
        if (*) {
            x = x + 1;
            y = y + 2;
        } else {
            x = x + 2;
            y = y + 1;
        }
    }
    assert 3*n == x + y;
    """
    t = parse_task(src)
    body = t.body
    assert isinstance(body, Seq)
    cond = body.stmts[1]
    assert isinstance(cond, If) and cond.cond is None and cond.els is not None
    kinds = {v.name: v.kind for v in t.vars}
    assert kinds["n"] == "parameter"


def test_prefix_assignment_chain_folds():
    t = parse_task("x = 3; y = x + 1; while (y < 9) { y = y + 1; } assert y >= x;")
    assert t.init == conj([normalize_atom(lx(x=1), "==", LinExpr.of(3)),
                           normalize_atom(lx(y=1), "==", LinExpr.of(4))])


def test_prefix_overwrite_rejected():
    with pytest.raises(ParseError, match="overwritten"):
        parse_task("x = y; y = 0; while (y < 9) { y = y + 1; } assert x >= 0;")


def test_invariant_annotation_stored():
    src = """
    assume y == x;
    while (x < 1) {
        invariant y == x;
        y = y + 1;
        x = x + 1;
    }
    assert y > 0;
    """
    t = parse_task(src)
    assert len(t.invariants) == 1
    assert t.invariants[0] == normalize_atom(lx(x=1), "==", lx(y=1))


def test_print_parse_fig1_roundtrip():
    t = parse_task(FIG1)
    assert parse_task(print_task(t)) == t


def test_print_styles_preserve_semantics():
    t = parse_task(PROBLEM7)
    style = RenderStyle(post_assume_split=1, init_as_instrs=True)
    text = print_task(t, style)
    assert "assume" in text
    assert parse_task(text) == t


def test_declared_but_unused_variable_roundtrips():
    t = parse_task("int z;\nx = 0; while (x < 5) { x = x + 1; } assert x >= 5;")
    names = {v.name for v in t.vars}
    assert names == {"x", "z"}
    assert parse_task(print_task(t)) == t


# ---------------------------------------------------------------------------
# Round-trip property over generated tasks

NAMES = ["x", "y", "z", "n"]


@st.composite
def gen_expr(draw):
    coeffs = {}
    for name in draw(st.sets(st.sampled_from(NAMES), max_size=2)):
        coeffs[VarId(name)] = draw(st.integers(-3, 3).filter(bool))
    return LinExpr.make(coeffs, draw(st.integers(-20, 20)))


@st.composite
def gen_atomish(draw):
    op = draw(st.sampled_from(["<", "<=", ">", ">=", "==", "!="]))
    f = normalize_atom(draw(gen_expr()), op, draw(gen_expr()))
    return f


@st.composite
def gen_formula(draw):
    atoms = draw(st.lists(gen_atomish(), min_size=1, max_size=3))
    mode = draw(st.integers(0, 2))
    if mode == 0:
        return conj(atoms)
    if mode == 1:
        return disj(atoms)
    return atoms[0]


@st.composite
def gen_stmt(draw, depth=1):
    kind = draw(st.integers(0, 3 if depth else 1))
    if kind in (0, 1):
        name = draw(st.sampled_from(NAMES[:3]))
        return Assign(VarId(name), draw(gen_expr()))
    if kind == 2:
        return Assume(draw(gen_formula()))
    cond = draw(st.one_of(st.none(), gen_formula()))
    then = seq([draw(gen_stmt(depth=0)) for _ in range(draw(st.integers(1, 2)))])
    els = None
    if draw(st.booleans()):
        els = seq([draw(gen_stmt(depth=0))])
    return If(cond, then, els)


@st.composite
def gen_task(draw):
    body = seq([draw(gen_stmt()) for _ in range(draw(st.integers(1, 3)))])
    if isinstance(body, Skip):
        body = Assign(VarId("x"), LinExpr.of(0))
    init = draw(gen_formula())
    guard = draw(st.one_of(st.none(), gen_formula()))
    post = draw(gen_formula())
    invs = draw(st.lists(gen_formula(), max_size=1))
    return make_task(init, guard, body, post, invariants=invs)


@settings(max_examples=120)
@given(gen_task())
def test_roundtrip_property(t):
    assert parse_task(print_task(t)) == t


@settings(max_examples=60)
@given(gen_task(), st.integers(0, 2**20))
def test_roundtrip_with_styles(t, seed):
    import random
    rng = random.Random(seed)
    styles = {}
    from loopinv.formulas import free_vars as _fv  # noqa: F401
    post_parts = t.post.args if isinstance(t.post, Or) else (t.post,)
    style = RenderStyle(
        post_assume_split=rng.randrange(len(post_parts)),
        init_as_instrs=rng.random() < 0.5,
        comparison_styles=styles,
    )
    assert parse_task(print_task(t, style)) == t
