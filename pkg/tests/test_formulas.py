import itertools

import pytest
from hypothesis import given, settings, strategies as st

from loopinv.formulas import (
    FALSE, TRUE, And, Atom, CnfBudgetExceeded, FalseF, Implies, LinExpr,
    MetaVar, Not, Or, Rel, TrueF, VarId, conj, disj, eval_formula, free_metas,
    free_vars, is_meta_only, negate_atom, normalize_atom, subst_meta,
    subst_var, to_cnf,
)

x = VarId("x")
y = VarId("y")
z = VarId("z")


def lx(**kw):
    const = kw.pop("const", 0)
    return LinExpr.make({VarId(n): c for n, c in kw.items()}, const)


def cmp_(a, op, b):
    return normalize_atom(a, op, b)


def all_envs(names, lo, hi):
    for vals in itertools.product(range(lo, hi + 1), repeat=len(names)):
        yield dict(zip(names, vals))


# ---------------------------------------------------------------------------
# LinExpr basics

def test_linexpr_drops_zero_coeffs():
    e = lx(x=1) - lx(x=1)
    assert e == LinExpr.of(0)
    assert e.is_ground


def test_linexpr_equality_structural():
    assert lx(x=2, y=-1, const=3) == lx(y=-1, x=2, const=3)
    assert lx(x=2) != lx(x=2, const=1)


def test_linexpr_subst_var():
    e = lx(x=2, y=1)
    assert e.subst_var(x, lx(z=1, const=5)) == lx(z=2, y=1, const=10)


# ---------------------------------------------------------------------------
# Atom normalization

def test_normalize_lt_is_tightened():
    # x < 5 normalizes to -x >= -4; equivalence checked by enumeration.
    f = cmp_(lx(x=1), "<", LinExpr.of(5))
    assert isinstance(f, Atom) and f.rel is Rel.GE
    assert f.expr == lx(x=-1, const=4)
    for env in all_envs(["x"], -10, 10):
        assert eval_formula(f, env) == (env["x"] < 5)


def test_normalize_integer_tightening():
    # 2x >= 3 tightens to x >= 2.
    f = cmp_(lx(x=2), ">=", LinExpr.of(3))
    assert f == cmp_(lx(x=1), ">=", LinExpr.of(2))
    for env in all_envs(["x"], -10, 10):
        assert eval_formula(f, env) == (2 * env["x"] >= 3)


def test_normalize_eq_parity_unsat():
    assert cmp_(lx(x=2), "==", LinExpr.of(1)) == FALSE


def test_normalize_eq_gcd_and_sign():
    assert cmp_(lx(x=2), "==", LinExpr.of(4)) == cmp_(lx(x=1), "==", LinExpr.of(2))
    assert cmp_(lx(x=-1), "==", LinExpr.of(-2)) == cmp_(lx(x=1), "==", LinExpr.of(2))


def test_normalize_neq_expands():
    f = cmp_(lx(x=1), "!=", lx(y=1))
    assert isinstance(f, Or) and len(f.args) == 2
    for env in all_envs(["x", "y"], -4, 4):
        assert eval_formula(f, env) == (env["x"] != env["y"])


def test_ground_atoms_decide():
    assert cmp_(LinExpr.of(3), ">=", LinExpr.of(1)) == TRUE
    assert cmp_(LinExpr.of(0), ">", LinExpr.of(0)) == FALSE
    assert cmp_(LinExpr.of(2), "==", LinExpr.of(2)) == TRUE


def test_meta_atoms_not_tightened():
    c = MetaVar("c0")
    f = cmp_(lx(x=2), "<=", LinExpr.meta(c))
    # 2x <= c0? must keep the 2 until c0? is known.
    assert isinstance(f, Atom)
    assert f.expr.coeff_map()[x] == -2
    g = subst_meta(f, c, 3)
    # 2x <= 3 tightens to x <= 1 only now.
    assert g == cmp_(lx(x=1), "<=", LinExpr.of(1))
    for env in all_envs(["x"], -6, 6):
        assert eval_formula(g, env) == (2 * env["x"] <= 3)


# ---------------------------------------------------------------------------
# Substitution

def test_subst_var_paper_preservation_shape():
    # (x >= y)[x <- x+y] -> x+y >= y, i.e. x >= 0 after normalization.
    f = cmp_(lx(x=1), ">=", lx(y=1))
    g = subst_var(f, x, lx(x=1, y=1))
    assert g == cmp_(lx(x=1), ">=", LinExpr.of(0))


def test_subst_var_no_occurrence():
    f = cmp_(lx(y=1), ">=", LinExpr.of(0))
    assert subst_var(f, x, lx(x=1, const=1)) == f


def test_subst_var_renormalizes_gcd():
    # (2x == 4)[x <- z] -> z == 2; oracle: enumerate z.
    f = cmp_(lx(x=2), "==", LinExpr.of(4))
    g = subst_var(f, x, lx(z=1))
    assert g == cmp_(lx(z=1), "==", LinExpr.of(2))
    for env in all_envs(["z"], -5, 5):
        assert eval_formula(g, env) == (2 * env["z"] == 4)


def test_subst_meta_paper_example():
    c = MetaVar("c0")
    f = cmp_(lx(x=1, y=-1), "<=", LinExpr.meta(c))
    g = subst_meta(f, c, 10)
    assert g == cmp_(lx(x=1, y=-1), "<=", LinExpr.of(10))


def test_subst_meta_absent_is_identity():
    f = cmp_(lx(x=1), ">=", LinExpr.of(0))
    assert subst_meta(f, MetaVar("c9"), 7) == f


def test_subst_meta_ground_decides():
    c = MetaVar("c0")
    f = cmp_(LinExpr.meta(c), ">=", LinExpr.of(0))
    assert subst_meta(f, c, -1) == FALSE
    assert subst_meta(f, c, 0) == TRUE


# ---------------------------------------------------------------------------
# Free variables / metas

def test_free_vars_and_metas():
    c = MetaVar("c0")
    f = cmp_(lx(x=1, y=1), ">=", LinExpr.meta(c))
    assert free_vars(f) == {x, y}
    assert free_metas(f) == {c}
    assert is_meta_only(cmp_(LinExpr.meta(c), ">=", LinExpr.of(0)))
    assert not is_meta_only(f)


# ---------------------------------------------------------------------------
# CNF

def clause_set(clauses):
    return {frozenset(c) for c in clauses}


def test_cnf_implication_single_clause():
    # x >= 0 -> x+y >= 1 gives one clause {x <= -1, x+y >= 1}.
    f = Implies(cmp_(lx(x=1), ">=", LinExpr.of(0)),
                cmp_(lx(x=1, y=1), ">=", LinExpr.of(1)))
    cs = to_cnf(f)
    assert len(cs) == 1
    assert set(cs[0]) == {cmp_(lx(x=1), "<=", LinExpr.of(-1)),
                          cmp_(lx(x=1, y=1), ">=", LinExpr.of(1))}


def test_cnf_conjunction_splits():
    a = cmp_(lx(x=1), ">=", LinExpr.of(0))
    b = cmp_(lx(y=1), ">=", LinExpr.of(0))
    assert clause_set(to_cnf(And((a, b)))) == {frozenset([a]), frozenset([b])}


def test_cnf_negated_disjunction():
    # Not(x >= 0 || y >= 0) -> [[x <= -1], [y <= -1]]; oracle: truth table.
    a = cmp_(lx(x=1), ">=", LinExpr.of(0))
    b = cmp_(lx(y=1), ">=", LinExpr.of(0))
    f = Not(Or((a, b)))
    cs = to_cnf(f)
    assert clause_set(cs) == {
        frozenset([cmp_(lx(x=1), "<=", LinExpr.of(-1))]),
        frozenset([cmp_(lx(y=1), "<=", LinExpr.of(-1))]),
    }
    for env in all_envs(["x", "y"], -1, 1):
        got = all(any(eval_formula(a2, env) for a2 in c) for c in cs)
        assert got == eval_formula(f, env)


def test_cnf_budget():
    # (a1 && b1) || (a2 && b2) || ... blows up exponentially.
    vs = [VarId(f"v{i}") for i in range(10)]
    parts = [And((cmp_(LinExpr.var(v), ">=", LinExpr.of(0)),
                  cmp_(LinExpr.var(v), "<=", LinExpr.of(9))))
             for v in vs]
    with pytest.raises(CnfBudgetExceeded):
        to_cnf(Or(tuple(parts)), budget=16)


# ---------------------------------------------------------------------------
# Property tests

names = ["x", "y", "z", "w"]


@st.composite
def exprs(draw, with_meta=False):
    coeffs = {}
    for n in draw(st.sets(st.sampled_from(names), max_size=3)):
        coeffs[VarId(n)] = draw(st.integers(-4, 4).filter(lambda c: c != 0))
    metas = {}
    if with_meta and draw(st.booleans()):
        metas[MetaVar("c0")] = draw(st.integers(-3, 3).filter(lambda c: c != 0))
    return LinExpr.make(coeffs, draw(st.integers(-8, 8)), metas)


@st.composite
def formulas(draw, depth=2):
    if depth == 0:
        op = draw(st.sampled_from(["<", "<=", ">", ">=", "==", "!="]))
        return normalize_atom(draw(exprs()), op, draw(exprs()))
    kind = draw(st.integers(0, 4))
    if kind == 0:
        return Not(draw(formulas(depth=depth - 1)))
    if kind == 1:
        return conj([draw(formulas(depth=depth - 1)) for _ in range(2)])
    if kind == 2:
        return disj([draw(formulas(depth=depth - 1)) for _ in range(2)])
    if kind == 3:
        return Implies(draw(formulas(depth=depth - 1)),
                       draw(formulas(depth=depth - 1)))
    return draw(formulas(depth=0))


@given(exprs(), exprs(),
       st.sampled_from(["<", "<=", ">", ">=", "==", "!="]),
       st.dictionaries(st.sampled_from(names), st.integers(-10, 10),
                       min_size=4, max_size=4))
def test_normalization_soundness(a, b, op, env):
    f = normalize_atom(a, op, b)
    va, vb = a.eval(env), b.eval(env)
    expected = {
        "<": va < vb, "<=": va <= vb, ">": va > vb,
        ">=": va >= vb, "==": va == vb, "!=": va != vb,
    }[op]
    assert eval_formula(f, env) == expected


@given(formulas(), exprs(),
       st.dictionaries(st.sampled_from(names), st.integers(-5, 5),
                       min_size=4, max_size=4))
def test_subst_var_commutes_with_eval(f, e, env):
    env2 = dict(env)
    env2["x"] = e.eval(env)
    assert eval_formula(subst_var(f, x, e), env) == eval_formula(f, env2)


@settings(max_examples=60)
@given(formulas())
def test_cnf_equivalent_on_box(f):
    try:
        cs = to_cnf(f)
    except CnfBudgetExceeded:
        return
    for env in all_envs(names, -2, 2):
        got = all(any(eval_formula(a, env) for a in c) for c in cs)
        assert got == eval_formula(f, env)


@given(exprs())
def test_negate_atom_is_negation(e):
    f = normalize_atom(e, ">=", LinExpr.of(0))
    if not isinstance(f, Atom):
        return
    g = negate_atom(f)
    for env in all_envs(names, -3, 3):
        assert eval_formula(g, env) == (not eval_formula(f, env))
