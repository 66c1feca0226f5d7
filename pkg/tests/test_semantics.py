import itertools
import random

import numpy as np
import pytest

from loopinv.formulas import (
    And, Implies, LinExpr, MetaVar, VarId, conj, disj, eval_formula,
    normalize_atom,
)
from loopinv.parser import parse_formula, parse_task
from loopinv.programs import Assign, Assume, If, Seq, Skip, branch_count, seq
from loopinv.semantics import (
    all_proved, bounded_soundness, check_obligations, check_sat, check_valid,
    eval_formula_grid, exec_bounded, exec_grid, grid_envs, obligations,
    star_streams, wlp,
)

x, y, z = VarId("x"), VarId("y"), VarId("z")

FIG1 = """
assume x >= 1;
y = 0;
while (y < 1000) {
    x = x + y;
    y = y + 1;
}
assert x >= y;
"""


def lx(**kw):
    const = kw.pop("const", 0)
    return LinExpr.make({VarId(n): c for n, c in kw.items()}, const)


def test_wlp_skip():
    q = parse_formula("x >= 0")
    assert wlp(Skip(), q) == q


def test_wlp_fig1_body():
    # wlp(x:=x+y; y:=y+1, x >= y) == x+y >= y+1 == x >= 1
    body = Seq((Assign(x, lx(x=1, y=1)), Assign(y, lx(y=1, const=1))))
    got = wlp(body, parse_formula("x >= y"))
    assert got == parse_formula("x >= 1")


def test_wlp_star_if_is_both_branches():
    body = If(None,
              Seq((Assign(x, lx(x=1, const=1)), Assign(y, lx(y=1, const=2)))),
              Seq((Assign(x, lx(x=1, const=2)), Assign(y, lx(y=1, const=1)))))
    q = parse_formula("3*z == x + y")
    got = wlp(body, q)
    # oracle: wlp truth must equal "q holds after either branch"
    for env in itertools.product(range(-3, 4), repeat=3):
        e = dict(zip(["x", "y", "z"], env))
        runs = [exec_bounded(body, e, bits) for bits in ([0], [1])]
        expected = all(eval_formula(q, r) for r in runs if r is not None)
        assert eval_formula(got, e) == expected


def test_wlp_assume():
    s = Assume(parse_formula("x >= 0"))
    q = parse_formula("y >= 0")
    got = wlp(s, q)
    for env in itertools.product(range(-2, 3), repeat=2):
        e = dict(zip(["x", "y"], env))
        assert eval_formula(got, e) == (not e["x"] >= 0 or e["y"] >= 0)


def test_obligations_fig1():
    t = parse_task(FIG1)
    inv = parse_formula("x >= y && x >= 1 && y >= 0")
    assert all_proved(check_obligations(t, inv))


def test_obligations_fig1_weak_inv_refuted():
    t = parse_task(FIG1)
    res = check_obligations(t, parse_formula("x >= y"))
    assert res["holds_initially"].proved
    assert res["preserved"].refuted
    cex = res["preserved"].witness()
    # the counterexample really falsifies the preservation implication
    ob = obligations(t, parse_formula("x >= y")).preserved
    assert not eval_formula(ob, cex)


def test_obligations_trivial():
    t = parse_task("while (x < 5) { x = x + 1; } assert true;")
    assert all_proved(check_obligations(t, parse_formula("true")))


def test_obligations_star_guard_drops_guard():
    t = parse_task("assume x == 0; while (*) { x = x + 1; } assert x >= 0;")
    obs = obligations(t, parse_formula("x >= 0"))
    # with a * guard the exit implication is inv -> post directly
    assert obs.implies_post == Implies(parse_formula("x >= 0"),
                                       parse_formula("x >= 0")) \
        or obs.implies_post == parse_formula("true") \
        or check_valid(obs.implies_post).proved


def test_exec_bounded():
    body = Seq((Assign(x, lx(x=1, y=1)), Assign(y, lx(y=1, const=1))))
    assert exec_bounded(body, {"x": 1, "y": 0}) == {"x": 1, "y": 1}
    assert exec_bounded(Skip(), {"x": 7}) == {"x": 7}
    s = If(None, Assign(x, LinExpr.of(1)), Assign(x, LinExpr.of(2)))
    assert exec_bounded(s, {"x": 0}, [1]) == {"x": 1}
    assert exec_bounded(s, {"x": 0}, [0]) == {"x": 2}


def test_exec_bounded_vacuous_assume():
    s = Seq((Assume(parse_formula("x >= 5")), Assign(x, LinExpr.of(0))))
    assert exec_bounded(s, {"x": 0}) is None


def test_check_valid_examples():
    assert check_valid(parse_formula("x >= 1 && y == 0 -> x >= y")).proved
    r = check_valid(parse_formula("y < 1000 && x >= y -> x + y >= y + 1"))
    assert r.refuted
    e = r.witness()
    assert not eval_formula(parse_formula("y < 1000 && x >= y -> x + y >= y + 1"), e)
    assert check_valid(parse_formula("true")).proved


def test_check_valid_rejects_metas():
    f = normalize_atom(LinExpr.meta(MetaVar("c0")), ">=", LinExpr.of(0))
    with pytest.raises(ValueError):
        check_valid(f)


def test_check_sat():
    assert check_sat(parse_formula("x >= 3 && x <= 5")).proved
    assert check_sat(parse_formula("x >= 6 && x <= 5")).refuted
    m = check_sat(parse_formula("x == 63")).witness()
    assert m["x"] == 63


def test_grid_matches_scalar_eval():
    f = parse_formula("x + 2*y >= 3 || x != y")
    genv = grid_envs(["x", "y"], 4)
    vals = eval_formula_grid(f, genv)
    for i in range(len(vals)):
        e = {"x": int(genv["x"][i]), "y": int(genv["y"][i])}
        assert bool(vals[i]) == eval_formula(f, e)


def test_exec_grid_matches_scalar():
    body = parse_task(
        "while (x < 3) { if (y > 0) { x = x + y; } else { x = x + 1; y = 5; }"
        " z = z + 1; } assert true;").body
    genv = grid_envs(["x", "y", "z"], 3)
    out, alive = exec_grid(body, genv)
    for i in range(0, len(alive), 7):
        e = {n: int(genv[n][i]) for n in genv}
        r = exec_bounded(body, e)
        assert alive[i]
        assert {n: int(out[n][i]) for n in out} == r


# ---------------------------------------------------------------------------
# wlp soundness property (module-scale version of the acceptance suite)

NAMES = ["x", "y", "z"]


def random_stmt(rng, depth=2):
    k = rng.randrange(6 if depth else 4)
    if k in (0, 1, 2):
        name = rng.choice(NAMES)
        e = LinExpr.make(
            {VarId(n): rng.randint(-2, 2) for n in rng.sample(NAMES, 2)},
            rng.randint(-2, 2))
        return Assign(VarId(name), e)
    if k == 3:
        e = LinExpr.make({VarId(rng.choice(NAMES)): 1}, rng.randint(-2, 2))
        return Assume(normalize_atom(e, rng.choice([">=", "<="]), LinExpr.of(0)))
    cond = None if rng.random() < 0.4 else normalize_atom(
        LinExpr.make({VarId(rng.choice(NAMES)): 1}, 0), "<=",
        LinExpr.of(rng.randint(-1, 2)))
    then = seq([random_stmt(rng, 0) for _ in range(rng.randint(1, 2))])
    els = seq([random_stmt(rng, 0)]) if rng.random() < 0.6 else None
    return If(cond, then, els)


def random_post(rng):
    parts = []
    for _ in range(rng.randint(1, 2)):
        e = LinExpr.make(
            {VarId(n): rng.randint(-2, 2) for n in rng.sample(NAMES, 2)},
            rng.randint(-3, 3))
        parts.append(normalize_atom(e, rng.choice([">=", "==", "<"]),
                                    LinExpr.of(0)))
    return conj(parts) if rng.random() < 0.5 else disj(parts)


def test_wlp_soundness_bounded():
    rng = random.Random(42)
    genv = grid_envs(NAMES, 3)
    for _ in range(120):
        s = seq([random_stmt(rng) for _ in range(rng.randint(1, 3))])
        q = random_post(rng)
        pre = wlp(s, q)
        pre_ok = eval_formula_grid(pre, genv)
        for bits in star_streams(s):
            out, alive = exec_grid(s, genv, bits)
            post_ok = eval_formula_grid(q, out)
            # wlp true and run alive => post holds
            bad = pre_ok & alive & ~post_ok
            assert not bad.any(), "wlp unsound"


def test_bounded_soundness_on_fig1():
    t = parse_task(FIG1)
    assert bounded_soundness(t) is None


def test_bounded_soundness_catches_bad_post():
    t = parse_task("assume x == 0; while (x < 3) { x = x + 1; } assert x >= 9;")
    assert bounded_soundness(t) is not None
