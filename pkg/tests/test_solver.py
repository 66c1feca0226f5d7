import itertools
import pathlib

import pytest

from loopinv.bench import solve_task, verify_solution
from loopinv.engine import run_trace, start
from loopinv.formulas import (
    And, Atom, LinExpr, Rel, VarId, conj, eval_formula, free_metas,
    normalize_atom,
)
from loopinv.mcts import solve_with_search
from loopinv.parser import parse_formula, parse_task
from loopinv.semantics import all_proved, check_obligations
from loopinv.solver import (
    SOLVER_CONFIG, conjectures, make_solver, preserved_combinations,
)

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "fixtures"

FIG1 = (FIXTURES / "fig1.imp").read_text()


def lx(**kw):
    const = kw.pop("const", 0)
    return LinExpr.make({VarId(n): c for n, c in kw.items()}, const)


def equivalent_on_box(f, g, names, radius=15):
    from loopinv.semantics import eval_formula_grid, grid_envs
    genv = grid_envs(names, radius)
    import numpy as np
    return bool(np.array_equal(eval_formula_grid(f, genv),
                               eval_formula_grid(g, genv)))


def test_fig1_solved_with_paper_derivation():
    task = parse_task(FIG1)
    out = solve_with_search(start(make_solver(task)), sims=400, step_budget=64)
    assert out.succeeded
    res = out.state.result
    # reward 1 + 3 * (-0.2): three abduction events, no conjecturing
    assert out.state.event_counts == {"ABDUCTION": 3}
    assert out.state.reward == pytest.approx(0.4)
    want = parse_formula("x >= y && x >= 1 && y >= 0")
    assert equivalent_on_box(res.invariant, want, ["x", "y"])


def test_solved_conjuncts_are_meta_free_and_verified():
    task = parse_task(FIG1)
    out = solve_with_search(start(make_solver(task)), sims=400)
    for c in out.state.result.conjuncts:
        assert not free_metas(c)
    assert all_proved(check_obligations(task, out.state.result.invariant))


def test_trivial_post_from_guard_negation():
    # post follows from !guard alone: success with no invariants
    task = parse_task("x = 20;\nwhile (x > 5) { x = x - 3; }\nassert x <= 5;")
    out = solve_with_search(start(make_solver(task)), sims=16, step_budget=8)
    assert out.succeeded
    assert out.state.result.conjuncts == ()
    assert out.state.reward == 1.0


def test_problem3_disjunctive_invariant():
    task = parse_task((FIXTURES / "code2inv_style" / "c2i_003.imp").read_text())
    out = solve_with_search(start(make_solver(task)), sims=400)
    assert out.succeeded
    want = parse_formula("x < 5 || y <= z")
    assert equivalent_on_box(out.state.result.invariant, want,
                             ["x", "y", "z"], radius=8)


def test_problem7_conjecture_path():
    task = parse_task((FIXTURES / "code2inv_style" / "c2i_007.imp").read_text())
    out = solve_with_search(start(make_solver(task)), sims=400)
    assert out.succeeded
    want = parse_formula("x - y <= 10")
    assert equivalent_on_box(out.state.result.invariant, want, ["x", "y"])
    assert out.state.event_counts.get("CONJECTURING", 0) >= 1


def test_problem93_conjecture_and_abduction():
    task = parse_task((FIXTURES / "code2inv_style" / "c2i_093.imp").read_text())
    out = solve_with_search(start(make_solver(task)), sims=400)
    assert out.succeeded
    assert verify_solution(task, out.state.result.invariant)


# ---------------------------------------------------------------------------
# conjectures

def test_preserved_combination_problem93():
    task = parse_task((FIXTURES / "code2inv_style" / "c2i_093.imp").read_text())
    combos = preserved_combinations(task)
    want = lx(i=3, x=-1, y=-1)
    assert want in combos


def test_preserved_combination_excludes_changed():
    # body x := x+1 preserves no combination touching x
    task = parse_task("y = 0;\nwhile (x < 3) { x = x + 1; }\nassert true;")
    combos = preserved_combinations(task)
    assert all("x" not in {v.name for v in t.vars()} for t in combos)


def test_preserved_combinations_reduced_against_parameters():
    task = parse_task((FIXTURES / "code2inv_style" / "c2i_110.imp").read_text())
    combos = preserved_combinations(task)
    # i - s survives; i - s + k*n copies are spanned by {i - s, n}
    assert combos == (lx(i=1, s=-1),)


def test_guard_relaxation_conjecture():
    task = parse_task("x = 0;\nwhile (x < 5) { x = x + 1; }\nassert x >= 0;")
    labels = [c.label for c in conjectures(task)]
    assert any("relax guard" in lab for lab in labels)
    relax = [c for c in conjectures(task) if "relax" in c.label][0]
    # guard x < 5 normalizes to x <= 4; relaxing gives x <= 4 + c?, c? >= 1
    assert relax.expr == lx(x=-1, const=4)
    assert relax.meta_coeff == 1 and relax.meta_lower == 1
    assert relax.bound_type == "upper"


def test_init_fact_conjecture_for_unmodified_vars():
    task = parse_task(
        "assume k >= 3;\nx = 0;\nwhile (x < k) { x = x + 1; }\nassert x >= 3;")
    cs = conjectures(task)
    from_init = [c for c in cs if c.formula is not None]
    assert [c.formula for c in from_init] == [parse_formula("k >= 3")]


# ---------------------------------------------------------------------------
# soundness over the whole fixture suite (random subset for speed)

@pytest.mark.parametrize("name", ["c2i_101.imp", "c2i_109.imp", "c2i_117.imp",
                                  "c2i_110.imp"])
def test_fixture_solutions_reverify(name):
    task = parse_task((FIXTURES / "code2inv_style" / name).read_text())
    rep = solve_task(task, timeout=30.0)
    assert rep.solved
    assert rep.verified


def test_event_accounting_matches_trace_replay():
    task = parse_task(FIG1)
    strat = make_solver(task)
    out = solve_with_search(start(strat), sims=200, step_budget=64)
    assert out.succeeded
    replayed = run_trace(strat, (), out.trace)
    assert replayed.status == "succeeded"
    assert replayed.event_counts == out.state.event_counts
    assert replayed.reward == out.state.reward


def test_reward_never_below_r_min_on_success():
    assert SOLVER_CONFIG.r_min == 0.0
    task = parse_task(FIG1)
    out = solve_with_search(start(make_solver(task)), sims=100)
    if out.succeeded:
        assert out.state.reward >= 0.0
