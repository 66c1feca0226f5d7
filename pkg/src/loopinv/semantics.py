"""Weakest liberal preconditions, proof obligations, and the checker facade.

`check_valid` is deliberately incomplete: it proves validity through the
Fourier-Motzkin abduction engine and refutes through bounded model search
(a targeted boundary-value pass, then a box grid evaluated with numpy).
Anything else is Unknown, which callers treat as "not proved".
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Mapping, Optional, Sequence

import numpy as np

from .abduction import fm_valid
from .formulas import (
    And, Atom, FalseF, Formula, Implies, LinExpr, Not, Or, Rel, TrueF,
    conj, eval_formula, free_metas, free_vars, implies, negate, subst_var,
)
from .programs import Assign, Assume, If, LoopTask, Seq, Skip, Stmt

REFUTE_BOX = 15          # box radius for counterexample/model search
ORACLE_BOX = 3           # box radius for exhaustive concrete oracles
GRID_LIMIT = 2_000_000   # max number of grid points evaluated exactly


@dataclass(frozen=True)
class CheckResult:
    verdict: str                                  # "proved"|"refuted"|"unknown"
    env: Optional[tuple[tuple[str, int], ...]] = None

    @property
    def proved(self) -> bool:
        return self.verdict == "proved"

    @property
    def refuted(self) -> bool:
        return self.verdict == "refuted"

    def witness(self) -> dict[str, int]:
        return dict(self.env or ())


PROVED = CheckResult("proved")
UNKNOWN = CheckResult("unknown")


def refuted(env: Mapping[str, int]) -> CheckResult:
    return CheckResult("refuted", tuple(sorted(env.items())))


@dataclass(frozen=True)
class Obligations:
    holds_initially: Formula
    preserved: Formula
    implies_post: Formula

    def as_dict(self) -> dict[str, Formula]:
        return {"holds_initially": self.holds_initially,
                "preserved": self.preserved,
                "implies_post": self.implies_post}


# ---------------------------------------------------------------------------
# wlp and obligations

@lru_cache(maxsize=100_000)
def wlp(s: Stmt, q: Formula) -> Formula:
    if isinstance(s, Skip):
        return q
    if isinstance(s, Assign):
        return subst_var(q, s.target, s.expr)
    if isinstance(s, Seq):
        for sub in reversed(s.stmts):
            q = wlp(sub, q)
        return q
    if isinstance(s, If):
        then_q = wlp(s.then, q)
        else_q = wlp(s.els, q) if s.els is not None else q
        if s.cond is None:
            return conj([then_q, else_q])
        return conj([implies(s.cond, then_q),
                     implies(negate(s.cond), else_q)])
    if isinstance(s, Assume):
        return implies(s.cond, q)
    raise TypeError(s)


def obligations(t: LoopTask, inv: Formula) -> Obligations:
    """The three implications a loop invariant must satisfy.  A `*` guard
    contributes nothing (neither itself nor its negation)."""
    if t.guard is None:
        pre_body = inv
        at_exit = inv
    else:
        pre_body = conj([t.guard, inv])
        at_exit = conj([negate(t.guard), inv])
    return Obligations(
        holds_initially=implies(t.init, inv),
        preserved=implies(pre_body, wlp(t.body, inv)),
        implies_post=implies(at_exit, t.post),
    )


# ---------------------------------------------------------------------------
# Concrete bounded execution (scalar oracle)

VACUOUS = object()


def exec_bounded(s: Stmt, env: Mapping[str, int],
                 star_bits: Sequence[int] = ()) -> Optional[dict[str, int]]:
    """Run a loop-free statement.  Returns the final environment, or None
    when an `assume` failed (vacuous run).  `star_bits` supplies branch
    decisions for `if (*)` in preorder (1 = then)."""
    bits = iter(star_bits)

    def go(st: Stmt, e: dict[str, int]) -> Optional[dict[str, int]]:
        if isinstance(st, Skip):
            return e
        if isinstance(st, Assign):
            e2 = dict(e)
            e2[st.target.name] = st.expr.eval(e)
            return e2
        if isinstance(st, Seq):
            for sub in st.stmts:
                e = go(sub, e)
                if e is None:
                    return None
            return e
        if isinstance(st, If):
            if st.cond is None:
                take_then = bool(next(bits, 0))
            else:
                take_then = eval_formula(st.cond, e)
            if take_then:
                return go(st.then, e)
            return go(st.els, e) if st.els is not None else e
        if isinstance(st, Assume):
            return e if eval_formula(st.cond, e) else None
        raise TypeError(st)

    return go(s, dict(env))


def star_streams(s: Stmt) -> Iterator[tuple[int, ...]]:
    """All bit streams a single execution of s might consume."""
    from .programs import branch_count
    n = branch_count(s)
    if n == 0:
        yield ()
        return
    for bits in itertools.product((0, 1), repeat=n):
        yield bits


# ---------------------------------------------------------------------------
# Vectorized grid evaluation

GridEnv = dict[str, np.ndarray]


def grid_envs(names: Sequence[str], radius: int) -> GridEnv:
    """Flattened meshgrid over [-radius, radius]^n."""
    axes = [np.arange(-radius, radius + 1, dtype=np.int64) for _ in names]
    grids = np.meshgrid(*axes, indexing="ij") if names else []
    return {n: g.reshape(-1) for n, g in zip(names, grids)}


def eval_expr_grid(e: LinExpr, genv: GridEnv) -> np.ndarray:
    if e.metas:
        raise ValueError("metavariables in grid evaluation")
    size = len(next(iter(genv.values()))) if genv else 1
    acc = np.full(size, e.const, dtype=np.int64)
    for v, c in e.coeffs:
        acc = acc + c * genv[v.name]
    return acc


def eval_formula_grid(f: Formula, genv: GridEnv) -> np.ndarray:
    if isinstance(f, TrueF) or isinstance(f, FalseF):
        size = len(next(iter(genv.values()))) if genv else 1
        return np.full(size, isinstance(f, TrueF))
    if isinstance(f, Atom):
        v = eval_expr_grid(f.expr, genv)
        return v >= 0 if f.rel is Rel.GE else v == 0
    if isinstance(f, Not):
        return ~eval_formula_grid(f.arg, genv)
    if isinstance(f, And):
        acc = eval_formula_grid(f.args[0], genv)
        for a in f.args[1:]:
            acc = acc & eval_formula_grid(a, genv)
        return acc
    if isinstance(f, Or):
        acc = eval_formula_grid(f.args[0], genv)
        for a in f.args[1:]:
            acc = acc | eval_formula_grid(a, genv)
        return acc
    if isinstance(f, Implies):
        return (~eval_formula_grid(f.lhs, genv)) | eval_formula_grid(f.rhs, genv)
    raise TypeError(f)


def exec_grid(s: Stmt, genv: GridEnv, star_bits: Sequence[int] = ()
              ) -> tuple[GridEnv, np.ndarray]:
    """Vectorized execution over all grid environments at once.

    Returns (final env, alive mask); lanes where an assume failed are dead.
    `if` conditions are evaluated per lane; `if (*)` consumes one shared
    bit from the stream.
    """
    bits = iter(star_bits)
    size = len(next(iter(genv.values()))) if genv else 1

    def go(st: Stmt, e: GridEnv, alive: np.ndarray):
        if isinstance(st, Skip):
            return e, alive
        if isinstance(st, Assign):
            e2 = dict(e)
            e2[st.target.name] = eval_expr_grid(st.expr, e)
            return e2, alive
        if isinstance(st, Seq):
            for sub in st.stmts:
                e, alive = go(sub, e, alive)
            return e, alive
        if isinstance(st, If):
            if st.cond is None:
                take_then = np.full(size, bool(next(bits, 0)))
            else:
                take_then = eval_formula_grid(st.cond, e)
            e_t, alive_t = go(st.then, dict(e), alive)
            if st.els is not None:
                e_f, alive_f = go(st.els, dict(e), alive)
            else:
                e_f, alive_f = e, alive
            merged: GridEnv = {}
            for name in e:
                merged[name] = np.where(take_then, e_t[name], e_f[name])
            return merged, np.where(take_then, alive_t, alive_f)
        if isinstance(st, Assume):
            return e, alive & eval_formula_grid(st.cond, e)
        raise TypeError(st)

    return go(s, dict(genv), np.ones(size, dtype=bool))


# ---------------------------------------------------------------------------
# Model / counterexample search

def _boundary_candidates(f: Formula, names: Sequence[str],
                         cap: int = 9) -> dict[str, list[int]]:
    """Per-variable candidate values near atom boundaries."""
    cands: dict[str, set[int]] = {n: {0, 1, -1} for n in names}

    def visit(n: Formula):
        if isinstance(n, Atom):
            for v, c in n.expr.coeffs:
                if v.name not in cands:
                    continue
                b = -(n.expr.const // c) if c > 0 else (n.expr.const // -c)
                cands[v.name].update((b - 1, b, b + 1))
        elif isinstance(n, Not):
            visit(n.arg)
        elif isinstance(n, (And, Or)):
            for a in n.args:
                visit(a)
        elif isinstance(n, Implies):
            visit(n.lhs)
            visit(n.rhs)
    visit(f)
    return {n: sorted(vals)[:cap] for n, vals in cands.items()}


def _search_falsifying(f: Formula, radius: int) -> Optional[dict[str, int]]:
    """Find an assignment making f false, or None."""
    names = sorted(v.name for v in free_vars(f))
    if not names:
        return None if eval_formula(f, {}) else {}

    # Targeted boundary pass first.
    cand = _boundary_candidates(f, names)
    total = 1
    for n in names:
        total *= len(cand[n])
    if total <= 200_000:
        genv = {n: g.reshape(-1) for n, g in zip(
            names, np.meshgrid(*[np.array(cand[n], dtype=np.int64)
                                 for n in names], indexing="ij"))}
        vals = eval_formula_grid(f, genv)
        bad = np.flatnonzero(~vals)
        if bad.size:
            i = int(bad[0])
            return {n: int(genv[n][i]) for n in names}

    # Exhaustive box when affordable, otherwise seeded random sampling.
    if (2 * radius + 1) ** len(names) <= GRID_LIMIT:
        genv = grid_envs(names, radius)
        vals = eval_formula_grid(f, genv)
        bad = np.flatnonzero(~vals)
        if bad.size:
            i = int(bad[0])
            return {n: int(genv[n][i]) for n in names}
        return None

    rng = np.random.default_rng(0)
    pts = rng.integers(-radius, radius + 1, size=(50_000, len(names)))
    genv = {n: pts[:, i].astype(np.int64) for i, n in enumerate(names)}
    vals = eval_formula_grid(f, genv)
    bad = np.flatnonzero(~vals)
    if bad.size:
        i = int(bad[0])
        return {n: int(genv[n][i]) for n in names}
    return None


def check_valid(f: Formula, radius: int = REFUTE_BOX) -> CheckResult:
    """Two-tier validity: FM proof, else bounded counterexample search."""
    if free_metas(f):
        raise ValueError("check_valid: formula contains metavariables")
    if fm_valid(f):
        return PROVED
    cex = _search_falsifying(f, radius)
    if cex is not None:
        return refuted(cex)
    return UNKNOWN


def check_sat(f: Formula, radius: int = REFUTE_BOX) -> CheckResult:
    """Proved = model found (witness attached); Refuted = FM shows unsat."""
    if free_metas(f):
        raise ValueError("check_sat: formula contains metavariables")
    model = _search_falsifying(negate(f), radius)
    if model is not None:
        return CheckResult("proved", tuple(sorted(model.items())))
    if fm_valid(negate(f)):
        return CheckResult("refuted")
    return UNKNOWN


def check_obligations(t: LoopTask, inv: Formula,
                      radius: int = REFUTE_BOX) -> dict[str, CheckResult]:
    obs = obligations(t, inv)
    return {name: check_valid(ob, radius) for name, ob in obs.as_dict().items()}


def all_proved(results: Mapping[str, CheckResult]) -> bool:
    return all(r.proved for r in results.values())


# ---------------------------------------------------------------------------
# Bounded concrete soundness of a claimed invariant

def bounded_soundness(t: LoopTask, radius: int = ORACLE_BOX,
                      unroll: int = 50, streams: int = 8) -> Optional[dict]:
    """Concretely run the loop from every boxed initial state satisfying
    init and report a run violating post, or None.

    `*` loop guards are treated as "any iteration count up to `unroll`";
    body-level `*` branches follow seeded pseudo-random streams.
    """
    import random as _random
    names = sorted(v.name for v in t.vars)
    rng = _random.Random(12345)
    starts = []
    genv = grid_envs(names, radius)
    ok = eval_formula_grid(t.init, genv)
    idxs = np.flatnonzero(ok)
    for i in idxs[:2000]:
        starts.append({n: int(genv[n][int(i)]) for n in names})

    from .programs import branch_count
    nbits = branch_count(t.body)

    for env0 in starts:
        for stream in range(streams if nbits else 1):
            env = dict(env0)
            for it in range(unroll + 1):
                exited = False
                if t.guard is None:
                    exited = True   # may exit now; check post, then continue
                elif not eval_formula(t.guard, env):
                    exited = True
                if exited and not eval_formula(t.post, env):
                    return {"env": env, "start": env0, "iter": it}
                if t.guard is not None and not eval_formula(t.guard, env):
                    break
                bits = [rng.randrange(2) for _ in range(nbits)]
                nxt = exec_bounded(t.body, env, bits)
                if nxt is None:
                    break           # vacuous iteration: path dies
                env = nxt
    return None
