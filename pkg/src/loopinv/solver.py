"""The invariant synthesis strategy.

Proof structure: try to close the exit obligation (`!guard && invs ->
post`) by abduction; when it fails, assemble a missing assumption as a
disjunction of up to three abduction candidates and conjectured templates,
prove it invariant (initially + inductively, recursing on whatever those
proofs are missing), and retry.  Suggestions over metavariables only
become global constraints instead of invariants; once an invariant is
proved, its metavariables are instantiated from the accumulated
constraints (upper bounds as low as possible, lower bounds as high as
possible) and substituted everywhere.

Strategy events: ABDUCTION (-0.2) per abducted disjunct, CONJECTURING
(-0.3) per conjectured disjunct, both counted at most four times;
successes never pay less than 0.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

from .abduction import (
    AbductionError, abduct, abduct_refinement, meta_constraints_sat,
)
from .engine import (
    Choice, Choose, Event, EventSpec, Probe, RunConfig, Strategy,
    StrategyFailure,
)
from .formulas import (
    And, Atom, Formula, LinExpr, MetaVar, Rel, TrueF, conj, detect_neq_expr,
    disj, eq0, free_metas, free_vars, ge0, implies, is_meta_only, negate,
    normalize_atom, subst_meta,
)
from .parser import render_formula
from .programs import (
    Assign, Assume, If, LoopTask, Seq, Skip, Stmt, modified_vars,
)
from .semantics import obligations, wlp

ABDUCTION_EVENT = EventSpec("ABDUCTION", -0.2, 4)
CONJECTURING_EVENT = EventSpec("CONJECTURING", -0.3, 4)
SOLVER_CONFIG = RunConfig(events=(ABDUCTION_EVENT, CONJECTURING_EVENT),
                          r_min=0.0)

MAX_DEPTH = 8
MAX_ROUNDS = 8

POST, INV = "POST", "INV"
TO_PROVE, TO_PROVE_NEXT, PROVED_COND, PROVED = (
    "TO_PROVE", "TO_PROVE_NEXT", "PROVED_COND", "PROVED")


@dataclass
class PendingEntry:
    kind: str
    formula: Formula
    status: str

    def snapshot(self):
        return (self.kind, self.formula, self.status)


@dataclass(frozen=True)
class SolverOutcome:
    conjuncts: tuple[Formula, ...]

    @property
    def invariant(self) -> Formula:
        return conj(self.conjuncts)


# ---------------------------------------------------------------------------
# Conjecture templates

@dataclass(frozen=True)
class Conjecture:
    """An invariant template; GE/EQ templates build the atom
    `expr + meta_coeff * c? (rel) 0` with a fresh metavariable c?."""
    label: str
    expr: Optional[LinExpr]       # None -> `formula` is used verbatim
    rel: Optional[Rel]
    bound_type: str = "free"
    meta_coeff: int = -1
    meta_lower: Optional[int] = None   # constraint `c >= meta_lower`
    formula: Optional[Formula] = None


def _body_paths(s: Stmt) -> list[list[Assign]]:
    """All straight-line assignment sequences through a loop-free body
    (branch conditions dropped, assumes ignored).  Capped at 16 paths."""
    if isinstance(s, (Skip, Assume)):
        return [[]]
    if isinstance(s, Assign):
        return [[s]]
    if isinstance(s, Seq):
        paths = [[]]
        for sub in s.stmts:
            ext = _body_paths(sub)
            paths = [p + e for p in paths for e in ext][:16]
        return paths
    if isinstance(s, If):
        then_paths = _body_paths(s.then)
        else_paths = _body_paths(s.els) if s.els is not None else [[]]
        return (then_paths + else_paths)[:16]
    raise TypeError(s)


def _path_delta(t: LinExpr, path: list[Assign]) -> LinExpr:
    """Value of t after the assignments minus t before (symbolic)."""
    sigma: dict = {}
    for a in path:
        e = a.expr
        acc = LinExpr.make({v: c for v, c in e.coeffs if v not in sigma},
                           e.const, e.meta_map())
        for v, c in e.coeffs:
            if v in sigma:
                acc = acc + sigma[v].scale(c)
        sigma[a.target] = acc
    after = LinExpr.make({v: c for v, c in t.coeffs if v not in sigma},
                         t.const, t.meta_map())
    for v, c in t.coeffs:
        if v in sigma:
            after = after + sigma[v].scale(c)
    return after - t


@lru_cache(maxsize=4096)
def preserved_combinations(task: LoopTask) -> tuple[LinExpr, ...]:
    """Linear combinations (2-3 variables, coefficients in [-3,3], gcd 1,
    leading coefficient positive) left exactly unchanged by every body
    path.

    Unmodified variables are trivially preserved, so the result is reduced
    to combinations independent of them (and of each other): without this
    the pool fills with copies like `i - s + k*n` for every constant k.
    """
    import math
    from fractions import Fraction
    paths = _body_paths(task.body)
    names = sorted(v.name for v in task.vars)
    mod = {v.name for v in modified_vars(task.body)}

    basis: list[list[Fraction]] = []

    def reduce(vec: list[Fraction]) -> bool:
        """Gaussian elimination; True when vec was independent (and added)."""
        v = list(vec)
        for b in basis:
            lead = next((i for i, x in enumerate(b) if x), None)
            if lead is not None and v[lead]:
                f = v[lead] / b[lead]
                v = [x - f * y for x, y in zip(v, b)]
        if any(v):
            basis.append(v)
            return True
        return False

    for n in names:
        if n not in mod:
            reduce([Fraction(int(n2 == n)) for n2 in names])

    out: list[LinExpr] = []
    for size in (2, 3):
        if size > len(names):
            break
        for subset in itertools.combinations(names, size):
            if not any(n in mod for n in subset):
                continue
            for coeffs in itertools.product(range(-3, 4), repeat=size):
                if 0 in coeffs or coeffs[0] <= 0:
                    continue
                g = 0
                for c in coeffs:
                    g = math.gcd(g, abs(c))
                if g != 1:
                    continue
                t = LinExpr.make({task.var_named(n): c
                                  for n, c in zip(subset, coeffs)})
                if all(_path_delta(t, p) == LinExpr.of(0) for p in paths):
                    cm = {v.name: c for v, c in t.coeffs}
                    if reduce([Fraction(cm.get(n, 0)) for n in names]):
                        out.append(t)
    return tuple(out)


def conjectures(task: LoopTask) -> tuple[Conjecture, ...]:
    """The three conjecture families: preserved linear combinations,
    loop-guard relaxations, and unmodified-variable facts from init."""
    out: list[Conjecture] = []
    for t in preserved_combinations(task):
        s = str(t)
        # t >= c?: c? is a lower bound (instantiate as high as possible);
        # t <= c? (encoded -t + c? >= 0): an upper bound (as low as possible).
        out.append(Conjecture(f"conjecture {s} >= c?", t, Rel.GE, "lower",
                              meta_coeff=-1))
        out.append(Conjecture(f"conjecture {s} <= c?", -t, Rel.GE, "upper",
                              meta_coeff=1))
        out.append(Conjecture(f"conjecture {s} == c?", t, Rel.EQ, "free",
                              meta_coeff=-1))

    if task.guard is not None:
        guard_atoms = (task.guard.args if isinstance(task.guard, And)
                       else (task.guard,))
        for a in guard_atoms:
            if isinstance(a, Atom) and a.rel is Rel.GE and not a.expr.metas:
                out.append(Conjecture(
                    f"relax guard {render_formula(a)} by c?",
                    a.expr, Rel.GE, "upper", meta_coeff=1, meta_lower=1))

    mod = {v.name for v in modified_vars(task.body)}
    init_parts = (task.init.args if isinstance(task.init, And)
                  else (task.init,))
    for p in init_parts:
        if isinstance(p, Atom) and \
                not ({v.name for v in free_vars(p)} & mod):
            out.append(Conjecture(f"from init: {render_formula(p)}",
                                  None, None, formula=p))
    return tuple(out)


# ---------------------------------------------------------------------------
# The strategy

def make_solver(task: LoopTask) -> Strategy:
    return Strategy("solver", lambda: _solver_fn(task), SOLVER_CONFIG)


def _solver_fn(task: LoopTask):
    invs_proved: list[Formula] = []
    constrs: list[Formula] = []
    pending: list[PendingEntry] = []
    meta_counter = itertools.count()
    conj_templates = conjectures(task)
    neg_guard = None if task.guard is None else negate(task.guard)

    def fresh_meta(bound_type: str) -> MetaVar:
        return MetaVar(f"c{next(meta_counter)}", bound_type)

    def mk_probe(site: str, **extra) -> Probe:
        sections = [
            ("program", task),
            ("pending", tuple(p.snapshot() for p in pending)),
            ("invs_proved", tuple(invs_proved)),
            ("constrs", tuple(constrs)),
        ]
        sections.extend(extra.items())
        return Probe("solver", site, tuple(sections))

    def assumption_parts(extra: list[Formula]) -> Formula:
        return conj([*constrs, *invs_proved, *extra])

    def post_obligation() -> Formula:
        extra = [neg_guard] if neg_guard is not None else []
        return implies(assumption_parts(extra), task.post)

    def is_closing(assum: Formula, to_prove: Formula) -> bool:
        # Probe decoration only (never control flow): a small FM budget
        # keeps this cheap on the hot path.
        return abduct(implies(assum, to_prove), fm_budget=16).valid

    def instantiate(c: Conjecture) -> tuple[Formula, list[MetaVar]]:
        if c.formula is not None:
            return c.formula, []
        m = fresh_meta(c.bound_type)
        expr = c.expr + LinExpr.meta(m, c.meta_coeff)
        f = ge0(expr) if c.rel is Rel.GE else eq0(expr)
        if not isinstance(f, Atom):
            raise StrategyFailure("degenerate conjecture")
        if c.meta_lower is not None:
            constrs.append(normalize_atom(LinExpr.meta(m), ">=",
                                          LinExpr.of(c.meta_lower)))
        return f, [m]

    def suggest_missing(suggs, site: str, obligation: Formula):
        pool: list[tuple[Choice, object]] = []
        seen: set = set()
        for a in suggs:
            if a not in seen:
                seen.add(a)
                pool.append((Choice(render_formula(a), a), a))
        for c in conj_templates:
            pool.append((Choice(c.label, c), c))
        if not pool:
            raise StrategyFailure("no candidates")
        num = yield Choose(
            mk_probe(f"{site}.num_disjuncts", obligation=obligation),
            tuple(Choice(str(k), k) for k in (1, 2, 3)))
        remaining = list(pool)
        disjs: list[Formula] = []
        fresh: list[MetaVar] = []
        for _ in range(num):
            picked = yield Choose(
                mk_probe(f"{site}.disjunct", obligation=obligation,
                         partial=tuple(disjs)),
                tuple(ch for ch, _ in remaining))
            remaining = [(ch, p) for ch, p in remaining
                         if ch.payload != picked]
            if isinstance(picked, Conjecture):
                f, ms = instantiate(picked)
                disjs.append(f)
                fresh.extend(ms)
                yield Event("CONJECTURING")
            else:
                disjs.append(picked)
                yield Event("ABDUCTION")
        return disj(disjs), fresh

    def strengthen(f: Formula):
        """Choice point: keep f, orient a disequality, or slacken an
        inequality with a fresh nonnegative constant."""
        options: list[tuple[Choice, object]] = [(Choice("keep", ("id",)), None)]
        e = detect_neq_expr(f)
        if e is not None:
            options.append((Choice("orient >", ("gt", e)), None))
            options.append((Choice("orient <", ("lt", e)), None))
        if isinstance(f, Atom) and f.rel is Rel.GE and not f.expr.metas:
            options.append((Choice("weaken by c?", ("slack",)), None))
        if len(options) == 1:
            return f, []
        action = yield Choose(mk_probe("strengthen", candidate=f),
                              tuple(ch for ch, _ in options))
        if action[0] == "id":
            return f, []
        if action[0] == "gt":
            g = ge0(action[1] + LinExpr.of(-1))
            if not isinstance(g, Atom):
                raise StrategyFailure("degenerate strengthening")
            return g, []
        if action[0] == "lt":
            g = ge0((-action[1]) + LinExpr.of(-1))
            if not isinstance(g, Atom):
                raise StrategyFailure("degenerate strengthening")
            return g, []
        m = fresh_meta("upper")
        constrs.append(normalize_atom(LinExpr.meta(m), ">=", LinExpr.of(0)))
        g = Atom(f.expr + LinExpr.meta(m), Rel.GE)
        return g, [m]

    def refine_all(fresh: list[MetaVar]):
        nonlocal invs_proved, constrs
        for m in fresh:
            try:
                val = abduct_refinement(m, constrs)
            except AbductionError as exc:
                raise StrategyFailure(str(exc))
            invs_proved = [subst_meta(f, m, val) for f in invs_proved]
            constrs = [subst_meta(f, m, val) for f in constrs]
            constrs = [c for c in constrs if not isinstance(c, TrueF)]
            for p in pending:
                p.formula = subst_meta(p.formula, m, val)

    def prove_missing(f: Formula, as_inv: bool, depth: int,
                      fresh_in: tuple[MetaVar, ...] = ()):
        if depth > MAX_DEPTH:
            raise StrategyFailure("recursion budget exceeded")
        if is_meta_only(f):
            if not isinstance(f, Atom):
                raise StrategyFailure("disjunctive metavariable constraint")
            if f in constrs:
                raise StrategyFailure("no progress: constraint repeated")
            constrs.append(f)
            if not meta_constraints_sat(constrs):
                raise StrategyFailure("metavariable constraints unsatisfiable")
            return
        if not as_inv:
            raise StrategyFailure("non-constraint assumption in init proof")
        inv, fresh2 = yield from strengthen(f)
        if inv in invs_proved:
            raise StrategyFailure("no progress: invariant repeated")
        pending.append(PendingEntry(INV, inv, TO_PROVE))
        yield from prove_init(inv, depth)
        yield from prove_preserved(inv, depth)
        invs_proved.append(inv)
        pending.pop()
        refine_all(list(fresh_in) + list(fresh2))

    def prove_init(inv: Formula, depth: int):
        for _ in range(MAX_ROUNDS):
            pending[-1].status = TO_PROVE
            to_prove = implies(assumption_parts([task.init]), inv)
            res = abduct(to_prove)
            if res.valid:
                return
            if not res.suggestions:
                raise StrategyFailure("init proof stuck")
            assum = yield Choose(
                mk_probe("prove_init.candidate", invariant=inv,
                         obligation=to_prove),
                tuple(Choice(render_formula(a), a) for a in res.suggestions))
            yield from prove_missing(assum, False, depth + 1)
        raise StrategyFailure("init proof did not converge")

    def prove_preserved(inv: Formula, depth: int):
        pre = [task.guard] if task.guard is not None else []
        for _ in range(MAX_ROUNDS):
            pending[-1].status = TO_PROVE
            to_prove = implies(assumption_parts(pre + [inv]),
                               wlp(task.body, inv))
            res = abduct(to_prove)
            if res.valid:
                return
            if not res.suggestions and not conj_templates:
                raise StrategyFailure("preservation proof stuck")
            assum, fresh = yield from suggest_missing(
                res.suggestions, "prove_preserved", to_prove)
            pending[-1].status = (PROVED_COND if is_closing(assum, to_prove)
                                  else TO_PROVE_NEXT)
            yield from prove_missing(assum, True, depth + 1, tuple(fresh))
        raise StrategyFailure("preservation proof did not converge")

    def prove_post(depth: int):
        for _ in range(MAX_ROUNDS):
            pending[-1].status = TO_PROVE
            to_prove = post_obligation()
            res = abduct(to_prove)
            if res.valid:
                pending[-1].status = PROVED
                return
            if not res.suggestions and not conj_templates:
                raise StrategyFailure("post proof stuck")
            assum, fresh = yield from suggest_missing(res.suggestions,
                                                      "prove_post", to_prove)
            pending[-1].status = (PROVED_COND if is_closing(assum, to_prove)
                                  else TO_PROVE_NEXT)
            yield from prove_missing(assum, True, depth + 1, tuple(fresh))
        raise StrategyFailure("post proof did not converge")

    pending.append(PendingEntry(POST, task.post, TO_PROVE))
    yield from prove_post(0)
    pending.pop()

    # The outcome contract: no metavariables and all three obligations
    # provably closed for the conjunction actually returned.
    invariant = conj(invs_proved)
    if free_metas(invariant):
        raise StrategyFailure("unrefined metavariables in result")
    obs = obligations(task, invariant)
    for ob in obs.as_dict().values():
        if not abduct(ob).valid:
            raise StrategyFailure("final invariant fails re-verification")
    return SolverOutcome(tuple(invs_proved))
