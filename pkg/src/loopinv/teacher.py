"""Constraint-guided problem generation.

A teacher episode samples a constraint record (what kind of problem to
build), then nondeterministically refines guard, invariant parts, body,
post and init in that order, checking validity at checkpoints as it goes.
Hard requirements (the problem verifies, formulas are nontrivial, the
loop can be entered and can make progress) abort the episode; sampled
soft constraints that end up violated raise one event each.  A final
pass applies random semantics-respecting transformations, cancelling any
application that breaks a hard requirement or changes the violation set.

Generation is a nondeterministic strategy, so it can be driven by MCTS
(better reward: fewer violated constraints) or greedily.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .abduction import (
    AbductionError, abduct, abduct_refinement, fm_saturate, fm_valid,
    meta_constraints_sat,
)
from .engine import (
    Choice, Choose, Event, EventSpec, Probe, RunConfig, Strategy,
    StrategyFailure, start,
)
from .formulas import (
    And, Atom, Formula, LinExpr, MetaVar, Or, Rel, TrueF, conj, disj, eq0,
    free_metas, free_vars, ge0, implies, is_meta_only, negate, normalize_atom,
    subst_meta, to_cnf,
)
from .parser import RenderStyle, render_formula
from .programs import (
    Assign, Assume, If, LoopTask, Seq, Skip, Stmt, modified_vars, seq,
    stmt_vars,
)
from .semantics import check_sat, check_valid, obligations, wlp

MUTABLE_NAMES = ("x", "y", "z", "w", "v")
PARAM_NAMES = ("n", "m", "k")

GUARD_TEMPLATES = ("lt_const", "le_const", "lt_var", "le_var", "star")
ASSIGN_TEMPLATES = ("const_assign", "var_assign", "incr", "decr",
                    "add_var", "const_minus")

SOFT_CONSTRAINTS = (
    ("num-preserved-term-vars", -0.5),
    ("num-inv-main-disjuncts", -0.5),
    ("num-inv-aux-conjuncts", -0.5),
    ("num-post-disjuncts", -0.5),
    ("has-conditional", -0.5),
    ("has-else-branch", -0.5),
    ("has-cond-guard", -0.5),
    ("body-implies-main-inv", -0.5),
    ("loop-guard-useful-for-inv", -0.5),
    ("loop-guard-useful-for-post", -0.5),
    ("use-params", -0.5),
    ("eq-only-for-init", -0.2),
    ("loop-guard-template", -0.2),
    ("assignment-templates", -0.2),
    ("allow-vcomp-in-inv-main", -0.2),
    ("useless-inv-part", -0.5),
)

TEACHER_CONFIG = RunConfig(
    events=tuple(EventSpec(name, r, 1) for name, r in SOFT_CONSTRAINTS),
    r_min=-0.5)


@dataclass(frozen=True)
class TeacherConstraints:
    num_preserved_term_vars: Optional[int]    # None | 2 | 3
    num_inv_main_disjuncts: Optional[int]     # None | 1 | 2
    num_inv_aux_conjuncts: Optional[int]      # None | 1 | 2
    num_post_disjuncts: int                   # 1 | 2
    has_conditional: bool
    has_else_branch: bool
    has_cond_guard: bool
    body_implies_main_inv: bool
    loop_guard_useful_for_inv: bool
    loop_guard_useful_for_post: bool
    use_params: bool
    eq_only_for_init: bool
    loop_guard_template: str
    assignment_templates: tuple[str, ...]
    allow_vcomp_in_inv_main: bool
    available_consts: tuple[int, ...]

    def __post_init__(self):
        if len(self.available_consts) != 6:
            raise ValueError("exactly 6 available constants")


# Marginals for the sampler; every entry documented by its shape.
DEFAULT_MARGINALS = {
    "num_preserved_term_vars": ((None, 0.50), (2, 0.35), (3, 0.15)),
    # boosted toward disjunctions when no linear part was drawn
    "num_inv_main_disjuncts": ((None, 0.40), (1, 0.40), (2, 0.20)),
    "num_inv_main_disjuncts_nolin": ((None, 0.15), (1, 0.45), (2, 0.40)),
    "num_inv_aux_conjuncts": ((None, 0.60), (1, 0.25), (2, 0.15)),
    "num_post_disjuncts": ((1, 0.70), (2, 0.30)),
    "has_conditional": 0.35,
    "has_else_branch": 0.50,
    "has_cond_guard": 0.50,
    "body_implies_main_inv": 0.20,
    "loop_guard_useful_for_inv": 0.25,
    "loop_guard_useful_for_post": 0.45,
    "use_params": 0.30,
    "eq_only_for_init": 0.60,
    "loop_guard_template": (("lt_const", 0.30), ("le_const", 0.25),
                            ("lt_var", 0.10), ("le_var", 0.05),
                            ("star", 0.30)),
    "assignment_template_p": 0.50,
    "allow_vcomp_in_inv_main": 0.70,
}


def _weighted(rng: random.Random, pairs) -> object:
    r = rng.random()
    acc = 0.0
    for val, p in pairs:
        acc += p
        if r < acc:
            return val
    return pairs[-1][0]


def sample_constraints(rng: random.Random,
                       marginals: Optional[dict] = None) -> TeacherConstraints:
    """Draw a constraint record.

    Mostly independent marginals with one hardcoded correlation (more
    disjunctive main invariants when no linear part is drawn) and a small
    rejection list: no invariant at all, an empty or progress-free
    assignment template set, and conditional sub-flags without a
    conditional are never constructed.
    """
    m = dict(DEFAULT_MARGINALS)
    if marginals:
        m.update(marginals)
    while True:
        consts = []
        while len(consts) < 6:
            c = rng.randint(-64, 63)
            if c != 0 and c not in consts:
                consts.append(c)

        npt = _weighted(rng, m["num_preserved_term_vars"])
        main_key = ("num_inv_main_disjuncts_nolin" if npt is None
                    else "num_inv_main_disjuncts")
        nmd = _weighted(rng, m[main_key])
        nac = _weighted(rng, m["num_inv_aux_conjuncts"])
        if npt is None and nmd is None and nac is None:
            continue                      # rejected: no invariant at all

        has_cond = rng.random() < m["has_conditional"]
        templates = tuple(t for t in ASSIGN_TEMPLATES
                          if rng.random() < m["assignment_template_p"])
        progress = {"incr", "decr", "add_var", "const_minus"}
        if not templates or not (set(templates) & progress):
            continue                      # rejected: no way to make progress

        guard_template = _weighted(rng, m["loop_guard_template"])
        star = guard_template == "star"
        cs = TeacherConstraints(
            num_preserved_term_vars=npt,
            num_inv_main_disjuncts=nmd,
            num_inv_aux_conjuncts=nac,
            num_post_disjuncts=_weighted(rng, m["num_post_disjuncts"]),
            has_conditional=has_cond,
            has_else_branch=has_cond and rng.random() < m["has_else_branch"],
            has_cond_guard=has_cond and rng.random() < m["has_cond_guard"],
            body_implies_main_inv=(nmd is not None
                                   and rng.random() < m["body_implies_main_inv"]),
            loop_guard_useful_for_inv=(not star
                                       and rng.random() < m["loop_guard_useful_for_inv"]),
            loop_guard_useful_for_post=(not star
                                        and rng.random() < m["loop_guard_useful_for_post"]),
            use_params=rng.random() < m["use_params"],
            eq_only_for_init=rng.random() < m["eq_only_for_init"],
            loop_guard_template=guard_template,
            assignment_templates=templates,
            allow_vcomp_in_inv_main=rng.random() < m["allow_vcomp_in_inv_main"],
            available_consts=tuple(consts),
        )
        return cs


@dataclass(frozen=True)
class ReferenceProblem:
    task: LoopTask
    inv_lin: Optional[Formula]
    inv_main: Optional[Formula]
    inv_aux: Optional[Formula]
    constraints: TeacherConstraints
    violations: frozenset
    structure: tuple                      # frozen structural snapshot
    render: RenderStyle = field(default_factory=RenderStyle, compare=False)
    seed: Optional[int] = None

    @property
    def invariant(self) -> Formula:
        return conj([f for f in (self.inv_lin, self.inv_aux, self.inv_main)
                     if f is not None])

    def structure_map(self) -> dict:
        return dict(self.structure)


# ---------------------------------------------------------------------------
# Hard constraints (Table-of-fixed-requirements checks)

def _formula_parts(f: Formula):
    if isinstance(f, Or):
        return "or", list(f.args)
    if isinstance(f, And):
        return "and", list(f.args)
    return "atom", [f]


def _pair_merge_candidates(kind: str, parts: list[Formula]):
    """Single-atom equivalents a two-part formula might collapse to."""
    cands = []
    atoms = [p for p in parts if isinstance(p, Atom)]
    for a in atoms:
        if a.rel is Rel.GE:
            if kind == "or":
                cands.append(ge0(a.expr + LinExpr.of(1)))
            else:
                cands.append(eq0(a.expr))
    return [c for c in cands if isinstance(c, Atom)]


def formula_hard_defect(f: Formula, radius: int = 15) -> Optional[str]:
    """Valid / unsatisfiable / simplifiable defect of a compound formula."""
    if isinstance(f, TrueF):
        return "valid"
    if fm_valid(f):
        return "valid"
    if not check_sat(f, radius).proved:
        return "unsat"
    kind, parts = _formula_parts(f)
    if len(parts) > 1:
        for i in range(len(parts)):
            rest = parts[:i] + parts[i + 1:]
            if kind == "or" and fm_valid(implies(parts[i], disj(rest))):
                return "redundant"
            if kind == "and" and fm_valid(implies(conj(rest), parts[i])):
                return "redundant"
        for cand in _pair_merge_candidates(kind, parts):
            both = (fm_valid(implies(f, cand))
                    and fm_valid(implies(cand, f)))
            if both:
                return "redundant"
    return None


def check_hard(p: ReferenceProblem) -> Optional[str]:
    """First violated hard requirement, or None.

    Unknown verdicts on requirements that need a proof or a witness are
    treated as violations (generation only emits what it can certify).
    """
    t = p.task
    inv = p.invariant
    obs = obligations(t, inv)
    for name, ob in obs.as_dict().items():
        if not fm_valid(ob):
            return f"correctness:{name}"

    if not check_sat(inv).proved:
        return "inv-sat"

    if t.guard is not None:
        preserved_guard = implies(conj([t.guard, inv]), wlp(t.body, t.guard))
        r = check_valid(preserved_guard)
        if not r.refuted:
            return "loop-terminates"
        entered = conj([t.init, t.guard])
    else:
        entered = t.init
    if not check_sat(entered).proved:
        return "loop-entered"

    for label, f in (("inv_main", p.inv_main), ("post", t.post),
                     ("init", t.init)):
        if f is None:
            continue
        defect = formula_hard_defect(f)
        if defect:
            return f"{label}-{defect}"
    return None


# ---------------------------------------------------------------------------
# Soft constraints

def _eq_atoms_outside_init(p: ReferenceProblem) -> bool:
    def has_eq(f: Optional[Formula]) -> bool:
        if f is None:
            return False
        if isinstance(f, Atom):
            return f.rel is Rel.EQ
        if isinstance(f, (And, Or)):
            return any(has_eq(a) for a in f.args)
        return False

    def stmt_eq(s: Stmt) -> bool:
        if isinstance(s, If):
            return (has_eq(s.cond) or stmt_eq(s.then)
                    or (s.els is not None and stmt_eq(s.els)))
        if isinstance(s, Seq):
            return any(stmt_eq(sub) for sub in s.stmts)
        if isinstance(s, Assume):
            return has_eq(s.cond)
        return False

    return (has_eq(p.task.guard) or has_eq(p.task.post)
            or has_eq(p.inv_lin) or has_eq(p.inv_main) or has_eq(p.inv_aux)
            or stmt_eq(p.task.body))


def _first_main_disjunct_vcomp(p: ReferenceProblem) -> bool:
    if p.inv_main is None:
        return False
    first = p.inv_main.args[0] if isinstance(p.inv_main, Or) else p.inv_main
    if not isinstance(first, Atom):
        return False
    mod = {v.name for v in modified_vars(p.task.body)}
    names = {v.name for v in first.expr.vars()}
    return len(names & mod) >= 2


def _useless_inv_part(p: ReferenceProblem) -> bool:
    """Some main disjunct or aux conjunct can be dropped with the problem
    still verifying."""
    t = p.task

    def still_valid(inv2: Formula) -> bool:
        obs = obligations(t, inv2)
        return all(fm_valid(ob) for ob in obs.as_dict().values())

    if p.inv_main is not None and isinstance(p.inv_main, Or):
        parts = list(p.inv_main.args)
        for i in range(len(parts)):
            main2 = disj(parts[:i] + parts[i + 1:])
            inv2 = conj([f for f in (p.inv_lin, p.inv_aux, main2)
                         if f is not None])
            if still_valid(inv2):
                return True
    if p.inv_aux is not None:
        parts = (list(p.inv_aux.args) if isinstance(p.inv_aux, And)
                 else [p.inv_aux])
        for i in range(len(parts)):
            aux2 = conj(parts[:i] + parts[i + 1:])
            inv2 = conj([f for f in (p.inv_lin,
                                     aux2 if not isinstance(aux2, TrueF) else None,
                                     p.inv_main) if f is not None])
            if still_valid(inv2):
                return True
    return False


def count_soft_violations(p: ReferenceProblem,
                          cs: TeacherConstraints) -> frozenset:
    """Violation set for the final problem.

    Structural judgments come from the generation-time snapshot (later
    decorations are not the problem's "true" structure); semantic ones
    are recomputed on the current formulas.
    """
    s = p.structure_map()
    out = set()

    def expect(name, actual, target):
        if actual != target:
            out.add(name)

    expect("num-preserved-term-vars", s["inv_lin_terms"],
           cs.num_preserved_term_vars)
    expect("num-inv-main-disjuncts", s["main_disjuncts"],
           cs.num_inv_main_disjuncts)
    expect("num-inv-aux-conjuncts", s["aux_conjuncts"],
           cs.num_inv_aux_conjuncts)
    expect("num-post-disjuncts", s["post_disjuncts"], cs.num_post_disjuncts)
    expect("has-conditional", s["has_conditional"], cs.has_conditional)
    expect("has-else-branch", s["has_else_branch"], cs.has_else_branch)
    expect("has-cond-guard", s["has_cond_guard"], cs.has_cond_guard)
    expect("use-params", s["params_used"], cs.use_params)
    expect("loop-guard-template", s["guard_template"], cs.loop_guard_template)
    if not set(s["templates_used"]) <= set(cs.assignment_templates):
        out.add("assignment-templates")

    t = p.task
    inv = p.invariant
    if cs.body_implies_main_inv != (
            p.inv_main is not None and fm_valid(wlp(t.body, p.inv_main))):
        out.add("body-implies-main-inv")
    if t.guard is None:
        useful_inv = False
        useful_post = False
    else:
        useful_inv = not fm_valid(implies(inv, wlp(t.body, inv)))
        useful_post = not fm_valid(implies(inv, t.post))
    expect("loop-guard-useful-for-inv", useful_inv,
           cs.loop_guard_useful_for_inv)
    expect("loop-guard-useful-for-post", useful_post,
           cs.loop_guard_useful_for_post)
    expect("eq-only-for-init", not _eq_atoms_outside_init(p),
           cs.eq_only_for_init)
    if not cs.allow_vcomp_in_inv_main and _first_main_disjunct_vcomp(p):
        out.add("allow-vcomp-in-inv-main")
    if _useless_inv_part(p):
        out.add("useless-inv-part")
    return frozenset(out)


# ---------------------------------------------------------------------------
# The generation strategy

class TeacherGenerationError(Exception):
    pass


def make_teacher(cs: TeacherConstraints) -> Strategy:
    return Strategy("teacher", lambda: _teacher_fn(cs), TEACHER_CONFIG)


def _teacher_fn(cs: TeacherConstraints):
    mutables: list = []        # VarId, in introduction order
    params: list = []
    metas: list = []           # MetaVar, in creation order
    constrs: list[Formula] = []
    raised: set[str] = set()

    inv_lin: Optional[Formula] = None
    inv_main: Optional[Formula] = None
    inv_aux: Optional[Formula] = None
    guard: Optional[Formula] = None
    init_parts: list[Formula] = []
    post_parts: list[Formula] = []
    templates_used: set[str] = set()

    from .formulas import VarId

    def mk_probe(site, **extra):
        sections = [
            ("constraints", tuple(sorted(vars(cs).items(),
                                         key=lambda kv: kv[0]))),
            ("violations", tuple(sorted(raised))),
            ("invariant", tuple(f for f in (inv_lin, inv_aux, inv_main)
                                if f is not None)),
            ("constrs", tuple(constrs)),
        ]
        sections.extend(extra.items())
        return Probe("teacher", site, tuple(sections))

    def violate(name):
        if name not in raised:
            raised.add(name)
            yield Event(name)

    def mut_options(allow_fresh=True):
        opts = list(mutables)
        if allow_fresh and len(mutables) < len(MUTABLE_NAMES):
            opts.append(VarId(MUTABLE_NAMES[len(mutables)], "mutable"))
        return opts

    def note_mutable(v):
        if v not in mutables:
            mutables.append(v)

    def param_options(allow_fresh=True):
        opts = list(params)
        if cs.use_params and allow_fresh and len(params) < len(PARAM_NAMES):
            opts.append(VarId(PARAM_NAMES[len(params)], "parameter"))
        return opts

    def note_param(v):
        if v not in params:
            params.append(v)

    def fresh_meta(bound_type="free"):
        m = MetaVar(f"t{len(metas)}", bound_type)
        metas.append(m)
        return m

    def choose_var(site):
        opts = mut_options()
        v = yield Choose(mk_probe(site),
                         tuple(Choice(v.name, v) for v in opts))
        note_mutable(v)
        return v

    def choose_const(site, allow_meta=False, positive=False):
        """A constant source: a metavariable to be pinned by abduction
        later (listed first: it can always be made to work), an available
        literal, or a parameter."""
        opts: list[Choice] = []
        if allow_meta:
            opts.append(Choice("c?", ("meta", None)))
        for c in cs.available_consts:
            if positive and c <= 0:
                continue
            opts.append(Choice(str(c), ("lit", c)))
        if not positive:
            for pv in param_options():
                opts.append(Choice(pv.name, ("param", pv)))
        if not opts:
            raise StrategyFailure("no constant available")
        kind, val = yield Choose(mk_probe(site), tuple(opts))
        if kind == "lit":
            return LinExpr.of(val)
        if kind == "param":
            note_param(val)
            return LinExpr.var(val)
        return LinExpr.meta(fresh_meta())

    # Lower-bound shapes first: they stay inductive under the increment
    # templates that dominate generated bodies.
    RELS = (">=", ">", "<=", "<", "==", "!=")

    def eq_guard_check(f, place):
        """Early eq-only detection for a freshly refined non-init formula."""
        if cs.eq_only_for_init and _formula_has_eq(f):
            yield from violate("eq-only-for-init")

    # -- guard ---------------------------------------------------------------
    def refine_guard():
        nonlocal guard
        t = cs.loop_guard_template
        if t == "star":
            return
        v = yield from choose_var("guard.var")
        if t in ("lt_const", "le_const"):
            bound = yield from choose_const("guard.bound")
        else:
            opts = [o for o in mut_options() if o != v]
            opts += [p for p in param_options()]
            if not opts:
                raise StrategyFailure("no second guard variable")
            w = yield Choose(mk_probe("guard.var2"),
                             tuple(Choice(o.name, o) for o in opts))
            if w.kind == "parameter":
                note_param(w)
            else:
                note_mutable(w)
            bound = LinExpr.var(w)
        op = "<" if t in ("lt_const", "lt_var") else "<="
        g = normalize_atom(LinExpr.var(v), op, bound)
        if not isinstance(g, Atom):
            raise StrategyFailure("degenerate guard")
        guard = g

    # -- invariant parts ------------------------------------------------------
    def refine_inv_lin():
        nonlocal inv_lin
        n = cs.num_preserved_term_vars
        if n is None:
            return
        chosen: list = []
        coeffs: list[int] = []
        for i in range(n):
            opts = [o for o in mut_options() if o not in chosen]
            if not opts:
                raise StrategyFailure("not enough variables")
            v = yield Choose(mk_probe(f"inv_lin.var{i}"),
                             tuple(Choice(o.name, o) for o in opts))
            note_mutable(v)
            chosen.append(v)
            pool = (1, 2, 3) if i == 0 else (1, 2, 3, -1, -2, -3)
            a = yield Choose(mk_probe(f"inv_lin.coeff{i}"),
                             tuple(Choice(str(k), k) for k in pool))
            coeffs.append(a)
        t = LinExpr.make({v: a for v, a in zip(chosen, coeffs)})
        if guard is not None:
            # a guard whose variable part is a multiple of a preserved
            # combination never changes truth: the loop either cannot be
            # entered or cannot terminate
            gvars = LinExpr.make(dict(guard.expr.coeffs))
            for k in (1, 2, 3):
                if gvars == t.scale(k) or gvars == t.scale(-k):
                    raise StrategyFailure("guard frozen by linear invariant")
        c = fresh_meta()
        f = eq0(t - LinExpr.meta(c))
        if not isinstance(f, Atom):
            raise StrategyFailure("degenerate linear invariant")
        inv_lin = f
        yield from eq_guard_check(f, "inv_lin")

    def refine_atom(site, first_main=False):
        """One comparison: var-vs-const, var-vs-var, or (for the main
        invariant) the loop guard or a relaxed copy of it.  The guard
        variants come first: with the guard as a premise they are the
        easiest disjuncts to keep inductive."""
        kinds = [Choice("var ? const", "vc"), Choice("var ? var", "vv")]
        if site.startswith("inv_main") and guard is not None:
            kinds = [Choice("relaxed guard", "relaxed"),
                     Choice("use guard", "guard")] + kinds
        if first_main is False and site.startswith("inv_main"):
            kinds = kinds[1:] + kinds[:1]    # vary the default per disjunct
        kind = yield Choose(mk_probe(f"{site}.template"), tuple(kinds))
        if kind == "guard":
            return guard
        if kind == "relaxed":
            m = fresh_meta("upper")
            constrs.append(normalize_atom(LinExpr.meta(m), ">=", LinExpr.of(1)))
            f = ge0(guard.expr + LinExpr.meta(m))
            if not isinstance(f, Atom):
                raise StrategyFailure("degenerate relaxed guard")
            return f
        op = yield Choose(mk_probe(f"{site}.rel"),
                          tuple(Choice(r, r) for r in RELS))
        v = yield from choose_var(f"{site}.var")
        if kind == "vc":
            rhs = yield from choose_const(f"{site}.const", allow_meta=True)
        else:
            opts = [o for o in mut_options() if o != v] + param_options()
            if not opts:
                raise StrategyFailure("no second variable")
            w = yield Choose(mk_probe(f"{site}.var2"),
                             tuple(Choice(o.name, o) for o in opts))
            if w.kind == "parameter":
                note_param(w)
            else:
                note_mutable(w)
            rhs = LinExpr.var(w)
        f = normalize_atom(LinExpr.var(v), op, rhs)
        if isinstance(f, (TrueF,)) or f == ge0(LinExpr.of(-1)):
            raise StrategyFailure("degenerate atom")
        return f

    def refine_inv_main():
        nonlocal inv_main
        n = cs.num_inv_main_disjuncts
        if n is None:
            return
        parts = []
        for i in range(n):
            f = yield from refine_atom("inv_main", first_main=(i == 0))
            if f in parts:
                raise StrategyFailure("duplicate main disjunct")
            parts.append(f)
        inv_main = disj(parts)
        if isinstance(inv_main, (TrueF,)):
            raise StrategyFailure("degenerate main invariant")
        yield from eq_guard_check(inv_main, "inv_main")

    def refine_inv_aux():
        nonlocal inv_aux
        n = cs.num_inv_aux_conjuncts
        if n is None:
            return
        parts = []
        for i in range(n):
            f = yield from refine_atom("inv_aux")
            parts.append(f)
        inv_aux = conj(parts)
        if isinstance(inv_aux, (TrueF,)):
            raise StrategyFailure("degenerate aux invariant")
        yield from eq_guard_check(inv_aux, "inv_aux")

    def invariant():
        return conj([f for f in (inv_lin, inv_aux, inv_main)
                     if f is not None])

    # -- body ----------------------------------------------------------------
    def lin_combo() -> Optional[LinExpr]:
        if inv_lin is None:
            return None
        # inv_lin is  sum a_i v_i - c == 0; the variable part must stay
        # constant through the body.
        return LinExpr.make(dict(inv_lin.expr.coeffs))

    def delta_of(instr: Assign, combo: LinExpr) -> Optional[LinExpr]:
        cm = dict(combo.coeffs)
        a = cm.get(instr.target, 0)
        if a == 0:
            return LinExpr.of(0)
        return (instr.expr - LinExpr.var(instr.target)).scale(a)

    def completion_options(combo, delta, avoid=None):
        """Assignments v := v +- k that cancel the accumulated drift of
        the preserved combination (constants computed, not sampled).
        `avoid` skips the variable of the instruction that produced the
        drift: undoing it in place would make the pair a no-op."""
        out = []
        if combo is None or not delta.is_ground or delta.const == 0:
            return out
        d = delta.const
        for v, a in combo.coeffs:
            if v == avoid:
                continue
            if d % a == 0:
                k = -(d // a)
                if k > 0:
                    out.append(("incr", v, k))
                elif k < 0:
                    out.append(("decr", v, -k))
        return out

    def refine_instr(site, combo, delta, allow_skip=True, avoid=None):
        """Returns (instr or None, new delta).  None means the segment
        closed (skip chosen).  Drift-balancing completions come first and
        skip right after: a balanced short body is the default path."""
        combo_vars = set(combo.vars()) if combo is not None else set()
        opts: list[Choice] = []
        for t, v, k in completion_options(combo, delta, avoid):
            opts.append(Choice(f"balance: {v.name} {'+' if t == 'incr' else '-'}= {k}",
                               ("complete", t, v, k)))
        if allow_skip:
            opts.append(Choice("skip", ("skip",)))
        order = ("incr", "decr", "add_var", "var_assign", "const_minus",
                 "const_assign")
        for t in order:
            if t in cs.assignment_templates:
                opts.append(Choice(t, ("tmpl", t)))
        picked = yield Choose(mk_probe(f"{site}.template"), tuple(opts))
        if picked[0] == "skip":
            return None, delta
        if picked[0] == "complete":
            _, t, v, k = picked
            if t not in cs.assignment_templates:
                yield from violate("assignment-templates")
            templates_used.add(t)
            instr = Assign(v, LinExpr.var(v) + LinExpr.of(k if t == "incr" else -k))
            nd = delta + (delta_of(instr, combo) or LinExpr.of(0))
            return instr, nd
        t = picked[1]
        templates_used.add(t)
        if t in ("incr", "decr"):
            target_opts = mut_options()
        else:
            # templates whose drift is variable-valued can never restore a
            # preserved combination: offer them only off the combination
            target_opts = [o for o in mut_options() if o not in combo_vars]
        if not target_opts:
            raise StrategyFailure("no assignable variable for template")
        v = yield Choose(mk_probe(f"{site}.target"),
                         tuple(Choice(o.name, o) for o in target_opts))
        note_mutable(v)
        if t == "const_assign":
            e = yield from choose_const(f"{site}.const")
        elif t == "var_assign":
            opts2 = [o for o in mut_options() if o != v] + param_options()
            if not opts2:
                raise StrategyFailure("no source variable")
            w = yield Choose(mk_probe(f"{site}.source"),
                             tuple(Choice(o.name, o) for o in opts2))
            (note_param if w.kind == "parameter" else note_mutable)(w)
            e = LinExpr.var(w)
        elif t in ("incr", "decr"):
            d = yield from choose_const(f"{site}.amount", positive=True)
            e = LinExpr.var(v) + (d if t == "incr" else -d)
        elif t == "add_var":
            opts2 = [o for o in mut_options() if o != v] + param_options()
            if not opts2:
                raise StrategyFailure("no source variable")
            w = yield Choose(mk_probe(f"{site}.source"),
                             tuple(Choice(o.name, o) for o in opts2))
            (note_param if w.kind == "parameter" else note_mutable)(w)
            e = LinExpr.var(v) + LinExpr.var(w)
        else:   # const_minus: v := c - w
            c = yield from choose_const(f"{site}.const")
            opts2 = [o for o in mut_options() if o != v] + param_options()
            if not opts2:
                raise StrategyFailure("no source variable")
            w = yield Choose(mk_probe(f"{site}.source"),
                             tuple(Choice(o.name, o) for o in opts2))
            (note_param if w.kind == "parameter" else note_mutable)(w)
            e = c - LinExpr.var(w)
        instr = Assign(v, e)
        if combo is not None:
            d2 = delta_of(instr, combo)
            if d2 is None or not (delta + d2).is_ground:
                # var-valued drift can never cancel back to a constant
                raise StrategyFailure("linear part broken by assignment")
            return instr, delta + d2
        return instr, delta

    def refine_segment(site, combo, delta, min_len=0, max_len=3,
                       require_balanced=False):
        instrs = []
        last_target = None
        while len(instrs) < max_len:
            allow_skip = len(instrs) >= min_len
            instr, delta = yield from refine_instr(
                f"{site}.{len(instrs)}", combo, delta, allow_skip,
                avoid=last_target)
            if instr is None:
                break
            instrs.append(instr)
            last_target = instr.target
        if require_balanced and combo is not None and \
                not (delta.is_ground and delta.const == 0):
            raise StrategyFailure("linear part not preserved")
        return instrs, delta

    def refine_body():
        combo = lin_combo()
        zero = LinExpr.of(0)
        if not cs.has_conditional:
            instrs, _ = yield from refine_segment(
                "body", combo, zero, min_len=1, max_len=4,
                require_balanced=True)
            return seq(instrs)
        pre, d_pre = yield from refine_segment("body.pre", combo, zero,
                                               max_len=2)
        if cs.has_cond_guard:
            op = yield Choose(mk_probe("body.cond.rel"),
                              tuple(Choice(r, r) for r in RELS))
            cv = yield from choose_var("body.cond.var")
            rhs = yield from choose_const("body.cond.const")
            cond = normalize_atom(LinExpr.var(cv), op, rhs)
            if not isinstance(cond, (Atom, Or)):
                raise StrategyFailure("degenerate branch condition")
            yield from eq_guard_check(cond, "cond")
        else:
            cond = None
        then_i, d_then = yield from refine_segment(
            "body.then", combo, d_pre, min_len=1, max_len=2)
        if cs.has_else_branch:
            else_i, d_else = yield from refine_segment(
                "body.else", combo, d_pre, min_len=1, max_len=2)
        else:
            else_i, d_else = [], d_pre
        if combo is not None and d_then != d_else:
            raise StrategyFailure("branches drift the linear part apart")
        tail, d_end = yield from refine_segment("body.tail", combo, d_then,
                                                max_len=2)
        if combo is not None and not (d_end.is_ground and d_end.const == 0):
            raise StrategyFailure("linear part not preserved")
        cond_stmt = If(cond, seq(then_i),
                       seq(else_i) if cs.has_else_branch else None)
        body = seq(pre + [cond_stmt] + tail)
        if isinstance(body, Skip):
            raise StrategyFailure("empty body")
        return body

    # -- obligation checkpoints ----------------------------------------------
    def viable_constraint(s) -> bool:
        return s not in constrs and meta_constraints_sat(constrs + [s])

    def close_obligation(site, builder, rounds=4):
        for _ in range(rounds):
            to_prove = builder()
            res = abduct(to_prove)
            if res.valid:
                return
            meta_suggs = [s for s in res.suggestions
                          if is_meta_only(s) and viable_constraint(s)][:8]
            if not meta_suggs:
                raise StrategyFailure(f"cannot close {site}")
            pick = yield Choose(
                mk_probe(f"{site}.constraint", obligation=to_prove),
                tuple(Choice(render_formula(s), s) for s in meta_suggs))
            constrs.append(pick)
        raise StrategyFailure(f"{site} did not converge")

    # -- post ----------------------------------------------------------------
    def consequence_suggestions():
        atoms = []
        if guard is not None:
            ng = negate(guard)
            if isinstance(ng, Atom):
                atoms.append(ng)
        for f in (inv_lin, inv_aux):
            if isinstance(f, Atom):
                atoms.append(f)
            elif isinstance(f, And):
                atoms.extend(a for a in f.args if isinstance(a, Atom))
        for f in post_parts:
            nf = negate(f)
            if isinstance(nf, Atom):
                atoms.append(nf)
        for c in constrs:
            if isinstance(c, Atom):
                atoms.append(c)
        res = fm_saturate(atoms, budget=24)
        if res.contradiction:
            return []
        out = [f for f in res.facts
               if f.expr.coeffs][:8]
        return out

    def refine_post():
        for i in range(cs.num_post_disjuncts):
            last = i == cs.num_post_disjuncts - 1
            if last:
                suggs = consequence_suggestions()
                kinds = [Choice(f"entailed: {render_formula(s)}", ("s", s))
                         for s in suggs]
                kinds += [Choice("var ? const", ("t", "vc")),
                          Choice("var ? var", ("t", "vv"))]
                picked = yield Choose(mk_probe("post.template"), tuple(kinds))
                if picked[0] == "s":
                    f = picked[1]
                else:
                    f = yield from refine_atom("post")
            else:
                f = yield from refine_atom("post")
            post_parts.append(f)
            yield from eq_guard_check(f, "post")

    # -- init ----------------------------------------------------------------
    def refine_init():
        for v in list(mutables):
            opts = [Choice("unconstrained", ("skip",))]
            for c in cs.available_consts:
                opts.append(Choice(f"{v.name} == {c}", ("eq", LinExpr.of(c))))
            for pv in param_options(allow_fresh=False):
                opts.append(Choice(f"{v.name} == {pv.name}",
                                   ("eq", LinExpr.var(pv))))
            for c in cs.available_consts[:3]:
                opts.append(Choice(f"{v.name} >= {c}", ("ge", LinExpr.of(c))))
                opts.append(Choice(f"{v.name} <= {c}", ("le", LinExpr.of(c))))
            picked = yield Choose(mk_probe(f"init.{v.name}"), tuple(opts))
            if picked[0] == "skip":
                continue
            op = {"eq": "==", "ge": ">=", "le": "<="}[picked[0]]
            f = normalize_atom(LinExpr.var(v), op, picked[1])
            if not isinstance(f, (Atom, Or)):
                raise StrategyFailure("degenerate init conjunct")
            init_parts.append(f)

        def init_viable(s) -> bool:
            if is_meta_only(s):
                return viable_constraint(s)
            if s in init_parts:
                return False
            atoms = [a for f in init_parts + [s] + list(constrs)
                     for a in _atoms_of(f)]
            return not fm_saturate(atoms, budget=24).contradiction

        for _ in range(5):
            to_prove = implies(conj(list(constrs) + init_parts), invariant())
            res = abduct(to_prove)
            if res.valid:
                _normalize_init()
                return
            suggs = [s for s in res.suggestions if init_viable(s)][:8]
            if not suggs:
                raise StrategyFailure("cannot establish the invariant initially")
            pick = yield Choose(
                mk_probe("init.missing", obligation=to_prove),
                tuple(Choice(render_formula(s), s) for s in suggs))
            if is_meta_only(pick):
                constrs.append(pick)
            else:
                init_parts.append(pick)
        raise StrategyFailure("init did not converge")

    def _normalize_init():
        """Merge opposite inequality pairs into equalities and drop
        subsumed conjuncts (abduction closure tends to add both sides of
        a pinned equality, which would trip the redundancy check)."""
        changed = True
        while changed:
            changed = False
            for i in range(len(init_parts)):
                a = init_parts[i]
                if not (isinstance(a, Atom) and a.rel is Rel.GE):
                    continue
                for j in range(i + 1, len(init_parts)):
                    b = init_parts[j]
                    if isinstance(b, Atom) and b.rel is Rel.GE \
                            and (a.expr + b.expr) == LinExpr.of(0):
                        merged = eq0(a.expr)
                        if isinstance(merged, Atom):
                            init_parts[i] = merged
                            del init_parts[j]
                            changed = True
                            break
                if changed:
                    break
        drop = True
        while drop:
            drop = False
            for i in range(len(init_parts)):
                rest = init_parts[:i] + init_parts[i + 1:]
                if rest and fm_valid(implies(conj(rest), init_parts[i])):
                    del init_parts[i]
                    drop = True
                    break

    # -- main flow -------------------------------------------------------------
    yield from refine_guard()
    yield from refine_inv_lin()
    yield from refine_inv_aux()
    yield from refine_inv_main()

    # Early satisfiability screen on the conjunctive skeleton (disjunctive
    # main parts participate only when atomic); full check runs at the end.
    skeleton = []
    for f in (inv_lin, inv_main):
        if isinstance(f, Atom):
            skeleton.append(f)
    if inv_aux is not None:
        skeleton.extend(_atoms_of(inv_aux) if not isinstance(inv_aux, Or)
                        else [])
    if skeleton and fm_saturate(skeleton, budget=16).contradiction:
        raise StrategyFailure("invariant unsatisfiable")

    body = yield from refine_body()

    def preserved():
        pre = ([guard] if guard is not None else []) + list(constrs)
        return implies(conj(pre + [invariant()]), wlp(body, invariant()))

    yield from close_obligation("preserved", preserved)

    yield from refine_post()

    def post_ob():
        pre = ([negate(guard)] if guard is not None else []) + list(constrs)
        return implies(conj(pre + [invariant()]), disj(post_parts))

    yield from close_obligation("implies_post", post_ob)
    yield from refine_init()

    # -- metavariable refinement ------------------------------------------------
    def subst_everywhere(m, val):
        nonlocal inv_lin, inv_main, inv_aux, guard
        if inv_lin is not None:
            inv_lin = subst_meta(inv_lin, m, val)
        if inv_main is not None:
            inv_main = subst_meta(inv_main, m, val)
        if inv_aux is not None:
            inv_aux = subst_meta(inv_aux, m, val)
        for i, f in enumerate(post_parts):
            post_parts[i] = subst_meta(f, m, val)
        for i, f in enumerate(init_parts):
            init_parts[i] = subst_meta(f, m, val)
        for i, f in enumerate(constrs):
            constrs[i] = subst_meta(f, m, val)

    for m in metas:
        try:
            val = abduct_refinement(m, constrs)
        except AbductionError as exc:
            raise StrategyFailure(str(exc))
        subst_everywhere(m, val)

    for part in (inv_lin, inv_main, inv_aux):
        if part is not None and isinstance(part, (TrueF,)):
            raise StrategyFailure("invariant part degenerated")
    if any(isinstance(f, TrueF) for f in post_parts):
        raise StrategyFailure("post disjunct degenerated")
    init_parts[:] = [f for f in init_parts if not isinstance(f, TrueF)]

    # -- assemble and run the final checks ---------------------------------------
    all_vars = tuple(sorted(set(mutables) | set(params) |
                            stmt_vars(body), key=lambda v: v.name))
    assigned = {v.name for v in modified_vars(body)}
    from .formulas import VarId as _V
    all_vars = tuple(_V(v.name, "mutable" if v.name in assigned else "parameter")
                     for v in all_vars)
    inv_parts = tuple(f for f in (inv_lin, inv_aux, inv_main) if f is not None)
    task = LoopTask(conj(init_parts), guard, body, disj(post_parts),
                    all_vars, inv_parts)

    structure = (
        ("inv_lin_terms", (len(inv_lin.expr.coeffs)
                           if isinstance(inv_lin, Atom) else None)),
        ("main_disjuncts", (len(inv_main.args) if isinstance(inv_main, Or)
                            else 1 if inv_main is not None else None)),
        ("aux_conjuncts", (len(inv_aux.args) if isinstance(inv_aux, And)
                           else 1 if inv_aux is not None else None)),
        ("post_disjuncts", len(post_parts)),
        ("has_conditional", cs.has_conditional),
        ("has_else_branch", cs.has_else_branch),
        ("has_cond_guard", cs.has_cond_guard),
        ("guard_template", cs.loop_guard_template),
        ("templates_used", tuple(sorted(templates_used))),
        ("params_used", any(v.kind == "parameter" for v in all_vars)),
    )
    problem = ReferenceProblem(task, inv_lin, inv_main, inv_aux, cs,
                               frozenset(), structure)

    hard = check_hard(problem)
    if hard is not None:
        raise StrategyFailure(f"hard constraint violated: {hard}")

    final = count_soft_violations(problem, cs)
    if not raised <= final:
        raise StrategyFailure("early violation vanished")
    for name in sorted(final - raised):
        yield from violate(name)
    return replace(problem, violations=final)


def _formula_has_eq(f: Formula) -> bool:
    if isinstance(f, Atom):
        return f.rel is Rel.EQ
    if isinstance(f, (And, Or)):
        return any(_formula_has_eq(a) for a in f.args)
    return False


def _atoms_of(f: Formula):
    if isinstance(f, Atom):
        return [f]
    if isinstance(f, (And, Or)):
        out = []
        for a in f.args:
            out.extend(_atoms_of(a))
        return out
    return []


# ---------------------------------------------------------------------------
# Final random transformations

DEFAULT_TRANSFORM_PROBS = {
    "add-useless-loop-guard": 0.25,
    "add-useless-init": 0.25,
    "add-useless-post": 0.25,
    "add-useless-cond": 0.25,
    "rearrange-commutative": 0.50,
    "move-conditional": 0.25,
    "shuffle-instrs": 0.25,
    "randomize-comparisons": 0.50,
    "move-param-assum": 0.25,
    "make-post-assums": 0.25,
    "make-init-instrs": 0.25,
    "weaken-post": 0.25,
}


def _random_atom(p: ReferenceProblem, rng: random.Random,
                 no_eq=True) -> Optional[Formula]:
    if not p.task.vars:
        return None
    v = rng.choice(p.task.vars)
    op = rng.choice(("<", "<=", ">", ">=") if no_eq
                    else ("<", "<=", ">", ">=", "==", "!="))
    c = rng.choice(p.constraints.available_consts)
    f = normalize_atom(LinExpr.var(v), op, LinExpr.of(c))
    return f if isinstance(f, (Atom, Or)) else None


def _t_add_useless_loop_guard(p, rng):
    if p.task.guard is not None:
        return None
    g = _random_atom(p, rng)
    if not isinstance(g, Atom):
        return None
    return replace(p, task=replace(p.task, guard=g))


def _t_add_useless_init(p, rng):
    a = _random_atom(p, rng)
    if a is None:
        return None
    parts = (list(p.task.init.args) if isinstance(p.task.init, And)
             else [] if isinstance(p.task.init, TrueF) else [p.task.init])
    pos = rng.randrange(len(parts) + 1)
    parts.insert(pos, a)
    return replace(p, task=replace(p.task, init=conj(parts)))


def _t_add_useless_post(p, rng):
    a = _random_atom(p, rng)
    if a is None:
        return None
    parts = (list(p.task.post.args) if isinstance(p.task.post, Or)
             else [p.task.post])
    parts.append(a)
    return replace(p, task=replace(p.task, post=disj(parts)))


def _t_add_useless_cond(p, rng):
    c = _random_atom(p, rng)
    if not isinstance(c, Atom):
        return None
    return replace(p, task=replace(p.task, body=If(c, p.task.body, None)))


def _shuffle_formula(f, rng):
    if isinstance(f, And):
        args = [(_shuffle_formula(a, rng)) for a in f.args]
        rng.shuffle(args)
        return And(tuple(args))
    if isinstance(f, Or):
        args = [(_shuffle_formula(a, rng)) for a in f.args]
        rng.shuffle(args)
        return Or(tuple(args))
    return f


def _t_rearrange_commutative(p, rng):
    task = p.task
    new_task = replace(
        task,
        init=_shuffle_formula(task.init, rng),
        post=_shuffle_formula(task.post, rng),
        guard=task.guard if task.guard is None
        else _shuffle_formula(task.guard, rng),
        invariants=tuple(_shuffle_formula(f, rng) for f in task.invariants))
    new_main = (_shuffle_formula(p.inv_main, rng)
                if p.inv_main is not None else None)
    new_aux = (_shuffle_formula(p.inv_aux, rng)
               if p.inv_aux is not None else None)
    invs = tuple(f for f in (p.inv_lin, new_aux, new_main) if f is not None)
    return replace(p, task=replace(new_task, invariants=invs),
                   inv_main=new_main, inv_aux=new_aux)


def _stmt_reads_writes(s: Stmt):
    return stmt_vars(s), modified_vars(s)


def _independent(a: Stmt, b: Stmt) -> bool:
    ra, wa = _stmt_reads_writes(a)
    rb, wb = _stmt_reads_writes(b)
    return not (wa & rb or wb & ra or wa & wb)


def _t_move_conditional(p, rng):
    body = p.task.body
    if not isinstance(body, Seq):
        return None
    stmts = list(body.stmts)
    idxs = [i for i, s in enumerate(stmts) if isinstance(s, If)]
    if not idxs:
        return None
    i = rng.choice(idxs)
    j = i + rng.choice((-1, 1))
    if not (0 <= j < len(stmts)) or isinstance(stmts[j], If):
        return None
    if not _independent(stmts[i], stmts[j]):
        return None
    stmts[i], stmts[j] = stmts[j], stmts[i]
    return replace(p, task=replace(p.task, body=seq(stmts)))


def _t_shuffle_instrs(p, rng):
    body = p.task.body
    if not isinstance(body, Seq):
        return None
    stmts = list(body.stmts)
    runs = []
    i = 0
    while i < len(stmts):
        j = i
        while j < len(stmts) and isinstance(stmts[j], Assign):
            j += 1
        if j - i >= 2:
            runs.append((i, j))
        i = max(j, i + 1)
    if not runs:
        return None
    a, b = rng.choice(runs)
    chunk = stmts[a:b]
    rng.shuffle(chunk)
    stmts[a:b] = chunk
    return replace(p, task=replace(p.task, body=seq(stmts)))


def _all_atoms_of_task(task: LoopTask):
    out = []

    def visit_formula(f):
        if isinstance(f, Atom):
            out.append(f)
        elif isinstance(f, (And, Or)):
            for a in f.args:
                visit_formula(a)

    def visit_stmt(s):
        if isinstance(s, If):
            if s.cond is not None:
                visit_formula(s.cond)
            visit_stmt(s.then)
            if s.els is not None:
                visit_stmt(s.els)
        elif isinstance(s, Seq):
            for sub in s.stmts:
                visit_stmt(sub)
        elif isinstance(s, Assume):
            visit_formula(s.cond)

    visit_formula(task.init)
    if task.guard is not None:
        visit_formula(task.guard)
    visit_stmt(task.body)
    visit_formula(task.post)
    for f in task.invariants:
        visit_formula(f)
    return out


def _t_randomize_comparisons(p, rng):
    styles = dict(p.render.comparison_styles)
    for a in _all_atoms_of_task(p.task):
        roll = rng.random()
        if roll < 0.25:
            styles[a] = "strict"
        elif roll < 0.4:
            styles[a] = "swap"
        elif roll < 0.5:
            styles[a] = "strict+swap"
    render = RenderStyle(p.render.post_assume_split,
                         p.render.init_as_instrs, styles)
    return replace(p, render=render)


def _t_move_param_assum(p, rng):
    task = p.task
    params = {v.name for v in task.vars if v.kind == "parameter"}
    if not params:
        return None
    parts = (list(task.init.args) if isinstance(task.init, And)
             else [task.init])
    cand = [i for i, f in enumerate(parts)
            if isinstance(f, Atom)
            and {v.name for v in free_vars(f)} <= params
            and {v.name for v in free_vars(f)}]
    if not cand:
        return None
    i = rng.choice(cand)
    moved = parts.pop(i)
    post_parts = (list(task.post.args) if isinstance(task.post, Or)
                  else [task.post])
    post_parts.append(negate(moved))
    return replace(p, task=replace(task, init=conj(parts),
                                   post=disj(post_parts)))


def _t_make_post_assums(p, rng):
    post = p.task.post
    n = len(post.args) if isinstance(post, Or) else 1
    if n < 2:
        return None
    split = rng.randrange(1, n)
    render = RenderStyle(split, p.render.init_as_instrs,
                         p.render.comparison_styles)
    return replace(p, render=render)


def _t_make_init_instrs(p, rng):
    render = RenderStyle(p.render.post_assume_split, True,
                         p.render.comparison_styles)
    return replace(p, render=render)


def _weakenings(f: Formula, rng) -> Optional[Formula]:
    if isinstance(f, Atom) and f.rel is Rel.GE:
        k = rng.choice((1, 2, 3))
        options = [ge0(f.expr + LinExpr.of(k))]
        # e >= 0 also weakens to e != -1 (e.g. x > 0 into x != 0)
        neq = disj([ge0(f.expr), ge0((-f.expr) + LinExpr.of(-2))])
        options.append(neq)
        pick = rng.choice(options)
        return pick if not isinstance(pick, TrueF) else None
    if isinstance(f, Atom) and f.rel is Rel.EQ:
        return rng.choice((ge0(f.expr), ge0(-f.expr)))
    return None


def _t_weaken_post(p, rng):
    task = p.task
    parts = (list(task.post.args) if isinstance(task.post, Or)
             else [task.post])
    idxs = [i for i, f in enumerate(parts) if isinstance(f, Atom)]
    if not idxs:
        return None
    i = rng.choice(idxs)
    w = _weakenings(parts[i], rng)
    if w is None:
        return None
    parts[i] = w
    return replace(p, task=replace(task, post=disj(parts)))


TRANSFORMS = (
    ("add-useless-loop-guard", _t_add_useless_loop_guard),
    ("add-useless-init", _t_add_useless_init),
    ("add-useless-post", _t_add_useless_post),
    ("add-useless-cond", _t_add_useless_cond),
    ("rearrange-commutative", _t_rearrange_commutative),
    ("move-conditional", _t_move_conditional),
    ("shuffle-instrs", _t_shuffle_instrs),
    ("randomize-comparisons", _t_randomize_comparisons),
    ("move-param-assum", _t_move_param_assum),
    ("make-post-assums", _t_make_post_assums),
    ("make-init-instrs", _t_make_init_instrs),
    ("weaken-post", _t_weaken_post),
)


def transform(p: ReferenceProblem, rng: random.Random,
              probs: Optional[dict] = None) -> ReferenceProblem:
    """Apply the final transformations in order, each firing with its
    configured probability.  An application is cancelled when it breaks a
    hard requirement or changes the soft-violation set."""
    table = dict(DEFAULT_TRANSFORM_PROBS)
    if probs:
        table.update(probs)
    current = p
    for name, fn in TRANSFORMS:
        if rng.random() >= table[name]:
            continue
        cand = fn(current, rng)
        if cand is None:
            continue
        cand = replace(cand, violations=current.violations)
        try:
            task_ok = check_hard(cand) is None
        except Exception:
            task_ok = False
        if not task_ok:
            continue
        if count_soft_violations(cand, cand.constraints) != current.violations:
            continue
        current = cand
    return current


# ---------------------------------------------------------------------------
# Top level

def teach(seed: int, sims: int = 16, greedy: bool = False,
          marginals: Optional[dict] = None,
          transform_probs: Optional[dict] = None,
          no_transform: bool = False,
          max_attempts: int = 400) -> ReferenceProblem:
    """Generate one verified problem: sample constraints, search the
    generation strategy, then randomly transform.  Deterministic per seed;
    failed episodes retry with fresh constraints."""
    from .mcts import greedy_rollout, solve_with_search

    for attempt in range(max_attempts):
        rng = random.Random(seed * 1_000_003 + attempt)
        cs = sample_constraints(rng, marginals)
        st = start(make_teacher(cs))
        if greedy:
            out = greedy_rollout(st, step_budget=256)
        else:
            out = solve_with_search(st, sims=sims, step_budget=256)
        if not out.succeeded:
            continue
        problem: ReferenceProblem = out.state.result
        problem = replace(problem, seed=seed)
        if not no_transform:
            problem = transform(problem, rng, transform_probs)
        return problem
    raise TeacherGenerationError(
        f"no valid problem after {max_attempts} attempts (seed {seed})")
