"""Abduction for linear integer arithmetic via Fourier-Motzkin saturation.

To prove a formula valid, each CNF clause is negated into a set of atomic
facts and consequences are derived by linearly combining inequalities with
positive multipliers so as to cancel a variable.  Deriving `0 >= k` with
k > 0 closes the clause.  If a clause stays open, the negation of every
fact (original or derived) is offered as an abduction candidate: adding it
as an assumption provably closes that clause.

Metavariables ride along as opaque affine constants.  They are eliminated
like variables (a ground contradiction then holds for every metavariable
value), and a fact whose program variables all canceled but which still
carries metavariables becomes a candidate constraint on those constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Optional, Sequence

from .formulas import (
    And, Atom, CnfBudgetExceeded, FalseF, Formula, LinExpr, MetaVar, Rel,
    TrueF, VarId, eq0, ge0, to_cnf,
)

FM_FACT_BUDGET = 64
MAX_EQ_CASES = 16


class AbductionError(Exception):
    """Refinement failed: constraints unsatisfiable or bound missing."""


@dataclass(frozen=True)
class AbductionResult:
    valid: bool
    suggestions: tuple[Atom, ...] = ()


@dataclass(frozen=True)
class FMResult:
    contradiction: bool
    facts: tuple[Atom, ...] = ()
    exhausted: bool = False


def _as_ge_facts(atoms: Iterable[Atom]) -> Optional[list[Atom]]:
    """Split equalities, drop trivially true facts.  None = contradiction."""
    out: list[Atom] = []
    seen: set[Atom] = set()

    def push(f: Formula) -> bool:
        if isinstance(f, TrueF):
            return True
        if isinstance(f, FalseF):
            return False
        assert isinstance(f, Atom)
        if f not in seen:
            seen.add(f)
            out.append(f)
        return True

    for a in atoms:
        if a.rel is Rel.EQ:
            if not push(ge0(a.expr)) or not push(ge0(-a.expr)):
                return None
        else:
            if not push(ge0(a.expr)):
                return None
    return out


def _combine_pair(e1: LinExpr, e2: LinExpr, c1: dict, c2: dict):
    """Yield positive combinations of e1, e2 canceling one symbol.

    c1/c2 are precomputed {symbol: coeff} maps covering both variables
    and metavariables.
    """
    for k, a in c1.items():
        b = c2.get(k)
        if b is not None and (a > 0) != (b > 0):
            g = math.gcd(abs(a), abs(b))
            yield e1.scale(abs(b) // g) + e2.scale(abs(a) // g)


def _sym_map(e: LinExpr) -> dict:
    d = dict(e.coeffs)
    d.update(e.metas)
    return d


def fm_saturate(atoms: Sequence[Atom], budget: int = FM_FACT_BUDGET) -> FMResult:
    facts = _as_ge_facts(atoms)
    if facts is None:
        return FMResult(contradiction=True)
    seen = set(facts)
    maps = [_sym_map(f.expr) for f in facts]
    derived = 0
    i = 1
    # Pairwise worklist in insertion order; new facts are appended and
    # later paired against everything before them.
    while i < len(facts):
        fi = facts[i]
        mi = maps[i]
        for j in range(i):
            for combined in _combine_pair(facts[j].expr, fi.expr,
                                          maps[j], mi):
                f = ge0(combined)
                if isinstance(f, TrueF):
                    continue
                if isinstance(f, FalseF):
                    return FMResult(contradiction=True)
                assert isinstance(f, Atom)
                if f in seen:
                    continue
                seen.add(f)
                facts.append(f)
                maps.append(_sym_map(f.expr))
                derived += 1
                if derived >= budget:
                    return FMResult(False, tuple(facts), exhausted=True)
        i += 1
    return FMResult(False, tuple(facts))


def _negate_clause_cases(clause: Sequence[Atom]) -> Optional[list[list[Atom]]]:
    """Negate a clause into conjunctive fact sets.

    GE atoms negate to one atom; EQ atoms split into two strict cases, so
    the result is a small list of alternative fact sets (None when the
    case split would be too large).
    """
    eq_count = sum(1 for a in clause if a.rel is Rel.EQ)
    if 2 ** eq_count > MAX_EQ_CASES:
        return None
    cases: list[list[Atom]] = [[]]
    for a in clause:
        if a.rel is Rel.GE:
            neg = ge0((-a.expr) + LinExpr.of(-1))
            opts = [neg]
        else:
            opts = [ge0(a.expr + LinExpr.of(-1)),
                    ge0((-a.expr) + LinExpr.of(-1))]
        nxt = []
        for base in cases:
            for o in opts:
                if isinstance(o, FalseF):
                    continue            # this branch of the negation is empty
                add = [] if isinstance(o, TrueF) else [o]
                nxt.append(base + add)
        cases = nxt
    return cases


def _atom_sort_key(a: Atom):
    return (a.size(), str(a))


def _abduct_uncached(f: Formula, fm_budget: int) -> AbductionResult:
    try:
        clauses = to_cnf(f)
    except CnfBudgetExceeded:
        return AbductionResult(False, ())

    all_valid = True
    suggestions: list[Atom] = []
    sugg_seen: set[Atom] = set()
    for clause in clauses:
        cases = _negate_clause_cases(clause)
        if cases is None:
            all_valid = False
            continue
        open_facts: list[Atom] = []
        closed = True
        for case in cases:
            res = fm_saturate(case, budget=fm_budget)
            if res.contradiction:
                continue
            closed = False
            open_facts.extend(res.facts)
        if closed:
            continue
        all_valid = False
        for fact in open_facts:
            cand = ge0((-fact.expr) + LinExpr.of(-1))
            if isinstance(cand, Atom) and cand not in sugg_seen:
                sugg_seen.add(cand)
                suggestions.append(cand)

    if all_valid:
        return AbductionResult(True)
    suggestions.sort(key=_atom_sort_key)
    return AbductionResult(False, tuple(suggestions))


@lru_cache(maxsize=200_000)
def _abduct_cached(f: Formula, fm_budget: int) -> AbductionResult:
    return _abduct_uncached(f, fm_budget)


def abduct(f: Formula, fm_budget: int = FM_FACT_BUDGET) -> AbductionResult:
    """Prove f valid or suggest missing atomic assumptions."""
    return _abduct_cached(f, fm_budget)


def fm_valid(f: Formula, fm_budget: int = FM_FACT_BUDGET) -> bool:
    return abduct(f, fm_budget).valid


# ---------------------------------------------------------------------------
# Metavariable constraint handling

def _meta_to_var_atoms(constraints: Iterable[Formula]) -> Optional[list[Atom]]:
    """Recast metavariables as variables (for projection with full integer
    tightening).  None when some constraint is trivially false."""
    atoms: list[Atom] = []
    for c in constraints:
        parts = c.args if isinstance(c, And) else (c,)
        for p in parts:
            if isinstance(p, TrueF):
                continue
            if isinstance(p, FalseF):
                return None
            if not isinstance(p, Atom) or p.expr.coeffs:
                raise AbductionError(f"non-atomic or non-meta constraint: {p}")
            e = LinExpr.make({VarId(m.id): k for m, k in p.expr.metas},
                             p.expr.const)
            f = ge0(e) if p.rel is Rel.GE else eq0(e)
            if isinstance(f, FalseF):
                return None
            if isinstance(f, Atom):
                atoms.append(f)
    return atoms


def meta_constraints_sat(constraints: Iterable[Formula],
                         budget: int = 128) -> bool:
    """Satisfiability of a set of meta-only atoms (FM refutation check)."""
    atoms = _meta_to_var_atoms(constraints)
    if atoms is None:
        return False
    return not fm_saturate(atoms, budget=budget).contradiction


def abduct_refinement(m: MetaVar, constraints: Iterable[Formula],
                      bound_type: Optional[str] = None,
                      budget: int = 128) -> int:
    """Pick a concrete value for metavariable m from meta-only constraints.

    Projects the other metavariables out, reads off integer bounds on m,
    and resolves per bound type: upper bounds instantiate as low as
    possible, lower bounds as high as possible, free picks the smallest
    absolute value with ties on the nonnegative side.
    """
    bt = bound_type or m.bound_type
    atoms = _meta_to_var_atoms(constraints)
    if atoms is None:
        raise AbductionError(f"constraints on {m.id} are unsatisfiable")
    res = fm_saturate(atoms, budget=budget)
    if res.contradiction:
        raise AbductionError(f"constraints on {m.id} are unsatisfiable")

    target = VarId(m.id)
    lo = None
    hi = None
    for fact in res.facts:
        cm = fact.expr.coeff_map()
        if set(cm) != {target}:
            continue
        c = cm[target]
        k = fact.expr.const
        # c*m + k >= 0; after tightening c is +-1
        if c > 0:
            b = -(k // c)          # m >= ceil(-k/c)
            lo = b if lo is None else max(lo, b)
        else:
            b = k // (-c)          # m <= floor(k/-c)
            hi = b if hi is None else min(hi, b)
    if lo is not None and hi is not None and lo > hi:
        raise AbductionError(f"constraints on {m.id} are unsatisfiable")

    if bt == "upper":
        if lo is None:
            raise AbductionError(f"{m.id} has no lower bound to minimize to")
        return lo
    if bt == "lower":
        if hi is None:
            raise AbductionError(f"{m.id} has no upper bound to maximize to")
        return hi
    # free: smallest absolute value in [lo, hi], preferring nonnegative
    if lo is not None and lo > 0:
        return lo
    if hi is not None and hi < 0:
        return hi
    return 0
