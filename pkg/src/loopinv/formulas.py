"""Linear integer arithmetic formulas with placeholder constants.

Everything here is immutable and hashable.  Atoms are kept in a normal
form ``e >= 0`` / ``e == 0`` where ``e`` is an affine expression over
program variables and metavariables (unknown integer constants written
``c0?``, ``c1?``, ...).  Source comparisons (<, <=, >, >=, ==, !=) are
normalized at construction; ``!=`` survives only as a disjunction of two
strict inequalities.

Ground atoms (no variables, no metavariables) collapse to TRUE/FALSE.
Metavariable-free atoms are integer-tightened: coefficients are divided
by their gcd and the constant is floored, so e.g. ``2x >= 3`` and
``x >= 2`` normalize to the same atom.  Atoms carrying metavariables are
only divided by exact common factors; full tightening happens once the
metavariable is substituted by a concrete value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Union


@dataclass(frozen=True)
class VarId:
    """A program variable.  Identity is the name; `kind` is bookkeeping
    (`parameter` = never assigned anywhere in the task)."""

    name: str
    kind: str = field(default="mutable", compare=False)

    def __post_init__(self):
        if not self.name:
            raise ValueError("empty variable name")

    def __repr__(self):
        return self.name


@dataclass(frozen=True)
class MetaVar:
    """An unknown integer constant, refined later from accumulated
    constraints.  `bound_type` records how it occurs: as an upper bound
    (instantiate as low as possible), a lower bound (as high as possible),
    or free (smallest absolute value, ties to the nonnegative side)."""

    id: str
    bound_type: str = field(default="free", compare=False)

    def __repr__(self):
        return f"{self.id}?"


IntMap = Mapping[VarId, int]
MetaMap = Mapping[MetaVar, int]


def _gcd_all(values: Iterable[int]) -> int:
    g = 0
    for v in values:
        g = math.gcd(g, abs(v))
    return g


@dataclass(frozen=True)
class LinExpr:
    """Affine expression sum(a_i * x_i) + sum(b_j * m_j) + const.

    Zero coefficients are never stored; two expressions are equal iff
    their coefficient maps and constants are equal.  Stored as sorted
    tuples so instances hash.
    """

    coeffs: tuple[tuple[VarId, int], ...] = ()
    const: int = 0
    metas: tuple[tuple[MetaVar, int], ...] = ()

    @staticmethod
    def make(coeffs: IntMap | None = None, const: int = 0,
             metas: MetaMap | None = None) -> "LinExpr":
        cs = tuple(sorted(((v, c) for v, c in (coeffs or {}).items() if c != 0),
                          key=lambda p: p[0].name))
        ms = tuple(sorted(((m, c) for m, c in (metas or {}).items() if c != 0),
                          key=lambda p: p[0].id))
        return LinExpr(cs, const, ms)

    @staticmethod
    def var(v: VarId, coeff: int = 1) -> "LinExpr":
        return LinExpr.make({v: coeff})

    @staticmethod
    def of(k: int) -> "LinExpr":
        return LinExpr(const=k)

    @staticmethod
    def meta(m: MetaVar, coeff: int = 1) -> "LinExpr":
        return LinExpr.make(metas={m: coeff})

    def coeff_map(self) -> dict[VarId, int]:
        return dict(self.coeffs)

    def meta_map(self) -> dict[MetaVar, int]:
        return dict(self.metas)

    @property
    def is_ground(self) -> bool:
        return not self.coeffs and not self.metas

    def vars(self) -> tuple[VarId, ...]:
        return tuple(v for v, _ in self.coeffs)

    def meta_vars(self) -> tuple[MetaVar, ...]:
        return tuple(m for m, _ in self.metas)

    def __add__(self, other: "LinExpr") -> "LinExpr":
        cs = self.coeff_map()
        for v, c in other.coeffs:
            cs[v] = cs.get(v, 0) + c
        ms = self.meta_map()
        for m, c in other.metas:
            ms[m] = ms.get(m, 0) + c
        return LinExpr.make(cs, self.const + other.const, ms)

    def __neg__(self) -> "LinExpr":
        return self.scale(-1)

    def __sub__(self, other: "LinExpr") -> "LinExpr":
        return self + (-other)

    def scale(self, k: int) -> "LinExpr":
        if k == 0:
            return LinExpr.of(0)
        return LinExpr(tuple((v, c * k) for v, c in self.coeffs),
                       self.const * k,
                       tuple((m, c * k) for m, c in self.metas))

    def subst_var(self, x: VarId, e: "LinExpr") -> "LinExpr":
        cs = self.coeff_map()
        k = cs.pop(x, 0)
        if k == 0:
            return self
        base = LinExpr.make(cs, self.const, self.meta_map())
        return base + e.scale(k)

    def subst_meta(self, m: MetaVar, k: int) -> "LinExpr":
        ms = self.meta_map()
        c = ms.pop(m, 0)
        if c == 0:
            return self
        return LinExpr.make(self.coeff_map(), self.const + c * k, ms)

    def eval(self, env: Mapping[str, int],
             meta_env: Mapping[str, int] | None = None) -> int:
        total = self.const
        for v, c in self.coeffs:
            total += c * env[v.name]
        for m, c in self.metas:
            if meta_env is None or m.id not in meta_env:
                raise ValueError(f"unbound metavariable {m.id}")
            total += c * meta_env[m.id]
        return total

    def __str__(self):
        parts = []
        for v, c in self.coeffs:
            parts.append((c, v.name))
        for m, c in self.metas:
            parts.append((c, f"{m.id}?"))
        if not parts:
            return str(self.const)
        out = []
        for i, (c, name) in enumerate(parts):
            sign = "-" if c < 0 else ("+" if i > 0 else "")
            mag = abs(c)
            term = name if mag == 1 else f"{mag}*{name}"
            out.append(f"{sign}{term}" if i == 0 else f" {sign} {term}")
        s = "".join(out)
        if self.const > 0:
            s += f" + {self.const}"
        elif self.const < 0:
            s += f" - {-self.const}"
        return s


class Rel(Enum):
    GE = ">="
    EQ = "=="


@dataclass(frozen=True)
class Atom:
    """Normalized atomic constraint `expr >= 0` or `expr == 0`."""

    expr: LinExpr
    rel: Rel

    def __str__(self):
        return f"{self.expr} {'>=' if self.rel is Rel.GE else '=='} 0"

    @property
    def is_meta_free(self) -> bool:
        return not self.expr.metas

    def size(self) -> int:
        return (len(self.expr.coeffs) + len(self.expr.metas)
                + (1 if self.expr.const != 0 else 0))


# ---------------------------------------------------------------------------
# Formula nodes

@dataclass(frozen=True)
class TrueF:
    def __str__(self):
        return "true"


@dataclass(frozen=True)
class FalseF:
    def __str__(self):
        return "false"


@dataclass(frozen=True)
class Not:
    arg: "Formula"

    def __str__(self):
        return f"!({self.arg})"


@dataclass(frozen=True)
class And:
    args: tuple["Formula", ...]

    def __post_init__(self):
        if not self.args:
            raise ValueError("And needs at least one child")

    def __str__(self):
        return " && ".join(f"({a})" for a in self.args)


@dataclass(frozen=True)
class Or:
    args: tuple["Formula", ...]

    def __post_init__(self):
        if not self.args:
            raise ValueError("Or needs at least one child")

    def __str__(self):
        return " || ".join(f"({a})" for a in self.args)


@dataclass(frozen=True)
class Implies:
    lhs: "Formula"
    rhs: "Formula"

    def __str__(self):
        return f"({self.lhs}) -> ({self.rhs})"


Formula = Union[TrueF, FalseF, Atom, Not, And, Or, Implies]

TRUE = TrueF()
FALSE = FalseF()


def conj(parts: Iterable[Formula]) -> Formula:
    """And with flattening and unit elimination; empty -> TRUE."""
    out: list[Formula] = []
    for p in parts:
        if isinstance(p, TrueF):
            continue
        if isinstance(p, FalseF):
            return FALSE
        if isinstance(p, And):
            out.extend(p.args)
        else:
            out.append(p)
    if not out:
        return TRUE
    if len(out) == 1:
        return out[0]
    return And(tuple(out))


def disj(parts: Iterable[Formula]) -> Formula:
    """Or with flattening and unit elimination; empty -> FALSE."""
    out: list[Formula] = []
    for p in parts:
        if isinstance(p, FalseF):
            continue
        if isinstance(p, TrueF):
            return TRUE
        if isinstance(p, Or):
            out.extend(p.args)
        else:
            out.append(p)
    if not out:
        return FALSE
    if len(out) == 1:
        return out[0]
    return Or(tuple(out))


def implies(lhs: Formula, rhs: Formula) -> Formula:
    if isinstance(lhs, TrueF):
        return rhs
    if isinstance(lhs, FalseF) or isinstance(rhs, TrueF):
        return TRUE
    return Implies(lhs, rhs)


# ---------------------------------------------------------------------------
# Atom normalization

def _tighten(expr: LinExpr, rel: Rel) -> Formula:
    """Normalize `expr rel 0` into an Atom or a truth constant."""
    if expr.is_ground:
        if rel is Rel.GE:
            return TRUE if expr.const >= 0 else FALSE
        return TRUE if expr.const == 0 else FALSE

    if not expr.metas:
        g = _gcd_all(c for _, c in expr.coeffs)
        if rel is Rel.GE:
            if g > 1:
                expr = LinExpr(tuple((v, c // g) for v, c in expr.coeffs),
                               expr.const // g, ())
        else:
            if expr.const % g != 0:
                return FALSE
            if g > 1:
                expr = LinExpr(tuple((v, c // g) for v, c in expr.coeffs),
                               expr.const // g, ())
    else:
        # With unknown constants only exact common factors may be divided out.
        g = _gcd_all([c for _, c in expr.coeffs]
                     + [c for _, c in expr.metas]
                     + ([expr.const] if expr.const else []))
        if g > 1:
            expr = LinExpr(tuple((v, c // g) for v, c in expr.coeffs),
                           expr.const // g,
                           tuple((m, c // g) for m, c in expr.metas))

    if rel is Rel.EQ:
        # Sign-normalize equalities so `2x == 4` and `-x == -2` coincide.
        lead = (expr.coeffs[0][1] if expr.coeffs
                else expr.metas[0][1] if expr.metas else expr.const)
        if lead < 0:
            expr = expr.scale(-1)
    return Atom(expr, rel)


def ge0(expr: LinExpr) -> Formula:
    return _tighten(expr, Rel.GE)


def eq0(expr: LinExpr) -> Formula:
    return _tighten(expr, Rel.EQ)


def normalize_atom(lhs: LinExpr, op: str, rhs: LinExpr) -> Formula:
    """Build a normalized comparison from a source relation.

    `op` is one of < <= > >= == !=.  Strict integer inequalities become
    nonstrict (`a < b` is `a <= b - 1`); `!=` expands to a disjunction of
    the two strict sides.
    """
    d = lhs - rhs
    if op == ">=":
        return ge0(d)
    if op == ">":
        return ge0(d + LinExpr.of(-1))
    if op == "<=":
        return ge0(-d)
    if op == "<":
        return ge0((-d) + LinExpr.of(-1))
    if op == "==":
        return eq0(d)
    if op == "!=":
        return disj([ge0(d + LinExpr.of(-1)), ge0((-d) + LinExpr.of(-1))])
    raise ValueError(f"unknown relation {op!r}")


def negate_atom(a: Atom) -> Formula:
    """Integer negation of a normalized atom."""
    if a.rel is Rel.GE:
        return ge0((-a.expr) + LinExpr.of(-1))
    return disj([ge0(a.expr + LinExpr.of(-1)),
                 ge0((-a.expr) + LinExpr.of(-1))])


# ---------------------------------------------------------------------------
# Structural traversals

def subst_var(f: Formula, x: VarId, e: LinExpr) -> Formula:
    def go(n: Formula) -> Formula:
        if isinstance(n, Atom):
            return _tighten(n.expr.subst_var(x, e), n.rel)
        if isinstance(n, (TrueF, FalseF)):
            return n
        if isinstance(n, Not):
            return Not(go(n.arg))
        if isinstance(n, And):
            return And(tuple(go(a) for a in n.args))
        if isinstance(n, Or):
            return Or(tuple(go(a) for a in n.args))
        if isinstance(n, Implies):
            return Implies(go(n.lhs), go(n.rhs))
        raise TypeError(n)
    return go(f)


def subst_vars(f: Formula, sub: Mapping[VarId, LinExpr]) -> Formula:
    """Simultaneous substitution of several variables."""
    def go_expr(expr: LinExpr) -> LinExpr:
        acc = LinExpr.make({v: c for v, c in expr.coeffs if v not in sub},
                           expr.const, expr.meta_map())
        for v, c in expr.coeffs:
            if v in sub:
                acc = acc + sub[v].scale(c)
        return acc

    def go(n: Formula) -> Formula:
        if isinstance(n, Atom):
            return _tighten(go_expr(n.expr), n.rel)
        if isinstance(n, (TrueF, FalseF)):
            return n
        if isinstance(n, Not):
            return Not(go(n.arg))
        if isinstance(n, And):
            return And(tuple(go(a) for a in n.args))
        if isinstance(n, Or):
            return Or(tuple(go(a) for a in n.args))
        if isinstance(n, Implies):
            return Implies(go(n.lhs), go(n.rhs))
        raise TypeError(n)
    return go(f)


def subst_meta(f: Formula, m: MetaVar, k: int) -> Formula:
    def go(n: Formula) -> Formula:
        if isinstance(n, Atom):
            return _tighten(n.expr.subst_meta(m, k), n.rel)
        if isinstance(n, (TrueF, FalseF)):
            return n
        if isinstance(n, Not):
            return Not(go(n.arg))
        if isinstance(n, And):
            return And(tuple(go(a) for a in n.args))
        if isinstance(n, Or):
            return Or(tuple(go(a) for a in n.args))
        if isinstance(n, Implies):
            return Implies(go(n.lhs), go(n.rhs))
        raise TypeError(n)
    return go(f)


def free_vars(f: Formula) -> set[VarId]:
    out: set[VarId] = set()

    def go(n: Formula):
        if isinstance(n, Atom):
            out.update(n.expr.vars())
        elif isinstance(n, Not):
            go(n.arg)
        elif isinstance(n, (And, Or)):
            for a in n.args:
                go(a)
        elif isinstance(n, Implies):
            go(n.lhs)
            go(n.rhs)
    go(f)
    return out


def free_metas(f: Formula) -> set[MetaVar]:
    out: set[MetaVar] = set()

    def go(n: Formula):
        if isinstance(n, Atom):
            out.update(n.expr.meta_vars())
        elif isinstance(n, Not):
            go(n.arg)
        elif isinstance(n, (And, Or)):
            for a in n.args:
                go(a)
        elif isinstance(n, Implies):
            go(n.lhs)
            go(n.rhs)
    go(f)
    return out


def is_meta_only(f: Formula) -> bool:
    """True when f constrains metavariables only (and has at least one)."""
    return not free_vars(f) and bool(free_metas(f))


def eval_formula(f: Formula, env: Mapping[str, int],
                 meta_env: Mapping[str, int] | None = None) -> bool:
    if isinstance(f, TrueF):
        return True
    if isinstance(f, FalseF):
        return False
    if isinstance(f, Atom):
        v = f.expr.eval(env, meta_env)
        return v >= 0 if f.rel is Rel.GE else v == 0
    if isinstance(f, Not):
        return not eval_formula(f.arg, env, meta_env)
    if isinstance(f, And):
        return all(eval_formula(a, env, meta_env) for a in f.args)
    if isinstance(f, Or):
        return any(eval_formula(a, env, meta_env) for a in f.args)
    if isinstance(f, Implies):
        return (not eval_formula(f.lhs, env, meta_env)
                or eval_formula(f.rhs, env, meta_env))
    raise TypeError(f)


# ---------------------------------------------------------------------------
# CNF conversion

def detect_neq_expr(f: Formula) -> LinExpr | None:
    """Recognize Or(e - 1 >= 0, -e - 1 >= 0), the expansion of e != 0."""
    if isinstance(f, Or) and len(f.args) == 2:
        a, b = f.args
        if isinstance(a, Atom) and isinstance(b, Atom) \
                and a.rel is Rel.GE and b.rel is Rel.GE \
                and (a.expr + b.expr) == LinExpr.of(-2):
            return a.expr + LinExpr.of(1)
    return None


def negate(f: Formula) -> Formula:
    """Negation pushed down to atoms (`!=` re-expanded, Not/Implies gone).
    The disjunctive expansion of `!=` negates back to an equality atom."""
    e = detect_neq_expr(f)
    if e is not None:
        return eq0(e)
    if isinstance(f, TrueF):
        return FALSE
    if isinstance(f, FalseF):
        return TRUE
    if isinstance(f, Atom):
        return negate_atom(f)
    if isinstance(f, Not):
        return _nnf(f.arg, False)
    if isinstance(f, And):
        return disj([negate(a) for a in f.args])
    if isinstance(f, Or):
        return conj([negate(a) for a in f.args])
    if isinstance(f, Implies):
        return conj([_nnf(f.lhs, False), negate(f.rhs)])
    raise TypeError(f)


class CnfBudgetExceeded(Exception):
    """Distributive CNF conversion grew past the clause budget."""


CNF_CLAUSE_BUDGET = 256


def _nnf(f: Formula, neg: bool) -> Formula:
    """Negation normal form over atoms, with `!=` re-expanded on the fly."""
    if isinstance(f, TrueF):
        return FALSE if neg else TRUE
    if isinstance(f, FalseF):
        return TRUE if neg else FALSE
    if isinstance(f, Atom):
        return negate_atom(f) if neg else f
    if isinstance(f, Not):
        return _nnf(f.arg, not neg)
    if isinstance(f, And):
        kids = [_nnf(a, neg) for a in f.args]
        return disj(kids) if neg else conj(kids)
    if isinstance(f, Or):
        kids = [_nnf(a, neg) for a in f.args]
        return conj(kids) if neg else disj(kids)
    if isinstance(f, Implies):
        if neg:
            return conj([_nnf(f.lhs, False), _nnf(f.rhs, True)])
        return disj([_nnf(f.lhs, True), _nnf(f.rhs, False)])
    raise TypeError(f)


def to_cnf(f: Formula, budget: int = CNF_CLAUSE_BUDGET) -> list[list[Atom]]:
    """Plain distributive CNF.  Returns a list of clauses (lists of atoms);
    [] means TRUE, [[]] means FALSE.  Raises CnfBudgetExceeded past the
    clause budget."""
    nf = _nnf(f, False)

    def go(n: Formula) -> list[list[Atom]]:
        if isinstance(n, TrueF):
            return []
        if isinstance(n, FalseF):
            return [[]]
        if isinstance(n, Atom):
            return [[n]]
        if isinstance(n, And):
            out: list[list[Atom]] = []
            for a in n.args:
                out.extend(go(a))
                if len(out) > budget:
                    raise CnfBudgetExceeded(len(out))
            return out
        if isinstance(n, Or):
            parts = [go(a) for a in n.args]
            acc: list[list[Atom]] = [[]]
            for cs in parts:
                if not cs:      # disjunct is TRUE
                    return []
                nxt = []
                for base in acc:
                    for clause in cs:
                        nxt.append(base + clause)
                        if len(nxt) > budget:
                            raise CnfBudgetExceeded(len(nxt))
                acc = nxt
            return [_dedup_clause(c) for c in acc]
        raise TypeError(n)

    clauses = go(nf)
    return [_dedup_clause(c) for c in clauses]


def _dedup_clause(clause: list[Atom]) -> list[Atom]:
    seen = set()
    out = []
    for a in clause:
        if a not in seen:
            seen.add(a)
            out.append(a)
    return out


def formula_size(f: Formula) -> int:
    if isinstance(f, Atom):
        return max(f.size(), 1)
    if isinstance(f, (TrueF, FalseF)):
        return 1
    if isinstance(f, Not):
        return 1 + formula_size(f.arg)
    if isinstance(f, (And, Or)):
        return 1 + sum(formula_size(a) for a in f.args)
    if isinstance(f, Implies):
        return 1 + formula_size(f.lhs) + formula_size(f.rhs)
    raise TypeError(f)
