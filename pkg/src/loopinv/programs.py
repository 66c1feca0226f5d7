"""Loop-free statements and single-loop tasks.

The loop guard (and an `if` guard) may be the nondeterministic test `*`,
represented as None.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from .formulas import Formula, LinExpr, VarId, free_vars


@dataclass(frozen=True)
class Skip:
    pass


@dataclass(frozen=True)
class Assign:
    target: VarId
    expr: LinExpr


@dataclass(frozen=True)
class Seq:
    stmts: tuple["Stmt", ...]


@dataclass(frozen=True)
class If:
    cond: Optional[Formula]      # None encodes the nondeterministic test *
    then: "Stmt"
    els: Optional["Stmt"] = None


@dataclass(frozen=True)
class Assume:
    cond: Formula


Stmt = Union[Skip, Assign, Seq, If, Assume]


def seq(stmts) -> Stmt:
    flat: list[Stmt] = []
    for s in stmts:
        if isinstance(s, Skip):
            continue
        if isinstance(s, Seq):
            flat.extend(s.stmts)
        else:
            flat.append(s)
    if not flat:
        return Skip()
    if len(flat) == 1:
        return flat[0]
    return Seq(tuple(flat))


def modified_vars(s: Stmt) -> set[VarId]:
    if isinstance(s, Skip) or isinstance(s, Assume):
        return set()
    if isinstance(s, Assign):
        return {s.target}
    if isinstance(s, Seq):
        out: set[VarId] = set()
        for sub in s.stmts:
            out |= modified_vars(sub)
        return out
    if isinstance(s, If):
        out = modified_vars(s.then)
        if s.els is not None:
            out |= modified_vars(s.els)
        return out
    raise TypeError(s)


def stmt_vars(s: Stmt) -> set[VarId]:
    """All variables occurring anywhere in the statement."""
    if isinstance(s, Skip):
        return set()
    if isinstance(s, Assign):
        return {s.target} | set(s.expr.vars())
    if isinstance(s, Assume):
        return free_vars(s.cond)
    if isinstance(s, Seq):
        out: set[VarId] = set()
        for sub in s.stmts:
            out |= stmt_vars(sub)
        return out
    if isinstance(s, If):
        out = set() if s.cond is None else free_vars(s.cond)
        out |= stmt_vars(s.then)
        if s.els is not None:
            out |= stmt_vars(s.els)
        return out
    raise TypeError(s)


def branch_count(s: Stmt) -> int:
    """Number of `if (*)` tests in the statement (bits a run may consume)."""
    if isinstance(s, (Skip, Assign, Assume)):
        return 0
    if isinstance(s, Seq):
        return sum(branch_count(sub) for sub in s.stmts)
    if isinstance(s, If):
        n = 1 if s.cond is None else 0
        n += branch_count(s.then)
        if s.els is not None:
            n += branch_count(s.els)
        return n
    raise TypeError(s)


@dataclass(frozen=True)
class LoopTask:
    """A single-loop verification problem: init holds on entry, the body
    runs while the guard (or *) passes, and post must hold on exit."""

    init: Formula
    guard: Optional[Formula]     # None encodes while (*)
    body: Stmt
    post: Formula
    vars: tuple[VarId, ...]
    invariants: tuple[Formula, ...] = ()   # optional reference annotations

    def __post_init__(self):
        declared = set(self.vars)
        used = free_vars(self.init) | free_vars(self.post) | stmt_vars(self.body)
        if self.guard is not None:
            used |= free_vars(self.guard)
        for inv in self.invariants:
            used |= free_vars(inv)
        missing = {v.name for v in used} - {v.name for v in declared}
        if missing:
            raise ValueError(f"undeclared variables: {sorted(missing)}")

    def var_named(self, name: str) -> VarId:
        for v in self.vars:
            if v.name == name:
                return v
        raise KeyError(name)

    def params(self) -> tuple[VarId, ...]:
        return tuple(v for v in self.vars if v.kind == "parameter")


def make_task(init, guard, body, post, extra_vars=(), invariants=(),
              assigned_names=None) -> LoopTask:
    """Build a task, inferring the variable set and kinds from usage.

    `assigned_names` lists variables assigned anywhere in the source
    program (including statements folded into init); defaults to the
    loop-body assignments.
    """
    used = free_vars(init) | free_vars(post) | stmt_vars(body)
    if guard is not None:
        used |= free_vars(guard)
    for inv in invariants:
        used |= free_vars(inv)
    if assigned_names is None:
        assigned = {v.name for v in modified_vars(body)}
    else:
        assigned = set(assigned_names) | {v.name for v in modified_vars(body)}
    names = sorted({v.name for v in used} | {v.name for v in extra_vars})
    vs = tuple(VarId(n, "mutable" if n in assigned else "parameter")
               for n in names)
    return LoopTask(init, guard, body, post, vs, tuple(invariants))
