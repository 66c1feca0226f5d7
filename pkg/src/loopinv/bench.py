"""Benchmark harness: solve tasks under budgets and re-verify results.

A reported solve always passes independent re-verification (proof-engine
obligations plus a bounded concrete soundness run) before it counts.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .engine import start
from .formulas import Formula
from .mcts import SearchOutcome, greedy_rollout, solve_with_search
from .parser import render_formula
from .programs import LoopTask
from .semantics import all_proved, bounded_soundness, check_obligations
from .solver import make_solver

SIM_LADDER = (400, 800, 1600)
RUNG_BUDGET = (6.0, 10.0, None)     # None = whatever remains


@dataclass
class SolveReport:
    solved: bool
    verified: bool
    conjuncts: tuple[Formula, ...] = ()
    events: dict = field(default_factory=dict)
    reward: float = 0.0
    sims_used: int = 0
    steps: int = 0
    wall_time: float = 0.0
    trace: tuple[int, ...] = ()
    status: str = "failed"

    @property
    def invariant_text(self) -> str:
        if not self.solved:
            return ""
        if not self.conjuncts:
            return "true"
        return " && ".join(render_formula(c) for c in self.conjuncts)


def verify_solution(task: LoopTask, invariant: Formula) -> bool:
    if not all_proved(check_obligations(task, invariant)):
        return False
    return bounded_soundness(task) is None


def solve_task(task: LoopTask, sims: Optional[int] = None,
               step_budget: int = 64, timeout: float = 30.0,
               greedy: bool = False, seed: int = 0) -> SolveReport:
    """Solve with an escalating simulation ladder (or one fixed budget)."""
    t0 = time.monotonic()
    hard_deadline = t0 + timeout

    if greedy:
        out = greedy_rollout(start(make_solver(task)))
        return _finish(task, out, 0, t0)

    ladder: Sequence[tuple[int, Optional[float]]]
    if sims is not None:
        ladder = [(sims, None)]
    else:
        ladder = list(zip(SIM_LADDER, RUNG_BUDGET))

    last: Optional[SearchOutcome] = None
    for n_sims, rung in ladder:
        now = time.monotonic()
        if now >= hard_deadline:
            break
        deadline = hard_deadline if rung is None else min(hard_deadline,
                                                          now + rung)
        out = solve_with_search(start(make_solver(task)), sims=n_sims,
                                step_budget=step_budget, seed=seed,
                                deadline=deadline)
        last = out
        if out.succeeded:
            return _finish(task, out, n_sims, t0)
    return _finish(task, last, 0, t0)


def _finish(task: LoopTask, out: Optional[SearchOutcome], sims: int,
            t0: float) -> SolveReport:
    wall = time.monotonic() - t0
    if out is None or not out.succeeded:
        return SolveReport(False, False, status=out.status if out else "failed",
                           wall_time=wall)
    conjuncts = out.state.result.conjuncts
    verified = verify_solution(task, out.state.result.invariant)
    return SolveReport(
        solved=verified,          # a solve only counts once re-verified
        verified=verified,
        conjuncts=conjuncts,
        events=dict(out.state.event_counts),
        reward=out.state.reward,
        sims_used=sims,
        steps=len(out.trace),
        wall_time=wall,
        trace=out.trace,
        status="succeeded" if verified else "unverified",
    )


@dataclass
class BenchReport:
    names: list[str] = field(default_factory=list)
    reports: list[SolveReport] = field(default_factory=list)

    def add(self, name: str, rep: SolveReport):
        self.names.append(name)
        self.reports.append(rep)

    @property
    def total(self) -> int:
        return len(self.reports)

    @property
    def solved(self) -> int:
        return sum(1 for r in self.reports if r.solved)

    @property
    def solve_rate(self) -> float:
        return self.solved / self.total if self.total else 0.0

    def median_time(self) -> float:
        if not self.reports:
            return 0.0
        ts = sorted(r.wall_time for r in self.reports)
        return ts[len(ts) // 2]

    def summary(self) -> str:
        return (f"solved {self.solved}/{self.total} "
                f"({100 * self.solve_rate:.1f}%), "
                f"median time {self.median_time():.2f}s")


def run_bench(tasks: Sequence[tuple[str, LoopTask]], sims: Optional[int] = None,
              timeout: float = 30.0, workers: int = 1,
              step_budget: int = 64) -> BenchReport:
    report = BenchReport()
    if workers <= 1:
        for name, task in tasks:
            report.add(name, solve_task(task, sims=sims, timeout=timeout,
                                        step_budget=step_budget))
        return report

    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futs = [pool.submit(solve_task, task, sims, step_budget, timeout)
                for _, task in tasks]
        for (name, _), fut in zip(tasks, futs):
            report.add(name, fut.result())
    return report
