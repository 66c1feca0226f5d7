"""Vanilla Monte-Carlo tree search over strategy executions.

PUCT selection with a pluggable evaluator; the default evaluator knows
nothing (uniform priors, neutral value prediction), which is the
"no learned heuristic" configuration.  Rewards are terminal-only, so
backups propagate the leaf value undiscounted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Protocol

from .engine import (
    ChoicePoint, ExecutionState, RunConfig, ValuePrediction, combine_value,
    neutral_prediction, resume,
)


class Evaluator(Protocol):
    def evaluate(self, cp: ChoicePoint, cfg: RunConfig
                 ) -> tuple[tuple[float, ...], ValuePrediction]:
        """Prior over the choice list (sums to 1) plus a value prediction."""
        ...


class UniformEvaluator:
    """Neutral oracle: uniform priors, uninformed outcome prediction."""

    def evaluate(self, cp: ChoicePoint, cfg: RunConfig):
        n = len(cp.choices)
        return tuple([1.0 / n] * n), neutral_prediction(cfg)


@dataclass
class _Node:
    state: ExecutionState
    priors: tuple[float, ...] = ()
    children: dict[int, "_Node"] = field(default_factory=dict)
    visits: int = 0
    value_sum: float = 0.0
    expanded: bool = False
    estimate: float = 0.0       # evaluator value at expansion time
    best: float = -math.inf     # Bellman-style estimate used for selection

    @property
    def q(self) -> float:
        return self.value_sum / self.visits if self.visits else 0.0

    def refresh_best(self):
        """Deterministic transitions: a node is worth its best child; the
        expansion-time estimate stands in for children not yet created."""
        if self.state.terminal:
            self.best = self.state.reward
            return
        vals = [c.best for c in self.children.values()]
        if len(self.children) < len(self.priors):
            vals.append(self.estimate)
        self.best = max(vals) if vals else self.estimate


@dataclass(frozen=True)
class ChoiceStats:
    index: int
    label: str
    visits: int
    q: float
    prior: float


@dataclass(frozen=True)
class SearchOutcome:
    status: str                 # "succeeded" | "failed" | "budget"
    state: ExecutionState
    trace: tuple[int, ...]
    steps: tuple[tuple[ChoiceStats, ...], ...] = ()

    @property
    def succeeded(self) -> bool:
        return self.status == "succeeded"


DEFAULT_C_PUCT = 1.5
DEFAULT_SIMS = 400
DEFAULT_STEP_BUDGET = 64


LEAF_FLOOR = -1.0 + 1e-6     # a state not yet failed may still succeed


def _evaluate_leaf(node: _Node, evaluator: Evaluator, cfg: RunConfig) -> float:
    """Expand a leaf; returns its backup value (true reward if terminal).

    Leaf estimates add the +p2 success offset to the raw value expression
    so they share a scale with true terminal rewards, and are floored just
    above the failure reward: an estimate below -1 is inconsistent with
    the reward range and would steer search into failing fast (strategies
    with many single-occurrence penalty events hit this with the neutral
    uniform prediction).
    """
    st = node.state
    if st.terminal:
        node.expanded = True
        return st.reward
    priors, pred = evaluator.evaluate(st.choice_point, cfg)
    if abs(sum(priors) - 1.0) > 1e-6 or len(priors) != len(st.choice_point.choices):
        raise ValueError("evaluator returned a malformed prior")
    node.priors = tuple(priors)
    node.expanded = True
    value = combine_value(pred, st.event_counts, cfg) + pred.p2
    return max(value, LEAF_FLOOR)


def _select_child(node: _Node, c_puct: float) -> int:
    sqrt_n = math.sqrt(node.visits)
    best_idx, best_score = 0, -math.inf
    for i in range(len(node.priors)):
        child = node.children.get(i)
        n_i = child.visits if child else 0
        q_i = child.best if child and child.best > -math.inf else 0.0
        score = q_i + c_puct * node.priors[i] * sqrt_n / (1 + n_i)
        if score > best_score:
            best_idx, best_score = i, score
    return best_idx


def _simulate(root: _Node, evaluator: Evaluator, cfg: RunConfig,
              c_puct: float):
    path = [root]
    node = root
    while node.expanded and node.state.running:
        idx = _select_child(node, c_puct)
        child = node.children.get(idx)
        if child is None:
            child = _Node(resume(node.state, idx))
            node.children[idx] = child
        path.append(child)
        node = child
        if not child.expanded:
            break
    if node.expanded and node.state.terminal:
        value = node.state.reward
    else:
        value = _evaluate_leaf(node, evaluator, cfg)
        node.estimate = value
    leaf = path[-1]
    leaf.visits += 1
    leaf.value_sum += value
    leaf.refresh_best()
    for n in reversed(path[:-1]):
        n.visits += 1
        n.value_sum += value
        n.refresh_best()


def _node_stats(node: _Node) -> tuple[ChoiceStats, ...]:
    cp = node.state.choice_point
    out = []
    for i, ch in enumerate(cp.choices):
        child = node.children.get(i)
        out.append(ChoiceStats(
            index=i, label=ch.label,
            visits=child.visits if child else 0,
            q=child.q if child else 0.0,
            prior=node.priors[i] if node.priors else 0.0))
    return tuple(out)


def _decide_on_node(root: _Node, sims: int, evaluator: Evaluator,
                    cfg: RunConfig, c_puct: float):
    if not root.expanded:
        value = _evaluate_leaf(root, evaluator, cfg)
        root.estimate = value
        root.visits += 1
        root.value_sum += value
        root.refresh_best()
    for _ in range(sims):
        _simulate(root, evaluator, cfg, c_puct)
    stats = _node_stats(root)
    best = max(stats, key=lambda s: (s.visits, -s.index)).index
    return best, stats


def mcts_decide(state: ExecutionState, sims: int,
                evaluator: Optional[Evaluator] = None,
                c_puct: float = DEFAULT_C_PUCT,
                seed: int = 0) -> tuple[int, tuple[ChoiceStats, ...]]:
    """Pick a choice index for a running state after `sims` simulations.

    Fully deterministic: the uniform evaluator has no noise and ties break
    toward the lowest index (the seed is accepted for interface stability
    with stochastic evaluators).
    """
    if not state.running:
        raise ValueError("mcts_decide requires a running state")
    if sims < 1:
        raise ValueError("sims must be >= 1")
    evaluator = evaluator or UniformEvaluator()
    root = _Node(state.clone())
    return _decide_on_node(root, sims, evaluator, state.strategy.config,
                           c_puct)


def solve_with_search(state: ExecutionState, sims: int = DEFAULT_SIMS,
                      step_budget: int = DEFAULT_STEP_BUDGET,
                      evaluator: Optional[Evaluator] = None,
                      c_puct: float = DEFAULT_C_PUCT,
                      seed: int = 0,
                      deadline: Optional[float] = None) -> SearchOutcome:
    """Commit MCTS decisions step by step, reusing the chosen subtree.

    `deadline` is a time.monotonic() timestamp; passing it between steps
    aborts the run with a budget outcome.
    """
    import time
    evaluator = evaluator or UniformEvaluator()
    cfg = state.strategy.config
    trace: list[int] = []
    steps: list[tuple[ChoiceStats, ...]] = []
    node = _Node(state.clone())
    for _ in range(step_budget):
        if node.state.terminal:
            status = node.state.status
            return SearchOutcome(status, node.state, tuple(trace), tuple(steps))
        if deadline is not None and time.monotonic() > deadline:
            return SearchOutcome("budget", node.state, tuple(trace),
                                 tuple(steps))
        best, stats = _decide_on_node(node, sims, evaluator, cfg, c_puct)
        steps.append(stats)
        trace.append(best)
        node = node.children.get(best) or _Node(resume(node.state, best))
    if node.state.terminal:
        return SearchOutcome(node.state.status, node.state, tuple(trace),
                             tuple(steps))
    return SearchOutcome("budget", node.state, tuple(trace), tuple(steps))


def greedy_rollout(state: ExecutionState,
                   evaluator: Optional[Evaluator] = None,
                   step_budget: int = DEFAULT_STEP_BUDGET * 4
                   ) -> SearchOutcome:
    """Follow the highest-prior choice with no search and no backtracking."""
    evaluator = evaluator or UniformEvaluator()
    cfg = state.strategy.config
    trace: list[int] = []
    cur = state
    for _ in range(step_budget):
        if cur.terminal:
            return SearchOutcome(cur.status, cur, tuple(trace))
        priors, _pred = evaluator.evaluate(cur.choice_point, cfg)
        best = max(range(len(priors)), key=lambda i: (priors[i], -i))
        trace.append(best)
        cur = resume(cur, best)
    if cur.terminal:
        return SearchOutcome(cur.status, cur, tuple(trace))
    return SearchOutcome("budget", cur, tuple(trace))
