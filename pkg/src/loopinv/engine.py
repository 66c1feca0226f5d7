"""Resumable execution of nondeterministic strategies.

A strategy is a Python generator that yields effects: `Choose(probe,
choices)` suspends at a choice point (the chosen payload is sent back in),
`Event(id)` records a reward-bearing event, and raising `StrategyFailure`
(or yielding `Choose` with no choices) fails the run.  Returning normally
succeeds with reward  max{1 + sum_e r_e * min(n_e, m_e), r_min};  failures
are worth exactly -1 and never pay event penalties.

An `ExecutionState` is a value: resuming it returns a fresh state and
never observably mutates the original.  Internally the suspended generator
is kept as a single-use fast path; once consumed, the state can still be
resumed by deterministically replaying its choice trace from the start.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Generator, Mapping, Optional, Sequence

RUNNING = "running"
SUCCEEDED = "succeeded"
FAILED = "failed"

FAILURE_REWARD = -1.0


class StrategyFailure(Exception):
    """Aborts the current run (violated strategy assertion)."""


class EngineError(Exception):
    """Misuse of the engine API (bad index, resuming a terminal state)."""


@dataclass(frozen=True)
class EventSpec:
    id: str
    reward: float
    max_count: int = 1

    def __post_init__(self):
        if self.max_count < 1:
            raise ValueError("max_count must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    events: tuple[EventSpec, ...] = ()
    r_min: float = 0.0

    def __post_init__(self):
        if not self.r_min > -1:
            raise ValueError("r_min must be > -1")

    def spec(self, eid: str) -> EventSpec:
        for e in self.events:
            if e.id == eid:
                return e
        raise KeyError(f"unknown event {eid!r}")


@dataclass(frozen=True)
class Choice:
    label: str
    payload: object = None


@dataclass(frozen=True)
class Probe:
    """Context shipped with every choice point: strategy id, site tag and
    an ordered list of named sections (formulas, programs, records...)."""
    strategy: str
    site: str
    sections: tuple[tuple[str, object], ...] = ()


@dataclass(frozen=True)
class ChoicePoint:
    probe: Probe
    choices: tuple[Choice, ...]

    def __post_init__(self):
        if not self.choices:
            raise ValueError("choice point with no choices")


# Effects yielded by strategy code.
@dataclass(frozen=True)
class Choose:
    probe: Probe
    choices: tuple[Choice, ...]


@dataclass(frozen=True)
class Event:
    id: str


def mk_choices(items: Sequence) -> tuple[Choice, ...]:
    out = []
    for it in items:
        if isinstance(it, Choice):
            out.append(it)
        else:
            out.append(Choice(str(it), it))
    return tuple(out)


@dataclass(frozen=True)
class Strategy:
    name: str
    fn: Callable[..., Generator]
    config: RunConfig


class ExecutionState:
    """Snapshot of a strategy run; immutable in all observable fields."""

    __slots__ = ("strategy", "args", "trace", "status", "choice_point",
                 "result", "reward", "event_counts", "_live")

    def __init__(self, strategy, args, trace, status, choice_point,
                 result, reward, event_counts, live=None):
        self.strategy = strategy
        self.args = args
        self.trace = trace
        self.status = status
        self.choice_point: Optional[ChoicePoint] = choice_point
        self.result = result
        self.reward = reward
        self.event_counts: dict[str, int] = event_counts
        self._live = live

    @property
    def running(self) -> bool:
        return self.status == RUNNING

    @property
    def terminal(self) -> bool:
        return self.status != RUNNING

    def clone(self) -> "ExecutionState":
        """Value copy without the single-use generator cache."""
        return ExecutionState(self.strategy, self.args, self.trace,
                              self.status, self.choice_point, self.result,
                              self.reward, dict(self.event_counts))

    def observable(self):
        return (self.status, self.choice_point, self.result, self.reward,
                tuple(sorted(self.event_counts.items())), self.trace)

    def __repr__(self):
        if self.running:
            site = self.choice_point.probe.site
            return (f"<run {self.strategy.name} at {site} "
                    f"({len(self.choice_point.choices)} choices)>")
        return f"<run {self.strategy.name} {self.status} reward={self.reward}>"


def final_reward(counts: Mapping[str, int], cfg: RunConfig,
                 success: bool) -> float:
    """Terminal reward; event penalties apply only to successes."""
    if not success:
        return FAILURE_REWARD
    total = 1.0
    for e in cfg.events:
        total += e.reward * min(counts.get(e.id, 0), e.max_count)
    return max(total, cfg.r_min)


def _drive(gen: Generator, cfg: RunConfig, counts: dict[str, int],
           send_value=None, first=False):
    """Advance a generator to its next suspension or terminal status.
    Returns (status, choice_point, result, reward)."""
    while True:
        try:
            eff = next(gen) if first else gen.send(send_value)
            first = False
            send_value = None
        except StopIteration as stop:
            return SUCCEEDED, None, stop.value, final_reward(counts, cfg, True)
        except StrategyFailure:
            return FAILED, None, None, FAILURE_REWARD
        if isinstance(eff, Event):
            cfg.spec(eff.id)   # validate
            counts[eff.id] = counts.get(eff.id, 0) + 1
            continue
        if isinstance(eff, Choose):
            if not eff.choices:
                gen.close()
                return FAILED, None, None, FAILURE_REWARD
            cp = ChoicePoint(eff.probe, tuple(eff.choices))
            return RUNNING, cp, None, None
        raise EngineError(f"strategy yielded unexpected value {eff!r}")


def start(strategy: Strategy, *args) -> ExecutionState:
    gen = strategy.fn(*args)
    counts: dict[str, int] = {}
    status, cp, result, reward = _drive(gen, strategy.config, counts,
                                        first=True)
    live = gen if status == RUNNING else None
    return ExecutionState(strategy, args, (), status, cp, result, reward,
                          counts, live)


def _replay(state: ExecutionState):
    """Rebuild a live generator positioned at `state` by replaying the
    recorded trace (strategies are deterministic given their choices)."""
    gen = state.strategy.fn(*state.args)
    counts: dict[str, int] = {}
    status, cp, result, reward = _drive(gen, state.strategy.config, counts,
                                        first=True)
    for idx in state.trace:
        if status != RUNNING:
            raise EngineError("replay diverged: run ended early")
        if not (0 <= idx < len(cp.choices)):
            raise EngineError("replay diverged: choice index out of range")
        status, cp, result, reward = _drive(
            gen, state.strategy.config, counts, cp.choices[idx].payload)
    return gen, counts, status, cp


def resume(state: ExecutionState, index: int) -> ExecutionState:
    """Feed choice `index` to a running state; returns the next state."""
    if not state.running:
        raise EngineError("cannot resume a terminal state")
    cp = state.choice_point
    if not (0 <= index < len(cp.choices)):
        raise EngineError(f"choice index {index} out of range "
                          f"(have {len(cp.choices)})")
    if state._live is not None:
        gen = state._live
        state._live = None        # cache handoff; observable state unchanged
        counts = dict(state.event_counts)
        payload = cp.choices[index].payload
    else:
        gen, counts, status, rcp = _replay(state)
        if status != RUNNING or rcp != cp:
            raise EngineError("replay diverged from snapshot")
        # Feed the replayed generator its own (equal) payload object so
        # identity-based bookkeeping inside the strategy stays coherent.
        payload = rcp.choices[index].payload
    status, ncp, result, reward = _drive(gen, state.strategy.config, counts,
                                         payload)
    live = gen if status == RUNNING else None
    return ExecutionState(state.strategy, state.args, state.trace + (index,),
                          status, ncp, result, reward, counts, live)


def run_trace(strategy: Strategy, args: tuple, trace: Sequence[int]
              ) -> ExecutionState:
    """Headless replay of a full choice-index trace."""
    st = start(strategy, *args)
    for idx in trace:
        if not st.running:
            break
        st = resume(st, idx)
    return st


# ---------------------------------------------------------------------------
# Value predictions (plug-in oracle output) and the combined estimate

@dataclass(frozen=True)
class ValuePrediction:
    """Outcome probabilities: failure (p0), success at minimal reward (p1),
    success above it (p2), and per-event occurrence distributions
    p_e[i] = P(min(n_e, m_e) = i)."""

    p0: float
    p1: float
    p2: float
    event_dists: tuple[tuple[str, tuple[float, ...]], ...] = ()

    def __post_init__(self):
        if abs(self.p0 + self.p1 + self.p2 - 1.0) > 1e-6:
            raise ValueError("outcome probabilities must sum to 1")
        for p in (self.p0, self.p1, self.p2):
            if p < -1e-9 or p > 1 + 1e-9:
                raise ValueError("probability out of range")
        for eid, dist in self.event_dists:
            if abs(sum(dist) - 1.0) > 1e-6:
                raise ValueError(f"event distribution for {eid} must sum to 1")
            if any(p < -1e-9 or p > 1 + 1e-9 for p in dist):
                raise ValueError(f"probability out of range for {eid}")

    def dist_for(self, eid: str) -> Optional[tuple[float, ...]]:
        for k, d in self.event_dists:
            if k == eid:
                return d
        return None


def neutral_prediction(cfg: RunConfig) -> ValuePrediction:
    """Uninformed prediction: certain non-minimal success, uniform events."""
    dists = tuple((e.id, tuple([1.0 / (e.max_count + 1)] * (e.max_count + 1)))
                  for e in cfg.events)
    return ValuePrediction(0.0, 0.0, 1.0, dists)


def corrected_event_term(pred: ValuePrediction, counts: Mapping[str, int],
                         cfg: RunConfig) -> float:
    """sum_e sum_i p̂_e^i * i * r_e with the already-raised correction.

    p̂ is the prediction corrected for events already raised: mass on
    i < n_e is zeroed and the rest renormalized (all mass gone: certainty
    at min(n_e, m_e)); single-occurrence events already observed are
    overridden to certainty at 1.
    """
    ev_total = 0.0
    for e in cfg.events:
        n = counts.get(e.id, 0)
        m = e.max_count
        dist = pred.dist_for(e.id)
        if dist is None:
            dist = tuple([1.0 / (m + 1)] * (m + 1))
        if len(dist) != m + 1:
            raise ValueError(f"distribution for {e.id} must have {m + 1} bins")
        if m == 1 and n >= 1:
            corrected = (0.0, 1.0)
        else:
            masked = [p if n <= i else 0.0 for i, p in enumerate(dist)]
            total = sum(masked)
            if total <= 0.0:
                corrected = [0.0] * (m + 1)
                corrected[min(n, m)] = 1.0
            else:
                corrected = [p / total for p in masked]
        ev_total += sum(p * i * e.reward for i, p in enumerate(corrected))
    return ev_total


def combine_value(pred: ValuePrediction, counts: Mapping[str, int],
                  cfg: RunConfig) -> float:
    """Value estimate  -p0 + p1*r_min + p2 * sum_e sum_i p̂_e^i * i * r_e."""
    return (-pred.p0 + pred.p1 * cfg.r_min
            + pred.p2 * corrected_event_term(pred, counts, cfg))


def expected_final_reward(pred: ValuePrediction, counts: Mapping[str, int],
                          cfg: RunConfig) -> float:
    """Predicted expectation of the terminal reward itself.

    Unlike the raw value expression, the above-minimum success branch
    carries its implicit +1 and is floored at r_min, so estimates sit on
    the same scale as true terminal rewards (a success never pays less
    than r_min, however many penalties the prediction anticipates).
    """
    ev = corrected_event_term(pred, counts, cfg)
    return (-pred.p0 + pred.p1 * cfg.r_min
            + pred.p2 * max(cfg.r_min, 1.0 + ev))


def size_penalty_reward(n_conjuncts: int) -> float:
    """Inline size-penalty reward used by the simplest solver variant:
    max(-1, -0.2 * n)."""
    return max(-1.0, -0.2 * n_conjuncts)
