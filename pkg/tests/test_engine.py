import pytest

from loopinv.engine import (
    Choice, Choose, Event, EventSpec, EngineError, Probe, RunConfig, Strategy,
    StrategyFailure, ValuePrediction, combine_value, final_reward,
    neutral_prediction, resume, run_trace, size_penalty_reward, start,
)


def probe(site="t"):
    return Probe("test", site)


def choices(*items):
    return tuple(Choice(str(i), i) for i in items)


PLAIN = RunConfig()


def strat(fn, cfg=PLAIN, name="s"):
    return Strategy(name, fn, cfg)


def test_immediate_success_reward_one():
    def fn():
        return "done"
        yield  # pragma: no cover

    st = start(strat(fn))
    assert st.status == "succeeded"
    assert st.result == "done"
    assert st.reward == 1.0


def test_choose_and_resume():
    def fn():
        a = yield Choose(probe("pick"), choices(10, 20, 30))
        b = yield Choose(probe("pick2"), choices(1, 2))
        return a + b

    s0 = start(strat(fn))
    assert s0.running
    assert [c.label for c in s0.choice_point.choices] == ["10", "20", "30"]
    s1 = resume(s0, 1)
    s2 = resume(s1, 0)
    assert s2.status == "succeeded" and s2.result == 21
    assert s2.trace == (1, 0)


def test_choose_empty_list_fails():
    def fn():
        yield Choose(probe(), ())
        return 1

    st = start(strat(fn))
    assert st.status == "failed"
    assert st.reward == -1.0


def test_strategy_failure_is_failed_state():
    def fn():
        x = yield Choose(probe(), choices(0, 1))
        if x == 0:
            raise StrategyFailure("bad branch")
        return x

    st = resume(start(strat(fn)), 0)
    assert st.status == "failed" and st.reward == -1.0


def test_resume_index_out_of_range():
    def fn():
        yield Choose(probe(), choices(1))
        return 0

    with pytest.raises(EngineError):
        resume(start(strat(fn)), 5)


def test_resume_terminal_rejected():
    def fn():
        return 3
        yield  # pragma: no cover

    with pytest.raises(EngineError):
        resume(start(strat(fn)), 0)


def test_snapshot_isolation():
    def fn():
        a = yield Choose(probe(), choices(1, 2))
        b = yield Choose(probe(), choices(3, 4))
        return (a, b)

    s0 = start(strat(fn))
    s1 = resume(s0, 0)
    before = s1.observable()
    c = s1.clone()
    r1 = resume(c, 0)
    r2 = resume(c, 1)
    assert s1.observable() == before
    assert r1.result == (1, 3) and r2.result == (1, 4)
    # the original can still be resumed after its cache was consumed
    r3 = resume(s1, 1)
    assert r3.result == (1, 4)


def test_replay_reconstructs_events():
    cfg = RunConfig(events=(EventSpec("E", -0.25, 2),))

    def fn():
        yield Event("E")
        a = yield Choose(probe(), choices(1, 2))
        yield Event("E")
        yield Event("E")
        return a

    s0 = start(strat(fn, cfg))
    assert s0.event_counts == {"E": 1}
    s1 = resume(s0, 0)
    assert s1.event_counts == {"E": 3}   # ledger is uncapped
    # reward caps at max_count
    assert s1.reward == pytest.approx(1.0 + -0.25 * 2)
    # replay path: resume the stale snapshot again (live gen consumed)
    s1b = resume(s0, 0)
    assert s1b.observable() == s1.observable()


def test_unknown_event_rejected():
    def fn():
        yield Event("nope")
        return 1

    with pytest.raises(KeyError):
        start(strat(fn))


def test_determinism_same_trace_same_outcome():
    cfg = RunConfig(events=(EventSpec("E", -0.1, 4),))

    def fn():
        total = 0
        for _ in range(3):
            x = yield Choose(probe(), choices(0, 1, 2))
            if x == 2:
                yield Event("E")
            total += x
        return total

    a = run_trace(strat(fn, cfg), (), [2, 1, 2])
    b = run_trace(strat(fn, cfg), (), [2, 1, 2])
    assert a.observable() == b.observable()
    assert a.event_counts == {"E": 2}


# ---------------------------------------------------------------------------
# Reward algebra

def test_final_reward_teacher_worked_value():
    # two soft violations at -0.5 with r_min = -0.5: max(1 - 1.0, -0.5) = 0.0
    cfg = RunConfig(events=(EventSpec("v1", -0.5, 1), EventSpec("v2", -0.5, 1)),
                    r_min=-0.5)
    assert final_reward({"v1": 1, "v2": 1}, cfg, True) == 0.0


def test_final_reward_solver_worked_value():
    # five conjectures at -0.3 capped at 4 with r_min = 0: max(1-1.2, 0) = 0
    cfg = RunConfig(events=(EventSpec("CONJECTURING", -0.3, 4),), r_min=0.0)
    assert final_reward({"CONJECTURING": 5}, cfg, True) == 0.0


def test_final_reward_failure_ignores_events():
    cfg = RunConfig(events=(EventSpec("v", -0.5, 1),), r_min=-0.5)
    assert final_reward({"v": 7}, cfg, False) == -1.0


def test_final_reward_empty():
    assert final_reward({}, PLAIN, True) == 1.0


def test_final_reward_bounds():
    cfg = RunConfig(events=(EventSpec("a", -0.3, 4), EventSpec("b", 0.2, 2)),
                    r_min=-0.9)
    for na in range(7):
        for nb in range(5):
            r = final_reward({"a": na, "b": nb}, cfg, True)
            assert cfg.r_min <= r <= 1 + 0.2 * 2


# ---------------------------------------------------------------------------
# combine_value

def test_combine_value_certain_failure():
    cfg = RunConfig(events=(EventSpec("e", -0.5, 1),), r_min=-0.5)
    pred = ValuePrediction(1.0, 0.0, 0.0, (("e", (1.0, 0.0)),))
    assert combine_value(pred, {}, cfg) == -1.0


def test_combine_value_worked_example():
    cfg = RunConfig(events=(EventSpec("e", -0.5, 1),), r_min=-0.5)
    pred = ValuePrediction(0.0, 0.0, 1.0, (("e", (0.6, 0.4)),))
    assert combine_value(pred, {"e": 0}, cfg) == pytest.approx(-0.2)


def test_combine_value_override_after_observation():
    cfg = RunConfig(events=(EventSpec("e", -0.5, 1),), r_min=-0.5)
    pred = ValuePrediction(0.0, 0.0, 1.0, (("e", (0.6, 0.4)),))
    assert combine_value(pred, {"e": 1}, cfg) == pytest.approx(-0.5)


def test_combine_value_renormalizes_mass():
    cfg = RunConfig(events=(EventSpec("e", -0.1, 3),), r_min=-0.5)
    pred = ValuePrediction(0.0, 0.0, 1.0, (("e", (0.5, 0.3, 0.1, 0.1)),))
    # n_e = 2 zeroes bins 0 and 1; renormalized to (0.5, 0.5) on {2, 3}
    got = combine_value(pred, {"e": 2}, cfg)
    assert got == pytest.approx(1.0 * (0.5 * 2 + 0.5 * 3) * -0.1)


def test_combine_value_all_mass_zeroed_concentrates():
    cfg = RunConfig(events=(EventSpec("e", -0.1, 3),), r_min=-0.5)
    pred = ValuePrediction(0.0, 0.0, 1.0, (("e", (1.0, 0.0, 0.0, 0.0)),))
    got = combine_value(pred, {"e": 2}, cfg)
    assert got == pytest.approx(-0.1 * 2)


def test_combine_value_p1_term():
    cfg = RunConfig(events=(), r_min=-0.5)
    pred = ValuePrediction(0.2, 0.3, 0.5)
    assert combine_value(pred, {}, cfg) == pytest.approx(-0.2 + 0.3 * -0.5)


def test_prediction_validation():
    with pytest.raises(ValueError):
        ValuePrediction(0.5, 0.2, 0.2)
    with pytest.raises(ValueError):
        ValuePrediction(0.0, 0.0, 1.0, (("e", (0.5, 0.2)),))


def test_neutral_prediction():
    cfg = RunConfig(events=(EventSpec("e", -0.5, 3),), r_min=-0.5)
    p = neutral_prediction(cfg)
    assert p.p2 == 1.0
    assert p.dist_for("e") == (0.25, 0.25, 0.25, 0.25)


def test_size_penalty_reward():
    assert size_penalty_reward(3) == pytest.approx(-0.6)
    assert size_penalty_reward(10) == -1.0
