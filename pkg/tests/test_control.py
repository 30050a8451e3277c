import numpy as np
import pytest
from hypothesis import given, strategies as st

from clearline.control import (
    EXTEND,
    RETRACT,
    InvalidScheduleError,
    ToolParams,
    ToolSchedule,
    merge_intervals,
    plan_schedule,
    raw_interval,
    simulate_tool_state,
    verify_safety,
)

from oracles import point_in_any_interval

PARAMS = ToolParams(retract_time_s=2.0, extend_time_s=1.0, margin_base_m=0.5, margin_per_mps=0.1)


# ---------------------------------------------------------------------------
# planning
# ---------------------------------------------------------------------------

def test_empty_input_empty_schedule():
    assert plan_schedule([], 1.0, PARAMS).events == ()


def test_single_sapling_reference_case():
    # x=10, v=1, retract 2 s, margin 0.5 + 0.1*v -> retract 7.4, extend 10.6
    sched = plan_schedule([10.0], 1.0, PARAMS)
    assert sched.events == ((7.4, RETRACT), (10.6, EXTEND))


def test_close_saplings_merge():
    sched = plan_schedule([10.0, 10.5], 1.0, PARAMS)
    assert len(sched.events) == 2
    assert sched.events[0] == (7.4, RETRACT)
    assert sched.events[1][0] == pytest.approx(11.1)


def test_touching_intervals_merge():
    # second raw interval starts exactly where the first ends
    params = ToolParams(retract_time_s=1.0, extend_time_s=1.0, margin_base_m=0.5)
    sched = plan_schedule([10.0, 12.0], 1.0, params)
    assert len(sched.events) == 2  # [8.5, 10.5] touches [10.5, 12.5]


def test_plan_requires_positive_speed():
    with pytest.raises(ValueError):
        plan_schedule([1.0], 0.0, PARAMS)


def test_schedule_invariants_enforced():
    with pytest.raises(InvalidScheduleError):
        ToolSchedule(events=((1.0, EXTEND),))
    with pytest.raises(InvalidScheduleError):
        ToolSchedule(events=((1.0, RETRACT), (1.0, EXTEND)))
    with pytest.raises(InvalidScheduleError):
        ToolSchedule(events=((1.0, RETRACT), (2.0, RETRACT)))


def test_merged_intervals_equal_union_oracle():
    rng = np.random.default_rng(61)
    for _ in range(50):
        saplings = sorted(rng.uniform(0, 50, rng.integers(1, 12)))
        v = float(rng.uniform(0.3, 3.0))
        raw = [raw_interval(x, v, PARAMS) for x in saplings]
        sched = plan_schedule(saplings, v, PARAMS)
        scheduled = sched.protected_intervals
        # membership sampled away from the (measure-zero) endpoints
        probes = rng.uniform(min(lo for lo, _ in raw) - 1, max(hi for _, hi in raw) + 1, 400)
        for x in probes:
            assert point_in_any_interval(x, raw) == point_in_any_interval(x, scheduled)


def test_monotone_margin_grows_intervals():
    base = plan_schedule([10.0, 14.0], 1.0, PARAMS)
    wider = plan_schedule(
        [10.0, 14.0],
        1.0,
        ToolParams(retract_time_s=2.0, extend_time_s=1.0, margin_base_m=0.9, margin_per_mps=0.3),
    )
    for (blo, bhi), (wlo, whi) in zip(base.protected_intervals, wider.protected_intervals):
        assert wlo <= blo and whi >= bhi


# ---------------------------------------------------------------------------
# tool state
# ---------------------------------------------------------------------------

def test_tool_state_single_sapling():
    sched = plan_schedule([10.0], 1.0, PARAMS)
    trace = simulate_tool_state(sched, PARAMS, 1.0)
    # retract at 7.4, fully in at 7.4 + 2*1 = 9.4; out again after 10.6
    assert trace.value_at(7.4) == pytest.approx(1.0)
    assert trace.value_at(9.4) == pytest.approx(0.0)
    assert trace.max_over(9.4, 10.6) == pytest.approx(0.0)
    assert trace.value_at(10.6 + 1.0) == pytest.approx(1.0)
    assert trace.value_at(8.4) == pytest.approx(0.5)


def test_tool_state_empty_schedule_fully_extended():
    trace = simulate_tool_state(ToolSchedule(events=()), PARAMS, 1.0)
    assert trace.value_at(-5.0) == 1.0
    assert trace.value_at(123.0) == 1.0


def test_tool_state_merged_pair():
    sched = plan_schedule([10.0, 10.5], 1.0, PARAMS)
    trace = simulate_tool_state(sched, PARAMS, 1.0)
    assert trace.max_over(9.4, 11.1) == pytest.approx(0.0)


def test_interrupted_extension_reverses_mid_ramp():
    # extend at 10, retract again at 10.4 with t_e*v = 1: only 40% out
    sched = ToolSchedule(events=((5.0, RETRACT), (10.0, EXTEND), (10.4, RETRACT), (20.0, EXTEND)))
    params = ToolParams(retract_time_s=1.0, extend_time_s=1.0)
    trace = simulate_tool_state(sched, params, 1.0)
    assert trace.value_at(10.4) == pytest.approx(0.4)
    # retracting from 0.4 takes 0.4 * t_r * v
    assert trace.value_at(10.8) == pytest.approx(0.0)


def test_measure_above():
    sched = plan_schedule([10.0], 1.0, PARAMS)
    trace = simulate_tool_state(sched, PARAMS, 1.0)
    # fraction <= 0.999 from 7.4 + 0.001*2 to 10.6 + 0.999*1
    lo = 7.4 + 0.001 * 2.0
    hi = 10.6 + 0.999 * 1.0
    span = (0.0, 20.0)
    assert trace.measure_above(0.999, *span) == pytest.approx(span[1] - span[0] - (hi - lo), abs=1e-9)


# ---------------------------------------------------------------------------
# safety verification
# ---------------------------------------------------------------------------

def test_planned_schedule_is_safe():
    report = verify_safety(plan_schedule([10.0], 1.0, PARAMS), [10.0], 1.0, PARAMS)
    assert report.ok
    assert report.saplings_checked == 1


def test_late_retract_violates():
    # retract only half the needed lead before the margin
    d = PARAMS.margin_at(1.0)
    bad = ToolSchedule(events=((10.0 - 0.5 * 2.0 - d, RETRACT), (10.0 + d, EXTEND)))
    report = verify_safety(bad, [10.0], 1.0, PARAMS)
    assert not report.ok
    assert report.violations[0][0] == 10.0
    assert report.violations[0][1] > 0.4


def test_random_plans_never_violate():
    rng = np.random.default_rng(67)
    for _ in range(200):
        saplings = sorted(rng.uniform(0, 80, rng.integers(1, 15)))
        v = float(rng.uniform(0.2, 4.0))
        params = ToolParams(
            retract_time_s=float(rng.uniform(0.2, 3.0)),
            extend_time_s=float(rng.uniform(0.2, 3.0)),
            margin_base_m=float(rng.uniform(0.0, 1.0)),
            margin_per_mps=float(rng.uniform(0.0, 0.5)),
        )
        sched = plan_schedule(saplings, v, params)
        assert verify_safety(sched, saplings, v, params).ok


@given(
    saplings=st.lists(st.floats(0, 100), min_size=1, max_size=10),
    v=st.floats(0.1, 5.0),
    tr=st.floats(0.1, 4.0),
    te=st.floats(0.1, 4.0),
    a=st.floats(0, 2.0),
    b=st.floats(0, 1.0),
)
def test_planner_soundness_property(saplings, v, tr, te, a, b):
    params = ToolParams(retract_time_s=tr, extend_time_s=te, margin_base_m=a, margin_per_mps=b)
    sched = plan_schedule(saplings, v, params)
    assert verify_safety(sched, saplings, v, params).ok


def test_cleared_plus_uncleared_is_span():
    sched = plan_schedule([10.0, 30.0], 1.0, PARAMS)
    trace = simulate_tool_state(sched, PARAMS, 1.0)
    span = (0.0, 50.0)
    above = trace.measure_above(0.999, *span)
    below = (span[1] - span[0]) - above
    report = verify_safety(sched, [10.0, 30.0], 1.0, PARAMS, span=span)
    assert report.cleared_length_m == pytest.approx(above)
    assert above + below == pytest.approx(50.0)


def test_merge_intervals_unit():
    assert merge_intervals([(0, 1), (2, 3)]) == [(0, 1), (2, 3)]
    assert merge_intervals([(0, 2), (1, 3)]) == [(0, 3)]
    assert merge_intervals([(0, 1), (1, 2)]) == [(0, 2)]
    assert merge_intervals([]) == []


def test_schedule_file_round_trip(tmp_path):
    from clearline.control import read_schedule, write_schedule

    sched = plan_schedule([10.0, 20.0], 1.0, PARAMS)
    path = tmp_path / "schedule.json"
    write_schedule(path, sched)
    assert read_schedule(path) == sched
