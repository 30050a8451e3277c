"""Retract/extend scheduling for the cutting tool with speed-aware margins.

A validated sapling at position x gets a raw protected interval
[x - retract_time * v - margin(v), x + margin(v)]: the retract command is
issued early enough that the tool is fully in before the margin starts,
and extension waits until the margin ends. Overlapping or touching
intervals merge into a single retract/extend pair.
"""

from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import dataclass

RETRACT = "RETRACT"
EXTEND = "EXTEND"

FULL_EXTENSION_EPS = 0.999  # tool counts as cutting above this fraction


class InvalidScheduleError(ValueError):
    """Schedule breaks ordering or retract/extend alternation."""


@dataclass(frozen=True)
class ToolParams:
    retract_time_s: float
    extend_time_s: float
    margin_base_m: float = 0.0  # margin(v) = base + per_mps * v
    margin_per_mps: float = 0.0

    def __post_init__(self):
        if self.retract_time_s <= 0 or self.extend_time_s <= 0:
            raise ValueError("retract/extend times must be > 0")
        if self.margin_base_m < 0 or self.margin_per_mps < 0:
            raise ValueError("margin coefficients must be >= 0")

    def margin_at(self, v: float) -> float:
        return self.margin_base_m + self.margin_per_mps * v


@dataclass(frozen=True)
class ToolSchedule:
    events: tuple  # ((x_m, command), ...) strictly increasing x

    def __post_init__(self):
        prev_x = None
        expect = RETRACT
        for x, cmd in self.events:
            if cmd not in (RETRACT, EXTEND):
                raise InvalidScheduleError(f"unknown command {cmd!r}")
            if cmd != expect:
                raise InvalidScheduleError(
                    f"commands must alternate starting with {RETRACT}; got {cmd} at {x}"
                )
            if prev_x is not None and x <= prev_x:
                raise InvalidScheduleError("event positions must be strictly increasing")
            prev_x = x
            expect = EXTEND if cmd == RETRACT else RETRACT

    @property
    def protected_intervals(self) -> list:
        """(retract_x, extend_x) pairs; a trailing retract is open-ended."""
        out = []
        start = None
        for x, cmd in self.events:
            if cmd == RETRACT:
                start = x
            else:
                out.append((start, x))
                start = None
        if start is not None:
            out.append((start, float("inf")))
        return out

    def to_records(self) -> list:
        return [{"x_m": x, "command": cmd} for x, cmd in self.events]

    @classmethod
    def from_records(cls, records) -> "ToolSchedule":
        return cls(events=tuple((float(r["x_m"]), r["command"]) for r in records))


def raw_interval(x_s: float, v_t: float, params: ToolParams) -> tuple:
    d = params.margin_at(v_t)
    return (x_s - params.retract_time_s * v_t - d, x_s + d)


def merge_intervals(intervals) -> list:
    """Union of closed intervals; touching endpoints merge."""
    merged = []
    for lo, hi in sorted(intervals):
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [(lo, hi) for lo, hi in merged]


def plan_schedule(saplings, v_t: float, params: ToolParams) -> ToolSchedule:
    """Schedule one retract/extend pair per merged protected interval."""
    if v_t <= 0:
        raise ValueError("tractor speed must be > 0")
    intervals = merge_intervals(raw_interval(x, v_t, params) for x in saplings)
    events = []
    for lo, hi in intervals:
        events.append((lo, RETRACT))
        events.append((hi, EXTEND))
    return ToolSchedule(events=tuple(events))


class ToolTrace:
    """Piecewise-linear tool extension fraction as a function of travel x.

    Constant extrapolation outside the breakpoint range.
    """

    def __init__(self, xs, fs):
        if len(xs) != len(fs) or len(xs) < 1:
            raise ValueError("need matching, non-empty breakpoint arrays")
        for a, b in zip(xs, xs[1:]):
            if b < a:
                raise ValueError("breakpoints must be non-decreasing")
        self.xs = list(xs)
        self.fs = list(fs)

    def value_at(self, x: float) -> float:
        xs, fs = self.xs, self.fs
        if x <= xs[0]:
            return fs[0]
        if x >= xs[-1]:
            return fs[-1]
        i = bisect_right(xs, x) - 1
        if xs[i + 1] == xs[i]:
            return fs[i + 1]
        t = (x - xs[i]) / (xs[i + 1] - xs[i])
        return fs[i] + t * (fs[i + 1] - fs[i])

    def max_over(self, lo: float, hi: float) -> float:
        """Max of the piecewise-linear function on [lo, hi]."""
        best = max(self.value_at(lo), self.value_at(hi))
        for x, f in zip(self.xs, self.fs):
            if lo < x < hi:
                best = max(best, f)
        return best

    def measure_above(self, level: float, lo: float, hi: float) -> float:
        """Lebesgue measure of {x in [lo, hi] : f(x) > level}."""
        cuts = [lo] + [x for x in self.xs if lo < x < hi] + [hi]
        total = 0.0
        for a, b in zip(cuts, cuts[1:]):
            if b <= a:
                continue
            fa, fb = self.value_at(a), self.value_at(b)
            # f is linear on (a, b)
            if fa > level and fb > level:
                total += b - a
            elif fa <= level and fb <= level:
                continue
            else:
                # one crossing
                xc = a + (level - fa) / (fb - fa) * (b - a)
                total += (b - xc) if fb > level else (xc - a)
        return total


def simulate_tool_state(schedule: ToolSchedule, params: ToolParams, v_t: float) -> ToolTrace:
    """Physical tool response to a schedule at constant speed.

    Retraction runs at 1/retract_time per second and extension at
    1/extend_time per second, so a command issued mid-ramp just reverses
    from the current fraction.
    """
    if v_t <= 0:
        raise ValueError("tractor speed must be > 0")
    events = list(schedule.events)
    if not events:
        return ToolTrace([0.0], [1.0])

    xs = [events[0][0]]
    fs = [1.0]
    cur = 1.0
    for i, (x, cmd) in enumerate(events):
        if xs[-1] < x:
            xs.append(x)
            fs.append(cur)
        if cmd == RETRACT:
            ramp = cur * params.retract_time_s * v_t
            target = 0.0
        else:
            ramp = (1.0 - cur) * params.extend_time_s * v_t
            target = 1.0
        end_x = x + ramp
        next_x = events[i + 1][0] if i + 1 < len(events) else None
        if next_x is not None and next_x < end_x:
            # ramp interrupted by the next command
            frac = (next_x - x) / ramp if ramp > 0 else 1.0
            cur = cur + (target - cur) * frac
            xs.append(next_x)
            fs.append(cur)
        else:
            if end_x > xs[-1]:
                xs.append(end_x)
                fs.append(target)
            cur = target
    return ToolTrace(xs, fs)


@dataclass(frozen=True)
class SafetyReport:
    violations: tuple  # (sapling_x, max_extension_seen) per failure
    cleared_length_m: float
    span: tuple
    saplings_checked: int

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "violations": [
                {"x_s_m": x, "max_extension": f} for x, f in self.violations
            ],
            "cleared_length_m": self.cleared_length_m,
            "span": list(self.span),
            "saplings_checked": self.saplings_checked,
        }


def verify_safety(
    schedule: ToolSchedule,
    saplings,
    v_t: float,
    params: ToolParams,
    span: tuple | None = None,
) -> SafetyReport:
    """Check the tool is fully retracted across every sapling's margin.

    Violations are report content, never exceptions. Cleared length is the
    measure of the span where the extension fraction exceeds 0.999.
    """
    trace = simulate_tool_state(schedule, params, v_t)
    saplings = list(saplings)
    if span is None:
        anchors = [x for x, _ in schedule.events] + list(saplings)
        if anchors:
            pad = (params.retract_time_s + params.extend_time_s) * v_t + params.margin_at(v_t) + 1.0
            span = (min(anchors) - pad, max(anchors) + pad)
        else:
            span = (0.0, 0.0)
    d = params.margin_at(v_t)
    violations = []
    for x_s in saplings:
        peak = trace.max_over(x_s - d, x_s + d)
        if peak > 1e-12:
            violations.append((x_s, peak))
    cleared = trace.measure_above(FULL_EXTENSION_EPS, span[0], span[1])
    return SafetyReport(
        violations=tuple(violations),
        cleared_length_m=cleared,
        span=span,
        saplings_checked=len(saplings),
    )


def write_schedule(path, schedule: ToolSchedule) -> None:
    with open(path, "w") as f:
        json.dump(schedule.to_records(), f, indent=2, sort_keys=True)
        f.write("\n")


def read_schedule(path) -> ToolSchedule:
    with open(path) as f:
        return ToolSchedule.from_records(json.load(f))
