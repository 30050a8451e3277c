"""Deterministic synthetic field and detector for desk-scale verification.

The world is one-dimensional along the travel axis. A scenario fully
determines the field (sapling line with jittered spacing and skips, weeds
from a homogeneous process) and a detector error model (per-frame hit
probability, Poisson false detections, Gaussian position noise, score
distributions). end_to_end pipes the synthetic detection log through the
stabilizer and the tool planner, replanning as validations arrive, and
scores the outcome against ground truth.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import control
from .control import ToolParams, ToolTrace, RETRACT, EXTEND
from .stabilize import Stabilizer, StabilizerConfig, WorldDetection

DEFAULT_VIEW_WINDOW_M = 2.0


class SpeedProfile:
    """Piecewise-constant v(t); the last segment extends indefinitely."""

    def __init__(self, segments):
        segments = [(float(d), float(v)) for d, v in segments]
        if not segments:
            raise ValueError("speed profile needs at least one segment")
        for d, v in segments:
            if d <= 0:
                raise ValueError("segment durations must be > 0")
            if v <= 0:
                raise ValueError("the tractor must keep moving: v must be > 0")
        self.segments = segments
        self._t_knots = [0.0]
        self._x_knots = [0.0]
        for d, v in segments:
            self._t_knots.append(self._t_knots[-1] + d)
            self._x_knots.append(self._x_knots[-1] + d * v)

    def v_at(self, t: float) -> float:
        for (d, v), t0 in zip(self.segments, self._t_knots):
            if t < t0 + d:
                return v
        return self.segments[-1][1]

    def x_at(self, t: float) -> float:
        if t <= 0:
            return 0.0
        for (d, v), t0, x0 in zip(self.segments, self._t_knots, self._x_knots):
            if t < t0 + d:
                return x0 + (t - t0) * v
        return self._x_knots[-1] + (t - self._t_knots[-1]) * self.segments[-1][1]

    def t_at_x(self, x: float) -> float:
        if x <= 0:
            return 0.0
        for (d, v), t0, x0 in zip(self.segments, self._t_knots, self._x_knots):
            if x < x0 + d * v:
                return t0 + (x - x0) / v
        return self._t_knots[-1] + (x - self._x_knots[-1]) / self.segments[-1][1]

    def knot_times(self) -> list:
        return list(self._t_knots[1:-1])


@dataclass(frozen=True)
class DetectorModel:
    """Stand-in for a real detector: hit/false rates and score draws."""

    tp_prob: float = 0.9
    fp_per_frame: float = 0.1
    pos_noise_m: float = 0.03
    score_true: tuple = (0.6, 1.0)
    score_false: tuple = (0.0, 0.7)

    def __post_init__(self):
        if not 0.0 <= self.tp_prob <= 1.0:
            raise ValueError("tp_prob must be in [0, 1]")
        if self.fp_per_frame < 0 or self.pos_noise_m < 0:
            raise ValueError("fp_per_frame and pos_noise_m must be >= 0")


@dataclass(frozen=True)
class FieldScenario:
    seed: int = 0
    line_length_m: float = 50.0
    sapling_spacing_mean_m: float = 1.0
    spacing_jitter_m: float = 0.2
    skip_probability: float = 0.1
    weed_density_per_m: float = 2.0
    fps: float = 10.0
    speed_segments: tuple = ((3600.0, 1.0),)  # (duration_s, v_mps)
    view_window_m: float = DEFAULT_VIEW_WINDOW_M
    detector: DetectorModel = field(default_factory=DetectorModel)

    def __post_init__(self):
        if self.sapling_spacing_mean_m <= 0:
            raise ValueError("sapling spacing mean must be > 0")
        if not 0.0 <= self.skip_probability <= 1.0:
            raise ValueError("skip_probability must be in [0, 1]")
        if self.spacing_jitter_m < 0 or self.weed_density_per_m < 0:
            raise ValueError("jitter and weed density must be >= 0")
        if self.fps <= 0 or self.view_window_m <= 0 or self.line_length_m <= 0:
            raise ValueError("fps, view window and line length must be > 0")

    @property
    def speed_profile(self) -> SpeedProfile:
        return SpeedProfile(self.speed_segments)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["speed_segments"] = [list(s) for s in self.speed_segments]
        d["detector"]["score_true"] = list(self.detector.score_true)
        d["detector"]["score_false"] = list(self.detector.score_false)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FieldScenario":
        d = dict(d)
        det = dict(d.pop("detector", {}))
        if "score_true" in det:
            det["score_true"] = tuple(det["score_true"])
        if "score_false" in det:
            det["score_false"] = tuple(det["score_false"])
        if "speed_segments" in d:
            d["speed_segments"] = tuple(tuple(s) for s in d["speed_segments"])
        return cls(detector=DetectorModel(**det), **d)


@dataclass(frozen=True)
class FieldTruth:
    sapling_positions: tuple
    weed_positions: tuple


@dataclass(frozen=True)
class SimDetection:
    frame_id: int
    t_seconds: float
    x_m: float
    score: float
    true_index: int | None  # ground-truth sapling index, None for a false hit


@dataclass(frozen=True)
class FrameRecord:
    frame_id: int
    t_seconds: float
    x_tractor_m: float
    v_mps: float
    detections: tuple


def _rng_streams(scenario: FieldScenario):
    field_ss, det_ss = np.random.SeedSequence(scenario.seed).spawn(2)
    return np.random.default_rng(field_ss), np.random.default_rng(det_ss)


def generate_field(scenario: FieldScenario) -> FieldTruth:
    """Sapling line plus weeds, fully determined by the scenario seed."""
    rng, _ = _rng_streams(scenario)
    saplings = []
    x = 0.0
    mean, jitter = scenario.sapling_spacing_mean_m, scenario.spacing_jitter_m
    while True:
        gap = mean + rng.uniform(-jitter, jitter) if jitter > 0 else mean
        x += max(gap, 0.01 * mean)
        if x > scenario.line_length_m:
            break
        if rng.random() >= scenario.skip_probability:
            saplings.append(x)
    n_weeds = rng.poisson(scenario.weed_density_per_m * scenario.line_length_m)
    weeds = np.sort(rng.uniform(0.0, scenario.line_length_m, n_weeds))
    return FieldTruth(sapling_positions=tuple(saplings), weed_positions=tuple(weeds.tolist()))


def run_detector(field_truth: FieldTruth, scenario: FieldScenario):
    """Per-frame synthetic detections plus the odometry stream.

    Each in-view sapling fires with tp_prob at its position plus Gaussian
    noise; Poisson(fp_per_frame) false hits land uniformly in the view
    window. Returns a list of FrameRecord.
    """
    _, rng = _rng_streams(scenario)
    profile = scenario.speed_profile
    det = scenario.detector
    saplings = field_truth.sapling_positions
    frames = []
    k = 0
    while True:
        t = k / scenario.fps
        x_t = profile.x_at(t)
        if x_t >= scenario.line_length_m:
            break
        hits = []
        for i, x_s in enumerate(saplings):
            if x_t < x_s <= x_t + scenario.view_window_m:
                if rng.random() < det.tp_prob:
                    pos = x_s + det.pos_noise_m * rng.standard_normal()
                    score = rng.uniform(*det.score_true)
                    hits.append(SimDetection(k, t, pos, score, i))
        n_fp = rng.poisson(det.fp_per_frame)
        for _ in range(n_fp):
            pos = rng.uniform(x_t, x_t + scenario.view_window_m)
            score = rng.uniform(*det.score_false)
            hits.append(SimDetection(k, t, pos, score, None))
        frames.append(FrameRecord(k, t, x_t, profile.v_at(t), tuple(hits)))
        k += 1
    return frames


@dataclass(frozen=True)
class SimReport:
    saplings_total: int
    saplings_validated: int
    saplings_protected: int
    weeds_total: int
    weeds_cleared: int
    weeds_cleared_fraction: float
    false_retraction_length_m: float
    cleared_length_m: float
    run_length_m: float
    false_validations: int
    late_validations: int
    missed_validations: int
    events: tuple = ()

    def __post_init__(self):
        if not (0 <= self.saplings_protected <= self.saplings_validated <= self.saplings_total):
            raise ValueError("count consistency broken: protected <= validated <= total")
        if not 0.0 <= self.weeds_cleared_fraction <= 1.0:
            raise ValueError("weeds_cleared_fraction outside [0, 1]")

    def to_dict(self, include_events: bool = False) -> dict:
        d = {
            "saplings_total": self.saplings_total,
            "saplings_validated": self.saplings_validated,
            "saplings_protected": self.saplings_protected,
            "weeds_total": self.weeds_total,
            "weeds_cleared": self.weeds_cleared,
            "weeds_cleared_fraction": self.weeds_cleared_fraction,
            "false_retraction_length_m": self.false_retraction_length_m,
            "cleared_length_m": self.cleared_length_m,
            "run_length_m": self.run_length_m,
            "false_validations": self.false_validations,
            "late_validations": self.late_validations,
            "missed_validations": self.missed_validations,
        }
        if include_events:
            d["events"] = [list(e) for e in self.events]
        return d


class _ToolExecutor:
    """Online retract/extend command latching against merged intervals.

    Protection intervals arrive as validations happen; commands latch at
    the exact travel coordinate where the tractor crosses an interval
    boundary. A validation whose retract point already passed clamps to
    an immediate retract (late); one that is entirely behind is missed.
    """

    def __init__(self):
        self.intervals: list = []  # disjoint sorted [lo, hi]
        self.commands: list = []  # (x_m, command) in commit order
        self.retracted = False
        self.x_cur = 0.0
        self.late = 0
        self.missed = 0

    def advance(self, x_new: float) -> None:
        while self.intervals:
            lo, hi = self.intervals[0]
            if not self.retracted:
                if lo > x_new:
                    break
                self.commands.append((max(lo, self.x_cur), RETRACT))
                self.retracted = True
            if hi > x_new:
                break
            self.commands.append((hi, EXTEND))
            self.retracted = False
            self.intervals.pop(0)
        self.x_cur = max(self.x_cur, x_new)

    def add_interval(self, lo: float, hi: float) -> None:
        if hi <= self.x_cur:
            self.missed += 1
            return
        if lo < self.x_cur:
            lo = self.x_cur
            self.late += 1
        merged = control.merge_intervals(self.intervals + [[lo, hi]])
        self.intervals = [[a, b] for a, b in merged]
        if not self.retracted and self.intervals[0][0] <= self.x_cur < self.intervals[0][1]:
            self.commands.append((self.x_cur, RETRACT))
            self.retracted = True

    def flush(self) -> None:
        while self.intervals:
            lo, hi = self.intervals.pop(0)
            if not self.retracted:
                self.commands.append((max(lo, self.x_cur), RETRACT))
            self.commands.append((hi, EXTEND))
            self.retracted = False


def _trace_from_commands(commands, params: ToolParams, profile: SpeedProfile, t_end: float) -> ToolTrace:
    """Integrate the tool fraction in time, then map breakpoints to x.

    Exact for piecewise-constant speed: the fraction is piecewise linear
    in t and x(t) is piecewise linear, so adding breakpoints at speed
    knots keeps the x-domain trace piecewise linear.
    """
    cmd_times = [(profile.t_at_x(x), cmd) for x, cmd in commands]
    t_pts, f_pts = [0.0], [1.0]
    f, target, time_const = 1.0, 1.0, params.extend_time_s
    prev_t = 0.0
    for t_cmd, cmd in cmd_times + [(t_end, None)]:
        t_cmd = max(t_cmd, prev_t)
        if f != target:
            need = abs(target - f) * time_const
            if prev_t + need <= t_cmd:
                t_pts.append(prev_t + need)
                f_pts.append(target)
                f = target
            else:
                f += (1.0 if target > f else -1.0) * (t_cmd - prev_t) / time_const
        t_pts.append(t_cmd)
        f_pts.append(f)
        if cmd == RETRACT:
            target, time_const = 0.0, params.retract_time_s
        elif cmd == EXTEND:
            target, time_const = 1.0, params.extend_time_s
        prev_t = t_cmd
    breaks = sorted(set(t_pts) | {t for t in profile.knot_times() if t <= t_end})

    def f_at(t):
        from bisect import bisect_right

        if t <= t_pts[0]:
            return f_pts[0]
        if t >= t_pts[-1]:
            return f_pts[-1]
        i = bisect_right(t_pts, t) - 1
        if t_pts[i + 1] == t_pts[i]:
            return f_pts[i + 1]
        u = (t - t_pts[i]) / (t_pts[i + 1] - t_pts[i])
        return f_pts[i] + u * (f_pts[i + 1] - f_pts[i])

    xs = [profile.x_at(t) for t in breaks]
    fs = [f_at(t) for t in breaks]
    return ToolTrace(xs, fs)


def _subtract_intervals(base, cuts):
    """Interval-set difference: base minus the union of cuts."""
    out = list(base)
    for c_lo, c_hi in control.merge_intervals(cuts) if cuts else []:
        nxt = []
        for lo, hi in out:
            if c_hi <= lo or hi <= c_lo:
                nxt.append((lo, hi))
                continue
            if lo < c_lo:
                nxt.append((lo, c_lo))
            if c_hi < hi:
                nxt.append((c_hi, hi))
        out = nxt
    return out


def end_to_end(
    scenario: FieldScenario,
    stab_cfg: StabilizerConfig,
    tool_params: ToolParams,
    include_events: bool = False,
) -> SimReport:
    """Full pipeline on one synthetic run: detect, stabilize, plan, score."""
    field_truth = generate_field(scenario)
    frames = run_detector(field_truth, scenario)
    profile = scenario.speed_profile

    stab = Stabilizer(stab_cfg)
    execu = _ToolExecutor()
    events = []
    validated_positions = []
    for fr in frames:
        execu.advance(fr.x_tractor_m)
        dets = [WorldDetection(x_m=d.x_m, score=d.score) for d in fr.detections]
        for val in stab.step(fr.frame_id, dets):
            validated_positions.append(val.x_s_m)
            lo, hi = control.raw_interval(val.x_s_m, fr.v_mps, tool_params)
            execu.add_interval(lo, hi)
            if include_events:
                events.append(("validated", fr.frame_id, val.track_id, val.x_s_m))
    stab.finish()
    execu.flush()
    if include_events:
        events.extend(("command", None, cmd, x) for x, cmd in execu.commands)

    last_cmd_t = max(
        (profile.t_at_x(x) for x, _ in execu.commands),
        default=0.0,
    )
    t_end = max(frames[-1].t_seconds if frames else 0.0, last_cmd_t)
    t_end += tool_params.retract_time_s + tool_params.extend_time_s + 1.0
    trace = _trace_from_commands(execu.commands, tool_params, profile, t_end)

    # score against ground truth
    saplings = field_truth.sapling_positions
    weeds = field_truth.weed_positions
    length = scenario.line_length_m

    validated_flags = [False] * len(saplings)
    false_validations = 0
    for x_v in validated_positions:
        best_i, best_d = None, stab_cfg.gate_m
        for i, x_s in enumerate(saplings):
            d = abs(x_s - x_v)
            if d <= best_d:
                best_i, best_d = i, d
        if best_i is None:
            false_validations += 1
        else:
            validated_flags[best_i] = True

    protected = 0
    for i, x_s in enumerate(saplings):
        if validated_flags[i] and trace.value_at(x_s) <= 1e-12:
            protected += 1

    weeds_cleared = sum(1 for x_w in weeds if trace.value_at(x_w) > control.FULL_EXTENSION_EPS)
    cleared_length = trace.measure_above(control.FULL_EXTENSION_EPS, 0.0, length)

    # retraction not attributable to a true sapling's own ideal footprint
    ideal = []
    for x_s in saplings:
        v_pass = profile.v_at(profile.t_at_x(x_s))
        lo, hi = control.raw_interval(x_s, v_pass, tool_params)
        ideal.append(
            (
                lo + (1.0 - control.FULL_EXTENSION_EPS) * tool_params.retract_time_s * v_pass,
                hi + control.FULL_EXTENSION_EPS * tool_params.extend_time_s * v_pass,
            )
        )
    false_len = 0.0
    for lo, hi in _subtract_intervals([(0.0, length)], ideal):
        if hi > lo:
            false_len += (hi - lo) - trace.measure_above(control.FULL_EXTENSION_EPS, lo, hi)

    return SimReport(
        saplings_total=len(saplings),
        saplings_validated=sum(validated_flags),
        saplings_protected=protected,
        weeds_total=len(weeds),
        weeds_cleared=weeds_cleared,
        weeds_cleared_fraction=(weeds_cleared / len(weeds)) if weeds else 1.0,
        false_retraction_length_m=false_len,
        cleared_length_m=cleared_length,
        run_length_m=length,
        false_validations=false_validations,
        late_validations=execu.late,
        missed_validations=execu.missed,
        events=tuple(events),
    )


def read_scenario(path) -> FieldScenario:
    with open(path) as f:
        return FieldScenario.from_dict(json.load(f))


def write_scenario(path, scenario: FieldScenario) -> None:
    with open(path, "w") as f:
        json.dump(scenario.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
