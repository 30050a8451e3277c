"""Temporal stabilization: world projection, track association, validation.

Per-frame detections are projected to positions along the travel axis and
associated into tracks by nearest-neighbour gating. A track whose hit
count reaches the configured minimum is emitted exactly once as a
validated sapling; short-lived tracks that expire first become review
candidates. Raising the minimum hit count trades sensitivity for
specificity without touching the detector.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .masks import Detection

DEFAULT_GATE_M = 0.30  # about half the typical in-line sapling spacing
DEFAULT_MAX_GAP_FRAMES = 2  # tolerated occlusion, e.g. a fern over the sapling


class FrameOrderError(RuntimeError):
    """Stream protocol violation: frame ids must be strictly increasing."""


class NoGroundIntersectionError(ValueError):
    """The pixel ray points at or above the horizon."""


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera on the tractor, tilted forward from straight down."""

    height_m: float
    tilt_rad: float
    fx_px: float
    fy_px: float
    cx_px: float
    cy_px: float
    image_width: int
    image_height: int

    def __post_init__(self):
        if self.height_m <= 0:
            raise ValueError("camera height must be > 0")
        if not 0.0 <= self.tilt_rad < math.pi / 2:
            raise ValueError("tilt must be in [0, pi/2)")
        if self.fx_px <= 0 or self.fy_px <= 0:
            raise ValueError("focal lengths must be > 0")

    def to_dict(self) -> dict:
        return {
            "height_m": self.height_m,
            "tilt_rad": self.tilt_rad,
            "fx_px": self.fx_px,
            "fy_px": self.fy_px,
            "cx_px": self.cx_px,
            "cy_px": self.cy_px,
            "image_width": self.image_width,
            "image_height": self.image_height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraModel":
        return cls(**d)


@dataclass(frozen=True)
class OdometrySample:
    t_seconds: float
    x_m: float
    v_mps: float

    def __post_init__(self):
        if self.v_mps < 0:
            raise ValueError("speed must be >= 0")


class OdometryTrack:
    """Time-ordered odometry stream with interpolated lookup.

    Position interpolates linearly between samples; speed holds the last
    sample's value (zero-order hold). Queries outside the sampled range
    clamp to the endpoints.
    """

    def __init__(self, samples):
        samples = list(samples)
        if not samples:
            raise ValueError("odometry stream is empty")
        for a, b in zip(samples, samples[1:]):
            if b.t_seconds < a.t_seconds:
                raise ValueError("odometry timestamps must be non-decreasing")
        self.samples = samples

    def at(self, t: float) -> OdometrySample:
        s = self.samples
        if t <= s[0].t_seconds:
            return OdometrySample(t, s[0].x_m, s[0].v_mps)
        if t >= s[-1].t_seconds:
            return OdometrySample(t, s[-1].x_m, s[-1].v_mps)
        lo, hi = 0, len(s) - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if s[mid].t_seconds <= t:
                lo = mid
            else:
                hi = mid
        a, b = s[lo], s[hi]
        span = b.t_seconds - a.t_seconds
        frac = 0.0 if span == 0 else (t - a.t_seconds) / span
        return OdometrySample(t, a.x_m + frac * (b.x_m - a.x_m), a.v_mps)


def project_detection(det: Detection, cam: CameraModel, odo: OdometrySample) -> float:
    """World position of a detection along the travel axis.

    The ray through the bbox center is intersected with the flat ground
    plane: forward offset d = height * tan(tilt + atan((cy - v) / fy)),
    measured from the camera's ground projection.
    """
    u, v = det.center()
    if not (0 <= u <= cam.image_width - 1 and 0 <= v <= cam.image_height - 1):
        raise ValueError(f"bbox center ({u}, {v}) outside the image")
    angle = cam.tilt_rad + math.atan((cam.cy_px - v) / cam.fy_px)
    if angle >= math.pi / 2:
        raise NoGroundIntersectionError(
            f"ray at {angle:.4f} rad from vertical never reaches the ground"
        )
    return odo.x_m + cam.height_m * math.tan(angle)


@dataclass(frozen=True)
class StabilizerConfig:
    min_hits: int = 3  # frames with a consistent position required to validate
    gate_m: float = DEFAULT_GATE_M
    max_gap_frames: int = DEFAULT_MAX_GAP_FRAMES
    position_update: str = "mean"

    def __post_init__(self):
        if self.min_hits < 1:
            raise ValueError("min_hits must be >= 1")
        if self.gate_m <= 0:
            raise ValueError("gate_m must be > 0")
        if self.max_gap_frames < 0:
            raise ValueError("max_gap_frames must be >= 0")
        if self.position_update not in ("mean", "last"):
            raise ValueError("position_update must be 'mean' or 'last'")


@dataclass
class Track:
    id: int
    x_world_m: float
    hits: int
    first_seen: int
    last_seen: int
    validated: bool = False
    positions: list = field(default_factory=list)
    frames: list = field(default_factory=list)
    score_history: list = field(default_factory=list)


@dataclass(frozen=True)
class ValidatedSapling:
    x_s_m: float
    frame_id: int
    track_id: int

    def to_record(self) -> dict:
        return {"x_s_m": self.x_s_m, "frame_id": self.frame_id, "track_id": self.track_id}


@dataclass(frozen=True)
class WorldDetection:
    """A detection already projected onto the travel axis."""

    x_m: float
    score: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.x_m):
            raise ValueError("world position must be finite")


class Stabilizer:
    """Sequential state machine over one time-ordered detection stream."""

    def __init__(self, cfg: StabilizerConfig):
        self.cfg = cfg
        self.live: list = []
        self.closed: list = []
        self._next_id = 1
        self._last_frame: int | None = None
        self._finished = False

    def _expire(self, frame_id: int) -> None:
        # a track may still be matched after max_gap_frames wholly-missed
        # frames; one more miss and it expires
        keep = []
        for tr in self.live:
            if frame_id - tr.last_seen - 1 > self.cfg.max_gap_frames:
                self.closed.append(tr)
            else:
                keep.append(tr)
        self.live = keep

    def _new_track(self, det: WorldDetection, frame_id: int) -> Track:
        tr = Track(
            id=self._next_id,
            x_world_m=det.x_m,
            hits=1,
            first_seen=frame_id,
            last_seen=frame_id,
            positions=[det.x_m],
            frames=[frame_id],
            score_history=[det.score],
        )
        self._next_id += 1
        self.live.append(tr)
        return tr

    def step(self, frame_id: int, detections) -> list:
        """Advance one frame; returns saplings newly validated this frame."""
        if self._finished:
            raise FrameOrderError("stream already finished")
        if self._last_frame is not None and frame_id <= self._last_frame:
            raise FrameOrderError(
                f"frame_id {frame_id} does not follow {self._last_frame}"
            )
        self._last_frame = frame_id
        self._expire(frame_id)

        detections = list(detections)
        # closest-pair-first assignment inside the gate
        pairs = []
        for ti, tr in enumerate(self.live):
            for di, det in enumerate(detections):
                d = abs(det.x_m - tr.x_world_m)
                if d <= self.cfg.gate_m:
                    pairs.append((d, tr.id, di, ti))
        pairs.sort()
        used_tracks = set()
        used_dets = set()
        assignments = []
        for d, _, di, ti in pairs:
            if ti in used_tracks or di in used_dets:
                continue
            used_tracks.add(ti)
            used_dets.add(di)
            assignments.append((ti, di))

        validated = []
        for ti, di in assignments:
            tr = self.live[ti]
            det = detections[di]
            tr.hits += 1
            tr.last_seen = frame_id
            tr.positions.append(det.x_m)
            tr.frames.append(frame_id)
            tr.score_history.append(det.score)
            if self.cfg.position_update == "mean":
                tr.x_world_m = sum(tr.positions) / len(tr.positions)
            else:
                tr.x_world_m = det.x_m
            if not tr.validated and tr.hits >= self.cfg.min_hits:
                tr.validated = True
                validated.append(ValidatedSapling(tr.x_world_m, frame_id, tr.id))

        for di, det in enumerate(detections):
            if di in used_dets:
                continue
            tr = self._new_track(det, frame_id)
            if tr.hits >= self.cfg.min_hits:
                tr.validated = True
                validated.append(ValidatedSapling(tr.x_world_m, frame_id, tr.id))
        return validated

    def finish(self) -> None:
        """Close the stream: every live track expires."""
        if not self._finished:
            self.closed.extend(self.live)
            self.live = []
            self._finished = True

    def review_candidates(self) -> list:
        """Expired tracks that never validated, for the annotation queue."""
        if not self._finished:
            raise FrameOrderError("finish() the stream before collecting review candidates")
        return [tr for tr in self.closed if not tr.validated]


def run_stream(frames, cfg: StabilizerConfig):
    """Convenience wrapper: frames is an iterable of (frame_id, detections).

    Returns (validated saplings, review candidate tracks).
    """
    stab = Stabilizer(cfg)
    validated = []
    for frame_id, dets in frames:
        validated.extend(stab.step(frame_id, dets))
    stab.finish()
    return validated, stab.review_candidates()


# ---------------------------------------------------------------------------
# Stream files
# ---------------------------------------------------------------------------

def read_odometry(path) -> OdometryTrack:
    samples = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                rec = json.loads(line)
                samples.append(OdometrySample(rec["t"], rec["x_m"], rec["v_mps"]))
    return OdometryTrack(samples)


def write_odometry(path, samples) -> None:
    with open(path, "w") as f:
        for s in samples:
            f.write(json.dumps({"t": s.t_seconds, "x_m": s.x_m, "v_mps": s.v_mps}) + "\n")


def write_validated(path, saplings) -> None:
    with open(path, "w") as f:
        json.dump([s.to_record() for s in saplings], f, indent=2, sort_keys=True)
        f.write("\n")


def review_queue_records(tracks) -> list:
    return [
        {
            "track_id": tr.id,
            "frames": list(tr.frames),
            "positions": list(tr.positions),
            "hits": tr.hits,
            "reason": "single-frame-detection" if tr.hits == 1 else "short-track",
        }
        for tr in tracks
    ]


def write_review_queue(path, tracks) -> None:
    with open(path, "w") as f:
        json.dump(review_queue_records(tracks), f, indent=2, sort_keys=True)
        f.write("\n")
