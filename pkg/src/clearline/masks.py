"""Fuzzy confidence masks: spray strokes, thresholding, clustering, bboxes.

A mask holds one confidence value per pixel in [0, 1]. Spray strokes
composite with max(), so repainting a region never lowers recorded
confidence and replaying a stroke log is order-insensitive for overlaps
of equal intensity; erasing is the min() complement. Detections are
derived by thresholding the mask and clustering surviving pixels into
connected components.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Iterable, Literal, Sequence

import numpy as np
from scipy import ndimage

Falloff = Literal["hard", "linear", "gaussian"]

DEFAULT_MIN_AREA = 16  # suppresses single-pixel spray noise
DEFAULT_CONNECTIVITY = 8
DEFAULT_THRESHOLD = 0.5

_STRUCTURE_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_STRUCTURE_8 = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class ImageGrid:
    """Single-channel image plane, row-major, shape (height, width)."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        if self.pixels.shape != (self.height, self.width):
            raise ValueError(
                f"pixel array shape {self.pixels.shape} does not match "
                f"(height={self.height}, width={self.width})"
            )
        if not np.all(np.isfinite(self.pixels)):
            raise ValueError("image contains non-finite values")

    @classmethod
    def from_array(cls, pixels: np.ndarray) -> "ImageGrid":
        pixels = np.asarray(pixels)
        if pixels.ndim != 2:
            raise ValueError("expected a 2-D array")
        return cls(width=pixels.shape[1], height=pixels.shape[0], pixels=pixels)


@dataclass(frozen=True)
class FuzzyMask:
    """Per-pixel annotator/predictor confidence grid, values in [0, 1]."""

    width: int
    height: int
    confidence: np.ndarray

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("mask dimensions must be positive")
        if self.confidence.shape != (self.height, self.width):
            raise ValueError(
                f"confidence shape {self.confidence.shape} does not match "
                f"(height={self.height}, width={self.width})"
            )
        c = self.confidence
        if not np.all(np.isfinite(c)) or c.min(initial=0.0) < 0.0 or c.max(initial=0.0) > 1.0:
            raise ValueError("confidence values must be finite and in [0, 1]")

    @classmethod
    def zeros(cls, width: int, height: int) -> "FuzzyMask":
        return cls(width, height, np.zeros((height, width), dtype=np.float64))

    @classmethod
    def from_array(cls, confidence: np.ndarray) -> "FuzzyMask":
        confidence = np.asarray(confidence, dtype=np.float64)
        if confidence.ndim != 2:
            raise ValueError("expected a 2-D array")
        return cls(confidence.shape[1], confidence.shape[0], confidence)


@dataclass(frozen=True)
class Component:
    """Connected cluster of above-threshold pixels."""

    pixels: frozenset
    bbox: tuple  # (x_min, y_min, x_max, y_max), inclusive pixel corners
    area: int
    mean_confidence: float
    peak_confidence: float


@dataclass(frozen=True)
class Detection:
    """Scored bounding box in one frame; the pluggable detector currency."""

    frame_id: int
    bbox: tuple  # (x_min, y_min, x_max, y_max)
    score: float
    instance_confidence: float | None = None
    t_seconds: float | None = None

    def __post_init__(self):
        x0, y0, x1, y1 = self.bbox
        # inclusive-corner convention: 1-px-thin components give x0 == x1
        if x0 > x1 or y0 > y1:
            raise ValueError(f"malformed bbox {self.bbox}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        if self.instance_confidence is not None and not 0.0 <= self.instance_confidence <= 1.0:
            raise ValueError("instance_confidence outside [0, 1]")

    def center(self) -> tuple:
        x0, y0, x1, y1 = self.bbox
        return ((x0 + x1) / 2.0, (y0 + y1) / 2.0)

    def to_record(self) -> dict:
        rec = {
            "frame_id": self.frame_id,
            "t_seconds": self.t_seconds,
            "bbox": list(self.bbox),
            "score": self.score,
        }
        if self.instance_confidence is not None:
            rec["instance_confidence"] = self.instance_confidence
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "Detection":
        return cls(
            frame_id=int(rec["frame_id"]),
            bbox=tuple(float(v) for v in rec["bbox"]),
            score=float(rec["score"]),
            instance_confidence=rec.get("instance_confidence"),
            t_seconds=rec.get("t_seconds"),
        )


# ---------------------------------------------------------------------------
# Spray strokes
# ---------------------------------------------------------------------------

def _stroke_weights(width, height, path, radius):
    """Falloff support: distance from each affected pixel center to the path.

    Returns (ys, xs, dist) for pixels within `radius` of the polyline.
    Pixel centers sit on the integer grid.
    """
    pts = np.asarray(path, dtype=np.float64)
    x_lo = max(0, int(np.floor(pts[:, 0].min() - radius)))
    x_hi = min(width - 1, int(np.ceil(pts[:, 0].max() + radius)))
    y_lo = max(0, int(np.floor(pts[:, 1].min() - radius)))
    y_hi = min(height - 1, int(np.ceil(pts[:, 1].max() + radius)))
    gx, gy = np.meshgrid(np.arange(x_lo, x_hi + 1), np.arange(y_lo, y_hi + 1))
    px = gx.astype(np.float64)
    py = gy.astype(np.float64)

    # plain sqrt(dx*dx + dy*dy), not hypot: every op here is exactly
    # rounded IEEE, so browser-side compositing can reproduce the mask
    # bit for bit when replaying stroke logs
    dist = np.full(px.shape, np.inf)
    if len(pts) == 1:
        dx, dy = px - pts[0, 0], py - pts[0, 1]
        dist = np.sqrt(dx * dx + dy * dy)
    else:
        for a, b in zip(pts[:-1], pts[1:]):
            ab = b - a
            denom = ab[0] * ab[0] + ab[1] * ab[1]
            if denom == 0.0:
                dx, dy = px - a[0], py - a[1]
            else:
                t = ((px - a[0]) * ab[0] + (py - a[1]) * ab[1]) / denom
                t = np.clip(t, 0.0, 1.0)
                dx, dy = px - (a[0] + t * ab[0]), py - (a[1] + t * ab[1])
            dist = np.minimum(dist, np.sqrt(dx * dx + dy * dy))

    inside = dist <= radius
    return gy[inside], gx[inside], dist[inside]


def _falloff_weight(dist: np.ndarray, radius: float, falloff: Falloff) -> np.ndarray:
    if falloff == "hard":
        return np.ones_like(dist)
    if falloff == "linear":
        return 1.0 - dist / radius
    if falloff == "gaussian":
        # sigma = radius / 2, truncated at the stroke radius
        u = dist / radius
        return np.exp(-2.0 * u * u)
    raise ValueError(f"unknown falloff {falloff!r}")


def _check_stroke_args(mask: FuzzyMask, path, radius, intensity):
    if not path:
        raise ValueError("stroke path is empty")
    if radius < 1:
        raise ValueError("stroke radius must be >= 1 pixel")
    if not 0.0 <= intensity <= 1.0:
        raise ValueError("stroke intensity must be in [0, 1]")
    for x, y in path:
        if not (0 <= x <= mask.width - 1 and 0 <= y <= mask.height - 1):
            raise ValueError(f"stroke point ({x}, {y}) outside the mask grid")


def spray_stroke(
    mask: FuzzyMask,
    path: Sequence,
    radius: float,
    intensity: float,
    falloff: Falloff = "gaussian",
) -> FuzzyMask:
    """Composite a spray-can stroke into the mask.

    Every pixel within `radius` of the polyline takes
    max(old, intensity * falloff_weight); all other pixels are unchanged.
    Applying the same stroke twice equals applying it once.
    """
    _check_stroke_args(mask, path, radius, intensity)
    out = mask.confidence.copy()
    ys, xs, dist = _stroke_weights(mask.width, mask.height, path, radius)
    w = _falloff_weight(dist, radius, falloff)
    np.maximum.at(out, (ys, xs), intensity * w)
    return FuzzyMask(mask.width, mask.height, out)


def erase_stroke(
    mask: FuzzyMask,
    path: Sequence,
    radius: float,
    intensity: float,
    falloff: Falloff = "gaussian",
) -> FuzzyMask:
    """Eraser counterpart of spray_stroke: min(old, 1 - intensity * weight)."""
    _check_stroke_args(mask, path, radius, intensity)
    out = mask.confidence.copy()
    ys, xs, dist = _stroke_weights(mask.width, mask.height, path, radius)
    w = _falloff_weight(dist, radius, falloff)
    np.minimum.at(out, (ys, xs), 1.0 - intensity * w)
    return FuzzyMask(mask.width, mask.height, out)


def replay_strokes(width: int, height: int, strokes: Iterable[dict]) -> FuzzyMask:
    """Rebuild a mask from a stroke log (the UI replay-equivalence surface).

    Each stroke record: {"path": [[x, y], ...], "radius": r,
    "intensity": i, "falloff": "hard|linear|gaussian", "erase": bool}.
    """
    mask = FuzzyMask.zeros(width, height)
    for s in strokes:
        op = erase_stroke if s.get("erase") else spray_stroke
        mask = op(
            mask,
            [tuple(p) for p in s["path"]],
            float(s["radius"]),
            float(s["intensity"]),
            s.get("falloff", "gaussian"),
        )
    return mask


# ---------------------------------------------------------------------------
# Thresholding and clustering
# ---------------------------------------------------------------------------

def threshold_components(
    mask: FuzzyMask,
    t: float = DEFAULT_THRESHOLD,
    min_area: int = DEFAULT_MIN_AREA,
    connectivity: int = DEFAULT_CONNECTIVITY,
) -> list:
    """Maximal connected sets of pixels with confidence >= t.

    Components smaller than min_area are dropped. Output order is
    deterministic: sorted by (y_min, x_min).
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError("threshold must be in [0, 1]")
    if min_area < 1:
        raise ValueError("min_area must be >= 1")
    if connectivity == 4:
        structure = _STRUCTURE_4
    elif connectivity == 8:
        structure = _STRUCTURE_8
    else:
        raise ValueError("connectivity must be 4 or 8")

    above = mask.confidence >= t
    labels, n = ndimage.label(above, structure=structure)
    comps = []
    for lab, (sl_y, sl_x) in enumerate(ndimage.find_objects(labels), start=1):
        region = labels[sl_y, sl_x]
        ys, xs = np.nonzero(region == lab)
        if ys.size < min_area:
            continue
        ys = ys + sl_y.start
        xs = xs + sl_x.start
        vals = mask.confidence[ys, xs]
        comps.append(
            Component(
                pixels=frozenset(zip(xs.tolist(), ys.tolist())),
                bbox=(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())),
                area=int(ys.size),
                mean_confidence=float(vals.mean()),
                peak_confidence=float(vals.max()),
            )
        )
    comps.sort(key=lambda c: (c.bbox[1], c.bbox[0]))
    return comps


def mask_to_detections(
    mask: FuzzyMask,
    frame_id: int = 0,
    t: float = DEFAULT_THRESHOLD,
    min_area: int = DEFAULT_MIN_AREA,
    connectivity: int = DEFAULT_CONNECTIVITY,
) -> list:
    """One Detection per surviving component; score = peak confidence."""
    return [
        Detection(frame_id=frame_id, bbox=tuple(float(v) for v in c.bbox), score=c.peak_confidence)
        for c in threshold_components(mask, t, min_area, connectivity)
    ]


# ---------------------------------------------------------------------------
# Files: 8-bit PGM masks and sidecar annotation records
# ---------------------------------------------------------------------------

def quantize(mask: FuzzyMask) -> np.ndarray:
    """Mask confidences to 8-bit levels: floor(c * 255 + 0.5)."""
    return np.floor(mask.confidence * 255.0 + 0.5).astype(np.uint8)


def dequantize(levels: np.ndarray) -> FuzzyMask:
    return FuzzyMask.from_array(levels.astype(np.float64) / 255.0)


def mask_to_pgm(mask: FuzzyMask) -> bytes:
    header = f"P5\n{mask.width} {mask.height}\n255\n".encode("ascii")
    return header + quantize(mask).tobytes()


def pgm_to_mask(data: bytes) -> FuzzyMask:
    m = re.match(rb"P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(\d+)\s+(\d+)\s", data)
    if m is None:
        raise ValueError("not a binary PGM (P5) stream")
    width, height, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise ValueError(f"expected 8-bit PGM, got maxval {maxval}")
    body = data[m.end():]
    if len(body) < width * height:
        raise ValueError("truncated PGM body")
    levels = np.frombuffer(body[: width * height], dtype=np.uint8).reshape(height, width)
    return dequantize(levels)


def write_mask(path, mask: FuzzyMask) -> None:
    with open(path, "wb") as f:
        f.write(mask_to_pgm(mask))


def read_mask(path) -> FuzzyMask:
    with open(path, "rb") as f:
        return pgm_to_mask(f.read())


def annotation_record(
    image_id: str,
    detections: Sequence,
    annotator: str | None = None,
    timestamp: str | None = None,
    strokes: Sequence | None = None,
) -> dict:
    """Sidecar annotation record: bboxes with instance-level confidence."""
    rec = {
        "image_id": image_id,
        "instances": [
            {"bbox": list(d.bbox), "instance_confidence": d.instance_confidence}
            for d in detections
        ],
        "annotator": annotator,
        "timestamp": timestamp,
    }
    if strokes is not None:
        rec["strokes"] = list(strokes)
    return rec


def write_annotation_record(path, record: dict) -> None:
    with open(path, "w") as f:
        json.dump(record, f, indent=2, sort_keys=True)
        f.write("\n")
