"""Spectral-angle baseline classifier for multispectral pixels and cubes.

Classifies a spectrum by the angle (arccos of cosine similarity) to
reference spectra, which is invariant to positive scaling — the property
that matters under uncontrolled lighting. A raw dot-product scoring mode
is kept for comparison; it has no scale invariance and no reject
threshold semantics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

DEFAULT_REJECT_ANGLE = 0.3  # radians

_COS_CLAMP_TOL = 1e-12


class DegenerateSpectrumError(ValueError):
    """An all-zero spectrum has no direction to compare."""


@dataclass(frozen=True)
class Spectrum:
    """Non-negative reflectance/radiance samples, one per band."""

    values: np.ndarray
    band_centers_nm: tuple | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if v.ndim != 1 or v.size < 1:
            raise ValueError("spectrum must be a non-empty 1-D vector")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("spectrum values must be finite and >= 0")
        if self.band_centers_nm is not None and len(self.band_centers_nm) != v.size:
            raise ValueError("band_centers_nm length must match channel count")

    @property
    def channels(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class ReferenceLibrary:
    """Class label -> one or more reference spectra, uniform channel count."""

    entries: dict

    def __post_init__(self):
        if not self.entries:
            raise ValueError("library needs at least one class")
        c = None
        for label, specs in self.entries.items():
            if not specs:
                raise ValueError(f"class {label!r} has no reference spectra")
            for s in specs:
                if c is None:
                    c = s.channels
                elif s.channels != c:
                    raise ValueError("all reference spectra must share one channel count")
                if not np.any(s.values > 0):
                    raise DegenerateSpectrumError(f"class {label!r} has an all-zero reference")

    @property
    def channels(self) -> int:
        first = next(iter(self.entries.values()))
        return first[0].channels

    @property
    def labels(self) -> list:
        return sorted(self.entries)

    def to_json(self) -> str:
        return json.dumps(
            {label: [s.values.tolist() for s in specs] for label, specs in self.entries.items()},
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "ReferenceLibrary":
        raw = json.loads(text)
        return cls({label: [Spectrum(np.asarray(v)) for v in specs] for label, specs in raw.items()})


@dataclass(frozen=True)
class SpectralCube:
    """Row-major (height, width, channels) stack of per-pixel spectra."""

    width: int
    height: int
    channels: int
    data: np.ndarray

    def __post_init__(self):
        if self.data.shape != (self.height, self.width, self.channels):
            raise ValueError(
                f"cube shape {self.data.shape} does not match "
                f"(height, width, channels)=({self.height}, {self.width}, {self.channels})"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValueError("cube contains non-finite values")

    @classmethod
    def from_array(cls, data: np.ndarray) -> "SpectralCube":
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 3:
            raise ValueError("expected an (h, w, c) array")
        h, w, c = data.shape
        return cls(width=w, height=h, channels=c, data=data)


@dataclass(frozen=True)
class SamResult:
    """Outcome of classifying one pixel: label is None when rejected."""

    label: str | None
    best_label: str
    score: float  # angle in radians (cosine mode) or raw dot product (dot mode)


@dataclass(frozen=True)
class LabelMap:
    """Per-pixel class indices into class_names; -1 marks REJECT."""

    class_names: list
    indices: np.ndarray
    scores: np.ndarray


def _scaled(values: np.ndarray) -> np.ndarray:
    """Divide by the max component; the angle is scale-free and this keeps
    the squared norm away from under/overflow for extreme magnitudes."""
    m = float(np.max(np.abs(values)))
    if m == 0.0:
        raise DegenerateSpectrumError("cannot take the angle of an all-zero spectrum")
    return values / m


def spectral_angle(a: Spectrum, b: Spectrum) -> float:
    """Angle in [0, pi/2] between two non-negative spectra."""
    if a.channels != b.channels:
        raise ValueError(f"channel mismatch: {a.channels} vs {b.channels}")
    sa, sb = _scaled(a.values), _scaled(b.values)
    cos = float(np.dot(sa, sb)) / (float(np.linalg.norm(sa)) * float(np.linalg.norm(sb)))
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))


def _ref_matrix(lib: ReferenceLibrary):
    """Stacked reference rows plus (label, row-range) bookkeeping, label-sorted."""
    rows, spans = [], []
    start = 0
    for label in lib.labels:
        specs = lib.entries[label]
        rows.extend(s.values for s in specs)
        spans.append((label, start, start + len(specs)))
        start += len(specs)
    return np.vstack(rows), spans


def sam_classify(
    pixel: Spectrum,
    lib: ReferenceLibrary,
    reject_angle: float = DEFAULT_REJECT_ANGLE,
    scoring: str = "cosine",
) -> SamResult:
    """Classify one pixel against the library.

    cosine mode: the class with minimal angle over all its references;
    REJECT (label None) when that minimum exceeds reject_angle.
    dot mode: the class with maximal dot product; scores are unbounded
    and there is no reject semantics. Ties break lexicographically.
    """
    if pixel.channels != lib.channels:
        raise ValueError(f"channel mismatch: {pixel.channels} vs {lib.channels}")
    refs, spans = _ref_matrix(lib)
    if scoring == "cosine":
        p = _scaled(pixel.values)
        sref = refs / refs.max(axis=1, keepdims=True)
        cos = (sref @ p) / (np.linalg.norm(sref, axis=1) * float(np.linalg.norm(p)))
        angles = np.arccos(np.clip(cos, -1.0, 1.0))
        best_label, best = None, np.inf
        for label, lo, hi in spans:
            a = float(angles[lo:hi].min())
            if a < best:
                best_label, best = label, a
        return SamResult(
            label=None if best > reject_angle else best_label,
            best_label=best_label,
            score=best,
        )
    if scoring == "dot":
        dots = refs @ pixel.values
        best_label, best = None, -np.inf
        for label, lo, hi in spans:
            d = float(dots[lo:hi].max())
            if d > best:
                best_label, best = label, d
        return SamResult(label=best_label, best_label=best_label, score=best)
    raise ValueError(f"unknown scoring mode {scoring!r}")


def classify_cube(
    cube: SpectralCube,
    lib: ReferenceLibrary,
    reject_angle: float = DEFAULT_REJECT_ANGLE,
    scoring: str = "cosine",
) -> LabelMap:
    """Pixel-wise sam_classify over a whole cube, vectorized."""
    if cube.channels != lib.channels:
        raise ValueError(f"channel mismatch: {cube.channels} vs {lib.channels}")
    refs, spans = _ref_matrix(lib)
    labels = [label for label, _, _ in spans]
    flat = cube.data.reshape(-1, cube.channels)

    if scoring == "cosine":
        pmax = np.abs(flat).max(axis=1)
        if np.any(pmax == 0.0):
            raise DegenerateSpectrumError("cube contains an all-zero pixel")
        sflat = flat / pmax[:, None]
        sref = refs / refs.max(axis=1, keepdims=True)
        pn = np.linalg.norm(sflat, axis=1)
        rn = np.linalg.norm(sref, axis=1)
        angles = np.arccos(np.clip((sflat @ sref.T) / (pn[:, None] * rn[None, :]), -1.0, 1.0))
        per_class = np.stack([angles[:, lo:hi].min(axis=1) for _, lo, hi in spans], axis=1)
        idx = np.argmin(per_class, axis=1)  # argmin takes the first (lexicographic) tie
        score = per_class[np.arange(len(flat)), idx]
        idx = np.where(score > reject_angle, -1, idx)
    else:
        if scoring != "dot":
            raise ValueError(f"unknown scoring mode {scoring!r}")
        dots = flat @ refs.T  # dot scoring is scale-sensitive by design: raw values
        per_class = np.stack([dots[:, lo:hi].max(axis=1) for _, lo, hi in spans], axis=1)
        idx = np.argmax(per_class, axis=1)
        score = per_class[np.arange(len(flat)), idx]

    shape = (cube.height, cube.width)
    return LabelMap(
        class_names=labels,
        indices=idx.reshape(shape).astype(np.int32),
        scores=score.reshape(shape),
    )


# ---------------------------------------------------------------------------
# Cube files: flat binary plus a small JSON header sidecar
# ---------------------------------------------------------------------------

def save_cube(path, cube: SpectralCube, band_centers_nm=None) -> None:
    data = np.ascontiguousarray(cube.data)
    with open(path, "wb") as f:
        f.write(data.tobytes())
    header = {
        "width": cube.width,
        "height": cube.height,
        "channels": cube.channels,
        "dtype": str(data.dtype),
        "interleave": "bip",
        "band_centers": list(band_centers_nm) if band_centers_nm is not None else None,
    }
    with open(f"{path}.hdr.json", "w") as f:
        json.dump(header, f, indent=2, sort_keys=True)
        f.write("\n")


def load_cube(path) -> SpectralCube:
    with open(f"{path}.hdr.json") as f:
        header = json.load(f)
    raw = np.fromfile(path, dtype=np.dtype(header["dtype"]))
    data = raw.reshape(header["height"], header["width"], header["channels"])
    return SpectralCube.from_array(data)
