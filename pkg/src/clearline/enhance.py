"""Contrast-limited adaptive histogram equalization (annotation preview aid).

The image is divided into a grid of tiles; each tile gets a clipped
histogram whose excess mass is redistributed uniformly (single pass,
remainder to the lowest bins), then a classical equalization mapping.
Pixel outputs blend the four surrounding tile mappings bilinearly, with
edge tiles mirrored so border pixels fall back on the nearest mapping.

Mapping formula, per tile (cdf over the possibly clipped histogram):

    m[b] = floor(255 * (cdf[b] - cdf_min) / (N - cdf_min) + 0.5)

where cdf_min is the cdf at the first occupied bin and N the tile pixel
count. A degenerate tile (all pixels in one bin) maps every bin to its
own 8-bit center, leaving the tile unchanged. With a 1x1 tile grid and a
clip limit high enough to never clip, this is exactly plain global
histogram equalization.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .masks import ImageGrid

DEFAULT_TILES = 8
DEFAULT_CLIP_LIMIT = 4.0
DEFAULT_BINS = 256


@dataclass(frozen=True)
class ClaheParams:
    tiles_x: int = DEFAULT_TILES
    tiles_y: int = DEFAULT_TILES
    clip_limit: float = DEFAULT_CLIP_LIMIT  # multiple of the uniform bin height
    bins: int = DEFAULT_BINS

    def __post_init__(self):
        if self.tiles_x < 1 or self.tiles_y < 1:
            raise ValueError("tile counts must be >= 1")
        if self.clip_limit <= 0:
            raise ValueError("clip_limit must be > 0")
        if self.bins < 2:
            raise ValueError("need at least 2 histogram bins")


def _tile_mapping(hist: np.ndarray, n_pixels: int, bins: int) -> np.ndarray:
    """Equalization LUT (bin index -> 8-bit value) for one clipped histogram."""
    cdf = np.cumsum(hist)
    occupied = np.nonzero(cdf > 0)[0]
    cdf_min = cdf[occupied[0]]
    denom = n_pixels - cdf_min
    if denom <= 0:
        # single occupied bin: identity on the bin's 8-bit center
        centers = np.floor((np.arange(bins) + 0.5) * 256.0 / bins)
        return np.clip(centers, 0, 255)
    mapping = np.floor(255.0 * (cdf - cdf_min) / denom + 0.5)
    return np.clip(mapping, 0.0, 255.0)


def _clip_histogram(hist: np.ndarray, clip_limit: float, n_pixels: int, bins: int) -> np.ndarray:
    limit = max(1, int(clip_limit * n_pixels / bins))
    over = hist > limit
    excess = int((hist[over] - limit).sum())
    if excess == 0:
        return hist
    clipped = np.where(over, limit, hist).astype(np.int64)
    clipped += excess // bins
    clipped[: excess % bins] += 1  # remainder to the lowest bins
    return clipped


def _tile_edges(total: int, tiles: int) -> np.ndarray:
    return np.floor(np.arange(tiles + 1) * total / tiles).astype(np.int64)


def clahe(image: ImageGrid, params: ClaheParams = ClaheParams()) -> ImageGrid:
    """Equalize an 8-bit luminance image tile-by-tile. Deterministic."""
    img = np.asarray(image.pixels)
    if img.min() < 0 or img.max() > 255:
        raise ValueError("clahe expects 8-bit luminance values in [0, 255]")
    h, w = img.shape
    tiles_x, tiles_y = params.tiles_x, params.tiles_y
    if tiles_x > w or tiles_y > h:
        warnings.warn(
            f"tile grid {tiles_x}x{tiles_y} larger than image {w}x{h}; "
            "falling back to a single tile",
            stacklevel=2,
        )
        tiles_x = tiles_y = 1

    bins = params.bins
    iv = img.astype(np.int32)
    bin_of = iv if bins == 256 else (iv * bins) >> 8  # value -> bin index

    x_edges = _tile_edges(w, tiles_x)
    y_edges = _tile_edges(h, tiles_y)
    maps = np.empty((tiles_y, tiles_x, bins), dtype=np.float64)
    for ty in range(tiles_y):
        for tx in range(tiles_x):
            tile = bin_of[y_edges[ty]:y_edges[ty + 1], x_edges[tx]:x_edges[tx + 1]]
            n = tile.size
            hist = np.bincount(tile.ravel(), minlength=bins)
            hist = _clip_histogram(hist, params.clip_limit, n, bins)
            maps[ty, tx] = _tile_mapping(hist, n, bins)

    # tile centers; pixels beyond the outermost centers clamp to the edge tile
    cy = (y_edges[:-1] + y_edges[1:] - 1) / 2.0
    cx = (x_edges[:-1] + x_edges[1:] - 1) / 2.0
    rows = np.arange(h, dtype=np.float64)
    cols = np.arange(w, dtype=np.float64)
    i1 = np.clip(np.searchsorted(cy, rows), 0, tiles_y - 1)
    i0 = np.clip(i1 - 1, 0, tiles_y - 1)
    j1 = np.clip(np.searchsorted(cx, cols), 0, tiles_x - 1)
    j0 = np.clip(j1 - 1, 0, tiles_x - 1)
    dy = cy[i1] - cy[i0]
    ty_w = np.where(dy > 0, np.clip((rows - cy[i0]) / np.where(dy > 0, dy, 1.0), 0.0, 1.0), 0.0)
    dx = cx[j1] - cx[j0]
    tx_w = np.where(dx > 0, np.clip((cols - cx[j0]) / np.where(dx > 0, dx, 1.0), 0.0, 1.0), 0.0)

    # blend per interpolation cell (constant tile neighbours): the four
    # corner LUTs collapse vertically into two per-row tables first, so
    # each pixel costs two gathers from an L2-resident table; 8-bit LUT
    # values are exact in float32
    out = np.empty((h, w), dtype=np.float32)
    maps32 = maps.astype(np.float32)
    row_edges = [0] + (np.flatnonzero(np.diff(i1)) + 1).tolist() + [h]
    col_edges = [0] + (np.flatnonzero(np.diff(j1)) + 1).tolist() + [w]
    ty32 = ty_w.astype(np.float32)
    tx32 = tx_w.astype(np.float32)
    for r0, r1 in zip(row_edges, row_edges[1:]):
        bi0, bi1 = i0[r0], i1[r0]
        tyc = ty32[r0:r1][:, None]
        ridx = np.arange(r1 - r0)[:, None]
        for c0, c1 in zip(col_edges, col_edges[1:]):
            bj0, bj1 = j0[c0], j1[c0]
            block = bin_of[r0:r1, c0:c1]
            txc = tx32[c0:c1][None, :]
            left = maps32[bi0, bj0][None, :] * (1.0 - tyc) + maps32[bi1, bj0][None, :] * tyc
            right = maps32[bi0, bj1][None, :] * (1.0 - tyc) + maps32[bi1, bj1][None, :] * tyc
            g = left[ridx, block]
            g *= 1.0 - txc
            gr = right[ridx, block]
            gr *= txc
            g += gr
            out[r0:r1, c0:c1] = g
    np.floor(out + 0.5, out=out)
    out8 = np.clip(out, 0, 255).astype(np.uint8)
    return ImageGrid(width=w, height=h, pixels=out8)


# BT.601 full-range luma/chroma, used so color images keep their hue
_RGB_TO_YCBCR = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168736, -0.331264, 0.5],
        [0.5, -0.418688, -0.081312],
    ]
)
_YCBCR_TO_RGB = np.linalg.inv(_RGB_TO_YCBCR)


def clahe_rgb(rgb: np.ndarray, params: ClaheParams = ClaheParams()) -> np.ndarray:
    """Equalize the luminance channel of an (h, w, 3) uint8 image."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError("expected an (h, w, 3) RGB array")
    ycc = rgb @ _RGB_TO_YCBCR.T
    y8 = np.clip(np.floor(ycc[:, :, 0] + 0.5), 0, 255)
    eq = clahe(ImageGrid.from_array(y8), params)
    ycc[:, :, 0] = eq.pixels.astype(np.float64)
    out = ycc @ _YCBCR_TO_RGB.T
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
