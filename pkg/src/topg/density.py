"""Foreground/background color density modeling.

A target box partitions its frame into definite foreground, definite
background and a blended band; normalized histograms over the definite
regions give per-pixel foreground probabilities, blended every few
frames with the previous model to follow appearance change.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .imaging import (BoundingBox, ImageBuffer, clip_box, histogram_cells,
                      quantize_image)


class TriLabel(IntEnum):
    BACKGROUND = 0
    BLENDED = 1
    FOREGROUND = 2


class DensityError(Exception):
    """Raised when region constraints make model estimation impossible."""


@dataclass(frozen=True)
class TriMap:
    """Per-pixel label grid over a frame region, plus the rectangles that
    generated it. Labels partition the region by construction."""

    labels: np.ndarray  # uint8 (h, w) of TriLabel values
    target: BoundingBox
    outer: BoundingBox
    inner: BoundingBox
    gamma_margin: float

    def __post_init__(self):
        self.labels.setflags(write=False)

    def pixel_counts(self) -> tuple[int, int, int]:
        """(foreground, blended, background) pixel counts."""
        n = np.bincount(self.labels.ravel(), minlength=3)
        return int(n[TriLabel.FOREGROUND]), int(n[TriLabel.BLENDED]), \
            int(n[TriLabel.BACKGROUND])


def build_trimap(region_dims: tuple[int, int], target: BoundingBox,
                 gamma_margin: float) -> TriMap:
    """Tri-map of a (width, height) region around a target box.

    The blended band is the hollow rectangle between the target scaled
    by (1 + gamma_margin) and by (1 - gamma_margin) about its center;
    everything outside the band is definite background, everything
    inside is definite foreground. All rectangles are clipped to the
    region; a collapsing inner rectangle degrades to the target's
    center pixel.
    """
    width, height = region_dims
    if not 0.0 < gamma_margin < 1.0:
        raise ValueError(f"gamma_margin must be in (0, 1), got {gamma_margin}")
    clipped = clip_box(target, width, height)
    if clipped is None:
        raise ValueError("target box lies outside the region")
    target = clipped
    outer = clip_box(target.scaled(1.0 + gamma_margin), width, height)
    inner = clip_box(target.scaled(1.0 - gamma_margin, min_dim=1),
                     width, height)
    labels = np.zeros((height, width), dtype=np.uint8)
    labels[outer.y:outer.y2, outer.x:outer.x2] = TriLabel.BLENDED
    labels[inner.y:inner.y2, inner.x:inner.x2] = TriLabel.FOREGROUND
    return TriMap(labels, target, outer, inner, gamma_margin)


@dataclass(frozen=True)
class ForegroundModel:
    """Normalized foreground/background histograms with the update
    bookkeeping (learning rate, update interval, last update frame)."""

    fg_hist: np.ndarray
    bg_hist: np.ndarray
    bins: int
    channels: int
    learning_rate: float = 0.01
    update_interval: int = 30
    last_update_frame: int = 1

    def __post_init__(self):
        cells = histogram_cells(self.bins, self.channels)
        for name, h in (("fg_hist", self.fg_hist), ("bg_hist", self.bg_hist)):
            if h.shape != (cells,):
                raise ValueError(f"{name} must have {cells} cells")
            if (h < 0).any() or abs(float(h.sum()) - 1.0) > 1e-9:
                raise ValueError(f"{name} must be a normalized histogram")
            h.setflags(write=False)


@dataclass(frozen=True)
class ResponseMap:
    """Per-pixel foreground probabilities over a frame region whose
    top-left corner sits at (x0, y0) in frame coordinates."""

    values: np.ndarray  # float64 (h, w) in [0, 1]
    x0: int = 0
    y0: int = 0

    def __post_init__(self):
        self.values.setflags(write=False)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def region(self) -> BoundingBox:
        return BoundingBox(self.x0, self.y0, self.width, self.height)


def _region_histogram(quantized: np.ndarray, mask: np.ndarray,
                      cells: int) -> np.ndarray:
    count = int(mask.sum())
    if count == 0:
        return None
    hist = np.bincount(quantized[mask], minlength=cells).astype(np.float64)
    return hist / count


def estimate_model(frame: ImageBuffer, trimap: TriMap, bins: int,
                   learning_rate: float = 0.01,
                   update_interval: int = 30,
                   frame_index: int = 1) -> ForegroundModel:
    """Histogram model from the definite regions of a tri-map aligned to
    the frame. Blended pixels contribute to neither histogram."""
    if trimap.labels.shape != (frame.height, frame.width):
        raise ValueError("trimap is not aligned to the frame")
    q = quantize_image(frame, bins)
    cells = histogram_cells(bins, frame.channels)
    fg = _region_histogram(q, trimap.labels == TriLabel.FOREGROUND, cells)
    if fg is None:
        raise DensityError("definite foreground region is empty")
    bg = _region_histogram(q, trimap.labels == TriLabel.BACKGROUND, cells)
    if bg is None:
        raise DensityError("definite background region is empty")
    return ForegroundModel(fg, bg, bins, frame.channels, learning_rate,
                           update_interval, frame_index)


def response_map(frame: ImageBuffer, model: ForegroundModel,
                 region: BoundingBox | None = None) -> ResponseMap:
    """Foreground probability of every pixel (of the region, when given):
    p_f / (p_f + p_b), with 0.5 where both densities are zero."""
    if frame.channels != model.channels:
        raise ValueError("frame/model channel mismatch")
    if region is not None:
        region = clip_box(region, frame.width, frame.height)
        if region is None:
            raise ValueError("region lies outside the frame")
        frame = frame.crop(region)
        x0, y0 = region.x, region.y
    else:
        x0 = y0 = 0
    q = quantize_image(frame, model.bins)
    denom = model.fg_hist + model.bg_hist
    lut = np.full(denom.shape, 0.5, dtype=np.float64)
    nz = denom > 0
    lut[nz] = model.fg_hist[nz] / denom[nz]
    return ResponseMap(lut[q], x0, y0)


def update_model(fresh: ForegroundModel, previous: ForegroundModel,
                 learning_rate: float,
                 frame_index: int | None = None) -> ForegroundModel:
    """Convex blend of a freshly estimated model into the previous one:
    each histogram cell becomes lr*fresh + (1-lr)*previous."""
    if fresh.bins != previous.bins or fresh.channels != previous.channels:
        raise ValueError("bin-count mismatch between models")
    if not 0.0 < learning_rate <= 1.0:
        raise ValueError(f"learning rate must be in (0, 1], got {learning_rate}")
    lam = learning_rate
    return ForegroundModel(lam * fresh.fg_hist + (1 - lam) * previous.fg_hist,
                           lam * fresh.bg_hist + (1 - lam) * previous.bg_hist,
                           fresh.bins, fresh.channels,
                           previous.learning_rate, previous.update_interval,
                           fresh.last_update_frame if frame_index is None
                           else frame_index)


def response_to_image(response: ResponseMap) -> ImageBuffer:
    """Response values scaled to 8 bits, for --dump-response debugging."""
    scaled = np.rint(response.values * 255.0).astype(np.uint8)
    return ImageBuffer.from_array(scaled)
