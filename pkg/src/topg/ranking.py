"""Target-specific affinity ranking.

Each proposal gets a shape, color and size affinity to the target; the
product of the three reorders the proposal list so that a handful of
top-ranked boxes retains the target with high probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .density import ResponseMap
from .imaging import (BoundingBox, IntegralImage, box_sum, clip_box,
                      integral_image)
from .proposals import Proposal, TargetSpec

SIZE_LITERAL = "literal"
SIZE_NORMALIZED = "normalized"


@dataclass(frozen=True)
class AffinityConfig:
    """size_mode picks between the raw pixel-difference size affinity
    (literal) and the relative-difference variant (normalized, default);
    the literal form collapses to ~0 for any realistic size deviation."""

    size_mode: str = SIZE_NORMALIZED

    def __post_init__(self):
        if self.size_mode not in (SIZE_LITERAL, SIZE_NORMALIZED):
            raise ValueError(f"unknown size_mode {self.size_mode!r}")


def shape_affinity(rho_i: float, rho_t: float) -> float:
    """exp(-|rho_i - rho_t|)."""
    for v in (rho_i, rho_t):
        if not math.isfinite(v) or v < 0:
            raise ValueError("contour scores must be finite and >= 0")
    return math.exp(-abs(rho_i - rho_t))


def color_affinity(response: ResponseMap, box: BoundingBox,
                   integral: IntegralImage | None = None) -> float:
    """Mean response value inside the box (box in frame coordinates)."""
    rel = BoundingBox(box.x - response.x0, box.y - response.y0, box.w, box.h)
    clipped = clip_box(rel, response.width, response.height)
    if clipped is None:
        raise ValueError("box lies fully outside the response map")
    if integral is None:
        integral = integral_image(response.values)
    return box_sum(integral, clipped) / clipped.area


def size_affinity(box: BoundingBox, target: TargetSpec,
                  config: AffinityConfig = AffinityConfig()) -> float:
    """exp(-|w_i - w_t|) * exp(-|h_i - h_t|), with the differences taken
    relative to the target dims in normalized mode."""
    dw = abs(box.w - target.w)
    dh = abs(box.h - target.h)
    if config.size_mode == SIZE_NORMALIZED:
        return math.exp(-dw / target.w) * math.exp(-dh / target.h)
    return math.exp(-dw) * math.exp(-dh)


def combined_affinity(s: float, c: float, z: float) -> float:
    return s * c * z


def rank_proposals(proposals: list[Proposal], target: TargetSpec,
                   response: ResponseMap,
                   config: AffinityConfig = AffinityConfig(),
                   ) -> list[Proposal]:
    """Fill s, c, z, a on every proposal and return the list reordered by
    combined affinity (descending; ties by contour score then box
    coordinates, so any permutation of the input ranks identically)."""
    if not proposals:
        return []
    integral = integral_image(response.values)
    for p in proposals:
        p.s = shape_affinity(p.rho, target.rho_t)
        p.c = color_affinity(response, p.box, integral)
        p.z = size_affinity(p.box, target, config)
        p.a = combined_affinity(p.s, p.c, p.z)
    return sorted(proposals,
                  key=lambda p: (-p.a, -p.rho, *p.box.astuple(), p.source))
