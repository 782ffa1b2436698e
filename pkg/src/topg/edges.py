"""Edge detection and edge-group machinery for the box scorer.

The detector is a Scharr gradient with non-maximum-suppression thinning,
magnitude normalized to [0, 1] by its maximum and orientation stored as
the gradient (edge-normal) angle mod pi. Thin edges are greedily grouped
into orientation-coherent 8-connected contours, and nearby groups get a
shape affinity used by the scorer's wholeness chains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .imaging import ImageBuffer, IntegralImage, integral_image

DEFAULT_MAG_THRESHOLD = 0.1
DEFAULT_CURVE_THRESHOLD = math.pi / 2
DEFAULT_AFFINITY_EXPONENT = 2.0
DEFAULT_DISTANCE_CUTOFF = 2.0
MIN_AFFINITY = 0.05


@dataclass(frozen=True)
class EdgeParams:
    """Detector/grouping knobs (baseline defaults, exposed in config)."""

    mag_threshold: float = DEFAULT_MAG_THRESHOLD
    curve_threshold: float = DEFAULT_CURVE_THRESHOLD
    affinity_exponent: float = DEFAULT_AFFINITY_EXPONENT
    distance_cutoff: float = DEFAULT_DISTANCE_CUTOFF

    def __post_init__(self):
        if self.mag_threshold <= 0 or self.curve_threshold <= 0:
            raise ValueError("edge thresholds must be positive")
        if self.distance_cutoff < 1:
            raise ValueError("distance cutoff must be >= 1 pixel")


@dataclass(frozen=True)
class EdgeMap:
    """Thinned edge magnitudes in [0, 1] plus per-pixel orientation in
    [0, pi) (gradient direction; a vertical step edge has orientation 0)."""

    magnitude: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        if self.magnitude.shape != self.orientation.shape:
            raise ValueError("magnitude/orientation shape mismatch")
        self.magnitude.setflags(write=False)
        self.orientation.setflags(write=False)

    @property
    def width(self) -> int:
        return self.magnitude.shape[1]

    @property
    def height(self) -> int:
        return self.magnitude.shape[0]


def _scharr(plane: np.ndarray):
    p = np.pad(plane, 1, mode="edge")
    gx = (3.0 * (p[:-2, 2:] - p[:-2, :-2])
          + 10.0 * (p[1:-1, 2:] - p[1:-1, :-2])
          + 3.0 * (p[2:, 2:] - p[2:, :-2]))
    gy = (3.0 * (p[2:, :-2] - p[:-2, :-2])
          + 10.0 * (p[2:, 1:-1] - p[:-2, 1:-1])
          + 3.0 * (p[2:, 2:] - p[:-2, 2:]))
    return gx, gy


# unit steps for the four quantized gradient directions
_DIR_STEPS = ((1, 0), (1, 1), (0, 1), (-1, 1))


def _thin(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Keep pixels that are strict maxima along the gradient direction.

    On an equal-magnitude plateau the pixel on the bright side survives
    (strict comparison toward the gradient, non-strict away from it),
    which makes the result symmetric under image rotation.
    """
    h, w = mag.shape
    ori = np.mod(np.arctan2(gy, gx), math.pi)
    dbin = (np.floor((ori + math.pi / 8) / (math.pi / 4)).astype(np.int64)) % 4
    padded = np.zeros((h + 2, w + 2), dtype=np.float64)
    padded[1:-1, 1:-1] = mag
    yy, xx = np.mgrid[0:h, 0:w]
    keep = np.zeros((h, w), dtype=bool)
    for b, (dx, dy) in enumerate(_DIR_STEPS):
        sel = dbin == b
        if not sel.any():
            continue
        toward = np.where(gx[sel] * dx + gy[sel] * dy >= 0, 1, -1)
        ys, xs = yy[sel], xx[sel]
        m = mag[sel]
        n1 = padded[ys + 1 + dy * toward, xs + 1 + dx * toward]
        n2 = padded[ys + 1 - dy * toward, xs + 1 - dx * toward]
        keep[ys, xs] = (m > n1) & (m >= n2)
    out = np.where(keep, mag, 0.0)
    return out, ori


def detect_edges(source) -> EdgeMap:
    """Edge map of an ImageBuffer, a response map, or a raw 2-d grid.

    Response maps are treated as gray images after scaling by 255. An
    all-constant input yields an all-zero magnitude map.
    """
    if isinstance(source, ImageBuffer):
        plane = source.luminance()
    elif hasattr(source, "values"):  # density.ResponseMap
        plane = np.asarray(source.values, dtype=np.float64) * 255.0
    else:
        plane = np.asarray(source, dtype=np.float64)
    gx, gy = _scharr(plane)
    mag = np.hypot(gx, gy)
    peak = mag.max() if mag.size else 0.0
    if peak > 0:
        mag = mag / peak
    mag, ori = _thin(mag, gx, gy)
    return EdgeMap(mag, ori)


@dataclass(frozen=True)
class EdgeGroups:
    """Connected orientation-coherent edge groups.

    labels holds a 1-based group id per pixel (0 = ungrouped); the
    per-group arrays are indexed by id - 1. grouped_magnitude zeroes
    everything outside groups and feeds the scorer's integral image.
    """

    labels: np.ndarray          # int32 (h, w)
    count: int
    magnitudes: np.ndarray      # (count,) total magnitude
    bboxes: np.ndarray          # (count, 4) int32 x0, y0, x1, y1 inclusive
    mean_xy: np.ndarray         # (count, 2) float64
    mean_orientation: np.ndarray  # (count,) float64 in [0, pi)
    members: list               # per group, (n, 2) int32 (x, y) pixel coords
    grouped_magnitude: np.ndarray
    integral: IntegralImage = field(repr=False, default=None)
    # flat member storage for the scoring kernels: pixels of group g sit
    # in slots member_start[g] .. member_start[g+1]
    member_start: np.ndarray = field(repr=False, default=None)
    member_x: np.ndarray = field(repr=False, default=None)
    member_y: np.ndarray = field(repr=False, default=None)
    member_mag: np.ndarray = field(repr=False, default=None)

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]


def group_edges(edges: EdgeMap,
                mag_threshold: float = DEFAULT_MAG_THRESHOLD,
                curve_threshold: float = DEFAULT_CURVE_THRESHOLD) -> EdgeGroups:
    """Greedy grouping of above-threshold edge pixels; deterministic for
    a given raster scan order."""
    if mag_threshold <= 0 or curve_threshold <= 0:
        raise ValueError("thresholds must be positive")
    mag = np.ascontiguousarray(edges.magnitude, dtype=np.float64)
    ori = np.ascontiguousarray(edges.orientation, dtype=np.float64)
    labels, count = kernels.label_edge_groups(mag, ori, mag_threshold,
                                              curve_threshold)
    labels = np.asarray(labels, dtype=np.int32)

    ys, xs = np.nonzero(labels)
    ids = labels[ys, xs] - 1
    order = np.argsort(ids, kind="stable")
    ys, xs, ids = ys[order], xs[order], ids[order]
    starts = np.searchsorted(ids, np.arange(count + 1))

    magnitudes = np.zeros(count, dtype=np.float64)
    bboxes = np.zeros((count, 4), dtype=np.int32)
    mean_xy = np.zeros((count, 2), dtype=np.float64)
    mean_ori = np.zeros(count, dtype=np.float64)
    members = []
    pix_mag = mag[ys, xs]
    pix_ori = ori[ys, xs]
    for g in range(count):
        lo, hi = starts[g], starts[g + 1]
        mx, my = xs[lo:hi], ys[lo:hi]
        members.append(np.stack([mx, my], axis=1).astype(np.int32))
        magnitudes[g] = pix_mag[lo:hi].sum()
        bboxes[g] = (mx.min(), my.min(), mx.max(), my.max())
        mean_xy[g] = (mx.mean(), my.mean())
        # circular mean over angles mod pi, via doubled angles
        two = 2.0 * pix_ori[lo:hi]
        mean_ori[g] = math.atan2(np.sin(two).sum(), np.cos(two).sum()) / 2.0 \
            % math.pi
    grouped = np.where(labels > 0, mag, 0.0)
    return EdgeGroups(labels, count, magnitudes, bboxes, mean_xy, mean_ori,
                      members, grouped, integral_image(grouped),
                      starts.astype(np.int64), xs.astype(np.int32),
                      ys.astype(np.int32), pix_mag.astype(np.float64))


class AffinityTable:
    """Symmetric sparse affinities between nearby edge groups (1-based
    group ids, entries below the sparsity floor dropped)."""

    def __init__(self, count: int, entries: dict):
        self.count = count
        self._entries = entries  # (lo, hi) -> affinity, lo < hi, 1-based

    def get(self, i: int, j: int) -> float:
        if i == j:
            return 0.0
        key = (i, j) if i < j else (j, i)
        return self._entries.get(key, 0.0)

    def pairs(self):
        return self._entries.items()

    def __len__(self):
        return len(self._entries)

    def to_csr(self):
        """0-based CSR adjacency (indptr, indices, weights) for kernels."""
        indptr = np.zeros(self.count + 1, dtype=np.int64)
        counts = np.zeros(self.count, dtype=np.int64)
        for (i, j), _ in self._entries.items():
            counts[i - 1] += 1
            counts[j - 1] += 1
        indptr[1:] = np.cumsum(counts)
        indices = np.zeros(indptr[-1], dtype=np.int32)
        weights = np.zeros(indptr[-1], dtype=np.float64)
        cursor = indptr[:-1].copy()
        for (i, j), a in sorted(self._entries.items()):
            indices[cursor[i - 1]] = j - 1
            weights[cursor[i - 1]] = a
            cursor[i - 1] += 1
            indices[cursor[j - 1]] = i - 1
            weights[cursor[j - 1]] = a
            cursor[j - 1] += 1
        return indptr, indices, weights


def _near_offsets(cutoff: float):
    r = int(math.floor(cutoff))
    out = []
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            if (dx or dy) and dx * dx + dy * dy <= cutoff * cutoff:
                out.append((dx, dy))
    return out


def group_affinities(groups: EdgeGroups,
                     gamma_shape: float = DEFAULT_AFFINITY_EXPONENT,
                     distance_cutoff: float = DEFAULT_DISTANCE_CUTOFF,
                     min_affinity: float = MIN_AFFINITY) -> AffinityTable:
    """Affinity |cos(t_i - t_ij) * cos(t_j - t_ij)|**gamma_shape between
    groups whose nearest member pixels lie within distance_cutoff, where
    t are mean edge tangents and t_ij the angle between group means."""
    labels = groups.labels
    h, w = labels.shape
    pairs = set()
    for dx, dy in _near_offsets(distance_cutoff):
        ax0, ax1 = max(0, -dx), min(w, w - dx)
        ay0, ay1 = max(0, -dy), min(h, h - dy)
        a = labels[ay0:ay1, ax0:ax1]
        b = labels[ay0 + dy:ay1 + dy, ax0 + dx:ax1 + dx]
        hit = (a > 0) & (b > 0) & (a != b)
        if hit.any():
            ga, gb = a[hit], b[hit]
            lo = np.minimum(ga, gb)
            hi = np.maximum(ga, gb)
            pairs.update(zip(lo.tolist(), hi.tolist()))
    tangents = np.mod(groups.mean_orientation + math.pi / 2, math.pi)
    entries = {}
    for i, j in pairs:
        dxy = groups.mean_xy[j - 1] - groups.mean_xy[i - 1]
        theta = math.atan2(dxy[1], dxy[0]) % math.pi
        a = abs(math.cos(tangents[i - 1] - theta)
                * math.cos(tangents[j - 1] - theta)) ** gamma_shape
        if a >= min_affinity:
            entries[(i, j)] = a
    return AffinityTable(groups.count, entries)
