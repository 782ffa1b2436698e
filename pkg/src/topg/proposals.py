"""Candidate-box generation and contour scoring.

Windows conditioned on the target's size slide over a search region and
get a contour score: edge groups wholly inside a window contribute their
magnitude, discounted by affinity chains to groups straddling the window
boundary, minus a center penalty, normalized by window perimeter. The
fused generator runs the same machinery on the raw-frame edges and the
response-map edges and merges the two proposal streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .density import ResponseMap
from .edges import (AffinityTable, EdgeGroups, EdgeParams, detect_edges,
                    group_affinities, group_edges)
from .imaging import BoundingBox, ImageBuffer, clip_box, iou

SOURCE_FRAME = "frame"
SOURCE_RESPONSE = "response"

CENTER_SHRINK = 0.5
PERIMETER_EXPONENT = 1.5
CROSS_SOURCE_DEDUP_IOU = 0.95


@dataclass
class Proposal:
    """A candidate box with its contour score; affinity fields are -1
    until ranking fills them."""

    box: BoundingBox
    rho: float
    source: str
    s: float = -1.0
    c: float = -1.0
    z: float = -1.0
    a: float = -1.0

    def __post_init__(self):
        if not math.isfinite(self.rho) or self.rho < 0:
            raise ValueError(f"rho must be finite and >= 0, got {self.rho}")
        if self.source not in (SOURCE_FRAME, SOURCE_RESPONSE):
            raise ValueError(f"unknown source {self.source!r}")


@dataclass(frozen=True)
class GenParams:
    """Sliding-window generation knobs, relative to the target size."""

    scales: tuple = (0.5, 0.7, 1.0, 1.4, 2.0)
    aspect_perturbations: tuple = (0.75, 1.0, 1.33)
    step_iou: float = 0.65
    nms_iou: float = 0.75
    per_source_budget: int = 500
    refine_rounds: int = 10

    def __post_init__(self):
        if any(s <= 0 for s in self.scales + self.aspect_perturbations):
            raise ValueError("scale and aspect factors must be positive")
        if not 0 < self.step_iou < 1:
            raise ValueError("step_iou must be in (0, 1)")
        if not 0 < self.nms_iou < 1:
            raise ValueError("nms_iou must be in (0, 1)")
        if self.per_source_budget < 1:
            raise ValueError("per_source_budget must be >= 1")


@dataclass(frozen=True)
class TargetSpec:
    """Last known target box and its contour score."""

    box: BoundingBox
    rho_t: float

    @property
    def w(self) -> int:
        return self.box.w

    @property
    def h(self) -> int:
        return self.box.h


class BoxScorer:
    """Scores windows against a fixed set of edge groups and affinities.

    Precomputes the sparse affinity graph and the grouped-magnitude
    integral once; scoring then runs in the kernel backend.
    """

    def __init__(self, groups: EdgeGroups, affinities: AffinityTable,
                 center_shrink: float = CENTER_SHRINK,
                 perimeter_exponent: float = PERIMETER_EXPONENT):
        if affinities.count != groups.count:
            raise ValueError("affinity table does not match the groups")
        self.groups = groups
        self.center_shrink = center_shrink
        self.perimeter_exponent = perimeter_exponent
        indptr, indices, weights = affinities.to_csr()
        self._reach = kernels.build_reach(indptr, indices, weights,
                                          groups.count)
        self._integral = groups.integral.table

    def score_many(self, boxes: np.ndarray) -> np.ndarray:
        """Scores for int boxes (n, 4) already inside the grid."""
        boxes = np.ascontiguousarray(boxes, dtype=np.int32)
        if boxes.size == 0:
            return np.zeros(0, dtype=np.float64)
        g = self.groups
        return kernels.score_boxes(
            boxes, g.labels, g.magnitudes, g.bboxes, g.member_start,
            g.member_x, g.member_y, g.member_mag, *self._reach,
            self._integral, self.center_shrink, self.perimeter_exponent)

    def score(self, box: BoundingBox) -> float:
        clipped = clip_box(box, self.groups.width, self.groups.height)
        if clipped is None:
            return 0.0
        return float(self.score_many(np.array([clipped.astuple()]))[0])

    def refine(self, boxes, steps, rho, span_w, span_h, rounds):
        """Greedy local refinement of scored windows (see the kernel
        docstring); returns new (boxes, rho) arrays."""
        g = self.groups
        return kernels.refine_boxes(
            np.ascontiguousarray(boxes, dtype=np.int32),
            np.ascontiguousarray(steps, dtype=np.int32),
            np.ascontiguousarray(rho, dtype=np.float64),
            g.labels, g.magnitudes, g.bboxes, g.member_start, g.member_x,
            g.member_y, g.member_mag, *self._reach, self._integral,
            self.center_shrink, self.perimeter_exponent, span_w, span_h,
            rounds)

    def region_mass(self, boxes: np.ndarray) -> np.ndarray:
        """Grouped edge mass inside each (clipped) box; zero mass means
        the box and anything inside it scores zero."""
        t = self._integral
        h, w = self.groups.labels.shape
        x0 = np.clip(boxes[:, 0], 0, w)
        y0 = np.clip(boxes[:, 1], 0, h)
        x1 = np.clip(boxes[:, 0] + boxes[:, 2], 0, w)
        y1 = np.clip(boxes[:, 1] + boxes[:, 3], 0, h)
        return t[y1, x1] - t[y0, x1] - t[y1, x0] + t[y0, x0]


def score_box(box: BoundingBox, groups: EdgeGroups,
              affinities: AffinityTable) -> float:
    """Contour score of one box (clipped to the grid).

    Chain products that fall below the affinity table's 0.05 sparsity
    floor are treated as broken, matching the table's own dropout."""
    return BoxScorer(groups, affinities).score(box)


class WindowContourScorer:
    """Frame-edge contour scorer over a search-window crop; accepts
    boxes in frame coordinates."""

    def __init__(self, frame: ImageBuffer, window: BoundingBox,
                 edge_params: EdgeParams | None = None):
        edge_params = edge_params or EdgeParams()
        groups = group_edges(detect_edges(frame.crop(window)),
                             edge_params.mag_threshold,
                             edge_params.curve_threshold)
        affinities = group_affinities(groups, edge_params.affinity_exponent,
                                      edge_params.distance_cutoff)
        self._scorer = BoxScorer(groups, affinities)
        self._window = window

    def score(self, box: BoundingBox) -> float:
        return self._scorer.score(
            BoundingBox(box.x - self._window.x, box.y - self._window.y,
                        box.w, box.h))


def _window_dims(target: TargetSpec, params: GenParams, max_w: int,
                 max_h: int):
    dims = []
    for s in params.scales:
        for p in params.aspect_perturbations:
            r = math.sqrt(p)
            w = max(1, int(round(target.w * s * r)))
            h = max(1, int(round(target.h * s / r)))
            if w <= max_w and h <= max_h:
                dims.append((w, h))
    return sorted(set(dims))


def _stride(extent: int, step_iou: float) -> int:
    return max(1, int(extent * (1.0 - step_iou) / (1.0 + step_iou)))


def _positions(span: int, extent: int, stride: int):
    xs = list(range(0, span - extent + 1, stride))
    if xs[-1] != span - extent:
        xs.append(span - extent)
    return xs


def _scored_windows(groups: EdgeGroups, affinities: AffinityTable,
                    search: BoundingBox, target: TargetSpec,
                    params: GenParams):
    """Slide, score and refine windows over the search-region crop;
    returns (boxes, rho) in crop coordinates, sorted by rho descending
    with ties broken by (x, y, w, h)."""
    if groups.width != search.w or groups.height != search.h:
        raise ValueError("groups were not computed on the search region")
    dims = _window_dims(target, params, search.w, search.h)
    if not dims:
        return np.zeros((0, 4), dtype=np.int32), np.zeros(0)
    scorer = BoxScorer(groups, affinities)
    rows, row_steps = [], []
    for w, h in dims:
        sx = _stride(w, params.step_iou)
        sy = _stride(h, params.step_iou)
        for y in _positions(search.h, h, sy):
            for x in _positions(search.w, w, sx):
                rows.append((x, y, w, h))
                row_steps.append((sx, sy))
    boxes = np.array(rows, dtype=np.int32)
    steps = np.array(row_steps, dtype=np.int32)
    boxes, first = np.unique(boxes, axis=0, return_index=True)
    steps = steps[first]
    rho = scorer.score_many(boxes)
    boxes, rho = scorer.refine(boxes, steps, rho, search.w, search.h,
                               params.refine_rounds)
    boxes, first = np.unique(boxes, axis=0, return_index=True)
    rho = rho[first]
    order = np.lexsort((boxes[:, 3], boxes[:, 2], boxes[:, 1], boxes[:, 0],
                        -rho))
    return boxes[order], rho[order]


def _to_proposals(boxes, rho, search: BoundingBox,
                  source: str) -> list[Proposal]:
    return [Proposal(BoundingBox(int(x) + search.x, int(y) + search.y,
                                 int(w), int(h)), float(r), source)
            for (x, y, w, h), r in zip(boxes, rho)]


def generate_candidates(groups: EdgeGroups, affinities: AffinityTable,
                        search: BoundingBox, target: TargetSpec,
                        params: GenParams,
                        source: str = SOURCE_FRAME) -> list[Proposal]:
    """Slide target-conditioned windows over the search region, score,
    refine, and return every window sorted by score (descending, ties by
    box coordinates). Groups must be computed on the search-region crop;
    returned boxes are in frame coordinates.
    """
    boxes, rho = _scored_windows(groups, affinities, search, target, params)
    return _to_proposals(boxes, rho, search, source)


def nms(proposals: list[Proposal], nms_iou: float,
        keep_limit: int = -1) -> list[Proposal]:
    """Greedy suppression of a score-ordered proposal list: keep a
    proposal iff its IoU with every kept one is below nms_iou."""
    if not proposals:
        return []
    boxes = np.array([p.box.astuple() for p in proposals], dtype=np.int32)
    kept = kernels.nms_keep(boxes, nms_iou, keep_limit)
    return [proposals[i] for i in kept]


def _source_proposals(plane_source, search: BoundingBox, target: TargetSpec,
                      params: GenParams, edge_params: EdgeParams,
                      source: str) -> list[Proposal]:
    edge_map = detect_edges(plane_source)
    groups = group_edges(edge_map, edge_params.mag_threshold,
                         edge_params.curve_threshold)
    affinities = group_affinities(groups, edge_params.affinity_exponent,
                                  edge_params.distance_cutoff)
    boxes, rho = _scored_windows(groups, affinities, search, target, params)
    if len(boxes) == 0:
        return []
    kept = kernels.nms_keep(boxes, params.nms_iou, params.per_source_budget)
    return _to_proposals(boxes[kept], rho[kept], search, source)


def _crop_response(response: ResponseMap, search: BoundingBox) -> ResponseMap:
    rx, ry = search.x - response.x0, search.y - response.y0
    if rx < 0 or ry < 0 or rx + search.w > response.width \
            or ry + search.h > response.height:
        raise ValueError("response map does not cover the search region")
    return ResponseMap(response.values[ry:ry + search.h, rx:rx + search.w],
                       search.x, search.y)


def generate_topg(frame: ImageBuffer, response: ResponseMap,
                  search: BoundingBox, target: TargetSpec,
                  params: GenParams,
                  edge_params: EdgeParams | None = None,
                  sources: tuple = (SOURCE_FRAME, SOURCE_RESPONSE),
                  ) -> list[Proposal]:
    """Fused target-specific proposals from frame edges and response-map
    edges: each source is detected, grouped, scored and suppressed
    independently, truncated to its budget, then near-identical boxes
    across sources (IoU >= 0.95) are collapsed onto the higher-scoring
    copy. Output is the frame stream followed by the response stream.
    """
    edge_params = edge_params or EdgeParams()
    search = clip_box(search, frame.width, frame.height)
    if search is None:
        return []
    streams = {}
    if SOURCE_FRAME in sources:
        streams[SOURCE_FRAME] = _source_proposals(
            frame.crop(search), search, target, params, edge_params,
            SOURCE_FRAME)
    if SOURCE_RESPONSE in sources:
        streams[SOURCE_RESPONSE] = _source_proposals(
            _crop_response(response, search), search, target, params,
            edge_params, SOURCE_RESPONSE)
    if len(streams) == 1:
        return next(iter(streams.values()))
    merged = [p for stream in streams.values() for p in stream]
    order = sorted(range(len(merged)),
                   key=lambda i: (-merged[i].rho, *merged[i].box.astuple(),
                                  merged[i].source))
    arr = np.array([p.box.astuple() for p in merged], dtype=np.int64)
    areas = arr[:, 2] * arr[:, 3]
    x2, y2 = arr[:, 0] + arr[:, 2], arr[:, 1] + arr[:, 3]
    dropped = set()
    kept_idx = {SOURCE_FRAME: [], SOURCE_RESPONSE: []}
    for i in order:
        p = merged[i]
        other = kept_idx[SOURCE_RESPONSE if p.source == SOURCE_FRAME
                         else SOURCE_FRAME]
        if other:
            k = np.array(other)
            iw = np.minimum(x2[i], x2[k]) - np.maximum(arr[i, 0], arr[k, 0])
            ih = np.minimum(y2[i], y2[k]) - np.maximum(arr[i, 1], arr[k, 1])
            inter = np.maximum(iw, 0) * np.maximum(ih, 0)
            overlap = inter / (areas[i] + areas[k] - inter)
            if (overlap >= CROSS_SOURCE_DEDUP_IOU).any():
                dropped.add(i)
                continue
        kept_idx[p.source].append(i)
    return [p for i, p in enumerate(merged) if i not in dropped]
