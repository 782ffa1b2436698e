"""Metrics, protocols, and the synthetic-sequence oracle generator.

Covers IoU recall-vs-budget curves, distance precision, success
rate/AUC, the spatial-robustness perturbation set, a deterministic
synthetic sequence renderer with known ground truth, the executable
ranked-probability gap check, and OTB-convention dataset ingestion.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field

import numpy as np

from .imaging import BoundingBox, ImageBuffer, clip_box, iou, load_image

__all__ = [
    "iou", "RecallCurve", "recall_curve", "TrackEval", "distance_precision",
    "success_metrics", "sre_perturbations", "Occluder", "SynthSpec",
    "synth_sequence", "AppendixAInstance", "appendix_a_gap",
    "random_appendix_instance", "Sequence", "load_sequence",
]

DEFAULT_BUDGETS = (50, 100, 200, 500, 1000)
SUCCESS_GRID = tuple(k * 0.05 for k in range(1, 21))


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RecallCurve:
    budgets: tuple
    recall: tuple
    iou_threshold: float

    def at(self, budget: int) -> float:
        return self.recall[self.budgets.index(budget)]


def _boxes(seq):
    return [getattr(b, "box", b) for b in seq]


def recall_curve(per_frame_proposals, ground_truths, iou_threshold=0.5,
                 budgets=DEFAULT_BUDGETS) -> RecallCurve:
    """Fraction of frames whose top-k proposals contain at least one box
    with IoU >= threshold against that frame's ground truth, for each
    budget k. Budgets beyond a list's length use the whole list."""
    if len(per_frame_proposals) != len(ground_truths):
        raise ValueError("proposal lists and ground truths differ in length")
    budgets = tuple(budgets)
    hits = np.zeros(len(budgets), dtype=np.int64)
    for plist, gt in zip(per_frame_proposals, ground_truths):
        boxes = _boxes(plist)
        best_rank = None
        for rank, box in enumerate(boxes):
            if iou(box, gt) >= iou_threshold:
                best_rank = rank
                break
        if best_rank is None:
            continue
        for bi, budget in enumerate(budgets):
            if best_rank < budget:
                hits[bi] += 1
    n = max(1, len(ground_truths))
    return RecallCurve(budgets, tuple(float(h) / n for h in hits),
                       iou_threshold)


@dataclass(frozen=True)
class TrackEval:
    dp: float
    success_rate: float
    success_auc: float


def distance_precision(track, gt, threshold_px: float = 20.0) -> float:
    """Fraction of frames whose predicted center lies within threshold_px
    (Euclidean) of the ground-truth center."""
    track, gt = _boxes(track), _boxes(gt)
    if len(track) != len(gt):
        raise ValueError("trajectory and ground truth differ in length")
    ok = 0
    for t, g in zip(track, gt):
        tc, gc = t.center(), g.center()
        if ((tc[0] - gc[0]) ** 2 + (tc[1] - gc[1]) ** 2) ** 0.5 \
                <= threshold_px:
            ok += 1
    return ok / max(1, len(gt))


def success_metrics(track, gt) -> tuple[float, float]:
    """(success rate at overlap 0.5, AUC over the 20-point overlap grid);
    a frame succeeds at threshold eta when IoU > eta (strict)."""
    track, gt = _boxes(track), _boxes(gt)
    if len(track) != len(gt):
        raise ValueError("trajectory and ground truth differ in length")
    ious = [iou(t, g) for t, g in zip(track, gt)]
    n = max(1, len(ious))
    rate = sum(1 for v in ious if v > 0.5) / n
    auc = sum(sum(1 for v in ious if v > eta) / n
              for eta in SUCCESS_GRID) / len(SUCCESS_GRID)
    return rate, auc


def track_eval(track, gt, threshold_px: float = 20.0) -> TrackEval:
    rate, auc = success_metrics(track, gt)
    return TrackEval(distance_precision(track, gt, threshold_px), rate, auc)


# compass order for the shifted initializations
_SRE_SHIFTS = ((0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0),
               (-1, -1))
_SRE_SCALES = (0.8, 0.9, 1.1, 1.2)


def sre_perturbations(init: BoundingBox,
                      frame_dims: tuple[int, int] | None = None,
                      ) -> list[BoundingBox]:
    """The 12 perturbed initializations of the spatial-robustness
    protocol: 8 center shifts of 10% of the box dims plus 4 uniform
    scalings, clipped to the frame when dims are given."""
    dx = int(round(0.1 * init.w))
    dy = int(round(0.1 * init.h))
    out = [BoundingBox(init.x + sx * dx, init.y + sy * dy, init.w, init.h)
           for sx, sy in _SRE_SHIFTS]
    out.extend(init.scaled(s) for s in _SRE_SCALES)
    if frame_dims is not None:
        w, h = frame_dims
        clipped = [clip_box(b, w, h) for b in out]
        out = [c if c is not None else init for c in clipped]
    return out


# ---------------------------------------------------------------------------
# synthetic sequences
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Occluder:
    box: BoundingBox
    first_frame: int  # 0-based, inclusive
    last_frame: int   # inclusive
    color: tuple = (40, 40, 40)


@dataclass(frozen=True)
class SynthSpec:
    """A rendered rectangle target over cell-textured background, with
    optional blur / contrast / noise degradations and an occluder span.
    The path bounces off the frame borders, so the target never leaves
    the frame."""

    width: int = 112
    height: int = 80
    length: int = 50
    target_color: tuple = (200, 60, 60)
    target_size: tuple = (18, 14)
    start: tuple = (20, 20)
    velocity: tuple = (1.5, 0.8)
    texture_seed: int = 7
    texture_cells: int = 8
    texture_low: int = 70
    texture_high: int = 170
    blur_radius: int = 0
    contrast_scale: float = 1.0
    noise_sigma: float = 0.0
    occluder: Occluder | None = None
    distractors: tuple = ()  # (BoundingBox, (r, g, b)) static rectangles

    def __post_init__(self):
        if self.length < 2:
            raise ValueError("sequence length must be >= 2")
        w, h = self.target_size
        if w < 1 or h < 1 or w > self.width or h > self.height:
            raise ValueError("target size must fit inside the frame")
        if not 0 <= self.start[0] <= self.width - w \
                or not 0 <= self.start[1] <= self.height - h:
            raise ValueError("start position puts the target outside")
        if self.blur_radius < 0 or self.noise_sigma < 0 \
                or self.contrast_scale <= 0:
            raise ValueError("invalid degradation knobs")


def _texture(spec: SynthSpec) -> np.ndarray:
    rng = np.random.default_rng(spec.texture_seed)
    cw = max(1, spec.texture_cells)
    gw = (spec.width + cw - 1) // cw
    gh = (spec.height + cw - 1) // cw
    cells = rng.integers(spec.texture_low, spec.texture_high + 1,
                         size=(gh, gw, 3)).astype(np.float64)
    big = np.repeat(np.repeat(cells, cw, axis=0), cw, axis=1)
    return big[:spec.height, :spec.width]


def _bounce_path(spec: SynthSpec) -> list[BoundingBox]:
    w, h = spec.target_size
    x, y = float(spec.start[0]), float(spec.start[1])
    vx, vy = float(spec.velocity[0]), float(spec.velocity[1])
    boxes = []
    for _ in range(spec.length):
        boxes.append(BoundingBox(int(round(x)), int(round(y)), w, h))
        x += vx
        y += vy
        if x < 0 or x > spec.width - w:
            vx = -vx
            x = min(max(x, 0.0), float(spec.width - w))
        if y < 0 or y > spec.height - h:
            vy = -vy
            y = min(max(y, 0.0), float(spec.height - h))
    return boxes


def _box_blur(img: np.ndarray, radius: int) -> np.ndarray:
    size = 2 * radius + 1
    for axis in (0, 1):
        pad = [(0, 0)] * img.ndim
        pad[axis] = (radius + 1, radius)
        padded = np.pad(img, pad, mode="edge")
        csum = np.cumsum(padded, axis=axis)
        hi = np.take(csum, range(size, csum.shape[axis]), axis=axis)
        lo = np.take(csum, range(0, csum.shape[axis] - size), axis=axis)
        img = (hi - lo) / size
    return img


def synth_sequence(spec: SynthSpec, rng=None):
    """Render (frames, ground-truth boxes); deterministic for a fixed
    spec and RNG seed. Ground truth follows the motion path regardless
    of occlusion."""
    rng = rng if rng is not None else np.random.default_rng(spec.texture_seed)
    background = _texture(spec)
    for dbox, dcolor in spec.distractors:
        db = clip_box(dbox, spec.width, spec.height)
        if db is not None:
            background[db.y:db.y2, db.x:db.x2] = np.array(dcolor, float)
    path = _bounce_path(spec)
    color = np.array(spec.target_color, dtype=np.float64)
    frames = []
    for idx, box in enumerate(path):
        img = background.copy()
        img[box.y:box.y2, box.x:box.x2] = color
        occ = spec.occluder
        if occ is not None and occ.first_frame <= idx <= occ.last_frame:
            ob = clip_box(occ.box, spec.width, spec.height)
            if ob is not None:
                img[ob.y:ob.y2, ob.x:ob.x2] = np.array(occ.color, float)
        if spec.blur_radius > 0:
            img = _box_blur(img, spec.blur_radius)
        if spec.contrast_scale != 1.0:
            img = 128.0 + spec.contrast_scale * (img - 128.0)
        if spec.noise_sigma > 0:
            img = img + rng.normal(0.0, spec.noise_sigma, img.shape)
        frames.append(ImageBuffer.from_array(
            np.clip(np.rint(img), 0, 255).astype(np.uint8)))
    return frames, path


# ---------------------------------------------------------------------------
# ranked-probability gap check
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AppendixAInstance:
    """Per-rank hit probabilities: p on the original image (strictly
    decreasing), p_r on the response map dominating p on the first half
    of the ranks. All values in the open interval (0, 1)."""

    p: np.ndarray
    p_r: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        p_r = np.asarray(self.p_r, dtype=np.float64)
        n = len(p)
        if n < 2 or n % 2:
            raise ValueError("need an even number of ranks >= 2")
        if len(p_r) != n // 2:
            raise ValueError("p_r must cover exactly the first half")
        if (p <= 0).any() or (p >= 1).any() or (p_r <= 0).any() \
                or (p_r >= 1).any():
            raise ValueError("probabilities must lie in (0, 1)")
        if (np.diff(p) >= 0).any():
            raise ValueError("p must be strictly decreasing")
        if (p_r <= p[:n // 2]).any():
            raise ValueError("p_r must dominate p on the first half")

    @property
    def n(self) -> int:
        return len(self.p)


def appendix_a_gap(instance: AppendixAInstance):
    """(p_g, p_t, p_d, tau): the all-ranks product, the fused half/half
    product, their difference, and the tail-to-response product ratio.
    For every valid instance p_d < 0 and tau < 1."""
    p = np.asarray(instance.p, dtype=np.float64)
    p_r = np.asarray(instance.p_r, dtype=np.float64)
    half = instance.n // 2
    p_g = float(np.prod(p))
    p_t = float(np.prod(p[:half]) * np.prod(p_r))
    tau = float(np.prod(p[half:]) / np.prod(p_r))
    return p_g, p_t, p_g - p_t, tau


def random_appendix_instance(rng, n_max: int = 20) -> AppendixAInstance:
    """A random valid instance with an even rank count in [2, n_max]."""
    n = 2 * int(rng.integers(1, n_max // 2 + 1))
    eps = 1e-6
    p = np.sort(rng.uniform(eps, 1.0 - eps, size=n))[::-1]
    while (np.diff(p) >= 0).any():  # vanishing-probability tie guard
        p = np.sort(rng.uniform(eps, 1.0 - eps, size=n))[::-1]
    head = p[:n // 2]
    p_r = head + rng.uniform(0.0, 1.0, size=n // 2) * (1.0 - eps - head)
    p_r = np.maximum(p_r, head + eps * (1.0 - head))
    return AppendixAInstance(p.copy(), p_r)


# ---------------------------------------------------------------------------
# dataset ingestion (OTB convention)
# ---------------------------------------------------------------------------

_FRAME_EXTS = (".jpg", ".jpeg", ".png", ".ppm", ".pgm")


@dataclass(frozen=True)
class Sequence:
    name: str
    frame_paths: tuple
    ground_truth: tuple  # BoundingBox per frame, 0-based
    attributes: tuple = ()

    def __len__(self) -> int:
        return len(self.frame_paths)

    def load_frame(self, index: int) -> ImageBuffer:
        return load_image(self.frame_paths[index])


def _parse_rect_line(line: str, lineno: int, path: str) -> BoundingBox:
    parts = [p for p in re.split(r"[,\t ]+", line.strip()) if p]
    if len(parts) != 4:
        raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
    try:
        x, y, w, h = (int(round(float(p))) for p in parts)
    except ValueError:
        raise ValueError(f"{path}:{lineno}: non-numeric rectangle") from None
    return BoundingBox(x - 1, y - 1, w, h)  # annotations are 1-based


def load_sequence(directory: str) -> Sequence:
    """Ingest a sequence directory holding img/ frames and a 1-based
    groundtruth_rect.txt; an optional attributes.txt lists challenge
    attributes, one per line."""
    img_dir = os.path.join(directory, "img")
    if not os.path.isdir(img_dir):
        raise FileNotFoundError(f"{directory}: missing img/ directory")
    frames = sorted(os.path.join(img_dir, f) for f in os.listdir(img_dir)
                    if f.lower().endswith(_FRAME_EXTS))
    if not frames:
        raise FileNotFoundError(f"{img_dir}: no frames found")
    rect_path = os.path.join(directory, "groundtruth_rect.txt")
    if not os.path.isfile(rect_path):
        raise FileNotFoundError(f"{directory}: missing groundtruth_rect.txt")
    with open(rect_path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    boxes = tuple(_parse_rect_line(ln, i + 1, rect_path)
                  for i, ln in enumerate(lines))
    if len(boxes) != len(frames):
        raise ValueError(f"{directory}: {len(frames)} frames but "
                         f"{len(boxes)} ground-truth rows")
    attrs = ()
    attr_path = os.path.join(directory, "attributes.txt")
    if os.path.isfile(attr_path):
        with open(attr_path) as fh:
            attrs = tuple(ln.strip() for ln in fh if ln.strip())
    return Sequence(os.path.basename(os.path.normpath(directory)),
                    tuple(frames), boxes, attrs)


# ---------------------------------------------------------------------------
# sequence-level proposal harness
# ---------------------------------------------------------------------------

def _frame_at(frames, index: int) -> ImageBuffer:
    if hasattr(frames, "load_frame"):
        return frames.load_frame(index)
    return frames[index]


def sequence_proposals(frames, ground_truths, config=None, fusion=True,
                       callback=None):
    """Ranked proposals for frames 2..T of a sequence, target spec driven
    by the previous frame's ground truth.

    The color model is estimated on frame 1 and refreshed on the kappa
    cadence at the current ground-truth box; the target contour score is
    recomputed at each refresh. With fusion=False only the raw-frame
    edge stream is generated (the single-cue baseline); ranking is
    identical either way. Returns one ranked proposal list per frame,
    aligned with ground_truths[1:].
    """
    from .density import build_trimap, estimate_model, response_map, \
        update_model
    from .proposals import (SOURCE_FRAME, SOURCE_RESPONSE, TargetSpec,
                            WindowContourScorer, generate_topg)
    from .ranking import rank_proposals
    from .tracking import TrackerConfig

    cfg = config or TrackerConfig()
    n = len(ground_truths)
    if n < 2:
        raise ValueError("need at least 2 frames to evaluate proposals")
    first = _frame_at(frames, 0)
    dims = (first.width, first.height)
    trimap = build_trimap(dims, ground_truths[0], cfg.gamma_margin)
    model = estimate_model(first, trimap, cfg.bins, cfg.learning_rate,
                           cfg.kappa, 1)
    window0 = clip_box(ground_truths[0].scaled(cfg.search_factor), *dims)
    rho_t = WindowContourScorer(first, window0, cfg.edge).score(
        ground_truths[0])
    sources = (SOURCE_FRAME, SOURCE_RESPONSE) if fusion else (SOURCE_FRAME,)
    out = []
    for t in range(1, n):
        frame = _frame_at(frames, t)
        prev_gt = ground_truths[t - 1]
        window = clip_box(prev_gt.scaled(cfg.search_factor),
                          frame.width, frame.height)
        response = response_map(frame, model, window)
        spec = TargetSpec(prev_gt, rho_t)
        props = generate_topg(frame, response, window, spec, cfg.gen,
                              cfg.edge, sources=sources)
        ranked = rank_proposals(props, spec, response, cfg.affinity)
        out.append(ranked)
        if callback is not None:
            callback(t, ranked)
        m = t + 1
        if (m - 1) % cfg.kappa == 0:
            gt = ground_truths[t]
            trimap = build_trimap((frame.width, frame.height), gt,
                                  cfg.gamma_margin)
            fresh = estimate_model(frame, trimap, cfg.bins,
                                   cfg.learning_rate, cfg.kappa, m)
            model = update_model(fresh, model, cfg.learning_rate, m)
            win_u = clip_box(gt.scaled(cfg.search_factor),
                             frame.width, frame.height)
            rho_t = WindowContourScorer(frame, win_u, cfg.edge).score(gt)
    return out


def save_sequence(frames, boxes, directory: str) -> None:
    """Write frames as img/%04d.ppm (or .pgm) plus a 1-based
    groundtruth_rect.txt, the same layout load_sequence ingests."""
    from .imaging import save_image
    img_dir = os.path.join(directory, "img")
    os.makedirs(img_dir, exist_ok=True)
    for i, frame in enumerate(frames):
        ext = "ppm" if frame.channels == 3 else "pgm"
        save_image(frame, os.path.join(img_dir, f"{i + 1:04d}.{ext}"))
    with open(os.path.join(directory, "groundtruth_rect.txt"), "w") as fh:
        for b in boxes:
            fh.write(f"{b.x + 1},{b.y + 1},{b.w},{b.h}\n")
