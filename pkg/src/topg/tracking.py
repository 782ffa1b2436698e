"""Proposal-driven tracking-by-detection.

Each frame, fused proposals from a search window around the last target
become candidates; an online classifier scores them and the best one is
the new target. Training samples come from the proposals themselves
(IoU-thresholded positives/negatives plus Gaussian-jittered copies of
the target), and the color model, target contour score, and classifier
refresh on a fixed frame cadence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .density import (ForegroundModel, ResponseMap, build_trimap,
                      estimate_model, response_map, update_model)
from .edges import EdgeParams
from .imaging import (BoundingBox, ImageBuffer, IntegralImage, clip_box,
                      integral_image, iou)
from .proposals import (GenParams, Proposal, TargetSpec, WindowContourScorer,
                        generate_topg)
from .ranking import AffinityConfig, color_affinity, rank_proposals


@dataclass(frozen=True)
class TrackerConfig:
    search_factor: float = 5.0
    top_k: int = 500
    phi: float = 0.7
    omega: float = 0.5
    n_tilde: int = 100
    kappa: int = 30
    learning_rate: float = 0.01
    rng_seed: int = 0
    bins: int = 32
    gamma_margin: float = 0.4
    feature_bins: int = 8
    height_var_uses_h: bool = False
    hard_negative_cap: int = 10
    init_epochs: int = 200
    update_epochs: int = 20
    scorer_learn_rate: float = 0.1
    gen: GenParams = field(default_factory=GenParams)
    edge: EdgeParams = field(default_factory=EdgeParams)
    affinity: AffinityConfig = field(default_factory=AffinityConfig)

    def __post_init__(self):
        if not 0.0 <= self.omega < self.phi <= 1.0:
            raise ValueError("phi must exceed omega, both within [0, 1]")
        if self.search_factor <= 1.0:
            raise ValueError("search_factor must exceed 1")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.kappa < 1:
            raise ValueError("kappa must be >= 1")
        if self.n_tilde < 0:
            raise ValueError("n_tilde must be >= 0")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must be in (0, 1]")
        if not 2 <= self.bins <= 256 or not 2 <= self.feature_bins <= 256:
            raise ValueError("histogram bins must be in [2, 256]")
        if not 0.0 < self.gamma_margin < 1.0:
            raise ValueError("gamma_margin must be in (0, 1)")

    def feature_dim(self) -> int:
        return self.feature_bins ** 3 + 5


@dataclass
class Sample:
    box: BoundingBox
    label: int  # 1 positive, 0 negative
    feature: np.ndarray


class LogisticScorer:
    """Online logistic model over fixed-length features; the default
    candidate scorer behind the train/score interface."""

    def __init__(self, dim: int, learn_rate: float = 0.1):
        self.weights = np.zeros(dim, dtype=np.float64)
        self.bias = 0.0
        self.learn_rate = learn_rate

    def score_many(self, features: np.ndarray) -> np.ndarray:
        z = np.clip(features @ self.weights + self.bias, -500.0, 500.0)
        return 1.0 / (1.0 + np.exp(-z))

    def score(self, feature: np.ndarray) -> float:
        return float(self.score_many(feature[None, :])[0])

    def train(self, features: np.ndarray, labels: np.ndarray,
              epochs: int, tol: float = 1e-6) -> int:
        """Sequential SGD passes; stops early once the training accuracy
        hits 1 or the mean log-loss change drops below tol. Returns the
        number of epochs run."""
        features = np.asarray(features, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.float64)
        lr = self.learn_rate
        prev_loss = math.inf
        for epoch in range(1, epochs + 1):
            for f, y in zip(features, labels):
                z = self.bias + float(f @ self.weights)
                p = 1.0 / (1.0 + math.exp(-max(-500.0, min(500.0, z))))
                g = p - y
                self.weights -= lr * g * f
                self.bias -= lr * g
            probs = np.clip(self.score_many(features), 1e-12, 1.0 - 1e-12)
            loss = float(-np.mean(labels * np.log(probs)
                                  + (1 - labels) * np.log(1 - probs)))
            if not np.isfinite(self.weights).all() \
                    or not math.isfinite(self.bias):
                raise FloatingPointError("scorer weights became non-finite")
            acc = float(np.mean((probs > 0.5) == (labels > 0.5)))
            if acc == 1.0 or abs(prev_loss - loss) < tol:
                return epoch
            prev_loss = loss
        return epochs


@dataclass
class TrackerState:
    """Single-owner tracker state, mutated only through step()."""

    box: BoundingBox
    model: ForegroundModel
    scorer: LogisticScorer
    target_spec: TargetSpec
    frame_index: int
    config: TrackerConfig
    rng: np.random.Generator
    lost: bool = False


@dataclass(frozen=True)
class StepResult:
    box: BoundingBox
    score: float
    lost: bool


def label_samples(proposals, target: BoundingBox, phi: float, omega: float):
    """Split proposals into positives (IoU > phi) and negatives
    (IoU < omega); overlaps in between are discarded."""
    positives, negatives = [], []
    for p in proposals:
        box = getattr(p, "box", p)
        v = iou(box, target)
        if v > phi:
            positives.append(p)
        elif v < omega:
            negatives.append(p)
    return positives, negatives


def augment_positives(target: BoundingBox, n_tilde: int, rng,
                      noise_scale: float = 0.1,
                      height_var_uses_h: bool = False) -> list[BoundingBox]:
    """n_tilde Gaussian-jittered copies of the target box. Component
    standard deviations are noise_scale times (w, h, w, w); the last one
    switches to h with height_var_uses_h. Dims are clamped to >= 1."""
    stds = np.array([target.w, target.h, target.w,
                     target.h if height_var_uses_h else target.w],
                    dtype=np.float64) * noise_scale
    mean = np.array(target.astuple(), dtype=np.float64)
    draws = rng.normal(0.0, 1.0, size=(n_tilde, 4)) * stds + mean
    out = []
    for x, y, w, h in np.rint(draws).astype(np.int64):
        out.append(BoundingBox(int(x), int(y), max(1, int(w)),
                               max(1, int(h))))
    return out


def extract_features(frame: ImageBuffer, response: ResponseMap,
                     box: BoundingBox, target: TargetSpec,
                     rho: float = 0.0, c: float | None = None,
                     feature_bins: int = 8,
                     response_integral: IntegralImage | None = None,
                     ) -> np.ndarray:
    """Fixed-length candidate descriptor: L1-normalized joint color
    histogram of the box, response mean, contour score, log size ratios,
    and center offset normalized by the target dims."""
    clipped = clip_box(box, frame.width, frame.height)
    if clipped is None:
        raise ValueError("box lies fully outside the frame")
    b = feature_bins
    crop = frame.data[clipped.y:clipped.y2, clipped.x:clipped.x2]
    if frame.channels == 1:
        q = crop.astype(np.int32) * b // 256
        idx = q * (b * b + b + 1)  # gray as (v, v, v)
    else:
        q = crop.astype(np.int32) * b // 256
        idx = q[:, :, 0] * b * b + q[:, :, 1] * b + q[:, :, 2]
    hist = np.bincount(idx.ravel(), minlength=b ** 3).astype(np.float64)
    hist /= clipped.area
    if c is None:
        rel = clip_box(BoundingBox(box.x - response.x0, box.y - response.y0,
                                   box.w, box.h),
                       response.width, response.height)
        if rel is None:
            c = 0.0
        else:
            shifted = BoundingBox(rel.x + response.x0, rel.y + response.y0,
                                  rel.w, rel.h)
            c = color_affinity(response, shifted, response_integral)
    cx, cy = box.center()
    tx, ty = target.box.center()
    tail = np.array([c, rho, math.log(box.w / target.w),
                     math.log(box.h / target.h),
                     math.hypot((cx - tx) / target.w, (cy - ty) / target.h)])
    return np.concatenate([hist, tail])


def _viable(proposals):
    """Candidates need edge evidence: zero-score windows (no contour
    mass in either stream) do not compete for the target."""
    return [p for p in proposals if p.rho > 0.0]


def _search_window(box: BoundingBox, frame: ImageBuffer,
                   factor: float) -> BoundingBox:
    window = clip_box(box.scaled(factor), frame.width, frame.height)
    if window is None:  # carried-over box drifted outside: recenter
        window = BoundingBox(0, 0, frame.width, frame.height)
    return window


def _training_set(frame, response, candidates, target_box, target_spec,
                  scorer, edge_scorer, cfg, rng):
    """Features and labels from IoU-thresholded candidates plus Gaussian
    positives, with negatives capped to the hardest (highest-scoring)
    hard_negative_cap * positives."""
    integral = integral_image(response.values)
    positives, negatives = label_samples(candidates, target_box,
                                         cfg.phi, cfg.omega)
    rows, labels = [], []
    for p in positives:
        rows.append(extract_features(frame, response, p.box, target_spec,
                                     p.rho, p.c if p.c >= 0 else None,
                                     cfg.feature_bins, integral))
        labels.append(1)
    for box in augment_positives(target_box, cfg.n_tilde, rng,
                                 height_var_uses_h=cfg.height_var_uses_h):
        rows.append(extract_features(frame, response, box, target_spec,
                                     edge_scorer.score(box), None,
                                     cfg.feature_bins, integral))
        labels.append(1)
    n_pos = len(rows)
    if n_pos == 0:
        raise ValueError("no positive samples to train on")
    neg_rows = [extract_features(frame, response, p.box, target_spec, p.rho,
                                 p.c if p.c >= 0 else None,
                                 cfg.feature_bins, integral)
                for p in negatives]
    if neg_rows:
        neg_feats = np.stack(neg_rows)
        order = np.argsort(-scorer.score_many(neg_feats), kind="stable")
        keep = order[:cfg.hard_negative_cap * n_pos]
        rows.extend(neg_feats[i] for i in keep)
        labels.extend([0] * len(keep))
    return np.stack(rows), np.array(labels, dtype=np.float64)


def init_tracker(first_frame: ImageBuffer, target: BoundingBox,
                 config: TrackerConfig = TrackerConfig()) -> TrackerState:
    """Build the color model and target spec from frame 1, generate
    fused proposals in the search window, and train the candidate scorer
    to convergence on the frame-1 samples."""
    if target.x < 0 or target.y < 0 or target.x2 > first_frame.width \
            or target.y2 > first_frame.height:
        raise ValueError("target box must lie inside the first frame")
    if target.w < 4 or target.h < 4:
        raise ValueError("target box must be at least 4x4")
    rng = np.random.default_rng(config.rng_seed)
    trimap = build_trimap((first_frame.width, first_frame.height), target,
                          config.gamma_margin)
    model = estimate_model(first_frame, trimap, config.bins,
                           config.learning_rate, config.kappa, 1)
    window = _search_window(target, first_frame, config.search_factor)
    response = response_map(first_frame, model, window)
    edge_scorer = WindowContourScorer(first_frame, window, config.edge)
    spec = TargetSpec(target, edge_scorer.score(target))
    proposals = generate_topg(first_frame, response, window, spec,
                              config.gen, config.edge)
    ranked = _viable(rank_proposals(proposals, spec, response,
                                    config.affinity))[:config.top_k]
    scorer = LogisticScorer(config.feature_dim(), config.scorer_learn_rate)
    feats, labels = _training_set(first_frame, response, ranked, target,
                                  spec, scorer, edge_scorer, config, rng)
    scorer.train(feats, labels, config.init_epochs)
    return TrackerState(target, model, scorer, spec, 1, config, rng)


def step(state: TrackerState, frame: ImageBuffer) -> StepResult:
    """Advance one frame: rank fused proposals from the search window,
    pick the highest-scoring candidate, and on the kappa cadence refresh
    the color model, target score, and classifier. With zero candidates
    the previous box is kept and the frame is flagged lost."""
    cfg = state.config
    state.frame_index += 1
    m = state.frame_index
    window = _search_window(state.box, frame, cfg.search_factor)
    response = response_map(frame, state.model, window)
    proposals = generate_topg(frame, response, window, state.target_spec,
                              cfg.gen, cfg.edge)
    ranked = _viable(rank_proposals(proposals, state.target_spec, response,
                                    cfg.affinity))[:cfg.top_k]
    if ranked:
        integral = integral_image(response.values)
        feats = np.stack([
            extract_features(frame, response, p.box, state.target_spec,
                             p.rho, p.c, cfg.feature_bins, integral)
            for p in ranked])
        scores = state.scorer.score_many(feats)
        pick = min(range(len(ranked)),
                   key=lambda i: (-scores[i], -ranked[i].a,
                                  ranked[i].box.astuple()))
        chosen = ranked[pick]
        state.box = chosen.box
        state.lost = False
        result = StepResult(chosen.box, float(scores[pick]), False)
    else:
        state.lost = True
        result = StepResult(state.box, 0.0, True)

    if (m - 1) % cfg.kappa == 0:
        trimap = build_trimap((frame.width, frame.height), state.box,
                              cfg.gamma_margin)
        fresh = estimate_model(frame, trimap, cfg.bins, cfg.learning_rate,
                               cfg.kappa, m)
        state.model = update_model(fresh, state.model, cfg.learning_rate, m)
        edge_scorer = WindowContourScorer(frame, window, cfg.edge)
        state.target_spec = TargetSpec(state.box, edge_scorer.score(state.box))
        if ranked:
            feats, labels = _training_set(frame, response, ranked, state.box,
                                          state.target_spec, state.scorer,
                                          edge_scorer, cfg, state.rng)
            state.scorer.train(feats, labels, cfg.update_epochs)
    else:
        state.target_spec = TargetSpec(state.box, state.target_spec.rho_t)
    return result


def track_sequence(frames, init_box: BoundingBox,
                   config: TrackerConfig = TrackerConfig()):
    """Track through an iterable of frames (the first initializes).
    Returns one (frame_number, StepResult) per frame, frame numbers
    1-based; frame 1 reports the initialization box with score 1."""
    results = []
    state = None
    for i, frame in enumerate(frames):
        if state is None:
            state = init_tracker(frame, init_box, config)
            results.append((1, StepResult(init_box, 1.0, False)))
        else:
            results.append((i + 1, step(state, frame)))
    if state is None:
        raise ValueError("no frames supplied")
    return results
