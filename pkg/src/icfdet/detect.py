"""Multi-scale sliding-window detection: image pyramid, window scanning,
greedy non-maximum suppression, and score fusion with context detections.

Scale convention: a pyramid level's `scale` is the resampling factor f
applied to the frame, so a level at f detects objects of height
template_h / f and boxes map back to original coordinates by dividing by f.
Channels are recomputed at every level (no channel-scaling approximation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import channels as ch
from .boost import BoostedForest
from .boxes import BoundingBox, Detection, iou, overlap_min
from .errors import IcfdetError


class DetectError(IcfdetError):
    pass


@dataclass
class PyramidConfig:
    scales_per_octave: int = 8
    min_height: int = 128  # smallest/largest detectable object height, pixels
    max_height: int = 512
    stride_px: int = 4
    nms_overlap: float = 0.65

    def __post_init__(self):
        if self.scales_per_octave < 1 or self.stride_px < 1:
            raise DetectError("scales_per_octave and stride must be >= 1")
        if not 0.0 < self.nms_overlap < 1.0:
            raise DetectError("nms_overlap must be in (0, 1)")
        if not 0 < self.min_height <= self.max_height:
            raise DetectError("need 0 < min_height <= max_height")


def bilinear_resample(frame: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resample a frame to (out_h, out_w) by bilinear interpolation.

    Output pixel centers map to input centers via the size ratio; source
    coordinates are clamped to the frame (replicated edges).
    """
    h, w = frame.shape[:2]
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    return _sample_grid(frame, ys, xs)


def crop_window(frame: np.ndarray, box: BoundingBox, out_w: int, out_h: int) -> np.ndarray:
    """Bilinearly resample the box region of `frame` to (out_h, out_w)."""
    ys = box.y + (np.arange(out_h) + 0.5) * (box.h / out_h) - 0.5
    xs = box.x + (np.arange(out_w) + 0.5) * (box.w / out_w) - 0.5
    return _sample_grid(frame, ys, xs)


def _sample_grid(frame, ys, xs):
    h, w = frame.shape[:2]
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    tl = frame[np.ix_(y0, x0)]
    tr = frame[np.ix_(y0, x1)]
    bl = frame[np.ix_(y1, x0)]
    br = frame[np.ix_(y1, x1)]
    top = tl + (tr - tl) * fx
    bot = bl + (br - bl) * fx
    return top + (bot - top) * fy


def pyramid_scales(frame_h, frame_w, model: BoostedForest, cfg: PyramidConfig):
    """Geometric ladder of resample factors 2^(-k/spo), anchored so that 1.0
    is always on the lattice, covering detection heights [min, max]."""
    spo = cfg.scales_per_octave
    t_h = model.template_h
    k_min = math.ceil(spo * math.log2(cfg.min_height / t_h) - 1e-9)
    k_max = math.floor(spo * math.log2(cfg.max_height / t_h) + 1e-9)
    scales = []
    for k in range(k_min, k_max + 1):
        f = 2.0 ** (-k / spo)
        rh, rw = int(round(frame_h * f)), int(round(frame_w * f))
        if rh // model.shrink >= model.template_h // model.shrink and (
            rw // model.shrink >= model.template_w // model.shrink
        ):
            scales.append(f)
    return scales


def _level_input(window, f, with_sdt):
    if with_sdt:
        rh = int(round(window.frame_t.shape[0] * f))
        rw = int(round(window.frame_t.shape[1] * f))
        return ch.FrameTriplet(
            bilinear_resample(window.frame_t, rh, rw),
            bilinear_resample(window.frame_t4, rh, rw),
            bilinear_resample(window.frame_t8, rh, rw),
        )
    rh = int(round(window.shape[0] * f))
    rw = int(round(window.shape[1] * f))
    return bilinear_resample(window, rh, rw)


def build_pyramid(frame_or_triplet, model: BoostedForest, cfg: PyramidConfig):
    """List of (scale, IntegralChannelStack); empty when the frame cannot
    host a single template placement at any scale in range."""
    if model.with_sdt:
        if not isinstance(frame_or_triplet, ch.FrameTriplet):
            raise DetectError("temporal model needs a FrameTriplet input")
        h, w = frame_or_triplet.frame_t.shape[:2]
    else:
        if isinstance(frame_or_triplet, ch.FrameTriplet):
            raise DetectError("non-temporal model got a FrameTriplet input")
        h, w = frame_or_triplet.shape[:2]
    levels = []
    for f in pyramid_scales(h, w, model, cfg):
        resampled = _level_input(frame_or_triplet, f, model.with_sdt)
        integral = ch.compute_integral(resampled, model.channel_mode, model.with_sdt, model.shrink)
        levels.append((f, integral))
    return levels


def _model_eval_arrays(model: BoostedForest):
    """Per-tree node feature/threshold/leaf arrays for vectorized scanning."""
    n_trees = len(model.trees)
    feats = np.zeros((n_trees, 3), dtype=np.int64)
    thrs = np.zeros((n_trees, 3))
    leaves = np.zeros((n_trees, 4), dtype=np.int8)
    alphas = np.zeros(n_trees)
    levels = np.zeros(n_trees, dtype=np.int8)
    for t, (alpha, tree) in enumerate(model.trees):
        alphas[t] = alpha
        levels[t] = tree.level
        for i, node in enumerate(tree.nodes):
            feats[t, i] = node.feature
            thrs[t, i] = node.threshold
        if tree.level == 1:
            leaves[t, :2] = tree.leaves
        else:
            leaves[t] = tree.leaves
    return feats, thrs, leaves, alphas, levels


def _feature_grid(integral, region, oys, oxs):
    g = integral.data[region.channel]
    y0 = oys + region.y
    y1 = y0 + region.h
    x0 = oxs + region.x
    x1 = x0 + region.w
    # identical corner expression to featpool.extract
    return g[np.ix_(y1, x1)] - g[np.ix_(y0, x1)] - g[np.ix_(y1, x0)] + g[np.ix_(y0, x0)]


def _forest_score_grid(model, integral, oys, oxs):
    feats, thrs, leaves, alphas, levels = _model_eval_arrays(model)
    regions = model.pool.regions
    grids = {}
    for t in range(len(alphas)):
        n_nodes = 1 if levels[t] == 1 else 3
        for i in range(n_nodes):
            f = int(feats[t, i])
            if f not in grids:
                grids[f] = _feature_grid(integral, regions[f], oys, oxs)
    scores = np.zeros((len(oys), len(oxs)))
    for t in range(len(alphas)):
        go_left = grids[int(feats[t, 0])] <= thrs[t, 0]
        if levels[t] == 1:
            lab = np.where(go_left, leaves[t, 0], leaves[t, 1])
        else:
            lv = np.where(grids[int(feats[t, 1])] <= thrs[t, 1], leaves[t, 0], leaves[t, 1])
            rv = np.where(grids[int(feats[t, 2])] <= thrs[t, 2], leaves[t, 2], leaves[t, 3])
            lab = np.where(go_left, lv, rv)
        scores += alphas[t] * lab
    return scores


def scan(model: BoostedForest, integral, scale, stride_px, image_id="image"):
    """Score every template placement on the stride lattice; emit detections
    with score above the model threshold, boxes in original-frame pixels."""
    shrink = model.shrink
    t_wc = model.template_w // shrink
    t_hc = model.template_h // shrink
    stride_c = max(1, stride_px // shrink)
    ny = integral.height - t_hc
    nx = integral.width - t_wc
    if ny < 0 or nx < 0:
        return []
    oys = np.arange(0, ny + 1, stride_c)
    oxs = np.arange(0, nx + 1, stride_c)
    scores = _forest_score_grid(model, integral, oys, oxs)
    iy, ix = np.nonzero(scores > model.score_threshold)
    out = []
    for yy, xx in zip(iy.tolist(), ix.tolist()):
        ox_px = int(oxs[xx]) * shrink
        oy_px = int(oys[yy]) * shrink
        out.append(
            Detection(
                image_id=image_id,
                box=BoundingBox(
                    ox_px / scale,
                    oy_px / scale,
                    model.template_w / scale,
                    model.template_h / scale,
                ),
                score=float(scores[yy, xx]),
            )
        )
    return out


def _ranked(detections):
    return sorted(
        detections,
        key=lambda d: (-d.score, d.image_id, d.box.y, d.box.x, d.box.w, d.box.h),
    )


def nms(detections, overlap_threshold):
    """Greedy suppression: rank by (score desc, image id, y, x), keep a
    detection iff its intersection-over-min-area overlap with every kept
    detection of the same image is <= threshold. The intrinsic tie key
    makes suppression idempotent and order-independent."""
    kept = []
    by_img = {}
    for d in _ranked(detections):
        ok = True
        for k in by_img.get(d.image_id, ()):
            if overlap_min(d.box, k.box) > overlap_threshold:
                ok = False
                break
        if ok:
            kept.append(d)
            by_img.setdefault(d.image_id, []).append(d)
    return kept


def detect(model: BoostedForest, frame, cfg: PyramidConfig, image_id="image"):
    """Full single-frame pipeline: pyramid, scan all levels, suppress."""
    if model.with_sdt:
        raise DetectError("temporal model requires detect_with_sdt")
    raw = []
    for scale, integral in build_pyramid(frame, model, cfg):
        raw.extend(scan(model, integral, scale, cfg.stride_px, image_id))
    return nms(raw, cfg.nms_overlap)


def detect_with_sdt(model: BoostedForest, triplet, cfg: PyramidConfig, image_id="image"):
    """Temporal pipeline: every pyramid level resamples all three frames and
    appends temporal-difference channels before scanning."""
    if not model.with_sdt:
        raise DetectError("model was not trained with temporal channels")
    if not isinstance(triplet, ch.FrameTriplet):
        raise DetectError("detect_with_sdt needs a FrameTriplet")
    raw = []
    for scale, integral in build_pyramid(triplet, model, cfg):
        raw.extend(scan(model, integral, scale, cfg.stride_px, image_id))
    return nms(raw, cfg.nms_overlap)


def fuse_context(detections, context_detections, weight, overlap_threshold=0.5):
    """Additively re-weight scores with overlapping context detections.

    score' = score + weight * max{context score : IoU >= threshold}, the max
    over an empty set being 0. Boxes are unchanged; output is stably
    re-sorted by the new score (descending), so with weight 0 or no context
    the scores are unchanged and any score-sorted input passes through
    unchanged.
    """
    by_img = {}
    for c in context_detections:
        by_img.setdefault(c.image_id, []).append(c)
    rescored = []
    for d in detections:
        overlapping = [
            c.score
            for c in by_img.get(d.image_id, ())
            if iou(d.box, c.box) >= overlap_threshold
        ]
        bonus = max(overlapping) if overlapping else 0.0
        rescored.append(Detection(d.image_id, d.box, d.score + weight * bonus))
    return sorted(rescored, key=lambda d: -d.score)
