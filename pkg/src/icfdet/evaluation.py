"""Benchmark protocol: ground-truth filtering, greedy matching,
miss-rate-vs-FPPI curves, log-average miss rate, and PR area-under-curve.

Matching follows the per-image convention: detections are processed in
descending score order; each takes the highest-IoU unmatched non-ignore
annotation at or above the IoU threshold. A detection that only reaches an
ignore annotation is discarded (neither true nor false positive); ignore
regions may absorb any number of detections.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, replace

from .boxes import Detection, iou
from .errors import IcfdetError

MR_REF_FPPI = tuple(10.0 ** (-2.0 + k / 4.0) for k in range(9))
MR_CLAMP = 1e-5
DEFAULT_MIN_HEIGHT = 50.0


class EvalError(IcfdetError):
    pass


@dataclass
class MatchResult:
    matches: list  # (Detection, Annotation) pairs, one-to-one
    false_positives: list  # Detections matching nothing
    misses: list  # unmatched non-ignore Annotations
    ignored: list  # Detections absorbed by ignore regions


@dataclass
class EvalCurve:
    """Stepwise (FPPI, miss rate) samples; fppi strictly increasing and
    miss_rate non-increasing along the sweep."""

    fppi: tuple
    miss_rate: tuple
    n_images: int
    n_positives: int

    def __post_init__(self):
        if len(self.fppi) != len(self.miss_rate) or not self.fppi:
            raise EvalError("curve needs matching, non-empty sample arrays")
        for a, b in zip(self.fppi, self.fppi[1:]):
            if not b > a:
                raise EvalError("curve fppi must be strictly increasing")
        for a, b in zip(self.miss_rate, self.miss_rate[1:]):
            if b > a:
                raise EvalError("curve miss rate must be non-increasing")


def filter_reasonable(annotations, min_height: float = DEFAULT_MIN_HEIGHT):
    """Flag annotations shorter than `min_height` pixels as ignore regions."""
    return [
        replace(a, ignore=True) if a.box.h < min_height else a for a in annotations
    ]


def _det_rank_key(d: Detection):
    return (-d.score, d.box.y, d.box.x, d.box.w, d.box.h)


def match_image(detections, annotations, iou_threshold: float = 0.5) -> MatchResult:
    """Greedy one-to-one matching for a single image."""
    ids = {d.image_id for d in detections} | {a.image_id for a in annotations}
    if len(ids) > 1:
        raise EvalError(f"match_image got mixed image ids: {sorted(ids)}")
    real = [a for a in annotations if not a.ignore]
    ignore = [a for a in annotations if a.ignore]
    taken = [False] * len(real)
    matches, fps, ignored = [], [], []
    for d in sorted(detections, key=_det_rank_key):
        best_i, best_iou = -1, 0.0
        for i, a in enumerate(real):
            if taken[i]:
                continue
            v = iou(d.box, a.box)
            if v >= iou_threshold and v > best_iou:
                best_i, best_iou = i, v
        if best_i >= 0:
            taken[best_i] = True
            matches.append((d, real[best_i]))
            continue
        if any(iou(d.box, a.box) >= iou_threshold for a in ignore):
            ignored.append(d)
        else:
            fps.append(d)
    misses = [a for i, a in enumerate(real) if not taken[i]]
    return MatchResult(matches=matches, false_positives=fps, misses=misses, ignored=ignored)


def _group_by_image(items):
    groups = {}
    for it in items:
        groups.setdefault(it.image_id, []).append(it)
    return groups


def _matched_and_fp_scores(detections, annotations, iou_threshold):
    """Per-annotation matched detection scores and all false-positive scores.

    Greedy matching is prefix-consistent in score order, so matching once
    with every detection yields the outcome of any score-threshold subset.
    """
    det_groups = _group_by_image(detections)
    ann_groups = _group_by_image(annotations)
    matched_scores = []
    fp_scores = []
    n_pos = 0
    for img in sorted(set(det_groups) | set(ann_groups)):
        res = match_image(det_groups.get(img, []), ann_groups.get(img, []), iou_threshold)
        n_pos += len(res.matches) + len(res.misses)
        matched_scores.extend(d.score for d, _ in res.matches)
        fp_scores.extend(d.score for d in res.false_positives)
    return matched_scores, fp_scores, n_pos


def sweep_curve(detections, annotations, iou_threshold: float = 0.5, image_ids=None) -> EvalCurve:
    """Threshold sweep over all distinct detection scores (descending).

    `image_ids` is the evaluation roster used as the FPPI denominator;
    defaults to the ids present in the inputs. Points sharing an FPPI value
    collapse to the lowest miss rate reached there.
    """
    if image_ids is None:
        image_ids = sorted(
            {d.image_id for d in detections} | {a.image_id for a in annotations}
        )
    n_images = len(set(image_ids))
    if n_images == 0:
        raise EvalError("sweep needs at least one image")
    matched, fps, n_pos = _matched_and_fp_scores(detections, annotations, iou_threshold)
    if n_pos == 0:
        raise EvalError("sweep needs at least one non-ignore annotation")
    thresholds = sorted({d.score for d in detections}, reverse=True)
    if not thresholds:
        return EvalCurve((0.0,), (1.0,), n_images, n_pos)
    matched_sorted = sorted(matched)
    fp_sorted = sorted(fps)
    by_fppi = {}
    for th in thresholds:
        n_tp = len(matched_sorted) - bisect_left(matched_sorted, th)
        n_fp = len(fp_sorted) - bisect_left(fp_sorted, th)
        fppi = n_fp / n_images
        miss = (n_pos - n_tp) / n_pos
        prev = by_fppi.get(fppi)
        if prev is None or miss < prev:
            by_fppi[fppi] = miss
    pts = sorted(by_fppi.items())
    return EvalCurve(
        tuple(p[0] for p in pts), tuple(p[1] for p in pts), n_images, n_pos
    )


def log_avg_miss_rate(curve: EvalCurve) -> float:
    """Geometric mean of miss rates sampled at 9 log-spaced FPPI references.

    At each reference, use the miss rate of the largest curve FPPI <= it,
    or the curve's first (highest) miss rate when the curve starts above
    it. Samples are clamped below at 1e-5 so the log is defined.
    """
    samples = []
    for ref in MR_REF_FPPI:
        idx = bisect_right(curve.fppi, ref) - 1
        miss = curve.miss_rate[idx] if idx >= 0 else curve.miss_rate[0]
        samples.append(max(miss, MR_CLAMP))
    mean = math.exp(math.fsum(math.log(s) for s in samples) / len(samples))
    # the exp/log round trip can escape [clamp, 1] by an ulp
    return min(max(mean, MR_CLAMP), 1.0)


def pr_auc(detections, annotations, iou_threshold: float = 0.5) -> float:
    """Area under the precision-recall curve, trapezoidal over recall with
    the (recall 0, precision 1) anchor."""
    matched, fps, n_pos = _matched_and_fp_scores(detections, annotations, iou_threshold)
    if n_pos == 0:
        raise EvalError("pr_auc needs at least one non-ignore annotation")
    matched_sorted = sorted(matched)
    fp_sorted = sorted(fps)
    thresholds = sorted(set(matched) | set(fps), reverse=True)
    recalls = [0.0]
    precisions = [1.0]
    for th in thresholds:
        n_tp = len(matched_sorted) - bisect_left(matched_sorted, th)
        n_fp = len(fp_sorted) - bisect_left(fp_sorted, th)
        recalls.append(n_tp / n_pos)
        precisions.append(n_tp / (n_tp + n_fp) if n_tp + n_fp else 1.0)
    auc = 0.0
    for i in range(1, len(recalls)):
        auc += (recalls[i] - recalls[i - 1]) * (precisions[i] + precisions[i - 1]) / 2.0
    return auc


def eval_on_train(model, index, pyramid_cfg, iou_threshold=0.5, min_height=DEFAULT_MIN_HEIGHT):
    """Log-average miss rate of a model over its own training images.

    Same pipeline as any other evaluation (detect, sweep, log-average);
    callers are expected to label the result as train-set performance.
    """
    from . import dataio
    from .detect import detect, detect_with_sdt

    detections = []
    annotations = []
    for entry in index.entries:
        annotations.extend(filter_reasonable(entry.annotations, min_height))
        if model.with_sdt:
            triplet = dataio.load_triplet(index, entry)
            detections.extend(detect_with_sdt(model, triplet, pyramid_cfg, entry.image_id))
        else:
            frame = dataio.load_image(index.path_for(entry))
            detections.extend(detect(model, frame, pyramid_cfg, entry.image_id))
    curve = sweep_curve(
        detections, annotations, iou_threshold, image_ids=[e.image_id for e in index.entries]
    )
    return log_avg_miss_rate(curve)
