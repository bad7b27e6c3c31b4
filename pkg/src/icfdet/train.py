"""Dataset-level training: window assembly, hard-negative mining, and the
bootstrap retraining loop.

Negative windows come from the training images themselves: a window is
admissible as a negative iff its IoU with every annotation stays below
NEGATIVE_IOU_CAP (matching the evaluation threshold, so everything that
would count as a false positive is minable). Images without annotations
contribute negatives everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dataio
from .boost import BoostedForest, TrainConfig, train_forest
from .boxes import BoundingBox, inflate_to_aspect, iou
from .channels import FrameTriplet
from .detect import PyramidConfig, crop_window, detect, detect_with_sdt
from .errors import IcfdetError

NEGATIVE_IOU_CAP = 0.5


class TrainError(IcfdetError):
    pass


@dataclass
class BootstrapStats:
    round_index: int
    n_pos: int
    n_neg: int
    n_mined: int
    rounds: list  # per-boosting-round RoundStats


def _template_aspect(cfg: TrainConfig) -> float:
    return cfg.template_w / cfg.template_h


def _crop(frame_or_triplet, box, tw, th):
    if isinstance(frame_or_triplet, FrameTriplet):
        return FrameTriplet(
            crop_window(frame_or_triplet.frame_t, box, tw, th),
            crop_window(frame_or_triplet.frame_t4, box, tw, th),
            crop_window(frame_or_triplet.frame_t8, box, tw, th),
        )
    return crop_window(frame_or_triplet, box, tw, th)


def _load_entry(index, entry, temporal):
    if temporal:
        return dataio.load_triplet(index, entry)
    return dataio.load_image(index.path_for(entry))


def collect_positive_windows(index, cfg: TrainConfig):
    """Template-sized crops of every annotation, inflated to the template
    aspect ratio about the box center."""
    windows = []
    for entry in index.entries:
        if not entry.annotations:
            continue
        img = _load_entry(index, entry, cfg.with_sdt)
        for ann in entry.annotations:
            box = inflate_to_aspect(ann.box, _template_aspect(cfg))
            windows.append(_crop(img, box, cfg.template_w, cfg.template_h))
    return windows


def _admissible(box, annotations):
    return all(iou(box, a.box) < NEGATIVE_IOU_CAP for a in annotations)


def sample_negative_windows(index, cfg: TrainConfig, pyramid_cfg: PyramidConfig, n, rng):
    """Uniformly random admissible windows: image, height (within the
    pyramid's detection range) and position are all drawn from `rng`.

    Proposal geometry is drawn first (pure rng + annotation geometry), then
    images are decoded one at a time, so the result is deterministic and
    memory stays flat.
    """
    if n <= 0 or not index.entries:
        return []
    aspect = _template_aspect(cfg)
    h_hi = min(pyramid_cfg.max_height, index_min_dim(index, cfg))
    h_lo = min(pyramid_cfg.min_height, h_hi)
    proposals = []  # (entry_idx, BoundingBox)
    attempts = 0
    while len(proposals) < n and attempts < 200 * n:
        attempts += 1
        e = int(rng.integers(0, len(index.entries)))
        entry = index.entries[e]
        img_h, img_w = _entry_size(index, entry)
        h = float(rng.uniform(h_lo, h_hi))
        w = h * aspect
        if w > img_w or h > img_h:
            continue
        x = float(rng.uniform(0.0, img_w - w))
        y = float(rng.uniform(0.0, img_h - h))
        box = BoundingBox(x, y, w, h)
        if _admissible(box, entry.annotations):
            proposals.append((e, box))
    windows = [None] * len(proposals)
    by_entry = {}
    for i, (e, box) in enumerate(proposals):
        by_entry.setdefault(e, []).append((i, box))
    for e in sorted(by_entry):
        img = _load_entry(index, index.entries[e], cfg.with_sdt)
        for i, box in by_entry[e]:
            windows[i] = _crop(img, box, cfg.template_w, cfg.template_h)
    return windows


_SIZE_CACHE: dict = {}


def _entry_size(index, entry):
    key = str(index.path_for(entry))
    if key not in _SIZE_CACHE:
        frame = dataio.load_image(index.path_for(entry))
        _SIZE_CACHE[key] = frame.shape[:2]
    return _SIZE_CACHE[key]


def index_min_dim(index, cfg: TrainConfig) -> float:
    """Largest window height that fits every image of the index."""
    aspect = _template_aspect(cfg)
    best = None
    for entry in index.entries:
        h, w = _entry_size(index, entry)
        fit = min(float(h), float(w) / aspect)
        best = fit if best is None else min(best, fit)
    return best if best is not None else float(cfg.template_h)


def mine_hard_negatives(model: BoostedForest, index, pyramid_cfg: PyramidConfig, max_new):
    """Run the detector over the index and return the top-scoring false
    detections (IoU < NEGATIVE_IOU_CAP against every annotation) as
    template-sized crops, globally sorted by (score desc, image order,
    y, x). May return fewer than max_new."""
    if max_new <= 0:
        return []
    candidates = []  # (sort key, entry idx, box)
    entries = list(index.entries)
    for order, entry in enumerate(entries):
        img = _load_entry(index, entry, model.with_sdt)
        if model.with_sdt:
            dets = detect_with_sdt(model, img, pyramid_cfg, entry.image_id)
        else:
            dets = detect(model, img, pyramid_cfg, entry.image_id)
        for d in dets:
            if _admissible(d.box, entry.annotations):
                candidates.append(((-d.score, order, d.box.y, d.box.x), order, d.box))
    candidates.sort(key=lambda c: c[0])
    picked = candidates[:max_new]
    windows = [None] * len(picked)
    by_entry = {}
    for i, (_, e, box) in enumerate(picked):
        by_entry.setdefault(e, []).append((i, box))
    aspect = model.template_w / model.template_h
    for e in sorted(by_entry):
        img = _load_entry(index, entries[e], model.with_sdt)
        for i, box in by_entry[e]:
            windows[i] = _crop(
                img, inflate_to_aspect(box, aspect), model.template_w, model.template_h
            )
    return windows


def bootstrap_train(index, cfg: TrainConfig, pyramid_cfg: PyramidConfig):
    """Train, then repeat `cfg.bootstrap_rounds` times: mine hard negatives
    with the current model, append them, and retrain from scratch with the
    same seed. Returns (model, [BootstrapStats])."""
    positives = collect_positive_windows(index, cfg)
    if not positives:
        raise TrainError("training dataset has no annotations")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xB00]))
    n_initial = max(1, int(round(cfg.initial_negatives_per_positive * len(positives))))
    negatives = sample_negative_windows(index, cfg, pyramid_cfg, n_initial, rng)
    if not negatives:
        raise TrainError("could not sample any negative windows")
    model, rounds = train_forest(positives, negatives, cfg)
    history = [
        BootstrapStats(0, len(positives), len(negatives), 0, rounds)
    ]
    for b in range(1, cfg.bootstrap_rounds + 1):
        mine_index = index
        if cfg.mining_image_cap > 0 and cfg.mining_image_cap < len(index.entries):
            mine_index = dataio.DatasetIndex(
                root=index.root,
                split=index.split,
                temporal=index.temporal,
                entries=index.entries[: cfg.mining_image_cap],
            )
        mined = mine_hard_negatives(model, mine_index, pyramid_cfg, cfg.negatives_per_round)
        if mined:
            negatives = negatives + mined
            model, rounds = train_forest(positives, negatives, cfg)
        history.append(BootstrapStats(b, len(positives), len(negatives), len(mined), rounds))
    return model, history
