"""Boosted decision forest: exhaustive stump search, level-1/2 trees,
discrete AdaBoost, forest scoring, and the sample-by-feature matrix build.

Training is a deterministic function of (windows, config): the weak-learner
search breaks ties by (lower feature index, then lower threshold), sorting
uses stable order, and all reductions run in fixed sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import channels as ch
from . import featpool as fp
from ._kernels import stump_search_all, stump_search_sides
from .errors import IcfdetError

ERR_CLAMP = 1e-10  # weighted error clamped to [ERR_CLAMP, 0.5 - ERR_CLAMP]


class BoostError(IcfdetError):
    pass


@dataclass(frozen=True)
class TreeNode:
    """One threshold comparison: value <= threshold goes left, else right."""

    feature: int
    threshold: float


@dataclass(frozen=True)
class Stump:
    """Result of a single-feature threshold search.

    threshold is -inf when the no-split majority vote is strictly better
    than every midpoint split (or no midpoint exists, e.g. all values
    equal); both leaves then carry the majority label.
    """

    threshold: float
    left_label: int
    right_label: int
    error: float


@dataclass(frozen=True)
class WeakTree:
    """Level-1 (1 node, 2 leaves) or level-2 (3 nodes, 4 leaves) tree.

    Level-2 node order is (root, left child, right child); leaves are
    (left-left, left-right, right-left, right-right), each in {-1, +1}.
    """

    level: int
    nodes: tuple[TreeNode, ...]
    leaves: tuple[int, ...]

    def __post_init__(self):
        if self.level == 1:
            if len(self.nodes) != 1 or len(self.leaves) != 2:
                raise BoostError("level-1 tree needs 1 node and 2 leaves")
        elif self.level == 2:
            if len(self.nodes) != 3 or len(self.leaves) != 4:
                raise BoostError("level-2 tree needs 3 nodes and 4 leaves")
        else:
            raise BoostError(f"unsupported tree level {self.level}")
        if any(l not in (-1, 1) for l in self.leaves):
            raise BoostError("leaf labels must be -1 or +1")
        if any(not math.isfinite(n.threshold) for n in self.nodes):
            raise BoostError("node thresholds must be finite")

    def predict(self, getter) -> int:
        """Evaluate on a feature accessor; touches at most `level`+1 features."""
        root = self.nodes[0]
        if self.level == 1:
            return self.leaves[0] if getter(root.feature) <= root.threshold else self.leaves[1]
        if getter(root.feature) <= root.threshold:
            node = self.nodes[1]
            return self.leaves[0] if getter(node.feature) <= node.threshold else self.leaves[1]
        node = self.nodes[2]
        return self.leaves[2] if getter(node.feature) <= node.threshold else self.leaves[3]

    def predict_matrix(self, xt: np.ndarray) -> np.ndarray:
        """Vectorized prediction over a (features, samples) matrix."""
        root = self.nodes[0]
        left = xt[root.feature] <= root.threshold
        if self.level == 1:
            return np.where(left, self.leaves[0], self.leaves[1]).astype(np.int8)
        ln, rn = self.nodes[1], self.nodes[2]
        lv = np.where(xt[ln.feature] <= ln.threshold, self.leaves[0], self.leaves[1])
        rv = np.where(xt[rn.feature] <= rn.threshold, self.leaves[2], self.leaves[3])
        return np.where(left, lv, rv).astype(np.int8)

    def feature_ids(self) -> tuple[int, ...]:
        return tuple(n.feature for n in self.nodes)


@dataclass
class BoostedForest:
    """Weighted tree ensemble plus everything needed to rebuild its inputs."""

    channel_mode: str
    with_sdt: bool
    shrink: int
    template_w: int  # pixels
    template_h: int
    score_threshold: float
    pool: fp.FeaturePool
    trees: tuple[tuple[float, WeakTree], ...]

    def __post_init__(self):
        n = len(self.pool)
        for alpha, tree in self.trees:
            if alpha < 0 or not math.isfinite(alpha):
                raise BoostError(f"tree weight must be finite and >= 0, got {alpha}")
            if any(f >= n or f < 0 for f in tree.feature_ids()):
                raise BoostError("tree references a feature outside the pool")
        if self.pool.shrink != self.shrink:
            raise BoostError("pool shrink disagrees with model shrink")
        if (
            self.pool.template_w * self.shrink != self.template_w
            or self.pool.template_h * self.shrink != self.template_h
        ):
            raise BoostError("pool template size disagrees with model template")

    @property
    def n_channels(self) -> int:
        return ch.MODE_CHANNELS[self.channel_mode] + (ch.SDT_CHANNELS if self.with_sdt else 0)


@dataclass
class TrainConfig:
    n_trees: int = 2048
    tree_level: int = 2
    channel_mode: str = "hogluv"
    with_sdt: bool = False
    pool_mode: str = fp.ALL_SQUARES
    pool_stride_px: int = fp.DEFAULT_STRIDE_PX
    template_w: int = 64
    template_h: int = 128
    shrink: int = 2
    bootstrap_rounds: int = 2
    initial_negatives_per_positive: float = 2.0
    negatives_per_round: int = 5000
    mining_image_cap: int = 0  # 0 = mine over every image
    score_threshold: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1 or self.tree_level not in (1, 2):
            raise BoostError("n_trees must be >= 1 and tree_level in {1, 2}")
        if self.channel_mode not in ch.MODE_CHANNELS:
            raise BoostError(f"unknown channel mode {self.channel_mode!r}")
        if self.bootstrap_rounds < 0 or self.negatives_per_round < 1:
            raise BoostError("bootstrap parameters out of range")

    @property
    def n_channels(self) -> int:
        return ch.MODE_CHANNELS[self.channel_mode] + (ch.SDT_CHANNELS if self.with_sdt else 0)


@dataclass
class RoundStats:
    index: int
    error: float
    alpha: float
    clamped: bool
    train_error: float
    exp_loss: float
    post_update_error: float


def pool_for_config(cfg: TrainConfig) -> fp.FeaturePool:
    """Pool segments implied by the channel mode: the configured pool mode on
    the base channels; DCT and temporal channels always pool on the 8x8 grid."""
    segs = []
    if cfg.channel_mode == "hogluvdct":
        segs.append(
            fp.PoolSegment(cfg.pool_mode, 0, 10, stride_px=cfg.pool_stride_px)
        )
        segs.append(fp.PoolSegment(fp.FIXED_GRID8, 10, 40))
    else:
        k = ch.MODE_CHANNELS[cfg.channel_mode]
        segs.append(fp.PoolSegment(cfg.pool_mode, 0, k, stride_px=cfg.pool_stride_px))
    if cfg.with_sdt:
        k = ch.MODE_CHANNELS[cfg.channel_mode]
        segs.append(fp.PoolSegment(fp.FIXED_GRID8, k, k + ch.SDT_CHANNELS))
    return fp.build_pool(cfg.template_w, cfg.template_h, cfg.shrink, segs)


def _as_arrays(labels, weights, n):
    y = np.asarray(labels)
    w = np.asarray(weights, dtype=np.float64)
    if y.shape != (n,) or w.shape != (n,):
        raise BoostError("labels/weights must match the sample count")
    if not np.all(np.isin(y, (-1, 1))):
        raise BoostError("labels must be -1 or +1")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise BoostError("weights must be finite and >= 0")
    if w.sum() <= 0:
        raise BoostError("weights must have positive total mass")
    return y.astype(np.int8), w


def sort_order(xt: np.ndarray) -> np.ndarray:
    """Stable per-feature argsort, computed once per training matrix."""
    return np.argsort(xt, axis=1, kind="stable").astype(np.int32)


def best_stump(values, labels, weights) -> Stump:
    """Best decision stump on one feature.

    Thresholds are searched at midpoints of consecutive distinct sorted
    values (ties keep the lowest threshold), with a -inf no-split sentinel
    used only when strictly better than every midpoint split; leaf labels
    are the weighted majority per side. The weighted error is always
    <= half the total weight.
    """
    values = np.ascontiguousarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size == 0:
        raise BoostError("best_stump needs a non-empty 1-D value array")
    y, w = _as_arrays(labels, weights, values.size)
    xt = values[None, :]
    order = sort_order(xt)
    err, thr, ll, rl = stump_search_all(xt, order, w * y, w)
    return Stump(
        threshold=float(thr[0]),
        left_label=int(ll[0]),
        right_label=int(rl[0]),
        error=float(err[0]),
    )


def _pick_feature(err: np.ndarray) -> int:
    # np.argmin returns the first minimum: the lowest feature index.
    return int(np.argmin(err))


def _node_from(feature, threshold, fallback_feature=0):
    # -inf sentinel stumps have equal leaves, so any finite threshold works.
    if math.isinf(threshold):
        return TreeNode(int(fallback_feature), 0.0)
    return TreeNode(int(feature), float(threshold))


def train_weak_tree(xt, labels, weights, level, order=None) -> WeakTree:
    """Greedy tree over all features of a (features, samples) matrix.

    Level 1 is the best stump over every feature; level 2 re-searches every
    feature inside each root partition. An empty partition becomes a leaf
    pair carrying the root's label for that side.
    """
    xt = np.ascontiguousarray(xt)
    if xt.ndim != 2 or xt.shape[0] == 0 or xt.shape[1] == 0:
        raise BoostError("train_weak_tree needs a non-empty 2-D matrix")
    y, w = _as_arrays(labels, weights, xt.shape[1])
    if order is None:
        order = sort_order(xt)
    ws, wa = w * y, w
    err, thr, ll, rl = stump_search_all(xt, order, ws, wa)
    f_root = _pick_feature(err)
    root_stump = Stump(float(thr[f_root]), int(ll[f_root]), int(rl[f_root]), float(err[f_root]))
    if level == 1:
        node = _node_from(f_root, root_stump.threshold, fallback_feature=f_root)
        return WeakTree(1, (node,), (root_stump.left_label, root_stump.right_label))

    side = (xt[f_root] > root_stump.threshold).astype(np.int8)
    nodes = [_node_from(f_root, root_stump.threshold, fallback_feature=f_root)]
    leaves = []
    if side.min() == side.max():
        # Degenerate partition (sentinel root): the occupied side re-searches
        # over the full set, which reproduces the root stump; the empty side
        # becomes a constant leaf pair carrying the root's label for it.
        occupied = int(side[0])
        child_node = _node_from(f_root, root_stump.threshold, fallback_feature=f_root)
        child_leaves = (root_stump.left_label, root_stump.right_label)
        empty_label = root_stump.right_label if occupied == 0 else root_stump.left_label
        empty_node = TreeNode(int(f_root), 0.0)
        empty_leaves = (empty_label, empty_label)
        if occupied == 0:
            nodes.extend([child_node, empty_node])
            leaves = list(child_leaves) + list(empty_leaves)
        else:
            nodes.extend([empty_node, child_node])
            leaves = list(empty_leaves) + list(child_leaves)
        return WeakTree(2, tuple(nodes), tuple(leaves))

    err2, thr2, ll2, rl2 = stump_search_sides(xt, order, ws, wa, side)
    for c in range(2):
        f_c = _pick_feature(err2[:, c])
        nodes.append(_node_from(f_c, float(thr2[f_c, c]), fallback_feature=f_c))
        leaves.extend([int(ll2[f_c, c]), int(rl2[f_c, c])])
    return WeakTree(2, tuple(nodes), tuple(leaves))


def alpha_from_error(error: float) -> tuple[float, bool]:
    """Discrete-AdaBoost tree weight with its clamp flag."""
    clamped = not (ERR_CLAMP <= error <= 0.5 - ERR_CLAMP)
    e = min(max(error, ERR_CLAMP), 0.5 - ERR_CLAMP)
    return 0.5 * math.log((1.0 - e) / e), clamped


def adaboost_round(xt, labels, weights, level, order=None):
    """One boosting round: train a tree, weight it, reweight the samples.

    Returns (tree, alpha, new_weights, error, clamped). Weights in must sum
    to 1; weights out do too.
    """
    y, w = _as_arrays(labels, np.asarray(weights, dtype=np.float64), xt.shape[1])
    tree = train_weak_tree(xt, y, w, level, order=order)
    h = tree.predict_matrix(xt)
    error = float(w[h != y].sum())
    alpha, clamped = alpha_from_error(error)
    new_w = w * np.exp(-alpha * (y * h).astype(np.float64))
    new_w /= new_w.sum()
    return tree, alpha, new_w, error, clamped


def window_feature_vector(window, cfg: TrainConfig, pool: fp.FeaturePool) -> np.ndarray:
    """Channel pipeline + pooled sums for one template-sized window."""
    frame = window.frame_t if isinstance(window, ch.FrameTriplet) else window
    if frame.shape[:2] != (cfg.template_h, cfg.template_w):
        raise BoostError(
            f"window is {frame.shape[1]}x{frame.shape[0]}, template needs "
            f"{cfg.template_w}x{cfg.template_h}"
        )
    integral = ch.compute_integral(window, cfg.channel_mode, cfg.with_sdt, cfg.shrink)
    return fp.extract_all(integral, pool, (0, 0))


def feature_matrix(windows, cfg: TrainConfig, pool: fp.FeaturePool) -> np.ndarray:
    """(features, samples) float32 matrix, C-contiguous for the search kernels."""
    n = len(windows)
    x = np.empty((n, len(pool)), dtype=np.float32)
    for i, win in enumerate(windows):
        x[i] = window_feature_vector(win, cfg, pool)
    return np.ascontiguousarray(x.T)


def train_forest(pos_windows, neg_windows, cfg: TrainConfig):
    """Boost cfg.n_trees trees on pre-cropped windows.

    Returns (forest, [RoundStats]). The sample-by-feature matrix is built
    once (positives first, then negatives, in input order). Per round the
    unnormalized exponential loss is non-increasing; on rounds where the
    error needed no clamping, the freshly trained tree's weighted error on
    the updated weights is 0.5 up to float error.
    """
    if len(pos_windows) == 0 or len(neg_windows) == 0:
        raise BoostError("training needs at least one window of each class")
    pool = pool_for_config(cfg)
    windows = list(pos_windows) + list(neg_windows)
    xt = feature_matrix(windows, cfg, pool)
    y = np.concatenate(
        [np.ones(len(pos_windows), dtype=np.int8), -np.ones(len(neg_windows), dtype=np.int8)]
    )
    order = sort_order(xt)
    n = xt.shape[1]
    w = np.full(n, 1.0 / n)
    margins = np.zeros(n)
    trees = []
    stats = []
    for t in range(cfg.n_trees):
        tree, alpha, w, error, clamped = adaboost_round(xt, y, w, cfg.tree_level, order=order)
        h = tree.predict_matrix(xt)
        margins += alpha * (y * h).astype(np.float64)
        trees.append((alpha, tree))
        stats.append(
            RoundStats(
                index=t,
                error=error,
                alpha=alpha,
                clamped=clamped,
                train_error=float(np.mean(margins <= 0.0)),
                exp_loss=float(np.exp(-margins).sum()),
                post_update_error=float(w[h != y].sum()),
            )
        )
    forest = BoostedForest(
        channel_mode=cfg.channel_mode,
        with_sdt=cfg.with_sdt,
        shrink=cfg.shrink,
        template_w=cfg.template_w,
        template_h=cfg.template_h,
        score_threshold=cfg.score_threshold,
        pool=pool,
        trees=tuple(trees),
    )
    return forest, stats


def score(model: BoostedForest, getter) -> float:
    """Forest score via a feature accessor; lazy, <= 3 lookups per tree."""
    return float(sum(alpha * tree.predict(getter) for alpha, tree in model.trees))


def score_vector(model: BoostedForest, vector: np.ndarray) -> float:
    return score(model, lambda f: vector[f])


def score_window(model: BoostedForest, integral, origin=(0, 0)) -> float:
    """Score one window of an integral stack, extracting only needed features."""
    cache: dict[int, float] = {}
    regions = model.pool.regions

    def getter(f):
        if f not in cache:
            cache[f] = fp.extract(integral, regions[f], origin)
        return cache[f]

    return score(model, getter)
