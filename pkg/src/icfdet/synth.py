"""Seeded synthetic dataset generator for desk-scale detector experiments.

Scenes are rendered in linear RGB and encoded to sRGB at the end. Targets
are upright two-tone "head/torso/legs" figures whose torso/leg tints have
exactly zero luminance (they vanish in L and gradient channels computed
from matched grays). Distractors are layered so each feature family has
something only it can resolve:

  ped_blur    gray figure, luminance-matched, soft edges: invisible to
              coarse luminance pooling, visible to gradient channels;
  ped_gray    gray figure, luminance-matched, crisp: only color separates;
  ped_static  colored figure identical to a target but motionless: only
              temporal channels or context separate it (temporal sets);
  bar/blob    generic gradient- and color-bearing clutter.

Generation is a pure function of SynthConfig: every image draws from a
rng seeded by (seed, split, image index), so datasets are byte-identical
across runs and machines.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter

from . import dataio
from .boxes import Annotation, BoundingBox, Detection
from .channels import LUMA_WEIGHTS, linear_to_srgb
from .errors import IcfdetError

BG_LIN = 0.30  # background gray, linear RGB

# Nominal part layout as fractions of the target box (x0, x1, y0, y1);
# every figure draws a jittered copy (see _ped_layout).
HEAD_RECT = (0.31, 0.69, 0.02, 0.18)
TORSO_RECT = (0.11, 0.89, 0.18, 0.56)
LEG_RECTS = ((0.14, 0.40, 0.56, 0.98), (0.60, 0.86, 0.56, 0.98))
HEAD_LUMA = -0.85  # linear luminance offsets, scaled by body_contrast
TORSO_LUMA = -0.55
LEG_LUMA = -0.75


def _ped_layout(rng, cfg):
    """Per-figure part rectangles: widths, the torso/leg split and the leg
    gap all vary so figures are a population, not one template."""
    j = cfg.shape_jitter

    def scale(v):
        return v * (1.0 + rng.uniform(-j, j))

    head_w = min(scale(0.38), 0.9)
    torso_w = min(scale(0.78), 0.98)
    leg_w = min(scale(0.26), 0.38)
    split = 0.56 + rng.uniform(-j, j) * 0.2  # torso/leg boundary
    head_b = 0.18 + rng.uniform(-j, j) * 0.1
    leg_cx = (0.27 + rng.uniform(-j, j) * 0.15, 0.73 + rng.uniform(-j, j) * 0.15)
    head = (0.5 - head_w / 2, 0.5 + head_w / 2, 0.02, head_b)
    torso = (0.5 - torso_w / 2, 0.5 + torso_w / 2, head_b, split)
    legs = tuple(
        (max(0.0, cx - leg_w / 2), min(1.0, cx + leg_w / 2), split, 0.98)
        for cx in leg_cx
    )
    return {"head": head, "torso": torso, "legs": legs}


class SynthError(IcfdetError):
    pass


def _zero_luma_tint(r, g):
    """RGB direction with exactly zero luminance, normalized to max-abs 1."""
    w = LUMA_WEIGHTS
    b = -(w[0] * r + w[1] * g) / w[2]
    vec = np.array([r, g, b])
    return vec / np.abs(vec).max()


TINT_WARM = _zero_luma_tint(1.0, -0.18)
TINT_COOL = _zero_luma_tint(-0.35, -0.10)


@dataclass
class SynthConfig:
    seed: int = 7
    n_train_images: int = 200
    n_test_images: int = 100
    image_w: int = 416
    image_h: int = 320
    targets_min: int = 1
    targets_max: int = 3
    target_h_min: int = 112
    target_h_max: int = 176
    distractors_min: int = 3
    distractors_max: int = 6
    noise_amplitude: float = 0.05
    body_contrast: float = 0.35
    color_contrast: float = 0.10
    contrast_jitter: float = 0.5  # relative spread of per-figure contrasts
    shape_jitter: float = 0.15  # relative spread of per-figure part geometry
    temporal: bool = False
    camera_jitter: int = 2  # max |camera shift| per lag step, pixels
    target_speed_min: int = 1  # target displacement per lag step, pixels
    target_speed_max: int = 4
    static_decoys: bool = False  # colored, motionless target look-alikes
    context: bool = False  # also write synthetic context detections
    context_jitter: float = 0.06
    context_false_per_image: int = 1

    def __post_init__(self):
        if self.targets_min < 0 or self.targets_max < self.targets_min:
            raise SynthError("bad targets-per-image range")
        if not 0 < self.target_h_min <= self.target_h_max <= self.image_h:
            raise SynthError("target heights must fit the image")
        if self.target_h_max // 2 > self.image_w:
            raise SynthError("target widths must fit the image")


@dataclass
class _Shape:
    kind: str
    box: tuple  # (x, y, w, h) ints, frame-T world position
    velocity: tuple = (0, 0)  # (vy, vx) per lag step
    params: dict = field(default_factory=dict)


@dataclass
class SynthOutput:
    train_manifest: Path
    test_manifest: Path
    train_index: dataio.DatasetIndex
    test_index: dataio.DatasetIndex
    context_train: Path | None = None
    context_test: Path | None = None


def _boxes_clash(a, b, margin):
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    return not (
        ax + aw + margin <= bx
        or bx + bw + margin <= ax
        or ay + ah + margin <= by
        or by + bh + margin <= ay
    )


def _place(rng, cfg, w, h, occupied, margin, tries):
    for _ in range(tries):
        x = int(rng.integers(0, cfg.image_w - w + 1))
        y = int(rng.integers(0, cfg.image_h - h + 1))
        box = (x, y, w, h)
        if not any(_boxes_clash(box, o, margin) for o in occupied):
            return box
    return None


def _ped_colors(rng, cfg, chroma: bool):
    """Per-figure part colors; gray figures get the exact luminance of the
    colored ones (clipping accounted for), so L channels cannot tell them
    apart. Contrasts vary per figure so no single pooled feature separates
    the classes and boosting keeps a usable score range."""
    j = cfg.contrast_jitter
    bc = cfg.body_contrast * (1.0 + rng.uniform(-j, j))
    cc = cfg.color_contrast * (1.0 + rng.uniform(-j, j))
    parts = {}
    for name, luma, tint in (
        ("head", HEAD_LUMA, None),
        ("torso", TORSO_LUMA, TINT_WARM),
        ("legs", LEG_LUMA, TINT_COOL),
    ):
        color = np.full(3, BG_LIN + bc * luma)
        if tint is not None:
            color = color + cc * tint
        color = np.clip(color, 0.0, 1.0)
        if not chroma:
            y = float(LUMA_WEIGHTS @ color) / float(LUMA_WEIGHTS.sum())
            color = np.full(3, y)
        parts[name] = color
    return parts


def _draw_rect(canvas, x0, y0, x1, y1, color):
    h, w = canvas.shape[:2]
    x0, y0 = max(0, x0), max(0, y0)
    x1, y1 = min(w, x1), min(h, y1)
    if x1 > x0 and y1 > y0:
        canvas[y0:y1, x0:x1] = color


def _draw_pedestrian(canvas, box, parts, layout):
    x, y, w, h = box

    def rect(frac):
        fx0, fx1, fy0, fy1 = frac
        return (
            x + int(round(fx0 * w)),
            y + int(round(fy0 * h)),
            x + int(round(fx1 * w)),
            y + int(round(fy1 * h)),
        )

    x0, y0, x1, y1 = rect(layout["head"])
    _draw_rect(canvas, x0, y0, x1, y1, parts["head"])
    x0, y0, x1, y1 = rect(layout["torso"])
    _draw_rect(canvas, x0, y0, x1, y1, parts["torso"])
    for leg in layout["legs"]:
        x0, y0, x1, y1 = rect(leg)
        _draw_rect(canvas, x0, y0, x1, y1, parts["legs"])


def _draw_ellipse(canvas, box, color):
    x, y, w, h = box
    hh, ww = canvas.shape[:2]
    ys = np.arange(max(0, y), min(hh, y + h))
    xs = np.arange(max(0, x), min(ww, x + w))
    if len(ys) == 0 or len(xs) == 0:
        return
    cy, cx = y + h / 2.0, x + w / 2.0
    ry, rx = h / 2.0, w / 2.0
    mask = ((ys[:, None] + 0.5 - cy) / ry) ** 2 + ((xs[None, :] + 0.5 - cx) / rx) ** 2 <= 1.0
    region = canvas[ys[0] : ys[-1] + 1, xs[0] : xs[-1] + 1]
    region[mask] = color


def _blur_patch(canvas, box, margin=4, passes=2):
    x, y, w, h = box
    hh, ww = canvas.shape[:2]
    x0, y0 = max(0, x - margin), max(0, y - margin)
    x1, y1 = min(ww, x + w + margin), min(hh, y + h + margin)
    patch = canvas[y0:y1, x0:x1]
    for _ in range(passes):
        patch[:] = uniform_filter(patch, size=(3, 3, 1), mode="nearest")


def _build_scene(rng, cfg):
    """Shape list for one image; targets first so they always place."""
    shapes = []
    occupied = []
    n_targets = int(rng.integers(cfg.targets_min, cfg.targets_max + 1))
    for _ in range(n_targets):
        h = int(rng.integers(cfg.target_h_min, cfg.target_h_max + 1))
        w = h // 2
        box = _place(rng, cfg, w, h, occupied, margin=4, tries=300)
        if box is None:
            continue
        vel = (0, 0)
        if cfg.temporal:
            vx = int(rng.integers(cfg.target_speed_min, cfg.target_speed_max + 1))
            vx *= 1 if rng.random() < 0.5 else -1
            vy = int(rng.integers(-1, 2))
            vel = (vy, vx)
        shapes.append(
            _Shape(
                "target",
                box,
                vel,
                {"parts": _ped_colors(rng, cfg, True), "layout": _ped_layout(rng, cfg)},
            )
        )
        occupied.append(box)
    kinds = ["ped_blur", "ped_gray", "bar", "blob"]
    probs = [0.3, 0.3, 0.2, 0.2]
    if cfg.static_decoys:
        kinds = ["ped_static"] + kinds
        probs = [0.3, 0.2, 0.2, 0.15, 0.15]
    n_dis = int(rng.integers(cfg.distractors_min, cfg.distractors_max + 1))
    for _ in range(n_dis):
        kind = str(rng.choice(kinds, p=probs))
        if kind.startswith("ped"):
            h = int(rng.integers(cfg.target_h_min, cfg.target_h_max + 1))
            w = h // 2
            chroma = kind == "ped_static"
            params = {
                "parts": _ped_colors(rng, cfg, chroma),
                "layout": _ped_layout(rng, cfg),
            }
        elif kind == "bar":
            if rng.random() < 0.5:
                w, h = int(rng.integers(24, 72)), int(rng.integers(8, 24))
            else:
                w, h = int(rng.integers(8, 24)), int(rng.integers(24, 72))
            off = cfg.body_contrast * rng.uniform(0.5, 1.0) * (1 if rng.random() < 0.5 else -1)
            params = {"color": np.clip(np.full(3, BG_LIN + off), 0.0, 1.0)}
        else:  # blob
            w, h = int(rng.integers(30, 90)), int(rng.integers(20, 60))
            tint = TINT_WARM if rng.random() < 0.5 else TINT_COOL
            cc = cfg.color_contrast * rng.uniform(0.8, 1.4)
            base = BG_LIN + cfg.body_contrast * rng.uniform(-0.5, 0.3)
            params = {"color": np.clip(base + cc * tint, 0.0, 1.0)}
        box = _place(rng, cfg, w, h, occupied, margin=6, tries=60)
        if box is None:
            continue
        shapes.append(_Shape(kind, box, (0, 0), params))
        occupied.append(box)
    return shapes


def _render_frame(cfg, shapes, noise_field, steps_back, camera):
    """Linear-RGB render of the scene `steps_back` lag steps in the past,
    viewed from `camera` (world offset of the view origin)."""
    canvas = np.full((cfg.image_h, cfg.image_w, 3), BG_LIN)
    blur_boxes = []  # (box, passes): heavy for ped_blur, subtle for ped_static
    for s in shapes:
        x, y, w, h = s.box
        dy = -steps_back * s.velocity[0] - camera[0]
        dx = -steps_back * s.velocity[1] - camera[1]
        box = (x + dx, y + dy, w, h)
        if s.kind in ("target", "ped_static", "ped_gray", "ped_blur"):
            _draw_pedestrian(canvas, box, s.params["parts"], s.params["layout"])
            if s.kind == "ped_blur":
                blur_boxes.append((box, 2))
            elif s.kind == "ped_static":
                # static decoys carry a single mild blur pass: nearly
                # invisible to pooled sums, visible to band-pass features
                blur_boxes.append((box, 1))
        elif s.kind == "bar":
            _draw_rect(canvas, box[0], box[1], box[0] + w, box[1] + h, s.params["color"])
        else:
            _draw_ellipse(canvas, box, s.params["color"])
    for box, passes in blur_boxes:
        _blur_patch(canvas, box, passes=passes)
    m = (noise_field.shape[0] - cfg.image_h) // 2
    my = m + camera[0]
    mx = m + camera[1]
    canvas = canvas + noise_field[my : my + cfg.image_h, mx : mx + cfg.image_w]
    return np.clip(linear_to_srgb(np.clip(canvas, 0.0, 1.0)), 0.0, 1.0)


def _image_rng(cfg, split_no, idx, stream):
    return np.random.default_rng(np.random.SeedSequence([cfg.seed, split_no, idx, stream]))


def _generate_split(cfg, split, split_no, out_dir):
    entries = []
    margin = 2 * cfg.camera_jitter
    for idx in range(cfg.n_train_images if split == "train" else cfg.n_test_images):
        rng = _image_rng(cfg, split_no, idx, 0)
        shapes = _build_scene(rng, cfg)
        noise = rng.uniform(
            -cfg.noise_amplitude,
            cfg.noise_amplitude,
            size=(cfg.image_h + 2 * margin, cfg.image_w + 2 * margin, 3),
        )
        image_id = f"{split}_{idx:04d}"
        rel = f"images/{image_id}.png"
        frame = _render_frame(cfg, shapes, noise, 0, (0, 0))
        dataio.save_image(frame, out_dir / rel)
        lag_paths = None
        if cfg.temporal:
            j = cfg.camera_jitter
            cam1 = (int(rng.integers(-j, j + 1)), int(rng.integers(-j, j + 1)))
            cam2 = (
                cam1[0] + int(rng.integers(-j, j + 1)),
                cam1[1] + int(rng.integers(-j, j + 1)),
            )
            lag_paths = {}
            for lag, steps, cam in ((4, 1, cam1), (8, 2, cam2)):
                rel_lag = f"images/{image_id}_lag{lag}.png"
                dataio.save_image(_render_frame(cfg, shapes, noise, steps, cam), out_dir / rel_lag)
                lag_paths[lag] = rel_lag
        annotations = [
            Annotation(
                image_id=image_id,
                box=BoundingBox(float(s.box[0]), float(s.box[1]), float(s.box[2]), float(s.box[3])),
            )
            for s in shapes
            if s.kind == "target"
        ]
        entries.append(
            dataio.ImageEntry(
                image_id=image_id, path=rel, annotations=annotations, lag_paths=lag_paths
            )
        )
    return dataio.DatasetIndex(
        root=out_dir, split=split, temporal=cfg.temporal, entries=entries
    )


def _generate_context(cfg, index, split_no, path):
    """Noisy-oracle context detections: jittered copies of every target box
    plus a few false boxes per image, mimicking an auxiliary detector."""
    dets = []
    for idx, entry in enumerate(index.entries):
        rng = _image_rng(cfg, split_no, idx, 1)
        for ann in entry.annotations:
            b = ann.box
            s = 1.0 + rng.uniform(-cfg.context_jitter, cfg.context_jitter)
            dx = rng.uniform(-cfg.context_jitter, cfg.context_jitter) * b.h
            dy = rng.uniform(-cfg.context_jitter, cfg.context_jitter) * b.h
            w, h = b.w * s, b.h * s
            box = BoundingBox(b.x + dx - (w - b.w) / 2.0, b.y + dy - (h - b.h) / 2.0, w, h)
            dets.append(Detection(entry.image_id, box, 1.0 + float(rng.uniform(0.0, 1.0))))
        for _ in range(cfg.context_false_per_image):
            h = int(rng.integers(cfg.target_h_min, cfg.target_h_max + 1))
            w = h // 2
            x = int(rng.integers(0, max(1, cfg.image_w - w)))
            y = int(rng.integers(0, max(1, cfg.image_h - h)))
            dets.append(
                Detection(entry.image_id, BoundingBox(x, y, w, h), float(rng.uniform(0.0, 0.8)))
            )
    dataio.write_detections(dets, path)
    return path


def generate(cfg: SynthConfig, out_dir) -> SynthOutput:
    """Render both splits (plus context files when configured) under out_dir."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    train_index = _generate_split(cfg, "train", 0, out_dir)
    test_index = _generate_split(cfg, "test", 1, out_dir)
    train_manifest = out_dir / "train.json"
    test_manifest = out_dir / "test.json"
    dataio.save_dataset(train_index, train_manifest)
    dataio.save_dataset(test_index, test_manifest)
    ctx_train = ctx_test = None
    if cfg.context:
        ctx_train = _generate_context(cfg, train_index, 0, out_dir / "context_train.txt")
        ctx_test = _generate_context(cfg, test_index, 1, out_dir / "context_test.txt")
    return SynthOutput(
        train_manifest=train_manifest,
        test_manifest=test_manifest,
        train_index=train_index,
        test_index=test_index,
        context_train=ctx_train,
        context_test=ctx_test,
    )


def reference_config() -> SynthConfig:
    """The fixed single-frame dataset used by the acceptance experiments."""
    return SynthConfig(
        seed=7, n_train_images=200, n_test_images=100, image_w=384, image_h=288
    )


def reference_temporal_config() -> SynthConfig:
    """The fixed temporal dataset (with context files) for the extension
    complementarity experiments."""
    return SynthConfig(
        seed=11,
        n_train_images=120,
        n_test_images=60,
        image_w=384,
        image_h=288,
        temporal=True,
        static_decoys=True,
        context=True,
    )
