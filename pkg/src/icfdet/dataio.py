"""Dataset manifests, raster image IO, and model/detections persistence.

Formats (all locale-independent, documented field-by-field in the README):
  - dataset manifest: JSON with per-image records (id, path, optional lag
    frame paths, annotation boxes);
  - images: PNG or binary PPM, 8-bit, components mapped to [0,1] by v/255;
  - model file: JSON wrapper {format, version, sha256, model} with full
    decimal float precision (exact round trip);
  - detections file: one `image_id x y w h score` record per line.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from . import featpool as fp
from .boost import BoostedForest, TreeNode, WeakTree
from .boxes import Annotation, BoundingBox, Detection
from .channels import FrameTriplet
from .errors import IcfdetError

MANIFEST_VERSION = 1
MODEL_FORMAT = "icfdet-model"
MODEL_VERSION = 1
DETECTIONS_HEADER = "# icfdet-detections 1"
SUPPORTED_IMAGE_SUFFIXES = (".png", ".ppm")


class DataError(IcfdetError):
    pass


class ModelFormatError(DataError):
    pass


@dataclass
class ImageEntry:
    image_id: str
    path: str  # relative to the manifest directory
    annotations: list
    lag_paths: dict | None = None  # {4: path, 8: path} when temporal


@dataclass
class DatasetIndex:
    root: Path
    split: str
    temporal: bool
    entries: list

    def image_ids(self):
        return [e.image_id for e in self.entries]

    def path_for(self, entry: ImageEntry) -> Path:
        return self.root / entry.path

    def lag_path_for(self, entry: ImageEntry, lag: int) -> Path:
        if not entry.lag_paths or lag not in entry.lag_paths:
            raise DataError(f"image {entry.image_id} has no lag-{lag} frame")
        return self.root / entry.lag_paths[lag]


def load_image(path) -> np.ndarray:
    """Load a PNG/PPM file as an (H, W, 3) float frame in [0, 1]."""
    path = Path(path)
    if path.suffix.lower() not in SUPPORTED_IMAGE_SUFFIXES:
        raise DataError(f"unsupported image format {path.suffix!r} for {path}")
    try:
        with Image.open(path) as img:
            img = img.convert("RGB")
            arr = np.asarray(img, dtype=np.float64)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    return arr / 255.0


def save_image(frame: np.ndarray, path) -> None:
    """Write a [0,1] float frame as an 8-bit PNG/PPM (rounded quantization)."""
    path = Path(path)
    if path.suffix.lower() not in SUPPORTED_IMAGE_SUFFIXES:
        raise DataError(f"unsupported image format {path.suffix!r} for {path}")
    quantized = np.clip(np.rint(np.asarray(frame) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(quantized, mode="RGB").save(path)


def load_triplet(index: DatasetIndex, entry: ImageEntry) -> FrameTriplet:
    return FrameTriplet(
        frame_t=load_image(index.path_for(entry)),
        frame_t4=load_image(index.lag_path_for(entry, 4)),
        frame_t8=load_image(index.lag_path_for(entry, 8)),
    )


def _annotation_from_record(rec, image_id):
    try:
        box = BoundingBox(float(rec["x"]), float(rec["y"]), float(rec["w"]), float(rec["h"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"bad annotation record {rec!r} for image {image_id}: {exc}") from exc
    return Annotation(image_id=image_id, box=box, ignore=bool(rec.get("ignore", False)))


def load_dataset(manifest_path) -> DatasetIndex:
    """Parse and fully validate a dataset manifest."""
    manifest_path = Path(manifest_path)
    try:
        raw = json.loads(manifest_path.read_text())
    except FileNotFoundError as exc:
        raise DataError(f"manifest not found: {manifest_path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed manifest {manifest_path}: {exc}") from exc
    if raw.get("format_version") != MANIFEST_VERSION:
        raise DataError(
            f"manifest version mismatch in {manifest_path}: "
            f"got {raw.get('format_version')!r}, expected {MANIFEST_VERSION}"
        )
    root = manifest_path.parent
    temporal = bool(raw.get("temporal", False))
    entries = []
    seen = set()
    for rec in raw.get("images", []):
        image_id = rec.get("id")
        if not image_id or not isinstance(image_id, str):
            raise DataError(f"manifest record without a valid id: {rec!r}")
        if image_id in seen:
            raise DataError(f"duplicate image id {image_id!r} in {manifest_path}")
        seen.add(image_id)
        path = rec.get("path")
        if not path:
            raise DataError(f"image {image_id} has no path")
        if not (root / path).exists():
            raise DataError(f"missing image file: {root / path}")
        lag_paths = None
        if temporal:
            lags = rec.get("lags")
            if not lags:
                raise DataError(f"temporal dataset but image {image_id} has no lag frames")
            lag_paths = {}
            for lag_key in ("4", "8"):
                if lag_key not in lags:
                    raise DataError(f"image {image_id} missing lag-{lag_key} frame")
                if not (root / lags[lag_key]).exists():
                    raise DataError(f"missing image file: {root / lags[lag_key]}")
                lag_paths[int(lag_key)] = lags[lag_key]
        anns = [_annotation_from_record(r, image_id) for r in rec.get("annotations", [])]
        entries.append(
            ImageEntry(image_id=image_id, path=path, annotations=anns, lag_paths=lag_paths)
        )
    return DatasetIndex(
        root=root, split=str(raw.get("split", "train")), temporal=temporal, entries=entries
    )


def save_dataset(index: DatasetIndex, manifest_path) -> None:
    """Write a manifest that load_dataset reads back identically."""
    records = []
    for e in index.entries:
        rec = {
            "id": e.image_id,
            "path": e.path,
            "annotations": [
                {
                    "x": a.box.x,
                    "y": a.box.y,
                    "w": a.box.w,
                    "h": a.box.h,
                    "ignore": a.ignore,
                }
                for a in e.annotations
            ],
        }
        if index.temporal:
            rec["lags"] = {str(k): v for k, v in sorted(e.lag_paths.items())}
        records.append(rec)
    payload = {
        "format_version": MANIFEST_VERSION,
        "split": index.split,
        "temporal": index.temporal,
        "images": records,
    }
    Path(manifest_path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def _model_payload(model: BoostedForest) -> dict:
    return {
        "channel_mode": model.channel_mode,
        "with_sdt": model.with_sdt,
        "shrink": model.shrink,
        "template_w": model.template_w,
        "template_h": model.template_h,
        "score_threshold": model.score_threshold,
        "pool": model.pool.params(),
        "trees": [
            {
                "alpha": alpha,
                "level": tree.level,
                "features": [n.feature for n in tree.nodes],
                "thresholds": [n.threshold for n in tree.nodes],
                "leaves": list(tree.leaves),
            }
            for alpha, tree in model.trees
        ],
    }


def _canonical(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def save_model(model: BoostedForest, path) -> None:
    """Versioned, checksummed model file; floats keep full precision."""
    payload = _model_payload(model)
    wrapper = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "sha256": hashlib.sha256(_canonical(payload).encode()).hexdigest(),
        "model": payload,
    }
    Path(path).write_text(json.dumps(wrapper, sort_keys=True, indent=1) + "\n")


def load_model(path) -> BoostedForest:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError as exc:
        raise ModelFormatError(f"model file not found: {path}") from exc
    try:
        wrapper = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"malformed model file {path}: {exc}") from exc
    if not isinstance(wrapper, dict) or wrapper.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"{path} is not a {MODEL_FORMAT} file")
    if wrapper.get("version") != MODEL_VERSION:
        raise ModelFormatError(
            f"model version mismatch in {path}: got {wrapper.get('version')!r}, "
            f"expected {MODEL_VERSION}"
        )
    payload = wrapper.get("model")
    if not isinstance(payload, dict):
        raise ModelFormatError(f"model file {path} has no model payload")
    digest = hashlib.sha256(_canonical(payload).encode()).hexdigest()
    if digest != wrapper.get("sha256"):
        raise ModelFormatError(f"model checksum mismatch in {path}")
    try:
        pool = fp.pool_from_params(payload["pool"])
        trees = []
        for rec in payload["trees"]:
            nodes = tuple(
                TreeNode(int(f), float(t))
                for f, t in zip(rec["features"], rec["thresholds"], strict=True)
            )
            tree = WeakTree(int(rec["level"]), nodes, tuple(int(l) for l in rec["leaves"]))
            alpha = float(rec["alpha"])
            if not math.isfinite(alpha):
                raise ModelFormatError(f"non-finite tree weight in {path}")
            trees.append((alpha, tree))
        model = BoostedForest(
            channel_mode=payload["channel_mode"],
            with_sdt=bool(payload["with_sdt"]),
            shrink=int(payload["shrink"]),
            template_w=int(payload["template_w"]),
            template_h=int(payload["template_h"]),
            score_threshold=float(payload["score_threshold"]),
            pool=pool,
            trees=tuple(trees),
        )
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError, IcfdetError) as exc:
        raise ModelFormatError(f"malformed field in model file {path}: {exc}") from exc
    return model


def write_detections(detections, path) -> None:
    """One `image_id x y w h score` line per detection, input order kept."""
    lines = [DETECTIONS_HEADER]
    for d in detections:
        if any(c.isspace() for c in d.image_id):
            raise DataError(f"image id {d.image_id!r} contains whitespace")
        lines.append(
            f"{d.image_id} {d.box.x!r} {d.box.y!r} {d.box.w!r} {d.box.h!r} {d.score!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_detections(path):
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError as exc:
        raise DataError(f"detections file not found: {path}") from exc
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(" ")
        if len(parts) != 6:
            raise DataError(
                f"{path}:{lineno}: expected 6 fields (image_id x y w h score), "
                f"got {len(parts)}"
            )
        try:
            out.append(
                Detection(
                    image_id=parts[0],
                    box=BoundingBox(*(float(v) for v in parts[1:5])),
                    score=float(parts[5]),
                )
            )
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    return out


def write_curve(curve, path) -> None:
    """Two-column `fppi miss_rate` text file."""
    lines = ["# fppi miss_rate"]
    for f, m in zip(curve.fppi, curve.miss_rate):
        lines.append(f"{f!r} {m!r}")
    Path(path).write_text("\n".join(lines) + "\n")
