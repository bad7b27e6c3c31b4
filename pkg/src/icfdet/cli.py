"""Operator surface: train / detect / eval / ablate / complement / synth
subcommands over a shared JSON config file.

Every subcommand is deterministic given (inputs, config, seed); no output
file carries timestamps. Domain failures exit nonzero with a single
`error: <kind>: <message>` line on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import dataio
from .boost import TrainConfig
from .detect import PyramidConfig, detect, detect_with_sdt, fuse_context
from .errors import IcfdetError
from .evaluation import (
    filter_reasonable,
    log_avg_miss_rate,
    pr_auc,
    sweep_curve,
)
from .synth import SynthConfig, generate
from .train import bootstrap_train
from .variants import (
    ABLATION_LADDER,
    COMPLEMENT_ROWS,
    parse_variant,
    train_config_for,
)


class ConfigError(IcfdetError):
    pass


@dataclass
class RunConfig:
    train_dataset: str | None = None
    test_dataset: str | None = None
    variant: str = "SquaresChnFtrs"
    seed: int = 0
    out_dir: str = "runs/out"
    context: str | None = None  # context detections file for fusion
    model: str | None = None
    detections: str | None = None
    on_train: bool = False
    train_overrides: dict = field(default_factory=dict)
    pyramid_overrides: dict = field(default_factory=dict)
    eval_params: dict = field(default_factory=dict)
    fusion_params: dict = field(default_factory=dict)
    ladder: tuple = ABLATION_LADDER
    synth_params: dict = field(default_factory=dict)


_FILE_KEYS = {
    "train_dataset": "train_dataset",
    "test_dataset": "test_dataset",
    "variant": "variant",
    "seed": "seed",
    "out_dir": "out_dir",
    "context": "context",
    "model": "model",
    "detections": "detections",
    "train": "train_overrides",
    "pyramid": "pyramid_overrides",
    "eval": "eval_params",
    "fusion": "fusion_params",
    "ladder": "ladder",
    "synth": "synth_params",
}


def load_run_config(path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    unknown = set(raw) - set(_FILE_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys in {path}: {sorted(unknown)}")
    cfg = RunConfig()
    for key, attr in _FILE_KEYS.items():
        if key in raw:
            setattr(cfg, attr, raw[key])
    cfg.ladder = tuple(cfg.ladder)
    return cfg


def _apply_cli_overrides(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "variant", None):
        cfg.variant = args.variant
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    if getattr(args, "context", None):
        cfg.context = args.context
    if getattr(args, "model", None):
        cfg.model = args.model
    if getattr(args, "detections", None):
        cfg.detections = args.detections
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "on_train", False):
        cfg.on_train = True
    return cfg


def _dataclass_from(cls, overrides: dict, what: str):
    fields = set(cls.__dataclass_fields__)
    unknown = set(overrides) - fields
    if unknown:
        raise ConfigError(f"unknown {what} keys: {sorted(unknown)}")
    try:
        return cls(**overrides)
    except IcfdetError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {what} parameters: {exc}") from exc


def _pyramid(cfg: RunConfig) -> PyramidConfig:
    return _dataclass_from(PyramidConfig, dict(cfg.pyramid_overrides), "pyramid")


def _eval_params(cfg: RunConfig):
    allowed = {"iou_threshold": 0.5, "min_height": 50.0}
    unknown = set(cfg.eval_params) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown eval keys: {sorted(unknown)}")
    allowed.update(cfg.eval_params)
    return allowed["iou_threshold"], allowed["min_height"]


def _fusion_params(cfg: RunConfig):
    allowed = {"weight": 1.0, "overlap": 0.5}
    unknown = set(cfg.fusion_params) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown fusion keys: {sorted(unknown)}")
    allowed.update(cfg.fusion_params)
    return allowed["weight"], allowed["overlap"]


def _load_split(cfg: RunConfig, split: str):
    path = cfg.train_dataset if split == "train" else cfg.test_dataset
    if not path:
        raise ConfigError(f"config is missing the {split} dataset path")
    return dataio.load_dataset(path)


def _write_json(obj, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def _train_report(spec_name, seed, tc: TrainConfig, history):
    return {
        "variant": spec_name,
        "seed": seed,
        "train_config": asdict(tc),
        "bootstrap": [
            {
                "round": h.round_index,
                "n_pos": h.n_pos,
                "n_neg": h.n_neg,
                "n_mined": h.n_mined,
                "final_train_error": h.rounds[-1].train_error if h.rounds else None,
                "final_exp_loss": h.rounds[-1].exp_loss if h.rounds else None,
                "rounds": [
                    {
                        "index": r.index,
                        "error": r.error,
                        "alpha": r.alpha,
                        "clamped": r.clamped,
                        "train_error": r.train_error,
                        "exp_loss": r.exp_loss,
                        "post_update_error": r.post_update_error,
                    }
                    for r in h.rounds
                ],
            }
            for h in history
        ],
    }


def _train_variant(cfg: RunConfig, variant_name: str, out_dir: Path):
    index = _load_split(cfg, "train")
    spec = parse_variant(variant_name)
    if spec.sdt and not index.temporal:
        raise ConfigError(f"variant {spec.name} needs a temporal training dataset")
    tc = train_config_for(spec, seed=cfg.seed, **cfg.train_overrides)
    pyr = _pyramid(cfg)
    model, history = bootstrap_train(index, tc, pyr)
    out_dir.mkdir(parents=True, exist_ok=True)
    model_path = out_dir / "model.json"
    dataio.save_model(model, model_path)
    _write_json(_train_report(spec.name, cfg.seed, tc, history), out_dir / "train_report.json")
    return model, model_path


def _detect_over(model, index, pyr):
    detections = []
    for entry in index.entries:
        if model.with_sdt:
            triplet = dataio.load_triplet(index, entry)
            detections.extend(detect_with_sdt(model, triplet, pyr, entry.image_id))
        else:
            frame = dataio.load_image(index.path_for(entry))
            detections.extend(detect(model, frame, pyr, entry.image_id))
    return detections


def _detect_variant(cfg: RunConfig, model, spec, index, out_path: Path):
    if model.with_sdt and not index.temporal:
        raise ConfigError("temporal model needs a temporal dataset")
    if spec is not None and spec.sdt != model.with_sdt:
        raise ConfigError(
            f"variant {spec.name} disagrees with the model's temporal mode"
        )
    context_dets = None
    if spec is not None and spec.two_ped:
        if not cfg.context:
            raise ConfigError(f"variant {spec.name} needs --context <detections file>")
        context_dets = dataio.read_detections(cfg.context)
    pyr = _pyramid(cfg)
    detections = _detect_over(model, index, pyr)
    if context_dets is not None:
        weight, overlap = _fusion_params(cfg)
        detections = fuse_context(detections, context_dets, weight, overlap)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    dataio.write_detections(detections, out_path)
    return detections


def _evaluate(cfg: RunConfig, detections, index, split: str, out_dir: Path, write=True):
    iou_thr, min_height = _eval_params(cfg)
    known = set(index.image_ids())
    stray = sorted({d.image_id for d in detections} - known)
    if stray:
        raise ConfigError(f"detections reference unknown image ids: {stray[:10]}")
    annotations = []
    for e in index.entries:
        annotations.extend(filter_reasonable(e.annotations, min_height))
    curve = sweep_curve(detections, annotations, iou_thr, image_ids=index.image_ids())
    mr = log_avg_miss_rate(curve)
    auc = pr_auc(detections, annotations, iou_thr)
    summary = {
        "split": split,
        "on_train": split == "train",
        "mr": mr,
        "auc": auc,
        "n_images": curve.n_images,
        "n_positives": curve.n_positives,
        "iou_threshold": iou_thr,
        "min_height": min_height,
    }
    if write:
        out_dir.mkdir(parents=True, exist_ok=True)
        dataio.write_curve(curve, out_dir / f"curve_{split}.txt")
        _write_json(summary, out_dir / f"eval_{split}.json")
    return summary


def cmd_synth(cfg: RunConfig) -> int:
    sc = _dataclass_from(SynthConfig, dict(cfg.synth_params), "synth")
    out = generate(sc, cfg.out_dir)
    print(f"synth: wrote {out.train_manifest} and {out.test_manifest}")
    if out.context_test is not None:
        print(f"synth: wrote {out.context_train} and {out.context_test}")
    return 0


def cmd_train(cfg: RunConfig) -> int:
    out_dir = Path(cfg.out_dir)
    model, model_path = _train_variant(cfg, cfg.variant, out_dir)
    print(f"train: {cfg.variant}: {len(model.trees)} trees -> {model_path}")
    return 0


def cmd_detect(cfg: RunConfig) -> int:
    model_path = cfg.model or str(Path(cfg.out_dir) / "model.json")
    model = dataio.load_model(model_path)
    spec = parse_variant(cfg.variant)
    split = "train" if cfg.on_train else "test"
    index = _load_split(cfg, split)
    out_path = Path(cfg.out_dir) / f"detections_{split}.txt"
    detections = _detect_variant(cfg, model, spec, index, out_path)
    print(f"detect: {len(detections)} detections on {len(index.entries)} images -> {out_path}")
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    split = "train" if cfg.on_train else "test"
    det_path = cfg.detections or str(Path(cfg.out_dir) / f"detections_{split}.txt")
    detections = dataio.read_detections(det_path)
    index = _load_split(cfg, split)
    summary = _evaluate(cfg, detections, index, split, Path(cfg.out_dir))
    print(
        f"eval[{split}]: MR {summary['mr']:.6f} AUC {summary['auc']:.6f} "
        f"({summary['n_positives']} positives over {summary['n_images']} images)"
    )
    return 0


def _table_text(headers, rows):
    widths = [max(len(str(h)), *(len(str(r[i])) for r in rows)) for i, h in enumerate(headers)]
    lines = ["  ".join(str(h).ljust(w) for h, w in zip(headers, widths))]
    for r in rows:
        lines.append("  ".join(str(v).ljust(w) for v, w in zip(r, widths)))
    return "\n".join(lines) + "\n"


def cmd_ablate(cfg: RunConfig) -> int:
    out_root = Path(cfg.out_dir)
    rows = []
    partial = False
    for name in cfg.ladder:
        sub = out_root / "ablate" / name.replace("+", "_")
        try:
            model, _ = _train_variant(cfg, name, sub)
            spec = parse_variant(name)
            index = _load_split(cfg, "test")
            detections = _detect_variant(cfg, model, spec, index, sub / "detections_test.txt")
            summary = _evaluate(cfg, detections, index, "test", sub)
            rows.append({"variant": name, "mr": summary["mr"]})
        except IcfdetError as exc:
            partial = True
            rows.append({"variant": name, "error": str(exc)})
    table = {"seed": cfg.seed, "partial": partial, "rows": rows}
    _write_json(table, out_root / "ablation.json")
    text_rows = [
        (r["variant"], f"{r['mr']:.6f}" if "mr" in r else f"ERROR: {r['error']}")
        for r in rows
    ]
    (out_root / "ablation.txt").write_text(_table_text(("variant", "mr"), text_rows))
    print((out_root / "ablation.txt").read_text(), end="")
    return 1 if partial else 0


def cmd_complement(cfg: RunConfig) -> int:
    out_root = Path(cfg.out_dir)
    model_cache = {}  # (dct, sdt) -> (model, raw detections)
    index = _load_split(cfg, "test")
    rows = []
    partial = False
    base_mr = None
    for name in COMPLEMENT_ROWS:
        sub = out_root / "complement" / (name.replace("+", "_") or "base")
        try:
            spec = parse_variant(name)
            key = (spec.dct, spec.sdt)
            if key not in model_cache:
                train_name = spec.name.replace("+2Ped", "")
                model, _ = _train_variant(cfg, train_name, sub)
                pyr = _pyramid(cfg)
                model_cache[key] = (model, _detect_over(model, index, pyr))
            model, raw = model_cache[key]
            detections = list(raw)
            if spec.two_ped:
                if not cfg.context:
                    raise ConfigError(f"variant {spec.name} needs a context file")
                weight, overlap = _fusion_params(cfg)
                detections = fuse_context(
                    detections, dataio.read_detections(cfg.context), weight, overlap
                )
            sub.mkdir(parents=True, exist_ok=True)
            dataio.write_detections(detections, sub / "detections_test.txt")
            summary = _evaluate(cfg, detections, index, "test", sub)
            rows.append({"method": name, "mr": summary["mr"]})
        except IcfdetError as exc:
            partial = True
            rows.append({"method": name, "error": str(exc)})
    singles = {}
    for row in rows:
        if "mr" not in row:
            continue
        spec = parse_variant(row["method"])
        n_ext = spec.dct + spec.sdt + spec.two_ped
        if base_mr is None and n_ext == 0:
            base_mr = row["mr"]
    for row in rows:
        if "mr" not in row or base_mr is None:
            continue
        spec = parse_variant(row["method"])
        n_ext = spec.dct + spec.sdt + spec.two_ped
        row["improvement"] = 0.0 if n_ext == 0 else base_mr - row["mr"]
        if n_ext == 1:
            singles[(spec.dct, spec.sdt, spec.two_ped)] = row["improvement"]
    for row in rows:
        if "mr" not in row:
            continue
        spec = parse_variant(row["method"])
        flags = (spec.dct, spec.sdt, spec.two_ped)
        if sum(flags) >= 2:
            parts = []
            for i in range(3):
                if flags[i]:
                    single = tuple(j == i for j in range(3))
                    if single in singles:
                        parts.append(singles[single])
            row["expected_improvement"] = sum(parts) if len(parts) == sum(flags) else None
        else:
            row["expected_improvement"] = None
    table = {"seed": cfg.seed, "partial": partial, "rows": rows}
    _write_json(table, out_root / "complement.json")
    text_rows = []
    for r in rows:
        if "mr" in r:
            exp = r.get("expected_improvement")
            text_rows.append(
                (
                    r["method"],
                    f"{r['mr']:.6f}",
                    f"{r['improvement']:.6f}" if r.get("improvement") is not None else "-",
                    f"{exp:.6f}" if exp is not None else "-",
                )
            )
        else:
            text_rows.append((r["method"], f"ERROR: {r['error']}", "-", "-"))
    (out_root / "complement.txt").write_text(
        _table_text(("method", "mr", "improvement", "expected_improvement"), text_rows)
    )
    print((out_root / "complement.txt").read_text(), end="")
    return 1 if partial else 0


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "detect": cmd_detect,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "complement": cmd_complement,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icfdet", description="Boosted integral-channel-features detector toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--variant", help="detector variant, e.g. SquaresChnFtrs+DCT")
        p.add_argument("--out", help="output directory")
        p.add_argument("--context", help="context detections file (for +2Ped)")
        p.add_argument("--model", help="model file (detect)")
        p.add_argument("--detections", help="detections file (eval)")
        p.add_argument(
            "--on-train", dest="on_train", action="store_true", help="use the training split"
        )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_run_config(args.config) if args.config else RunConfig()
        cfg = _apply_cli_overrides(cfg, args)
        return COMMANDS[args.command](cfg)
    except IcfdetError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
