"""Detector variant roster and its mapping to training configurations.

Variants compose as `<base>[+DCT][+SDt][+2Ped]`; a leading extension
implies the SquaresChnFtrs base ("+DCT" == "SquaresChnFtrs+DCT").
"Katamari" is the alias for SquaresChnFtrs+DCT+SDt+2Ped.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from . import featpool as fp
from .boost import TrainConfig
from .errors import IcfdetError

DEFAULT_BASE = "SquaresChnFtrs"

# base name -> (channel mode, pool mode, tree level, default tree count)
BASE_VARIANTS = {
    "VJLike": ("luminance", fp.ALL_SQUARES, 2, 8000),
    "HOGLike-L1": ("hoglike", fp.FIXED_GRID8, 1, 2048),
    "HOGLike-L2": ("hoglike", fp.FIXED_GRID8, 2, 2048),
    "HOGLike+LUV": ("hogluv", fp.FIXED_GRID8, 2, 2048),
    "SquaresChnFtrs": ("hogluv", fp.ALL_SQUARES, 2, 2048),
}
EXTENSIONS = ("DCT", "SDt", "2Ped")

ABLATION_LADDER = (
    "VJLike",
    "HOGLike-L2",
    "HOGLike+LUV",
    "SquaresChnFtrs",
    "SquaresChnFtrs+DCT",
)

COMPLEMENT_ROWS = (
    "SquaresChnFtrs",
    "+DCT",
    "+SDt",
    "+2Ped",
    "+DCT+SDt",
    "+DCT+2Ped",
    "+SDt+2Ped",
    "Katamari",
)


class VariantError(IcfdetError):
    pass


@dataclass(frozen=True)
class VariantSpec:
    base: str
    dct: bool = False
    sdt: bool = False
    two_ped: bool = False

    @property
    def name(self) -> str:
        parts = [self.base]
        if self.dct:
            parts.append("+DCT")
        if self.sdt:
            parts.append("+SDt")
        if self.two_ped:
            parts.append("+2Ped")
        return "".join(parts)


def parse_variant(text: str) -> VariantSpec:
    text = text.strip()
    if not text:
        raise VariantError("empty variant string")
    if text == "Katamari":
        return VariantSpec(DEFAULT_BASE, dct=True, sdt=True, two_ped=True)
    # "HOGLike+LUV" contains a '+' that is part of the base name.
    base = DEFAULT_BASE
    rest = text
    for candidate in sorted(BASE_VARIANTS, key=len, reverse=True):
        if text == candidate or text.startswith(candidate + "+"):
            base = candidate
            rest = text[len(candidate) :]
            break
    else:
        if not text.startswith("+"):
            raise VariantError(
                f"unknown variant {text!r}; bases are {sorted(BASE_VARIANTS)} "
                f"plus extensions {list(EXTENSIONS)}"
            )
    flags = {"DCT": False, "SDt": False, "2Ped": False}
    for token in [t for t in rest.split("+") if t]:
        if token not in flags:
            raise VariantError(f"unknown variant extension {token!r} in {text!r}")
        if flags[token]:
            raise VariantError(f"duplicate extension {token!r} in {text!r}")
        flags[token] = True
    spec = VariantSpec(base, dct=flags["DCT"], sdt=flags["SDt"], two_ped=flags["2Ped"])
    validate_variant(spec)
    return spec


def validate_variant(spec: VariantSpec) -> None:
    if spec.base not in BASE_VARIANTS:
        raise VariantError(f"unknown base variant {spec.base!r}")
    channel_mode = BASE_VARIANTS[spec.base][0]
    if spec.dct and channel_mode != "hogluv":
        raise VariantError(
            f"{spec.name}: the DCT expansion needs the 10-channel hogluv base"
        )


def train_config_for(spec: VariantSpec, seed: int = 0, **overrides) -> TrainConfig:
    """TrainConfig for a variant; keyword overrides replace any field."""
    validate_variant(spec)
    channel_mode, pool_mode, level, n_trees = BASE_VARIANTS[spec.base]
    if spec.dct:
        channel_mode = "hogluvdct"
    cfg = TrainConfig(
        n_trees=n_trees,
        tree_level=level,
        channel_mode=channel_mode,
        with_sdt=spec.sdt,
        pool_mode=pool_mode,
        seed=seed,
    )
    if overrides:
        unknown = set(overrides) - set(cfg.__dataclass_fields__)
        if unknown:
            raise VariantError(f"unknown training overrides: {sorted(unknown)}")
        cfg = replace(cfg, **overrides)
    return cfg
