"""Candidate pooling-region features over the detection template.

A pool is fully determined by its parameters (template size, shrink,
segment list), so model files store the parameters and regenerate the
region list on load. Region order is part of the model contract: trees
reference features by pool index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import IcfdetError

ALL_SQUARES = "all_squares"
FIXED_GRID8 = "fixed_grid8"

DEFAULT_STRIDE_PX = 4
DEFAULT_MIN_SIDE_PX = 4
DEFAULT_SIDE_STEP_PX = 4
GRID8_PX = 8


class PoolError(IcfdetError):
    pass


@dataclass(frozen=True)
class PoolingRegion:
    """One channel index plus a rectangle in template cell coordinates."""

    channel: int
    x: int
    y: int
    w: int
    h: int


@dataclass(frozen=True)
class PoolSegment:
    """Generator parameters for one contiguous channel range.

    all_squares: every square of side min_side_px, min_side_px+side_step_px,
    ... up to min(template dims), placed on a stride_px lattice.
    fixed_grid8: non-overlapping 8x8-pixel grid cells.
    All pixel values are converted to cells by the pool's shrink factor.
    """

    mode: str
    channel_lo: int
    channel_hi: int  # exclusive
    stride_px: int = DEFAULT_STRIDE_PX
    min_side_px: int = DEFAULT_MIN_SIDE_PX
    side_step_px: int = DEFAULT_SIDE_STEP_PX

    def __post_init__(self):
        if self.mode not in (ALL_SQUARES, FIXED_GRID8):
            raise PoolError(f"unknown pool mode {self.mode!r}")
        if not 0 <= self.channel_lo < self.channel_hi:
            raise PoolError(f"bad channel range [{self.channel_lo}, {self.channel_hi})")
        if self.stride_px < 1 or self.min_side_px < 1 or self.side_step_px < 1:
            raise PoolError("pool lattice parameters must be >= 1")


@dataclass
class FeaturePool:
    """Ordered, deterministic list of pooling regions for a template."""

    template_w: int  # cells (post-shrink)
    template_h: int
    shrink: int
    segments: tuple[PoolSegment, ...]
    regions: tuple[PoolingRegion, ...]
    _arrays: tuple | None = field(default=None, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.regions)

    def as_arrays(self):
        """(channel, x, y, w, h) int64 arrays in pool order, cached."""
        if self._arrays is None:
            if self.regions:
                mat = np.array(
                    [(r.channel, r.x, r.y, r.w, r.h) for r in self.regions], dtype=np.int64
                )
            else:
                mat = np.zeros((0, 5), dtype=np.int64)
            self._arrays = tuple(mat[:, i].copy() for i in range(5))
        return self._arrays

    def params(self) -> dict:
        """Serializable parameters from which the pool regenerates exactly."""
        return {
            "template_w_px": self.template_w * self.shrink,
            "template_h_px": self.template_h * self.shrink,
            "shrink": self.shrink,
            "segments": [
                {
                    "mode": s.mode,
                    "channel_lo": s.channel_lo,
                    "channel_hi": s.channel_hi,
                    "stride_px": s.stride_px,
                    "min_side_px": s.min_side_px,
                    "side_step_px": s.side_step_px,
                }
                for s in self.segments
            ],
        }


def _segment_regions(seg: PoolSegment, tw_px, th_px, shrink):
    tw_c, th_c = tw_px // shrink, th_px // shrink
    regions = []
    if seg.mode == FIXED_GRID8:
        if GRID8_PX % shrink != 0 or tw_px % GRID8_PX != 0 or th_px % GRID8_PX != 0:
            raise PoolError(
                f"fixed_grid8 needs template divisible by {GRID8_PX}px and "
                f"shrink dividing {GRID8_PX}, got template {tw_px}x{th_px} shrink {shrink}"
            )
        g = GRID8_PX // shrink
        for c in range(seg.channel_lo, seg.channel_hi):
            for y in range(0, th_c - g + 1, g):
                for x in range(0, tw_c - g + 1, g):
                    regions.append(PoolingRegion(c, x, y, g, g))
    else:  # all_squares
        stride_c = max(1, seg.stride_px // shrink)
        max_side = min(tw_px, th_px)
        sides = [
            s
            for s in range(seg.min_side_px, max_side + 1, seg.side_step_px)
            if s % shrink == 0
        ]
        if not sides:
            raise PoolError(
                f"no valid square sides for template {tw_px}x{th_px} with shrink {shrink}"
            )
        for c in range(seg.channel_lo, seg.channel_hi):
            for side in sides:
                sc = side // shrink
                for y in range(0, th_c - sc + 1, stride_c):
                    for x in range(0, tw_c - sc + 1, stride_c):
                        regions.append(PoolingRegion(c, x, y, sc, sc))
    return regions


def build_pool(template_w_px, template_h_px, shrink, segments) -> FeaturePool:
    """Assemble a pool from segments; region order is segment order, then
    channel-major, then side, then y, then x within each segment."""
    if shrink < 1:
        raise PoolError(f"shrink must be >= 1, got {shrink}")
    if template_w_px % shrink or template_h_px % shrink:
        raise PoolError(
            f"template {template_w_px}x{template_h_px} not divisible by shrink {shrink}"
        )
    segments = tuple(segments)
    if not segments:
        raise PoolError("pool needs at least one segment")
    regions = []
    for seg in segments:
        regions.extend(_segment_regions(seg, template_w_px, template_h_px, shrink))
    return FeaturePool(
        template_w=template_w_px // shrink,
        template_h=template_h_px // shrink,
        shrink=shrink,
        segments=segments,
        regions=tuple(regions),
    )


def generate_pool(
    template_w_px,
    template_h_px,
    n_channels,
    mode,
    shrink=1,
    stride_px=DEFAULT_STRIDE_PX,
) -> FeaturePool:
    """Single-mode pool covering channels [0, n_channels)."""
    seg = PoolSegment(mode=mode, channel_lo=0, channel_hi=n_channels, stride_px=stride_px)
    return build_pool(template_w_px, template_h_px, shrink, (seg,))


def pool_from_params(params: dict) -> FeaturePool:
    segs = tuple(
        PoolSegment(
            mode=s["mode"],
            channel_lo=s["channel_lo"],
            channel_hi=s["channel_hi"],
            stride_px=s["stride_px"],
            min_side_px=s["min_side_px"],
            side_step_px=s["side_step_px"],
        )
        for s in params["segments"]
    )
    return build_pool(params["template_w_px"], params["template_h_px"], params["shrink"], segs)


def extract(integral, region: PoolingRegion, origin=(0, 0)) -> float:
    """Exact channel sum over the region translated by `origin` (cells)."""
    ox, oy = origin
    x0, y0 = ox + region.x, oy + region.y
    x1, y1 = x0 + region.w, y0 + region.h
    grids = integral.data
    if region.channel >= grids.shape[0]:
        raise PoolError(f"channel {region.channel} outside stack of {grids.shape[0]}")
    if x0 < 0 or y0 < 0 or x1 > grids.shape[2] - 1 or y1 > grids.shape[1] - 1:
        raise PoolError(
            f"region {region} at origin {origin} outside {grids.shape[1]-1}x{grids.shape[2]-1} grid"
        )
    g = grids[region.channel]
    # Same corner expression as extract_all so both paths agree bit-for-bit.
    return g[y1, x1] - g[y0, x1] - g[y1, x0] + g[y0, x0]


def extract_all(integral, pool: FeaturePool, origin=(0, 0)) -> np.ndarray:
    """Feature vector of every pool region at one window origin."""
    if len(pool) == 0:
        return np.zeros(0)
    ch, x, y, w, h = pool.as_arrays()
    ox, oy = origin
    x0, y0 = x + ox, y + oy
    x1, y1 = x0 + w, y0 + h
    grids = integral.data
    if x0.min() < 0 or y0.min() < 0 or x1.max() > grids.shape[2] - 1 or y1.max() > grids.shape[1] - 1:
        raise PoolError(f"pool at origin {origin} exceeds integral grid {grids.shape}")
    return grids[ch, y1, x1] - grids[ch, y0, x1] - grids[ch, y1, x0] + grids[ch, y0, x0]
