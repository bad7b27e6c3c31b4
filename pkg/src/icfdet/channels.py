"""Feature channels: LUV color, gradients, orientation bins, DCT texture
expansion, temporal-difference channels, block shrink and integral images.

Channel order and the normalization constants below are part of the model
file contract: a trained model only scores correctly over stacks built with
the same constants.

Channel layouts by mode:
    luminance   [L]
    hoglike     [mag, bin0..bin5]
    hogluv      [L, U, V, mag, bin0..bin5]
    hogluvdct   [L, U, V, mag, bin0..bin5, |ch0*f0|, |ch0*f1|, |ch0*f2|,
                 |ch1*f0|, ...]                  (10 + 10*3 = 40 channels)
Temporal stacks append two extra channels [sdt_lag4, sdt_lag8] at the end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d

from ._kernels import sad_costs
from .errors import IcfdetError

MODE_CHANNELS = {"luminance": 1, "hoglike": 7, "hogluv": 10, "hogluvdct": 40}
N_ORIENT_BINS = 6
SDT_CHANNELS = 2
SDT_LAGS = (4, 8)
SDT_SEARCH_RADIUS = 8
DCT_SIZE = 7
DCT_FREQ_PAIRS = ((0, 1), (1, 0), (1, 1))  # lowest non-DC (fy, fx) frequencies

# sRGB (D65) -> XYZ. White point derived from the matrix rows so that an
# all-ones frame lands exactly on L*=100, u*=v*=0.
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_WHITE_XYZ = _RGB_TO_XYZ.sum(axis=1)
LUMA_WEIGHTS = _RGB_TO_XYZ[1].copy()  # linear-RGB -> Y (luminance) row
_WHITE_DENOM = _WHITE_XYZ[0] + 15.0 * _WHITE_XYZ[1] + 3.0 * _WHITE_XYZ[2]
_WHITE_U = 4.0 * _WHITE_XYZ[0] / _WHITE_DENOM
_WHITE_V = 9.0 * _WHITE_XYZ[1] / _WHITE_DENOM

# Affine maps taking CIE ranges onto [0,1] so all channels share one scale.
LUV_L_MAX = 100.0
LUV_U_RANGE = (-134.0, 220.0)
LUV_V_RANGE = (-140.0, 122.0)


class ChannelError(IcfdetError):
    pass


@dataclass
class ChannelStack:
    """K same-sized scalar grids derived from one frame (or frame triplet)."""

    data: np.ndarray  # (K, H, W) float64
    shrink: int
    mode: str
    with_sdt: bool = False

    def __post_init__(self):
        if self.mode not in MODE_CHANNELS:
            raise ChannelError(f"unknown channel mode {self.mode!r}")
        expected = MODE_CHANNELS[self.mode] + (SDT_CHANNELS if self.with_sdt else 0)
        if self.data.ndim != 3 or self.data.shape[0] != expected:
            raise ChannelError(
                f"mode {self.mode!r} (sdt={self.with_sdt}) needs {expected} "
                f"channels, got array of shape {self.data.shape}"
            )

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass
class IntegralChannelStack:
    """Per-channel summed-area tables: entry (y, x) sums rows < y, cols < x."""

    data: np.ndarray  # (K, H+1, W+1) float64
    shrink: int
    mode: str
    with_sdt: bool = False

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1] - 1

    @property
    def width(self) -> int:
        return self.data.shape[2] - 1


@dataclass
class FrameTriplet:
    """Current frame plus the frames 4 and 8 time steps earlier."""

    frame_t: np.ndarray
    frame_t4: np.ndarray
    frame_t8: np.ndarray

    def __post_init__(self):
        for f in (self.frame_t, self.frame_t4, self.frame_t8):
            check_frame(f)
        if not (self.frame_t.shape == self.frame_t4.shape == self.frame_t8.shape):
            raise ChannelError("triplet frames must share dimensions")


def check_frame(frame: np.ndarray) -> np.ndarray:
    """Validate an (H, W, 3) RGB frame with components in [0, 1]."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise ChannelError(f"frame must be (H, W, 3), got {frame.shape}")
    if frame.shape[0] < 1 or frame.shape[1] < 1:
        raise ChannelError("frame must be at least 1x1")
    if not np.all(np.isfinite(frame)):
        raise ChannelError("frame contains non-finite values")
    if frame.min() < 0.0 or frame.max() > 1.0:
        raise ChannelError("frame components must lie in [0, 1]")
    return frame


def srgb_to_linear(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return np.where(v <= 0.04045, v / 12.92, ((v + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return np.where(v <= 0.0031308, v * 12.92, 1.055 * np.clip(v, 0, None) ** (1 / 2.4) - 0.055)


def _xyz(frame: np.ndarray) -> np.ndarray:
    lin = srgb_to_linear(frame)
    return lin @ _RGB_TO_XYZ.T


def _lstar(y_over_yn: np.ndarray) -> np.ndarray:
    thresh = (6.0 / 29.0) ** 3
    return np.where(
        y_over_yn > thresh,
        116.0 * np.cbrt(y_over_yn) - 16.0,
        (29.0 / 3.0) ** 3 * y_over_yn,
    )


def lightness(frame: np.ndarray) -> np.ndarray:
    """CIE L* of a frame, normalized into [0, 1]."""
    frame = check_frame(frame)
    y = _xyz(frame)[..., 1] / _WHITE_XYZ[1]
    return _lstar(y) / LUV_L_MAX


def rgb_to_luv(frame: np.ndarray) -> np.ndarray:
    """CIE 1976 L*u*v* (D65), each channel affinely normalized into [0, 1].

    Returns a (3, H, W) array [L, U, V]. Black pixels take the neutral
    chromaticity (u* = v* = 0) by convention.
    """
    frame = check_frame(frame)
    xyz = _xyz(frame)
    x, y, z = xyz[..., 0], xyz[..., 1], xyz[..., 2]
    lum = _lstar(y / _WHITE_XYZ[1])
    denom = x + 15.0 * y + 3.0 * z
    safe = denom > 0.0
    up = np.where(safe, 4.0 * x / np.where(safe, denom, 1.0), _WHITE_U)
    vp = np.where(safe, 9.0 * y / np.where(safe, denom, 1.0), _WHITE_V)
    u = 13.0 * lum * (up - _WHITE_U)
    v = 13.0 * lum * (vp - _WHITE_V)
    u_lo, u_hi = LUV_U_RANGE
    v_lo, v_hi = LUV_V_RANGE
    out = np.stack(
        [
            lum / LUV_L_MAX,
            (u - u_lo) / (u_hi - u_lo),
            (v - v_lo) / (v_hi - v_lo),
        ]
    )
    return np.clip(out, 0.0, 1.0)


def gradient(frame: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel gradient magnitude and orientation folded into [0, pi).

    Central differences with kernel (-1/2, 0, +1/2) on each color channel
    with replicated borders; the per-pixel result is taken from the color
    channel with the largest magnitude.
    """
    frame = check_frame(frame)
    padded = np.pad(frame, ((1, 1), (1, 1), (0, 0)), mode="edge")
    gx = (padded[1:-1, 2:, :] - padded[1:-1, :-2, :]) * 0.5
    gy = (padded[2:, 1:-1, :] - padded[:-2, 1:-1, :]) * 0.5
    mag_rgb = np.hypot(gx, gy)
    best = np.argmax(mag_rgb, axis=2)[..., None]
    mag = np.take_along_axis(mag_rgb, best, axis=2)[..., 0]
    bx = np.take_along_axis(gx, best, axis=2)[..., 0]
    by = np.take_along_axis(gy, best, axis=2)[..., 0]
    ori = np.mod(np.arctan2(by, bx), np.pi)
    return mag, ori


def orientation_bins(mag: np.ndarray, ori: np.ndarray, n_bins: int = N_ORIENT_BINS) -> np.ndarray:
    """Hard-assign each pixel's magnitude to its nearest orientation bin.

    Bins are centered at (k + 0.5) * pi / n_bins, so bin k covers
    [k*pi/n, (k+1)*pi/n). The bins sum exactly to the magnitude grid.
    """
    mag = np.asarray(mag, dtype=np.float64)
    ori = np.asarray(ori, dtype=np.float64)
    if mag.shape != ori.shape:
        raise ChannelError("magnitude/orientation shape mismatch")
    idx = np.floor(ori * (n_bins / np.pi)).astype(np.int64)
    np.clip(idx, 0, n_bins - 1, out=idx)
    out = np.zeros((n_bins,) + mag.shape)
    for k in range(n_bins):
        np.copyto(out[k], mag, where=(idx == k))
    return out


def build_channels(frame: np.ndarray, mode: str) -> ChannelStack:
    """Base channel stack for a frame: 1 (luminance), 7 (hoglike) or 10 (hogluv)."""
    if mode == "luminance":
        data = lightness(frame)[None, :, :]
    elif mode == "hoglike":
        mag, ori = gradient(frame)
        data = np.concatenate([mag[None], orientation_bins(mag, ori)])
    elif mode == "hogluv":
        luv = rgb_to_luv(frame)
        mag, ori = gradient(frame)
        data = np.concatenate([luv, mag[None], orientation_bins(mag, ori)])
    else:
        raise ChannelError(f"build_channels does not handle mode {mode!r}")
    return ChannelStack(data=data, shrink=1, mode=mode)


def _dct_basis_1d(k: int) -> np.ndarray:
    grid = np.arange(DCT_SIZE)
    scale = np.sqrt(1.0 / DCT_SIZE) if k == 0 else np.sqrt(2.0 / DCT_SIZE)
    return scale * np.cos(np.pi * (2 * grid + 1) * k / (2 * DCT_SIZE))


def dct_bank() -> np.ndarray:
    """Three 7x7 filters: outer products of orthonormal 1-D DCT-II basis
    vectors for the frequency pairs (0,1), (1,0) and (1,1)."""
    return np.stack(
        [np.outer(_dct_basis_1d(fy), _dct_basis_1d(fx)) for fy, fx in DCT_FREQ_PAIRS]
    )


def dct_expand(stack: ChannelStack, bank: np.ndarray | None = None) -> ChannelStack:
    """Expand a 10-channel stack to 40 by appending |channel * filter| maps.

    Convolution uses replicated borders; appended channel 10 + c*3 + j is
    the response of source channel c to filter j. The first 10 output
    channels are the input channels unchanged. A custom (3, 7, 7) bank may
    be supplied; the default bank is applied separably since its filters
    are outer products (with replicate borders that equals the full 2-D
    convolution).
    """
    if stack.mode != "hogluv" or stack.with_sdt:
        raise ChannelError("dct_expand requires a plain 10-channel hogluv stack")
    out = np.empty((MODE_CHANNELS["hogluvdct"],) + stack.data.shape[1:])
    out[:10] = stack.data
    if bank is not None:
        from scipy.ndimage import convolve

        for j in range(bank.shape[0]):
            for c in range(10):
                out[10 + c * 3 + j] = np.abs(convolve(stack.data[c], bank[j], mode="nearest"))
    else:
        for j, (fy, fx) in enumerate(DCT_FREQ_PAIRS):
            ky = _dct_basis_1d(fy)
            kx = _dct_basis_1d(fx)
            for c in range(10):
                tmp = convolve1d(stack.data[c], ky, axis=0, mode="nearest")
                out[10 + c * 3 + j] = np.abs(convolve1d(tmp, kx, axis=1, mode="nearest"))
    return ChannelStack(data=out, shrink=stack.shrink, mode="hogluvdct")


def align_shift(cur_l: np.ndarray, past_l: np.ndarray, radius: int = SDT_SEARCH_RADIUS):
    """Integer translation of `past_l` minimizing SAD against `cur_l`.

    Exhaustive search over [-radius, radius]^2. The SAD is summed over the
    overlap region only; ties resolve to the first minimum in (dy, dx)
    scan order. Returns (dy, dx) such that past[y - dy, x - dx] aligns
    with cur[y, x].
    """
    costs = sad_costs(np.ascontiguousarray(cur_l), np.ascontiguousarray(past_l), radius)
    k = int(np.argmin(costs))
    size = 2 * radius + 1
    return k // size - radius, k % size - radius


def _shifted_absdiff(cur_l, past_l, dy, dx):
    h, w = cur_l.shape
    out = np.zeros_like(cur_l)
    y0, y1 = max(0, dy), h + min(0, dy)
    x0, x1 = max(0, dx), w + min(0, dx)
    if y1 > y0 and x1 > x0:
        out[y0:y1, x0:x1] = np.abs(
            cur_l[y0:y1, x0:x1] - past_l[y0 - dy : y1 - dy, x0 - dx : x1 - dx]
        )
    return out


def sdt_channels(triplet: FrameTriplet, cur_lightness: np.ndarray | None = None) -> np.ndarray:
    """Two temporal-difference channels from coarsely aligned past frames.

    For each lag frame: exhaustive SAD alignment within
    [-SDT_SEARCH_RADIUS, +SDT_SEARCH_RADIUS]^2 on normalized lightness,
    then the per-pixel absolute lightness difference under the recovered
    shift (out-of-overlap pixels are 0). Returns (2, H, W), lag 4 first.
    """
    cur = lightness(triplet.frame_t) if cur_lightness is None else cur_lightness
    out = np.empty((SDT_CHANNELS,) + cur.shape)
    for k, past_frame in enumerate((triplet.frame_t4, triplet.frame_t8)):
        past = lightness(past_frame)
        dy, dx = align_shift(cur, past)
        out[k] = _shifted_absdiff(cur, past, dy, dx)
    return out


def append_sdt(stack: ChannelStack, sdt: np.ndarray) -> ChannelStack:
    if stack.with_sdt:
        raise ChannelError("stack already carries temporal channels")
    if sdt.shape != (SDT_CHANNELS,) + stack.data.shape[1:]:
        raise ChannelError("temporal channels must match stack dimensions")
    return ChannelStack(
        data=np.concatenate([stack.data, sdt]),
        shrink=stack.shrink,
        mode=stack.mode,
        with_sdt=True,
    )


def shrink(stack: ChannelStack, factor: int) -> ChannelStack:
    """Sum each factor x factor block into one cell; trailing partial rows
    and columns are dropped. Sums (not means) keep pooled values intact."""
    if factor < 1:
        raise ChannelError(f"shrink factor must be >= 1, got {factor}")
    if factor == 1:
        return ChannelStack(stack.data.copy(), stack.shrink, stack.mode, stack.with_sdt)
    k, h, w = stack.data.shape
    oh, ow = h // factor, w // factor
    if oh < 1 or ow < 1:
        raise ChannelError(f"stack {h}x{w} too small for shrink factor {factor}")
    trimmed = stack.data[:, : oh * factor, : ow * factor]
    data = trimmed.reshape(k, oh, factor, ow, factor).sum(axis=(2, 4))
    return ChannelStack(data, stack.shrink * factor, stack.mode, stack.with_sdt)


def integrate(stack: ChannelStack) -> IntegralChannelStack:
    """Summed-area tables with a zero first row and column per channel."""
    k, h, w = stack.data.shape
    out = np.zeros((k, h + 1, w + 1))
    out[:, 1:, 1:] = stack.data.cumsum(axis=1).cumsum(axis=2)
    return IntegralChannelStack(out, stack.shrink, stack.mode, stack.with_sdt)


def compute_integral(window, mode: str, with_sdt: bool, shrink_factor: int) -> IntegralChannelStack:
    """Full channel pipeline: base channels (+DCT) (+SDt) -> shrink -> integral.

    `window` is a frame, or a FrameTriplet when with_sdt is set. This is the
    single path shared by training-window feature extraction and pyramid
    levels, so both see identical channel semantics.
    """
    if with_sdt:
        if not isinstance(window, FrameTriplet):
            raise ChannelError("temporal mode needs a FrameTriplet input")
        frame = window.frame_t
    else:
        if isinstance(window, FrameTriplet):
            raise ChannelError("non-temporal mode got a FrameTriplet")
        frame = window
    base_mode = "hogluv" if mode == "hogluvdct" else mode
    stack = build_channels(frame, base_mode)
    if mode == "hogluvdct":
        stack = dct_expand(stack)
    if with_sdt:
        cur_l = stack.data[0] if base_mode in ("luminance", "hogluv") else None
        stack = append_sdt(stack, sdt_channels(window, cur_lightness=cur_l))
    return integrate(shrink(stack, shrink_factor))
