"""Colour conversion and 4:2:0 chroma resampling (JFIF / BT.601 full range)."""
from dataclasses import dataclass

import numpy as np

from .._accel import njit, pick
from .errors import CodecError, ColorspaceError

RGB = "RGB"
YCBCR = "YCbCr"


@dataclass
class ImageTensor:
    """An H x W x C sample array tagged with its colour space and value range."""

    data: np.ndarray
    colorspace: str = RGB
    value_range: tuple = (0, 255)

    def __post_init__(self):
        if self.colorspace not in (RGB, YCBCR):
            raise ColorspaceError(f"unknown colorspace {self.colorspace!r}")
        lo, hi = self.value_range
        if self.data.size and (self.data.min() < lo or self.data.max() > hi):
            raise CodecError(f"samples outside declared range {self.value_range}")

    @property
    def shape(self):
        return self.data.shape


def _unwrap(img, expected):
    if isinstance(img, ImageTensor):
        if img.colorspace != expected:
            raise ColorspaceError(f"expected {expected} input, got {img.colorspace}")
        return img.data, True
    return np.asarray(img), False


def _check_planes(arr):
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise CodecError(f"expected H x W x 3 array, got shape {arr.shape}")


@njit
def _rgb_to_ycbcr_nb(rgb):
    h, w, _ = rgb.shape
    out = np.empty((h, w, 3), np.uint8)
    for i in range(h):
        for j in range(w):
            r = float(rgb[i, j, 0])
            g = float(rgb[i, j, 1])
            b = float(rgb[i, j, 2])
            y = 0.299 * r + 0.587 * g + 0.114 * b
            cb = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0
            cr = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0
            out[i, j, 0] = min(max(np.floor(y + 0.5), 0.0), 255.0)
            out[i, j, 1] = min(max(np.floor(cb + 0.5), 0.0), 255.0)
            out[i, j, 2] = min(max(np.floor(cr + 0.5), 0.0), 255.0)
    return out


def _rgb_to_ycbcr_np(rgb):
    f = rgb.astype(np.float64)
    r, g, b = f[..., 0], f[..., 1], f[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0
    cr = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0
    out = np.stack([y, cb, cr], axis=-1)
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


@njit
def _ycbcr_to_rgb_nb(ycc):
    h, w, _ = ycc.shape
    out = np.empty((h, w, 3), np.uint8)
    for i in range(h):
        for j in range(w):
            y = float(ycc[i, j, 0])
            cb = float(ycc[i, j, 1]) - 128.0
            cr = float(ycc[i, j, 2]) - 128.0
            r = y + 1.402 * cr
            g = y - 0.344136 * cb - 0.714136 * cr
            b = y + 1.772 * cb
            out[i, j, 0] = min(max(np.floor(r + 0.5), 0.0), 255.0)
            out[i, j, 1] = min(max(np.floor(g + 0.5), 0.0), 255.0)
            out[i, j, 2] = min(max(np.floor(b + 0.5), 0.0), 255.0)
    return out


def _ycbcr_to_rgb_np(ycc):
    f = ycc.astype(np.float64)
    y, cb, cr = f[..., 0], f[..., 1] - 128.0, f[..., 2] - 128.0
    r = y + 1.402 * cr
    g = y - 0.344136 * cb - 0.714136 * cr
    b = y + 1.772 * cb
    out = np.stack([r, g, b], axis=-1)
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


_rgb_to_ycbcr = pick(_rgb_to_ycbcr_nb, _rgb_to_ycbcr_np)
_ycbcr_to_rgb = pick(_ycbcr_to_rgb_nb, _ycbcr_to_rgb_np)


def rgb_to_ycbcr(img):
    """Convert 8-bit RGB to 8-bit full-range YCbCr (rounded, clamped).

    Accepts a bare uint8 array (assumed RGB) or an ``ImageTensor`` tagged RGB;
    the return type follows the input.
    """
    arr, wrapped = _unwrap(img, RGB)
    _check_planes(arr)
    out = _rgb_to_ycbcr(np.ascontiguousarray(arr, dtype=np.uint8))
    return ImageTensor(out, YCBCR) if wrapped else out


def ycbcr_to_rgb(img):
    arr, wrapped = _unwrap(img, YCBCR)
    _check_planes(arr)
    out = _ycbcr_to_rgb(np.ascontiguousarray(arr, dtype=np.uint8))
    return ImageTensor(out, RGB) if wrapped else out


def subsample_420(img):
    """Split YCbCr into a full-size luma plane and two half-size chroma planes.

    Each chroma sample is the 2x2 mean rounded half-up. Dimensions must be even.
    """
    arr, _ = _unwrap(img, YCBCR)
    _check_planes(arr)
    h, w = arr.shape[:2]
    if h % 2 or w % 2:
        raise CodecError(
            f"4:2:0 subsampling needs even dimensions, got {h}x{w}; pad the image first"
        )
    y = arr[..., 0].astype(np.uint8)
    planes = [y]
    for c in (1, 2):
        p = arr[..., c].astype(np.int32)
        s = p[0::2, 0::2] + p[0::2, 1::2] + p[1::2, 0::2] + p[1::2, 1::2]
        planes.append(((s + 2) // 4).astype(np.uint8))
    return tuple(planes)


def upsample_420(planes):
    """Nearest-neighbour 2x replication of the chroma planes back to luma size."""
    y, cb, cr = (np.asarray(p) for p in planes)
    h, w = y.shape
    for p in (cb, cr):
        if p.shape != ((h + 1) // 2, (w + 1) // 2):
            raise CodecError(f"chroma plane {p.shape} does not match luma {y.shape}")
    up = [np.repeat(np.repeat(p, 2, axis=0), 2, axis=1)[:h, :w] for p in (cb, cr)]
    return np.stack([y, up[0], up[1]], axis=-1).astype(np.uint8)
