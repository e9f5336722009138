"""8x8 block transform stages: DCT, quantisation tables, quantisation, zigzag."""
from dataclasses import dataclass, field

import numpy as np

from .._accel import njit, pick
from .errors import CodecError

# ISO/IEC 10918-1 Annex K, tables K.1 and K.2 (natural order)
BASE_LUMA = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.int32)

BASE_CHROMA = np.array([
    [17, 18, 24, 47, 99, 99, 99, 99],
    [18, 21, 26, 66, 99, 99, 99, 99],
    [24, 26, 56, 99, 99, 99, 99, 99],
    [47, 66, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
], dtype=np.int32)

# ZIGZAG[k] is the natural (row-major) index of the k-th scanned coefficient.
ZIGZAG = np.array([
    0, 1, 8, 16, 9, 2, 3, 10,
    17, 24, 32, 25, 18, 11, 4, 5,
    12, 19, 26, 33, 40, 48, 41, 34,
    27, 20, 13, 6, 7, 14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36,
    29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46,
    53, 60, 61, 54, 47, 55, 62, 63,
], dtype=np.int64)
UNZIGZAG = np.argsort(ZIGZAG)


def _dct_matrix():
    k = np.arange(8)[:, None]
    n = np.arange(8)[None, :]
    m = np.cos((2 * n + 1) * k * np.pi / 16) * np.sqrt(2 / 8)
    m[0, :] = np.sqrt(1 / 8)
    return m


DCT_MATRIX = _dct_matrix()


@dataclass
class QuantTableSet:
    luma: np.ndarray
    chroma: np.ndarray
    quality: int = 50

    def __post_init__(self):
        for t in (self.luma, self.chroma):
            if t.shape != (8, 8) or t.min() < 1 or t.max() > 255:
                raise CodecError("quantisation tables must be 8x8 with entries in [1, 255]")

    def for_component(self, index):
        return self.luma if index == 0 else self.chroma


def scale_quant_tables(quality):
    """IJG quality scaling of the Annex K base tables, clamped to baseline range."""
    if isinstance(quality, bool) or int(quality) != quality or not 1 <= quality <= 100:
        raise CodecError(f"quality must be an integer in [1, 100], got {quality!r}")
    quality = int(quality)
    scale = 5000 // quality if quality < 50 else 200 - 2 * quality

    def scaled(base):
        return np.clip((base * scale + 50) // 100, 1, 255).astype(np.int32)

    return QuantTableSet(scaled(BASE_LUMA), scaled(BASE_CHROMA), quality)


@dataclass
class BlockGrid:
    """Per-component grids of 8x8 blocks, each shaped (blocks_y, blocks_x, 8, 8).

    ``height``/``width`` are the source image dimensions; grids are padded up
    to whole MCUs. ``sampling`` holds the (h, v) factor of each component.
    """

    components: list
    height: int
    width: int
    sampling: tuple = ((2, 2), (1, 1), (1, 1))
    extra: dict = field(default_factory=dict)

    @property
    def grid_dims(self):
        return [c.shape[:2] for c in self.components]

    def block_count(self):
        return sum(c.shape[0] * c.shape[1] for c in self.components)

    def map(self, fn):
        return BlockGrid([fn(c, i) for i, c in enumerate(self.components)],
                         self.height, self.width, self.sampling, dict(self.extra))


def to_blocks(plane):
    """Cut an (H, W) plane with H, W multiples of 8 into (H/8, W/8, 8, 8)."""
    h, w = plane.shape
    if h % 8 or w % 8:
        raise CodecError(f"plane {plane.shape} is not a whole number of blocks")
    return plane.reshape(h // 8, 8, w // 8, 8).swapaxes(1, 2)


def from_blocks(blocks):
    by, bx = blocks.shape[:2]
    return blocks.swapaxes(1, 2).reshape(by * 8, bx * 8)


@njit
def _fdct_nb(blocks, m):
    n = blocks.shape[0]
    out = np.empty((n, 8, 8), np.float64)
    tmp = np.empty((8, 8), np.float64)
    for b in range(n):
        for i in range(8):
            for j in range(8):
                s = 0.0
                for k in range(8):
                    s += m[i, k] * (blocks[b, k, j] - 128.0)
                tmp[i, j] = s
        for i in range(8):
            for j in range(8):
                s = 0.0
                for k in range(8):
                    s += tmp[i, k] * m[j, k]
                out[b, i, j] = s
    return out


# The numpy kernels accumulate over k in the same order as the loops above so
# both backends produce bit-identical coefficients (BLAS matmul does not).
def _fdct_np(blocks, m):
    x = blocks - 128.0
    tmp = np.zeros_like(x)
    for k in range(8):
        tmp += m[None, :, k, None] * x[:, None, k, :]
    out = np.zeros_like(x)
    for k in range(8):
        out += tmp[:, :, k, None] * m[None, None, :, k]
    return out


@njit
def _idct_nb(coefs, m):
    n = coefs.shape[0]
    out = np.empty((n, 8, 8), np.float64)
    tmp = np.empty((8, 8), np.float64)
    for b in range(n):
        for i in range(8):
            for j in range(8):
                s = 0.0
                for k in range(8):
                    s += m[k, i] * coefs[b, k, j]
                tmp[i, j] = s
        for i in range(8):
            for j in range(8):
                s = 0.0
                for k in range(8):
                    s += tmp[i, k] * m[k, j]
                out[b, i, j] = min(max(s + 128.0, 0.0), 255.0)
    return out


def _idct_np(coefs, m):
    tmp = np.zeros_like(coefs)
    for k in range(8):
        tmp += m[None, k, :, None] * coefs[:, None, k, :]
    out = np.zeros_like(coefs)
    for k in range(8):
        out += tmp[:, :, k, None] * m[None, None, k, :]
    return np.clip(out + 128.0, 0.0, 255.0)


_fdct = pick(_fdct_nb, _fdct_np)
_idct = pick(_idct_nb, _idct_np)


def dct_2d(block):
    """Orthonormal type-II DCT of 8x8 sample blocks after the -128 level shift.

    Works on a single (8, 8) block or any stack (..., 8, 8).
    """
    arr = np.asarray(block, dtype=np.float64)
    flat = np.ascontiguousarray(arr.reshape(-1, 8, 8))
    return _fdct(flat, DCT_MATRIX).reshape(arr.shape)


def idct_2d(coeffs):
    """Inverse of :func:`dct_2d` with +128 unshift, clamped to [0, 255] (unrounded)."""
    arr = np.asarray(coeffs, dtype=np.float64)
    flat = np.ascontiguousarray(arr.reshape(-1, 8, 8))
    return _idct(flat, DCT_MATRIX).reshape(arr.shape)


def _round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize(coeffs, tables):
    """Divide by the table and round half away from zero.

    ``coeffs`` is a BlockGrid (component 0 uses the luma table) or a bare
    block array paired with a single 8x8 table.
    """
    if isinstance(coeffs, BlockGrid):
        return coeffs.map(lambda c, i: _round_half_away(c / tables.for_component(i)).astype(np.int32))
    return _round_half_away(np.asarray(coeffs, dtype=np.float64) / tables).astype(np.int32)


def dequantize(q, tables):
    if isinstance(q, BlockGrid):
        return q.map(lambda c, i: (c.astype(np.float64) * tables.for_component(i)))
    return np.asarray(q, dtype=np.float64) * tables


def zigzag(block):
    """Scan (..., 8, 8) blocks into (..., 64) vectors in JPEG zigzag order."""
    arr = np.asarray(block)
    return arr.reshape(arr.shape[:-2] + (64,))[..., ZIGZAG]


def inverse_zigzag(vec):
    arr = np.asarray(vec)
    return arr[..., UNZIGZAG].reshape(arr.shape[:-1] + (8, 8))
