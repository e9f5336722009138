"""Baseline JFIF stream writing/parsing and the full compress/decompress pipeline."""
import struct
from dataclasses import dataclass

import numpy as np

from . import huffman
from .blocks import (BlockGrid, QuantTableSet, ZIGZAG, UNZIGZAG, dct_2d, dequantize,
                     from_blocks, idct_2d, quantize, scale_quant_tables, to_blocks)
from .color import ImageTensor, RGB, rgb_to_ycbcr, subsample_420, ycbcr_to_rgb
from .errors import CodecError, JpegEncodeError, JpegParseError

SOI, EOI = 0xD8, 0xD9
SOF0, SOF1, SOF2 = 0xC0, 0xC1, 0xC2
DHT, DQT, DRI, SOS = 0xC4, 0xDB, 0xDD, 0xDA
APP0, COM = 0xE0, 0xFE

DEFAULT_QUALITY = 1

_STD_TABLES = {
    (0, 0): huffman.DC_LUMA, (0, 1): huffman.DC_CHROMA,
    (1, 0): huffman.AC_LUMA, (1, 1): huffman.AC_CHROMA,
}


@dataclass(frozen=True)
class JpegBitstream:
    data: bytes
    source_dims: tuple

    @property
    def encoded_size(self):
        return len(self.data)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.data)

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            data = fh.read()
        return cls(data, read_dimensions(data))


# ---------------------------------------------------------------- writing

def _segment(marker, payload):
    return struct.pack(">BBH", 0xFF, marker, len(payload) + 2) + payload


def _headers(grid, tables):
    out = [bytes([0xFF, SOI])]
    out.append(_segment(APP0, b"JFIF\x00" + struct.pack(">BBBHHBB", 1, 1, 0, 1, 1, 0, 0)))
    dqt = b""
    for tid, t in enumerate((tables.luma, tables.chroma)):
        dqt += bytes([tid]) + bytes(t.reshape(64)[ZIGZAG].astype(np.uint8))
    out.append(_segment(DQT, dqt))
    sof = struct.pack(">BHHB", 8, grid.height, grid.width, len(grid.components))
    for i, (h, v) in enumerate(grid.sampling):
        sof += bytes([i + 1, (h << 4) | v, 0 if i == 0 else 1])
    out.append(_segment(SOF0, sof))
    dht = b""
    for (cls, tid), (bits, vals) in _STD_TABLES.items():
        dht += bytes([(cls << 4) | tid]) + bytes(bits) + bytes(vals)
    out.append(_segment(DHT, dht))
    sos = bytes([len(grid.components)])
    for i in range(len(grid.components)):
        sos += bytes([i + 1, 0x00 if i == 0 else 0x11])
    sos += bytes([0, 63, 0])
    out.append(_segment(SOS, sos))
    return b"".join(out)


def _scan_layout(grid):
    hs = np.array([s[0] for s in grid.sampling], np.int64)
    vs = np.array([s[1] for s in grid.sampling], np.int64)
    hmax, vmax = hs.max(), vs.max()
    mcus_x = -(-grid.width // (8 * hmax))
    mcus_y = -(-grid.height // (8 * vmax))
    counts = [c.shape[0] * c.shape[1] for c in grid.components]
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
    blocks_x = np.array([c.shape[1] for c in grid.components], np.int64)
    for c, (h, v) in zip(grid.components, grid.sampling):
        if c.shape[:2] != (mcus_y * v, mcus_x * h):
            raise CodecError(f"component grid {c.shape[:2]} does not tile {mcus_y}x{mcus_x} MCUs")
    return offsets, blocks_x, hs, vs, int(mcus_x), int(mcus_y)


def encode_entropy(grid, tables):
    """Huffman-code a quantised BlockGrid into a complete baseline JFIF stream."""
    if len(grid.components) != 3:
        raise JpegEncodeError("encoder writes 3-component YCbCr streams only")
    offsets, blocks_x, hs, vs, mcus_x, mcus_y = _scan_layout(grid)
    coefs = np.concatenate([c.reshape(-1, 64)[:, ZIGZAG] for c in grid.components]).astype(np.int64)
    codes = np.zeros((4, 256), np.int64)
    sizes = np.zeros((4, 256), np.int64)
    # slots 0/1: DC luma/chroma, 2/3: AC luma/chroma
    for slot, (bits, vals) in enumerate((huffman.DC_LUMA, huffman.DC_CHROMA,
                                         huffman.AC_LUMA, huffman.AC_CHROMA)):
        codes[slot], sizes[slot] = huffman.canonical_codes(bits, vals)
    dc_sel = np.array([0, 1, 1], np.int64)
    ac_sel = np.array([2, 3, 3], np.int64)
    # worst case: every coefficient costs 16 + 11 bits, doubled by stuffing
    out = np.zeros(coefs.shape[0] * 64 * 7 + 4096, np.uint8)
    n = huffman.encode_scan(coefs, offsets, blocks_x, hs, vs, dc_sel, ac_sel,
                            mcus_x, mcus_y, codes, sizes, out)
    if n == huffman.ERR_DC_RANGE:
        raise JpegEncodeError("DC difference exceeds baseline category 11")
    if n == huffman.ERR_AC_RANGE:
        raise JpegEncodeError("AC coefficient exceeds baseline category 10")
    if n < 0:
        raise JpegEncodeError(f"scan encoder failed with code {n}")
    data = _headers(grid, tables) + out[:n].tobytes() + bytes([0xFF, EOI])
    return JpegBitstream(data, (grid.height, grid.width))


# ---------------------------------------------------------------- parsing

def _u16(data, pos):
    if pos + 2 > len(data):
        raise JpegParseError("truncated segment length", pos)
    return (data[pos] << 8) | data[pos + 1]


def read_dimensions(data):
    pos = 2
    while pos + 4 <= len(data):
        if data[pos] != 0xFF:
            break
        marker = data[pos + 1]
        if marker in (SOF0, SOF1, SOF2):
            return _u16(data, pos + 5), _u16(data, pos + 7)
        pos += 2 + _u16(data, pos + 2)
    raise JpegParseError("no frame header found")


def _parse(data):
    data = bytes(data)
    if len(data) < 4 or data[0] != 0xFF or data[1] != SOI:
        raise JpegParseError("missing SOI marker", 0)
    qt = {}
    ht = {}
    frame = None
    pos = 2
    while True:
        if pos + 2 > len(data):
            raise JpegParseError("stream ended before EOI", pos)
        if data[pos] != 0xFF:
            raise JpegParseError("expected marker", pos)
        marker = data[pos + 1]
        if marker == 0xFF:
            pos += 1
            continue
        if marker == EOI:
            raise JpegParseError("EOI before scan data", pos)
        length = _u16(data, pos + 2)
        seg_end = pos + 2 + length
        if length < 2 or seg_end > len(data):
            raise JpegParseError(f"segment 0x{marker:02X} overruns the stream", pos)
        body = data[pos + 4:seg_end]
        if marker == DQT:
            i = 0
            while i < len(body):
                pq, tq = body[i] >> 4, body[i] & 15
                n = 128 if pq else 64
                if i + 1 + n > len(body):
                    raise JpegParseError("truncated DQT", pos)
                raw = body[i + 1:i + 1 + n]
                vals = (np.frombuffer(raw, ">u2") if pq else np.frombuffer(raw, np.uint8)).astype(np.int32)
                qt[tq] = vals[UNZIGZAG].reshape(8, 8)
                i += 1 + n
        elif marker == DHT:
            i = 0
            while i < len(body):
                if i + 17 > len(body):
                    raise JpegParseError("truncated DHT", pos)
                tc, th = body[i] >> 4, body[i] & 15
                bits = list(body[i + 1:i + 17])
                n = sum(bits)
                if i + 17 + n > len(body):
                    raise JpegParseError("truncated DHT", pos)
                ht[(tc, th)] = (bits, list(body[i + 17:i + 17 + n]))
                i += 17 + n
        elif marker in (SOF0, SOF1):
            if len(body) < 6:
                raise JpegParseError("truncated SOF", pos)
            precision, h, w, nc = struct.unpack(">BHHB", body[:6])
            if precision != 8:
                raise JpegParseError(f"unsupported sample precision {precision}", pos)
            if len(body) < 6 + 3 * nc:
                raise JpegParseError("truncated SOF", pos)
            comps = [(body[6 + 3 * k], body[7 + 3 * k] >> 4, body[7 + 3 * k] & 15, body[8 + 3 * k])
                     for k in range(nc)]
            frame = (h, w, comps)
        elif 0xC2 <= marker <= 0xCF and marker not in (DHT, 0xC8, 0xCC):
            raise JpegParseError(f"unsupported frame type 0x{marker:02X} (baseline only)", pos)
        elif marker == DRI:
            if _u16(body, 0):
                raise JpegParseError("restart intervals are not supported", pos)
        elif marker == SOS:
            if frame is None:
                raise JpegParseError("scan before frame header", pos)
            ns = body[0]
            sel = [(body[1 + 2 * k], body[2 + 2 * k] >> 4, body[2 + 2 * k] & 15) for k in range(ns)]
            return qt, ht, frame, sel, seg_end
        pos = seg_end


def decode_entropy(bs):
    """Parse a baseline stream back into (quantised BlockGrid, QuantTableSet)."""
    data = bs.data if isinstance(bs, JpegBitstream) else bytes(bs)
    qt, ht, (height, width, comps), sel, scan_start = _parse(data)
    if [s[0] for s in sel] != [c[0] for c in comps]:
        raise JpegParseError("non-interleaved or partial scans are not supported")
    if height == 0 or width == 0:
        raise JpegParseError("zero image dimension")
    sampling = tuple((c[1], c[2]) for c in comps)
    hmax = max(s[0] for s in sampling)
    vmax = max(s[1] for s in sampling)
    mcus_x = -(-width // (8 * hmax))
    mcus_y = -(-height // (8 * vmax))
    if len(comps) == 1:
        # single-component scans are not interleaved: one block per MCU
        sampling = ((1, 1),)
        mcus_x, mcus_y = -(-width // 8), -(-height // 8)
    shapes = [(mcus_y * v, mcus_x * h) for h, v in sampling]
    counts = [a * b for a, b in shapes]
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
    blocks_x = np.array([s[1] for s in shapes], np.int64)
    hs = np.array([s[0] for s in sampling], np.int64)
    vs = np.array([s[1] for s in sampling], np.int64)
    slots = []
    dc_sel, ac_sel = [], []
    for _, td, ta in sel:
        for key in ((0, td), (1, ta)):
            if key not in ht:
                raise JpegParseError(f"scan references undefined Huffman table {key}")
            if key not in slots:
                slots.append(key)
        dc_sel.append(slots.index((0, td)))
        ac_sel.append(slots.index((1, ta)))
    mins, maxs, ptrs, vals = huffman.stack_decoder_tables([ht[k] for k in slots])
    out = np.zeros((sum(counts), 64), np.int64)
    buf = np.frombuffer(data, np.uint8)
    end = huffman.decode_scan(buf, scan_start, offsets, blocks_x, hs, vs,
                              np.array(dc_sel, np.int64), np.array(ac_sel, np.int64),
                              mcus_x, mcus_y, mins, maxs, ptrs, vals, out)
    if end < 0:
        reason = {huffman.ERR_TRUNCATED: "truncated scan data",
                  huffman.ERR_MARKER: "unexpected marker inside scan (truncated stream?)",
                  huffman.ERR_BAD_CODE: "invalid Huffman code"}.get(int(end), f"error {end}")
        raise JpegParseError(reason)
    pos = int(end)
    while pos < len(data) and data[pos] == 0xFF and pos + 1 < len(data) and data[pos + 1] == 0xFF:
        pos += 1
    if pos + 2 > len(data) or data[pos] != 0xFF or data[pos + 1] != EOI:
        raise JpegParseError("missing EOI marker after scan", pos)
    for _, _, _, tq in comps:
        if tq not in qt:
            raise JpegParseError(f"undefined quantisation table {tq}")
    components = []
    for k, shape in enumerate(shapes):
        zz = out[offsets[k]:offsets[k] + counts[k]]
        components.append(zz[:, UNZIGZAG].reshape(shape + (8, 8)).astype(np.int32))
    luma = qt[comps[0][3]]
    chroma = qt[comps[1][3]] if len(comps) > 1 else luma
    grid = BlockGrid(components, height, width, sampling,
                     {"qt": [qt[c[3]] for c in comps]})
    return grid, QuantTableSet(luma, chroma, quality=None)


# ---------------------------------------------------------------- pipeline

def _as_rgb(img):
    if isinstance(img, ImageTensor):
        if img.colorspace != RGB:
            raise CodecError(f"compress expects RGB input, got {img.colorspace}")
        img = img.data
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise CodecError(f"expected H x W x 3 RGB array, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if arr.min() < 0 or arr.max() > 255:
            raise CodecError("RGB samples must lie in [0, 255]")
        arr = np.round(arr).astype(np.uint8)
    return arr


def forward_blocks(img, quality=DEFAULT_QUALITY):
    """Colour convert, subsample, block, DCT and quantise. Returns (grid, tables)."""
    rgb = _as_rgb(img)
    h, w = rgb.shape[:2]
    if h < 8 or w < 8:
        raise CodecError(f"image must be at least 8x8, got {h}x{w}")
    if h % 2 or w % 2:
        raise CodecError(f"image dimensions must be even, got {h}x{w}; pad the image first")
    tables = scale_quant_tables(quality)
    ph, pw = -h % 16, -w % 16
    if ph or pw:
        rgb = np.pad(rgb, ((0, ph), (0, pw), (0, 0)), mode="edge")
    planes = subsample_420(rgb_to_ycbcr(rgb))
    coeffs = BlockGrid([dct_2d(to_blocks(p.astype(np.float64))) for p in planes], h, w)
    return quantize(coeffs, tables), tables


def compress(img, quality=DEFAULT_QUALITY):
    """Encode an 8-bit RGB image as a baseline 4:2:0 JFIF stream."""
    grid, tables = forward_blocks(img, quality)
    return encode_entropy(grid, tables)


def reconstruct(grid, qtables):
    """Dequantise, inverse-DCT and colour convert a decoded BlockGrid to RGB."""
    planes = []
    for comp, table in zip(grid.components, qtables):
        samples = idct_2d(comp.astype(np.float64) * table)
        planes.append(np.floor(from_blocks(samples) + 0.5).astype(np.uint8))
    h, w = grid.height, grid.width
    if len(planes) == 1:
        y = planes[0][:h, :w]
        return np.repeat(y[..., None], 3, axis=2)
    hmax = max(s[0] for s in grid.sampling)
    vmax = max(s[1] for s in grid.sampling)
    full = []
    for p, (sh, sv) in zip(planes, grid.sampling):
        p = np.repeat(np.repeat(p, vmax // sv, axis=0), hmax // sh, axis=1)
        full.append(p[:h, :w])
    return ycbcr_to_rgb(np.stack(full, axis=-1))


def decompress(bs):
    """Decode a baseline JPEG stream (ours or a third party's) to an RGB uint8 array."""
    grid, tables = decode_entropy(bs)
    return reconstruct(grid, grid.extra["qt"])


def roundtrip(img, quality=DEFAULT_QUALITY):
    """C(x): compress then decompress. Returns (decoded RGB, bitstream)."""
    bs = compress(img, quality)
    return decompress(bs), bs
