"""Baseline Huffman entropy coding of quantised blocks.

The scan kernels work on flat arrays so they compile under numba; the
numpy backend uses a vectorised bit packer for encoding and runs the
decoder interpreted.
"""
import numpy as np

from .._accel import njit, pick

# Annex K.3: (code-length counts for lengths 1..16, symbol values)
DC_LUMA = (
    [0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0],
    list(range(12)),
)
DC_CHROMA = (
    [0, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0],
    list(range(12)),
)
AC_LUMA = (
    [0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 0x7D],
    [
        0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41, 0x06,
        0x13, 0x51, 0x61, 0x07, 0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xA1, 0x08,
        0x23, 0x42, 0xB1, 0xC1, 0x15, 0x52, 0xD1, 0xF0, 0x24, 0x33, 0x62, 0x72,
        0x82, 0x09, 0x0A, 0x16, 0x17, 0x18, 0x19, 0x1A, 0x25, 0x26, 0x27, 0x28,
        0x29, 0x2A, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3A, 0x43, 0x44, 0x45,
        0x46, 0x47, 0x48, 0x49, 0x4A, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59,
        0x5A, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69, 0x6A, 0x73, 0x74, 0x75,
        0x76, 0x77, 0x78, 0x79, 0x7A, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89,
        0x8A, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9A, 0xA2, 0xA3,
        0xA4, 0xA5, 0xA6, 0xA7, 0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4, 0xB5, 0xB6,
        0xB7, 0xB8, 0xB9, 0xBA, 0xC2, 0xC3, 0xC4, 0xC5, 0xC6, 0xC7, 0xC8, 0xC9,
        0xCA, 0xD2, 0xD3, 0xD4, 0xD5, 0xD6, 0xD7, 0xD8, 0xD9, 0xDA, 0xE1, 0xE2,
        0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8, 0xE9, 0xEA, 0xF1, 0xF2, 0xF3, 0xF4,
        0xF5, 0xF6, 0xF7, 0xF8, 0xF9, 0xFA,
    ],
)
AC_CHROMA = (
    [0, 2, 1, 2, 4, 4, 3, 4, 7, 5, 4, 4, 0, 1, 2, 0x77],
    [
        0x00, 0x01, 0x02, 0x03, 0x11, 0x04, 0x05, 0x21, 0x31, 0x06, 0x12, 0x41,
        0x51, 0x07, 0x61, 0x71, 0x13, 0x22, 0x32, 0x81, 0x08, 0x14, 0x42, 0x91,
        0xA1, 0xB1, 0xC1, 0x09, 0x23, 0x33, 0x52, 0xF0, 0x15, 0x62, 0x72, 0xD1,
        0x0A, 0x16, 0x24, 0x34, 0xE1, 0x25, 0xF1, 0x17, 0x18, 0x19, 0x1A, 0x26,
        0x27, 0x28, 0x29, 0x2A, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3A, 0x43, 0x44,
        0x45, 0x46, 0x47, 0x48, 0x49, 0x4A, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58,
        0x59, 0x5A, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69, 0x6A, 0x73, 0x74,
        0x75, 0x76, 0x77, 0x78, 0x79, 0x7A, 0x82, 0x83, 0x84, 0x85, 0x86, 0x87,
        0x88, 0x89, 0x8A, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9A,
        0xA2, 0xA3, 0xA4, 0xA5, 0xA6, 0xA7, 0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4,
        0xB5, 0xB6, 0xB7, 0xB8, 0xB9, 0xBA, 0xC2, 0xC3, 0xC4, 0xC5, 0xC6, 0xC7,
        0xC8, 0xC9, 0xCA, 0xD2, 0xD3, 0xD4, 0xD5, 0xD6, 0xD7, 0xD8, 0xD9, 0xDA,
        0xE2, 0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8, 0xE9, 0xEA, 0xF2, 0xF3, 0xF4,
        0xF5, 0xF6, 0xF7, 0xF8, 0xF9, 0xFA,
    ],
)

# error codes returned by the kernels
ERR_DC_RANGE = -1
ERR_AC_RANGE = -2
ERR_TRUNCATED = -3
ERR_MARKER = -4
ERR_BAD_CODE = -5
ERR_OVERFLOW = -6


def canonical_codes(bits, vals):
    """Annex C code assignment: returns (code, size) lookup arrays indexed by symbol."""
    codes = np.zeros(256, np.int64)
    sizes = np.zeros(256, np.int64)
    code = 0
    k = 0
    for length in range(1, 17):
        for _ in range(bits[length - 1]):
            codes[vals[k]] = code
            sizes[vals[k]] = length
            code += 1
            k += 1
        code <<= 1
    return codes, sizes


def decoder_tables(bits, vals):
    """Annex F.2.2.3 tables: (mincode, maxcode, valptr, huffval), indexed by length."""
    mincode = np.zeros(17, np.int64)
    maxcode = np.full(18, -1, np.int64)
    valptr = np.zeros(17, np.int64)
    huffval = np.zeros(256, np.int64)
    huffval[: len(vals)] = vals
    code = 0
    k = 0
    for length in range(1, 17):
        n = bits[length - 1]
        if n:
            valptr[length] = k
            mincode[length] = code
            code += n
            k += n
            maxcode[length] = code - 1
        code <<= 1
    maxcode[17] = 0x7FFFFFFF
    return mincode, maxcode, valptr, huffval


def stack_decoder_tables(tables):
    """Stack per-slot decoder tables (list of (bits, vals) or None) into kernel arrays."""
    n = len(tables)
    mins = np.zeros((n, 17), np.int64)
    maxs = np.full((n, 18), -1, np.int64)
    ptrs = np.zeros((n, 17), np.int64)
    vals = np.zeros((n, 256), np.int64)
    for i, t in enumerate(tables):
        if t is None:
            continue
        mins[i], maxs[i], ptrs[i], vals[i] = decoder_tables(*t)
    return mins, maxs, ptrs, vals


def magnitude_category(v):
    """Number of bits needed for |v| (0 for v == 0)."""
    return int(abs(int(v))).bit_length()


# ---------------------------------------------------------------- encoding

@njit
def _category(v):
    a = -v if v < 0 else v
    n = 0
    while a:
        n += 1
        a >>= 1
    return n


@njit
def _put(out, state, code, size):
    # state = [byte position, bit accumulator, bits in accumulator]
    acc = (state[1] << size) | (code & ((1 << size) - 1))
    nb = state[2] + size
    pos = state[0]
    while nb >= 8:
        byte = (acc >> (nb - 8)) & 0xFF
        out[pos] = byte
        pos += 1
        if byte == 0xFF:
            out[pos] = 0
            pos += 1
        nb -= 8
    state[0] = pos
    state[1] = acc & ((1 << nb) - 1)
    state[2] = nb


@njit
def _encode_scan_nb(coefs, offsets, blocks_x, hs, vs, dc_sel, ac_sel,
                    mcus_x, mcus_y, codes, sizes, out):
    ncomp = offsets.shape[0]
    state = np.zeros(3, np.int64)
    pred = np.zeros(ncomp, np.int64)
    for my in range(mcus_y):
        for mx in range(mcus_x):
            for c in range(ncomp):
                dt = dc_sel[c]
                at = ac_sel[c]
                for v in range(vs[c]):
                    for h in range(hs[c]):
                        b = offsets[c] + (my * vs[c] + v) * blocks_x[c] + mx * hs[c] + h
                        dc = np.int64(coefs[b, 0])
                        diff = dc - pred[c]
                        pred[c] = dc
                        s = _category(diff)
                        if s > 11:
                            return ERR_DC_RANGE
                        _put(out, state, codes[dt, s], sizes[dt, s])
                        if s:
                            _put(out, state, diff if diff > 0 else diff - 1, s)
                        run = 0
                        for k in range(1, 64):
                            a = np.int64(coefs[b, k])
                            if a == 0:
                                run += 1
                                continue
                            while run > 15:
                                _put(out, state, codes[at, 0xF0], sizes[at, 0xF0])
                                run -= 16
                            s = _category(a)
                            if s > 10:
                                return ERR_AC_RANGE
                            sym = (run << 4) | s
                            _put(out, state, codes[at, sym], sizes[at, sym])
                            _put(out, state, a if a > 0 else a - 1, s)
                            run = 0
                        if run:
                            _put(out, state, codes[at, 0], sizes[at, 0])
            if state[0] > out.shape[0] - 1024:
                return ERR_OVERFLOW
    if state[2]:
        pad = 8 - state[2]
        _put(out, state, (1 << pad) - 1, pad)
    return state[0]


def _pack_bits(values, lengths):
    """Concatenate variable-length codes MSB-first, pad with 1s, byte-stuff 0xFF."""
    values = np.asarray(values, np.int64)
    lengths = np.asarray(lengths, np.int64)
    total = int(lengths.sum())
    owner = np.repeat(np.arange(len(values)), lengths)
    starts = np.cumsum(lengths) - lengths
    shift = lengths[owner] - 1 - (np.arange(total) - starts[owner])
    bits = ((values[owner] >> shift) & 1).astype(np.uint8)
    pad = (-total) % 8
    bits = np.concatenate([bits, np.ones(pad, np.uint8)])
    data = np.packbits(bits)
    ff = np.flatnonzero(data == 0xFF)
    return np.insert(data, ff + 1, 0)


def _encode_scan_np(coefs, offsets, blocks_x, hs, vs, dc_sel, ac_sel,
                    mcus_x, mcus_y, codes, sizes, out):
    vals = []
    lens = []
    pred = [0] * len(offsets)
    for my in range(mcus_y):
        for mx in range(mcus_x):
            for c in range(len(offsets)):
                dt, at = dc_sel[c], ac_sel[c]
                for v in range(vs[c]):
                    for h in range(hs[c]):
                        b = offsets[c] + (my * vs[c] + v) * blocks_x[c] + mx * hs[c] + h
                        blk = coefs[b].astype(np.int64)
                        diff = int(blk[0]) - pred[c]
                        pred[c] = int(blk[0])
                        s = magnitude_category(diff)
                        if s > 11:
                            return ERR_DC_RANGE
                        vals.append(codes[dt, s])
                        lens.append(sizes[dt, s])
                        if s:
                            vals.append(diff if diff > 0 else diff - 1)
                            lens.append(s)
                        nz = np.flatnonzero(blk[1:]) + 1
                        prev = 0
                        for k in nz:
                            run = k - prev - 1
                            while run > 15:
                                vals.append(codes[at, 0xF0])
                                lens.append(sizes[at, 0xF0])
                                run -= 16
                            a = int(blk[k])
                            s = magnitude_category(a)
                            if s > 10:
                                return ERR_AC_RANGE
                            sym = (run << 4) | s
                            vals.append(codes[at, sym])
                            lens.append(sizes[at, sym])
                            vals.append(a if a > 0 else a - 1)
                            lens.append(s)
                            prev = k
                        if prev < 63:
                            vals.append(codes[at, 0])
                            lens.append(sizes[at, 0])
    data = _pack_bits(vals, lens)
    if len(data) > len(out):
        return ERR_OVERFLOW
    out[: len(data)] = data
    return len(data)


encode_scan = pick(_encode_scan_nb, _encode_scan_np)


# ---------------------------------------------------------------- decoding

@njit
def _bit(data, state):
    # state = [byte position, current byte, bits left in current byte, error]
    if state[2] == 0:
        pos = state[0]
        if pos >= data.shape[0]:
            state[3] = ERR_TRUNCATED
            return 0
        byte = np.int64(data[pos])
        pos += 1
        if byte == 0xFF:
            if pos >= data.shape[0]:
                state[3] = ERR_TRUNCATED
                return 0
            if data[pos] != 0:
                state[3] = ERR_MARKER
                return 0
            pos += 1
        state[0] = pos
        state[1] = byte
        state[2] = 8
    state[2] -= 1
    return (state[1] >> state[2]) & 1


@njit
def _receive(data, state, s):
    v = 0
    for _ in range(s):
        v = (v << 1) | _bit(data, state)
    return v


@njit
def _extend(v, s):
    if s and v < (1 << (s - 1)):
        return v - (1 << s) + 1
    return v


@njit
def _decode_symbol(data, state, mins, maxs, ptrs, vals, t):
    code = _bit(data, state)
    length = 1
    while code > maxs[t, length]:
        if length >= 16 or state[3]:
            state[3] = ERR_BAD_CODE if state[3] == 0 else state[3]
            return 0
        code = (code << 1) | _bit(data, state)
        length += 1
    if state[3]:
        return 0
    return vals[t, ptrs[t, length] + code - mins[t, length]]


@njit
def _decode_scan(data, start, offsets, blocks_x, hs, vs, dc_sel, ac_sel,
                 mcus_x, mcus_y, mins, maxs, ptrs, vals, out):
    """Decode an interleaved baseline scan into ``out`` (blocks, 64) zigzag order.

    Returns the byte offset just past the scan data, or a negative error code.
    """
    ncomp = offsets.shape[0]
    state = np.zeros(4, np.int64)
    state[0] = start
    pred = np.zeros(ncomp, np.int64)
    for my in range(mcus_y):
        for mx in range(mcus_x):
            for c in range(ncomp):
                dt = dc_sel[c]
                at = ac_sel[c]
                for v in range(vs[c]):
                    for h in range(hs[c]):
                        b = offsets[c] + (my * vs[c] + v) * blocks_x[c] + mx * hs[c] + h
                        s = _decode_symbol(data, state, mins, maxs, ptrs, vals, dt)
                        if state[3]:
                            return state[3]
                        if s > 11:
                            return ERR_BAD_CODE
                        diff = _extend(_receive(data, state, s), s)
                        pred[c] += diff
                        out[b, 0] = pred[c]
                        k = 1
                        while k < 64:
                            rs = _decode_symbol(data, state, mins, maxs, ptrs, vals, at)
                            if state[3]:
                                return state[3]
                            r = rs >> 4
                            s = rs & 15
                            if s == 0:
                                if r == 15:
                                    k += 16
                                    continue
                                break
                            k += r
                            if k > 63:
                                return ERR_BAD_CODE
                            out[b, k] = _extend(_receive(data, state, s), s)
                            k += 1
                        if state[3]:
                            return state[3]
    return state[0]


decode_scan = _decode_scan
