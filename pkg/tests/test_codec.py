import io
import itertools
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image

from jpegrestore import codec
from jpegrestore.codec import huffman
from jpegrestore.codec.blocks import BlockGrid, from_blocks, to_blocks
from conftest import libjpeg_planes, our_planes


def bt601(rgb):
    r, g, b = (float(v) for v in rgb)
    return (0.299 * r + 0.587 * g + 0.114 * b,
            -0.168736 * r - 0.331264 * g + 0.5 * b + 128,
            0.5 * r - 0.418688 * g - 0.081312 * b + 128)


def px(rgb):
    return np.array(rgb, dtype=np.uint8).reshape(1, 1, 3)


# ---------------------------------------------------------------- colour

@pytest.mark.parametrize("rgb,expected", [
    ((0, 0, 0), (0, 128, 128)),
    ((255, 255, 255), (255, 128, 128)),
])
def test_rgb_to_ycbcr_achromatic(rgb, expected):
    assert tuple(codec.rgb_to_ycbcr(px(rgb))[0, 0]) == expected


def test_rgb_to_ycbcr_red_matches_matrix():
    y, cb, cr = bt601((255, 0, 0))
    oracle = tuple(int(min(255, max(0, np.floor(v + 0.5)))) for v in (y, cb, cr))
    got = tuple(int(v) for v in codec.rgb_to_ycbcr(px((255, 0, 0)))[0, 0])
    assert got == oracle == (76, 85, 255)


def test_ycbcr_fixed_points():
    assert tuple(codec.ycbcr_to_rgb(px((128, 128, 128)))[0, 0]) == (128, 128, 128)
    assert tuple(codec.ycbcr_to_rgb(px((0, 128, 128)))[0, 0]) == (0, 0, 0)


def test_colour_round_trip_exhaustive():
    worst = 0
    gg, bb = np.meshgrid(np.arange(256), np.arange(256), indexing="ij")
    for r in range(256):
        img = np.stack([np.full_like(gg, r), gg, bb], -1).astype(np.uint8)
        back = codec.ycbcr_to_rgb(codec.rgb_to_ycbcr(img))
        worst = max(worst, int(np.abs(back.astype(int) - img).max()))
    assert worst <= 1


def test_colourspace_tag_enforced():
    t = codec.ImageTensor(np.zeros((8, 8, 3), np.uint8), "YCbCr")
    with pytest.raises(codec.ColorspaceError):
        codec.rgb_to_ycbcr(t)
    out = codec.rgb_to_ycbcr(codec.ImageTensor(np.zeros((8, 8, 3), np.uint8)))
    assert out.colorspace == "YCbCr"


def test_subsample_examples():
    ycc = np.zeros((2, 2, 3), np.uint8)
    ycc[..., 1] = [[100, 100], [200, 200]]
    ycc[..., 2] = [[0, 255], [255, 0]]
    y, cb, cr = codec.subsample_420(ycc)
    assert cb.shape == (1, 1) and cb[0, 0] == 150
    assert cr[0, 0] == 128  # 127.5 rounds half up
    const = np.full((16, 8, 3), 77, np.uint8)
    y, cb, cr = codec.subsample_420(const)
    assert cb.shape == (8, 4) and np.all(cb == 77) and np.all(cr == 77)


def test_subsample_rejects_odd():
    with pytest.raises(codec.CodecError, match="pad"):
        codec.subsample_420(np.zeros((3, 4, 3), np.uint8))


def test_upsample_examples():
    y = np.zeros((2, 2), np.uint8)
    out = codec.upsample_420((y, np.full((1, 1), 150, np.uint8), np.full((1, 1), 9, np.uint8)))
    assert np.all(out[..., 1] == 150) and np.all(out[..., 2] == 9)
    const = np.full((8, 8, 3), 200, np.uint8)
    assert np.array_equal(codec.upsample_420(codec.subsample_420(const)), const)
    with pytest.raises(codec.CodecError):
        codec.upsample_420((np.zeros((4, 4)), np.zeros((1, 2)), np.zeros((2, 2))))


# ---------------------------------------------------------------- DCT

def brute_dct(block):
    """Textbook double sum over cosine basis functions."""
    f = np.asarray(block, float) - 128
    out = np.zeros((8, 8))
    c = lambda k: 1 / np.sqrt(2) if k == 0 else 1.0
    for u, v in itertools.product(range(8), range(8)):
        s = 0.0
        for x, y in itertools.product(range(8), range(8)):
            s += f[x, y] * np.cos((2 * x + 1) * u * np.pi / 16) * np.cos((2 * y + 1) * v * np.pi / 16)
        out[u, v] = 0.25 * c(u) * c(v) * s
    return out


def test_dct_constant_blocks():
    assert np.allclose(codec.dct_2d(np.full((8, 8), 128.0)), 0, atol=1e-12)
    d = codec.dct_2d(np.full((8, 8), 255.0))
    assert d[0, 0] == pytest.approx(1016.0, abs=1e-9)
    assert np.allclose(brute_dct(np.full((8, 8), 255.0))[0, 0], 1016.0)
    d[0, 0] = 0
    assert np.allclose(d, 0, atol=1e-9)


def test_dct_matches_basis_sum(rng):
    b = rng.integers(0, 256, (8, 8)).astype(float)
    assert np.allclose(codec.dct_2d(b), brute_dct(b), atol=1e-9)


def test_dct_parseval_and_inverse(rng):
    blocks = rng.uniform(0, 255, (1000, 8, 8))
    c = codec.dct_2d(blocks)
    e_in = np.sum((blocks - 128) ** 2, axis=(1, 2))
    e_out = np.sum(c ** 2, axis=(1, 2))
    assert np.all(np.abs(e_out - e_in) <= 1e-6 * e_in)
    assert np.allclose(codec.idct_2d(c), blocks, atol=1e-9)


def test_idct_examples():
    assert np.allclose(codec.idct_2d(np.zeros((8, 8))), 128)
    c = np.zeros((8, 8))
    c[0, 0] = 1016
    assert np.allclose(codec.idct_2d(c), 255)
    c[0, 0] = 8 * 172  # reconstructs to 300 before clamping
    assert np.all(codec.idct_2d(c) == 255)


# ---------------------------------------------------------------- quantisation

def test_quality_scaling():
    t50 = codec.scale_quant_tables(50)
    assert np.array_equal(t50.luma, codec.BASE_LUMA) and np.array_equal(t50.chroma, codec.BASE_CHROMA)
    t100 = codec.scale_quant_tables(100)
    assert np.all(t100.luma == 1) and np.all(t100.chroma == 1)
    assert codec.scale_quant_tables(1).luma[0, 0] == 255
    for q in (0, 101, 2.5, -3):
        with pytest.raises(codec.CodecError):
            codec.scale_quant_tables(q)


@pytest.mark.parametrize("quality", [1, 2, 10, 25, 50, 75, 95, 100])
def test_quant_tables_match_libjpeg(quality):
    """libjpeg (via Pillow) applies the same IJG scaling to the same base tables."""
    buf = io.BytesIO()
    Image.new("RGB", (16, 16)).save(buf, "JPEG", quality=quality)
    pil = Image.open(buf).quantization
    ours = codec.scale_quant_tables(quality)
    # Pillow reports tables in natural (row-major) order
    assert list(ours.luma.reshape(64)) == list(pil[0])
    assert list(ours.chroma.reshape(64)) == list(pil[1])
    bs = codec.compress(np.zeros((16, 16, 3), np.uint8), quality)
    back = Image.open(io.BytesIO(bs.data)).quantization
    assert list(back[0]) == list(pil[0]) and list(back[1]) == list(pil[1])


def test_quantize_examples():
    t = np.full((8, 8), 16)
    assert codec.quantize(np.full((8, 8), 100.0), t)[0, 0] == 6
    assert codec.quantize(np.full((8, 8), -100.0), t)[0, 0] == -6
    assert codec.quantize(np.zeros((8, 8)), t)[0, 0] == 0
    assert codec.quantize(np.full((8, 8), 24.0), t)[0, 0] == 2   # 1.5 rounds away from zero
    assert codec.quantize(np.full((8, 8), -24.0), t)[0, 0] == -2
    assert codec.dequantize(np.full((8, 8), 6), t)[0, 0] == 96


def test_quantisation_error_bound(rng):
    tables = codec.scale_quant_tables(10)
    c = rng.normal(0, 300, (500, 8, 8))
    err = np.abs(codec.dequantize(codec.quantize(c, tables.luma), tables.luma) - c)
    assert np.all(err <= tables.luma / 2 + 1e-9)


# ---------------------------------------------------------------- zigzag

def zigzag_oracle():
    order = []
    for s in range(15):
        cells = [(i, s - i) for i in range(8) if 0 <= s - i < 8]
        order += cells if s % 2 else cells[::-1]
    return order


def test_zigzag_order():
    oracle = zigzag_oracle()
    assert oracle[:6] == [(0, 0), (0, 1), (1, 0), (2, 0), (1, 1), (0, 2)]
    assert [r * 8 + c for r, c in oracle] == list(codec.ZIGZAG)
    ident = np.arange(64).reshape(8, 8)
    assert list(codec.zigzag(ident)[:6]) == [0, 1, 8, 16, 9, 2]


def test_zigzag_bijective(rng):
    b = rng.integers(-50, 50, (10, 8, 8))
    assert np.array_equal(codec.inverse_zigzag(codec.zigzag(b)), b)


# ---------------------------------------------------------------- entropy coding

def test_standard_huffman_tables_match_libjpeg():
    """Pillow writes the Annex K tables for non-optimised baseline files."""
    buf = io.BytesIO()
    Image.new("RGB", (16, 16)).save(buf, "JPEG", quality=75)
    data = buf.getvalue()
    found = {}
    pos = 2
    while pos < len(data):
        marker, length = data[pos + 1], (data[pos + 2] << 8) | data[pos + 3]
        if marker == 0xC4:
            body = data[pos + 4:pos + 2 + length]
            i = 0
            while i < len(body):
                key = (body[i] >> 4, body[i] & 15)
                bits = list(body[i + 1:i + 17])
                found[key] = (bits, list(body[i + 17:i + 17 + sum(bits)]))
                i += 17 + sum(bits)
        if marker == 0xDA:
            break
        pos += 2 + length
    assert found[(0, 0)] == (huffman.DC_LUMA[0], huffman.DC_LUMA[1])
    assert found[(0, 1)] == (huffman.DC_CHROMA[0], huffman.DC_CHROMA[1])
    assert found[(1, 0)] == (huffman.AC_LUMA[0], huffman.AC_LUMA[1])
    assert found[(1, 1)] == (huffman.AC_CHROMA[0], huffman.AC_CHROMA[1])


def random_grid(rng, h=32, w=48, scale=6.0, density=0.3):
    comps = []
    for (sh, sv) in ((2, 2), (1, 1), (1, 1)):
        by, bx = (h // 16) * sv, (w // 16) * sh
        q = np.clip(np.round(rng.laplace(0, scale, (by, bx, 8, 8))), -1023, 1023).astype(np.int32)
        q *= rng.random((by, bx, 8, 8)) < density
        q[..., 0, 0] = rng.integers(-1000, 1000, (by, bx))
        comps.append(q)
    return BlockGrid(comps, h, w)


def test_entropy_round_trip_random(rng):
    tables = codec.scale_quant_tables(50)
    for _ in range(20):
        grid = random_grid(rng, density=rng.uniform(0.02, 1.0), scale=rng.uniform(1, 200))
        grid.components[0][0, 0, 7, 7] = 1023
        decoded, _ = codec.decode_entropy(codec.encode_entropy(grid, tables))
        for a, b in zip(grid.components, decoded.components):
            assert np.array_equal(a, b)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(-1023, 1023), min_size=63, max_size=63),
       st.integers(-2047, 2047), st.integers(0, 63))
def test_entropy_round_trip_property(ac, dc, zeros_from):
    ac = np.array(ac)
    ac[zeros_from:] = 0
    blk = np.zeros(64, np.int32)
    blk[0] = max(-1024, min(1024, dc))  # keeps DPCM differences within category 11
    blk[1:] = ac
    y = np.zeros((2, 2, 8, 8), np.int32)
    y[0, 0] = codec.inverse_zigzag(blk)
    y[1, 1] = -codec.inverse_zigzag(blk)
    grid = BlockGrid([y, codec.inverse_zigzag(blk)[None, None], np.zeros((1, 1, 8, 8), np.int32)], 16, 16)
    decoded, _ = codec.decode_entropy(codec.encode_entropy(grid, codec.scale_quant_tables(50)))
    for a, b in zip(grid.components, decoded.components):
        assert np.array_equal(a, b)


def test_all_zero_blocks_emit_dc_then_eob():
    zero = [np.zeros((2, 2, 8, 8), np.int32), np.zeros((1, 1, 8, 8), np.int32),
            np.zeros((1, 1, 8, 8), np.int32)]
    bs = codec.encode_entropy(BlockGrid(zero, 16, 16), codec.scale_quant_tables(50))
    # luma: DC cat 0 "00" + EOB "1010" four times; chroma: "00" + EOB "00" twice
    assert bs.data[-6:] == bytes([0x28, 0xA2, 0x8A, 0x00, 0xFF, 0xD9])


def test_coefficient_range_error():
    bad = [np.zeros((2, 2, 8, 8), np.int32), np.zeros((1, 1, 8, 8), np.int32),
           np.zeros((1, 1, 8, 8), np.int32)]
    bad[0][0, 0, 0, 1] = 2000
    with pytest.raises(codec.JpegEncodeError):
        codec.encode_entropy(BlockGrid(bad, 16, 16), codec.scale_quant_tables(50))


def test_stream_structure(corpus32):
    bs = codec.compress(corpus32[0], 50)
    d = bs.data
    assert d[:2] == b"\xff\xd8" and d[-2:] == b"\xff\xd9"
    for marker in (0xE0, 0xDB, 0xC0, 0xC4, 0xDA):
        assert bytes([0xFF, marker]) in d
    assert bs.encoded_size == len(d) and bs.source_dims == (128, 128)


def test_decode_errors(corpus32):
    d = codec.compress(corpus32[1], 75).data
    with pytest.raises(codec.JpegParseError, match="SOI"):
        codec.decode_entropy(d[2:])
    for cut in (len(d) // 2, len(d) - 40, len(d) - 2, 300):
        with pytest.raises(codec.JpegParseError):
            codec.decode_entropy(d[:cut])
    grid, _ = codec.decode_entropy(d)
    assert grid.block_count() == 16 * 16 + 2 * 8 * 8
    assert grid.grid_dims == [(16, 16), (8, 8), (8, 8)]


def test_progressive_rejected(corpus32):
    buf = io.BytesIO()
    Image.fromarray(corpus32[0]).save(buf, "JPEG", progressive=True)
    with pytest.raises(codec.JpegParseError, match="unsupported"):
        codec.decompress(buf.getvalue())


# ---------------------------------------------------------------- third-party interop

@pytest.mark.parametrize("quality", [2, 50, 95])
def test_libjpeg_decodes_our_streams(corpus32, quality):
    for img in corpus32[:8]:
        bs = codec.compress(img, quality)
        ref = libjpeg_planes(bs.data, 128, 128)
        for a, b in zip(ref, our_planes(bs.data)):
            assert np.abs(a - b).max() <= 1


@pytest.mark.parametrize("quality", [5, 60, 95])
def test_we_decode_libjpeg_streams(corpus32, quality):
    for img in corpus32[8:12]:
        buf = io.BytesIO()
        Image.fromarray(img).save(buf, "JPEG", quality=quality)
        data = buf.getvalue()
        ref = libjpeg_planes(data, 128, 128)
        for a, b in zip(ref, our_planes(data)):
            assert np.abs(a - b).max() <= 1
        assert codec.decompress(data).shape == (128, 128, 3)


def test_non_mcu_aligned_dims(rng):
    img = rng.integers(0, 256, (40, 26, 3)).astype(np.uint8)
    out = codec.decompress(codec.compress(img, 90))
    assert out.shape == (40, 26, 3)
    pil = np.asarray(Image.open(io.BytesIO(codec.compress(img, 90).data)).convert("RGB"))
    assert pil.shape == (40, 26, 3)


# ---------------------------------------------------------------- pipeline

def psnr(a, b):
    return 10 * np.log10(255 ** 2 / np.mean((a.astype(float) - b) ** 2))


def subsampling_only(img):
    planes = codec.subsample_420(codec.rgb_to_ycbcr(img))
    return codec.ycbcr_to_rgb(codec.upsample_420(planes))


def test_quality_100_is_near_lossless_on_smooth_chroma(rng):
    # colour constant over 2x2 cells, so 4:2:0 itself discards nothing
    img = np.kron(rng.integers(0, 256, (32, 32, 3)), np.ones((2, 2, 1))).astype(np.uint8)
    dec, _ = codec.roundtrip(img, 100)
    assert dec.shape == img.shape and dec.dtype == np.uint8
    assert psnr(img, dec) > 40


def test_quality_100_close_to_subsampling_ceiling(corpus32):
    for img in corpus32[:8]:
        dec, _ = codec.roundtrip(img, 100)
        assert psnr(img, dec) > psnr(img, subsampling_only(img)) - 1.5
        y = lambda a: a.astype(float) @ [0.299, 0.587, 0.114]
        assert 10 * np.log10(255 ** 2 / np.mean((y(img) - y(dec)) ** 2)) > 40


@pytest.mark.xfail(strict=True, reason="4:2:0 chroma subsampling alone caps natural colour crops "
                   "below 40 dB; libjpeg at quality 100 with 4:2:0 behaves the same")
def test_quality_100_natural_crops_above_40db(corpus32):
    assert all(psnr(img, codec.roundtrip(img, 100)[0]) > 40 for img in corpus32[:8])


def test_quality_1_is_blocky(corpus32):
    for img in corpus32[:8]:
        y = codec.rgb_to_ycbcr(codec.roundtrip(img, 1)[0])[..., 0].astype(float)
        dx = np.diff(y, axis=1) ** 2
        boundary = dx[:, 7::8].mean()
        interior = np.delete(dx, np.s_[7::8], axis=1).mean()
        assert boundary > interior


def test_size_monotone_in_quality(corpus32):
    means = [np.mean([codec.compress(img, q).encoded_size for img in corpus32])
             for q in (100, 75, 50, 25, 10, 2)]
    assert all(a >= b for a, b in zip(means, means[1:]))


def test_default_quality_reduction_interval(corpus32, corpus_png_sizes):
    jpeg = [codec.compress(img).encoded_size for img in corpus32]
    assert codec.DEFAULT_QUALITY == 1
    assert 0.95 <= 1 - sum(jpeg) / sum(corpus_png_sizes) <= 0.985


def test_input_validation():
    with pytest.raises(codec.CodecError, match="even"):
        codec.compress(np.zeros((17, 16, 3), np.uint8))
    with pytest.raises(codec.CodecError):
        codec.compress(np.zeros((4, 4, 3), np.uint8))
    with pytest.raises(codec.CodecError):
        codec.compress(np.zeros((16, 16), np.uint8))


def test_file_round_trip(tmp_path, corpus32):
    bs = codec.compress(corpus32[3], 30)
    bs.save(tmp_path / "a.jpg")
    again = codec.JpegBitstream.load(tmp_path / "a.jpg")
    assert again == bs


_BACKEND_SCRIPT = """
import hashlib, numpy as np
from jpegrestore import codec, samples
from jpegrestore._accel import BACKEND
h = hashlib.sha256()
for img in samples.natural_crops(4, seed=7):
    for q in (1, 50, 95):
        bs = codec.compress(img, q)
        h.update(bs.data)
        h.update(codec.decompress(bs).tobytes())
print(BACKEND, h.hexdigest())
"""


def test_backends_agree_bit_for_bit():
    out = {}
    for flag in ("1", "0"):
        env = dict(os.environ, JPEGRESTORE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", _BACKEND_SCRIPT], env=env,
                             capture_output=True, text=True, check=True)
        backend, digest = res.stdout.split()
        out[backend] = digest
    assert set(out) == {"numba", "numpy"}
    assert out["numba"] == out["numpy"]
