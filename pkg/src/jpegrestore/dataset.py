"""Paired (original, C(original)) corpus: building, splitting, resizing, batching."""
import hashlib
import json
import logging
import os
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import codec

log = logging.getLogger(__name__)

SOURCE_SIZE = 128
MODEL_SIZE = 512
MANIFEST = "manifest.jsonl"


@dataclass
class PairedSample:
    original: np.ndarray
    compressed: np.ndarray
    source_id: str
    png_bytes: int
    jpeg_bytes: int

    def __post_init__(self):
        if self.original.shape != self.compressed.shape:
            raise ValueError(f"pair {self.source_id}: shapes {self.original.shape} "
                             f"and {self.compressed.shape} differ")


@dataclass
class DatasetSplit:
    train: list
    test: list
    seed: int


def read_png(path):
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc


def write_png(path, img):
    Image.fromarray(np.asarray(img, dtype=np.uint8)).save(path, format="PNG")


def make_pair(original, source_id, quality=codec.DEFAULT_QUALITY, png_bytes=None):
    if png_bytes is None:
        import io
        buf = io.BytesIO()
        Image.fromarray(original).save(buf, format="PNG")
        png_bytes = buf.tell()
    compressed, bs = codec.roundtrip(original, quality)
    return PairedSample(original, compressed, source_id, int(png_bytes), bs.encoded_size)


def build_pairs(png_dir, quality=codec.DEFAULT_QUALITY, size=SOURCE_SIZE):
    """One PairedSample per ``size`` x ``size`` PNG in ``png_dir`` (sorted by name).

    Images of any other size are skipped with a warning; an unreadable file
    raises ``OSError`` naming the path.
    """
    png_dir = Path(png_dir)
    if not png_dir.is_dir():
        raise FileNotFoundError(f"input directory not found: {png_dir}")
    pairs = []
    skipped = 0
    for path in sorted(png_dir.glob("*.png")):
        img = read_png(path)
        if img.shape[:2] != (size, size):
            warnings.warn(f"skipping {path.name}: size {img.shape[1]}x{img.shape[0]}, "
                          f"expected {size}x{size}")
            skipped += 1
            continue
        pairs.append(make_pair(img, path.stem, quality, png_bytes=path.stat().st_size))
    if skipped:
        log.warning("skipped %d image(s) with wrong dimensions", skipped)
    return pairs


def reduction(pairs):
    """Corpus data reduction 1 - sum(jpeg) / sum(png)."""
    return 1.0 - sum(p.jpeg_bytes for p in pairs) / sum(p.png_bytes for p in pairs)


def split(pairs, ratio=0.8, seed=0):
    order = np.random.default_rng(seed).permutation(len(pairs))
    n_train = int(round(len(pairs) * ratio))
    return DatasetSplit([pairs[i] for i in order[:n_train]],
                        [pairs[i] for i in order[n_train:]], seed)


def iterate_batches(pairs, batch_size, seed, epoch):
    """Shuffled batches; order depends only on (seed, epoch). Last batch may be short."""
    rng = np.random.default_rng([seed, epoch])
    order = rng.permutation(len(pairs))
    for start in range(0, len(pairs), batch_size):
        yield [pairs[i] for i in order[start:start + batch_size]]


# ---------------------------------------------------------------- resizing

def interp_matrix(n_in, n_out):
    """Row-stochastic (n_out, n_in) linear interpolation matrix, half-pixel centres."""
    scale = n_in / n_out
    src = np.clip((np.arange(n_out) + 0.5) * scale - 0.5, 0, n_in - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    m = np.zeros((n_out, n_in))
    m[np.arange(n_out), lo] += 1 - frac
    m[np.arange(n_out), hi] += frac
    return m


def resize_bilinear(img, size):
    """Bilinear resize of an (H, W, C) array to (size, size, C), float64 output."""
    img = np.asarray(img, dtype=np.float64)
    mh = interp_matrix(img.shape[0], size)
    mw = interp_matrix(img.shape[1], size)
    rows = np.tensordot(mh, img, axes=(1, 0))
    return np.tensordot(rows, mw, axes=(1, 1)).transpose(0, 2, 1)


def upsample_bilinear(img, size=MODEL_SIZE):
    return resize_bilinear(img, size)


def downsample_to_original(img, size=SOURCE_SIZE):
    return resize_bilinear(img, size)


def to_model_range(img):
    return np.asarray(img, dtype=np.float64) / 127.5 - 1.0


def from_model_range(img):
    return np.clip((np.asarray(img, dtype=np.float64) + 1.0) * 127.5, 0.0, 255.0)


# ---------------------------------------------------------------- on-disk corpus

def _pair_record(p, split_name, quality, seed):
    return {"source_id": p.source_id, "split": split_name, "seed": seed,
            "original": f"original/{p.source_id}.png",
            "compressed": f"compressed/{p.source_id}.png",
            "jpeg": f"jpeg/{p.source_id}.jpg",
            "png_bytes": p.png_bytes, "jpeg_bytes": p.jpeg_bytes, "quality": quality}


def save_dataset(ds, out_dir, quality):
    """Materialise originals, decoded C(x) PNGs, the JPEG streams and a JSONL manifest."""
    out = Path(out_dir)
    for sub in ("original", "compressed", "jpeg"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    lines = []
    for name, items in (("train", ds.train), ("test", ds.test)):
        for p in items:
            write_png(out / "original" / f"{p.source_id}.png", p.original)
            write_png(out / "compressed" / f"{p.source_id}.png", p.compressed)
            codec.compress(p.original, quality).save(out / "jpeg" / f"{p.source_id}.jpg")
            lines.append(json.dumps(_pair_record(p, name, quality, ds.seed), sort_keys=True))
    text = "\n".join(lines) + "\n"
    tmp = out / (MANIFEST + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, out / MANIFEST)
    return hashlib.sha256(text.encode()).hexdigest()


def load_dataset(root):
    root = Path(root)
    manifest = root / MANIFEST
    if not manifest.exists():
        raise FileNotFoundError(f"no {MANIFEST} in {root}")
    train, test = [], []
    seed = 0
    for line in manifest.read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        seed = rec.get("seed", seed)
        p = PairedSample(read_png(root / rec["original"]), read_png(root / rec["compressed"]),
                         rec["source_id"], rec["png_bytes"], rec["jpeg_bytes"])
        (train if rec["split"] == "train" else test).append(p)
    return DatasetSplit(train, test, seed)
