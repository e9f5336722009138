"""Deterministic natural-image corpus for offline runs and tests.

Crops 128 x 128 patches from the colour photographs bundled with
scikit-image, after a random 2-4x box downscale (less for small photos) so each crop carries
thumbnail-like detail density.
"""
from pathlib import Path

import numpy as np
from PIL import Image

SOURCES = ("astronaut.png", "coffee.png", "chelsea.png", "motorcycle_left.png", "motorcycle_right.png")


def _source_images():
    try:
        import skimage.data as data
    except ImportError as exc:  # pragma: no cover
        raise RuntimeError("the sample corpus needs scikit-image") from exc
    root = Path(data.__file__).parent
    out = []
    for name in SOURCES:
        with Image.open(root / name) as im:
            out.append(np.asarray(im.convert("RGB"), dtype=np.uint8))
    return out


def _box_downscale(img, f):
    h, w = (img.shape[0] // f) * f, (img.shape[1] // f) * f
    v = img[:h, :w].astype(np.float64).reshape(h // f, f, w // f, f, 3).mean(axis=(1, 3))
    return np.floor(v + 0.5).astype(np.uint8)


def natural_crops(n, seed=0, size=128):
    rng = np.random.default_rng(seed)
    sources = _source_images()
    scaled = {}
    out = []
    for i in range(n):
        k = int(rng.integers(len(sources)))
        fmax = min(4, min(sources[k].shape[:2]) // size)
        f = int(rng.integers(1, fmax + 1)) if fmax < 2 else int(rng.integers(2, fmax + 1))
        if (k, f) not in scaled:
            scaled[(k, f)] = _box_downscale(sources[k], f)
        img = scaled[(k, f)]
        y = int(rng.integers(0, img.shape[0] - size + 1))
        x = int(rng.integers(0, img.shape[1] - size + 1))
        crop = img[y:y + size, x:x + size]
        if rng.random() < 0.5:
            crop = crop[:, ::-1]
        out.append(np.ascontiguousarray(crop))
    return out


def write_corpus(out_dir, n, seed=0):
    from .dataset import write_png

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, img in enumerate(natural_crops(n, seed)):
        p = out / f"sample_{i:04d}.png"
        write_png(p, img)
        paths.append(p)
    return paths
