"""Full-reference quality metrics (PSNR, SSIM, pixel-domain VIF) and evaluation reports."""
import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.ndimage import correlate1d

PSNR_CAP = 100.0
MAX_VALUE = 255.0


@dataclass(frozen=True)
class SsimConstants:
    dynamic_range: float = 255.0
    k1: float = 0.01
    k2: float = 0.03
    window: int = 11
    sigma: float = 1.5

    @property
    def c1(self):
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self):
        return (self.k2 * self.dynamic_range) ** 2


DEFAULT_SSIM = SsimConstants()
VIF_NOISE_VAR = 2.0


def _same_shape(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"image shapes differ: {x.shape} vs {y.shape}")
    return x, y


def luma(img):
    """BT.601 luma of an RGB image; grey images pass through."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 3:
        return img @ np.array([0.299, 0.587, 0.114])
    if img.ndim == 3 and img.shape[2] == 1:
        return img[..., 0]
    return img


def psnr(x, y, max_value=MAX_VALUE):
    """PSNR in dB over all samples jointly; identical images give ``PSNR_CAP``."""
    x, y = _same_shape(x, y)
    mse = np.mean((x - y) ** 2)
    if mse == 0:
        return PSNR_CAP
    return float(min(PSNR_CAP, 10.0 * np.log10(max_value ** 2 / mse)))


def gaussian_window(size, sigma):
    r = np.arange(size) - (size - 1) / 2
    w = np.exp(-(r ** 2) / (2 * sigma ** 2))
    return w / w.sum()


def _filter_valid(img, w1d):
    out = correlate1d(img, w1d, axis=0, mode="constant")
    out = correlate1d(out, w1d, axis=1, mode="constant")
    r = len(w1d) // 2
    return out[r:img.shape[0] - r, r:img.shape[1] - r]


def ssim_map(x, y, consts=DEFAULT_SSIM):
    """Local SSIM over every fully contained Gaussian window (valid region)."""
    x, y = _same_shape(x, y)
    if min(x.shape[:2]) < consts.window:
        raise ValueError(f"images smaller than the {consts.window}x{consts.window} SSIM window")
    w = gaussian_window(consts.window, consts.sigma)
    mx, my = _filter_valid(x, w), _filter_valid(y, w)
    sxx = _filter_valid(x * x, w) - mx * mx
    syy = _filter_valid(y * y, w) - my * my
    sxy = _filter_valid(x * y, w) - mx * my
    c1, c2 = consts.c1, consts.c2
    return ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2))


def ssim(x, y, consts=DEFAULT_SSIM):
    """Mean SSIM on BT.601 luma (single channel inputs are used as-is)."""
    x, y = _same_shape(x, y)
    lx, ly = luma(x), luma(y)
    if np.array_equal(lx, ly):
        return 1.0
    return float(np.mean(ssim_map(lx, ly, consts)))


def vif(x, y, scales=4, noise_var=VIF_NOISE_VAR):
    """Pixel-domain VIF of distorted ``y`` against reference ``x`` on luma.

    Gaussian pyramid with window 2**(scales-s+1)+1, sigma N/5 at scale s.
    Ratio terms are formed so identical inputs give exactly 1.0.
    """
    x, y = _same_shape(x, y)
    ref, dist = luma(x), luma(y)
    num = 0.0
    den = 0.0
    used = 0
    eps = 1e-10
    for s in range(1, scales + 1):
        n = 2 ** (scales - s + 1) + 1
        w = gaussian_window(n, n / 5.0)
        if s > 1:
            if min(ref.shape) < n:
                break
            ref = _filter_valid(ref, w)[::2, ::2]
            dist = _filter_valid(dist, w)[::2, ::2]
        if min(ref.shape) < n:
            break
        mu1, mu2 = _filter_valid(ref, w), _filter_valid(dist, w)
        s1 = np.maximum(_filter_valid(ref * ref, w) - mu1 * mu1, 0.0)
        s2 = np.maximum(_filter_valid(dist * dist, w) - mu2 * mu2, 0.0)
        s12 = _filter_valid(ref * dist, w) - mu1 * mu2
        flat = s1 < eps
        g = np.where(flat, 0.0, s12 / np.where(flat, 1.0, s1))
        sv = np.where(flat, s2, s2 - g * s12)
        s1 = np.where(flat, 0.0, s1)
        dead = s2 < eps
        g = np.where(dead, 0.0, g)
        sv = np.where(dead, 0.0, sv)
        neg = g < 0
        sv = np.where(neg, s2, sv)
        g = np.where(neg, 0.0, g)
        sv = np.maximum(sv, 0.0)
        num += np.sum(np.log10(1.0 + g * g * s1 / (sv + noise_var)))
        den += np.sum(np.log10(1.0 + s1 / noise_var))
        used += 1
    if used == 0:
        raise ValueError(f"image {x.shape[:2]} too small for VIF")
    if used < scales:
        warnings.warn(f"VIF computed over {used} of {scales} scales (image too small)")
    if den == 0:
        return 1.0 if np.array_equal(ref, dist) else 0.0
    return float(num / den)


@dataclass
class EvalRow:
    source_id: str
    psnr: float
    ssim: float
    vif: float


@dataclass
class EvalReport:
    per_image: list
    label: str = ""
    config: dict = field(default_factory=dict)

    @property
    def aggregate(self):
        if not self.per_image:
            return {"psnr": float("nan"), "ssim": float("nan"), "vif": float("nan")}
        return {k: float(np.mean([getattr(r, k) for r in self.per_image]))
                for k in ("psnr", "ssim", "vif")}

    def to_jsonl(self):
        lines = [json.dumps({"type": "image", "label": self.label, **asdict(r)}) for r in self.per_image]
        lines.append(json.dumps({"type": "aggregate", "label": self.label,
                                 "config": self.config, **self.aggregate}))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text):
        rows, label, config = [], "", {}
        for line in text.splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            label = rec.get("label", label)
            if rec["type"] == "image":
                rows.append(EvalRow(rec["source_id"], rec["psnr"], rec["ssim"], rec["vif"]))
            else:
                config = rec.get("config", {})
        return cls(rows, label, config)


def evaluate(pairs, ids=None, label="", config=None):
    """Score (reference, candidate) image pairs; returns an EvalReport."""
    rows = []
    for i, (x, y) in enumerate(pairs):
        sid = ids[i] if ids is not None else str(i)
        rows.append(EvalRow(sid, psnr(x, y), ssim(x, y), vif(x, y)))
    return EvalReport(rows, label, dict(config or {}))


def format_table(columns, metrics=("psnr", "ssim", "vif"), header_rows=None, missing="failed"):
    """Aligned text table: one column per (name, aggregate dict), one row per metric.

    A column whose aggregate is None is rendered with ``missing`` in every cell.
    """
    names = [c[0] for c in columns]
    if header_rows:
        widths = [max([9] + [len(str(r[1][i])) for r in header_rows]) for i in range(len(names))]
    else:
        widths = [max(9, len(n)) for n in names]
    lines = []
    for label, cells in (header_rows or []):
        lines.append(f"{label:<16}" + "".join(f" {c:>{w}}" for c, w in zip(cells, widths)))
    if not header_rows:
        lines.append(f"{'Metrics':<16}" + "".join(f" {n:>{w}}" for n, w in zip(names, widths)))
    lines.append("-" * len(lines[-1]))
    for m in metrics:
        fmt = "{:.3f}"
        cells = [fmt.format(agg[m]) if agg is not None else missing for _, agg in columns]
        lines.append(f"{m.upper():<16}" + "".join(f" {c:>{w}}" for c, w in zip(cells, widths)))
    return "\n".join(lines)
