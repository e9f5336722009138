"""Adversarial (logless or log), LF (L1), HF (VGG-16 conv4_1 feature L2) and total losses."""
import logging
import os
from dataclasses import dataclass
from pathlib import Path

import torch
from torch import nn
import torch.nn.functional as F

log = logging.getLogger(__name__)

VGG_WEIGHTS_ENV = "JPEGRESTORE_VGG16_WEIGHTS"
_warned_standin = False
LOG_EPS = 1e-8

# torchvision ordering of VGG-16 ``features`` up to conv4_1 + ReLU
_VGG_LAYOUT = [64, 64, "M", 128, 128, "M", 256, 256, 256, "M", 512]
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class FeatureExtractorError(RuntimeError):
    pass


@dataclass
class LossWeights:
    lambda_adv: float = 1.0
    lambda_lf: float = 20.0
    lambda_hf: float = 0.1

    def __post_init__(self):
        if min(self.lambda_adv, self.lambda_lf, self.lambda_hf) < 0:
            raise ValueError("loss weights must be non-negative")


class FeatureExtractor(nn.Module):
    """Frozen VGG-16 trunk ending at conv4_1 (post-ReLU).

    Inputs are model-range images in [-1, 1], RGB; they are mapped to [0, 1]
    and normalised with the ImageNet mean/std before the trunk. ``width``
    scales every channel count (64 reproduces VGG-16).
    """

    def __init__(self, width=64, source="random"):
        super().__init__()
        layers = []
        c_in = 3
        for v in _VGG_LAYOUT:
            if v == "M":
                layers.append(nn.MaxPool2d(2, 2))
            else:
                c_out = v * width // 64
                layers += [nn.Conv2d(c_in, c_out, 3, padding=1), nn.ReLU(inplace=False)]
                c_in = c_out
        self.features = nn.Sequential(*layers)
        self.width = width
        self.source = source
        self.register_buffer("mean", torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(IMAGENET_STD).view(1, 3, 1, 1))
        self.freeze()

    def freeze(self):
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()
        return self

    def train(self, mode=True):
        # always inference mode; parameters never update
        return super().train(False)

    def descriptor(self):
        return {"kind": "vgg16_conv4_1", "width": self.width, "source": self.source,
                "input": "[-1,1] RGB -> [0,1] -> ImageNet mean/std"}

    def forward(self, img):
        return self.features(((img + 1.0) * 0.5 - self.mean) / self.std)

    @classmethod
    def standin(cls, width=8, seed=0):
        """Randomly initialised extractor for offline use (no pretrained weights)."""
        fe = cls(width, source=f"standin(seed={seed})")
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for m in fe.features:
                if isinstance(m, nn.Conv2d):
                    fan_in = m.in_channels * 9
                    m.weight.normal_(0.0, (2.0 / fan_in) ** 0.5, generator=gen)
                    m.bias.zero_()
        return fe

    @classmethod
    def from_vgg16(cls, path):
        """Load torchvision-format VGG-16 weights (``features.N.weight`` keys or a bare
        ``features`` state dict) from ``path``."""
        path = Path(path)
        if not path.is_file():
            raise FeatureExtractorError(
                f"VGG-16 weights not found at {path}; run scripts/fetch_vgg16.py "
                f"or set {VGG_WEIGHTS_ENV}")
        try:
            state = torch.load(path, map_location="cpu", weights_only=True)
        except Exception as exc:
            raise FeatureExtractorError(f"cannot read VGG-16 weights from {path}: {exc}") from exc
        if "state_dict" in state:
            state = state["state_dict"]
        fe = cls(64, source=str(path))
        wanted = fe.features.state_dict()
        picked = {}
        for key in wanted:
            for candidate in (f"features.{key}", key):
                if candidate in state:
                    picked[key] = state[candidate]
                    break
            else:
                raise FeatureExtractorError(f"{path} lacks VGG-16 parameter features.{key}")
        fe.features.load_state_dict(picked)
        return fe.freeze()


def load_feature_extractor(path=None, standin_width=8, seed=0):
    """Pretrained VGG-16 from ``path`` (or the env var); the random stand-in when
    neither is given. An explicit path that fails to load raises."""
    path = path or os.environ.get(VGG_WEIGHTS_ENV)
    if path:
        return FeatureExtractor.from_vgg16(path)
    global _warned_standin
    if not _warned_standin:
        log.warning("no VGG-16 weights (set %s); HF loss uses a random stand-in extractor", VGG_WEIGHTS_ENV)
        _warned_standin = True
    return FeatureExtractor.standin(standin_width, seed)


def _check_pair(a, b):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def adv_loss_d(d_real, d_fake, variant="logless"):
    """Discriminator loss, minimised by scoring fakes 0 and reals 1.

    logless: mean(D(fake)) - mean(D(real)), bounded in (-1, 1).
    log: mean(log D(fake)) - mean(log D(real)).
    """
    _check_pair(d_real, d_fake)
    if variant == "logless":
        return d_fake.mean() - d_real.mean()
    if variant == "log":
        return torch.log(d_fake.clamp_min(LOG_EPS)).mean() - torch.log(d_real.clamp_min(LOG_EPS)).mean()
    raise ValueError(f"unknown adversarial loss variant {variant!r}")


def adv_loss_g(d_fake, variant="logless"):
    if variant == "logless":
        return (1.0 - d_fake).mean()
    if variant == "log":
        return torch.log((1.0 - d_fake).clamp_min(LOG_EPS)).mean()
    raise ValueError(f"unknown adversarial loss variant {variant!r}")


def lf_loss(x, g):
    _check_pair(x, g)
    return (x - g).abs().mean()


def hf_loss(fe, x, g):
    """Mean squared conv4_1 feature distance. Gradients reach both images, never ``fe``."""
    _check_pair(x, g)
    if fe is None:
        raise FeatureExtractorError("HF loss requested but no feature extractor is loaded")
    return F.mse_loss(fe(g), fe(x))


def total_loss(weights, adv_g, lf, hf):
    return weights.lambda_adv * adv_g + weights.lambda_lf * lf + weights.lambda_hf * hf
