"""Download torchvision's ImageNet VGG-16 and save the weights the HF loss needs.

    python scripts/fetch_vgg16.py vgg16.pth
    export JPEGRESTORE_VGG16_WEIGHTS=$PWD/vgg16.pth

Needs network access and torchvision.
"""
import sys

import torch
from torchvision.models import VGG16_Weights, vgg16


def main(out):
    model = vgg16(weights=VGG16_Weights.IMAGENET1K_V1)
    keep = {k: v for k, v in model.state_dict().items() if k.startswith("features.")}
    torch.save(keep, out)
    print(f"saved {len(keep)} tensors to {out}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "vgg16.pth")
