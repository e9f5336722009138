"""Generator (7-deep U-Net with hourglass bottleneck) and PatchGAN discriminator."""
import torch
from torch import nn
import torch.nn.functional as F

LEAK = 0.2


def channel_plan(width):
    return [width, 2 * width, 4 * width, 8 * width, 16 * width, 16 * width]


class HourglassBlock(nn.Module):
    """Stride-2 conv down, dropout, stride-2 transposed conv up, residual add.

    Input and output shapes match, so blocks chain.
    """

    def __init__(self, channels, dropout=0.7, leak=LEAK):
        super().__init__()
        self.down = nn.Conv2d(channels, channels, 4, 2, 1)
        self.up = nn.ConvTranspose2d(channels, channels, 4, 2, 1)
        self.dropout = dropout
        self.leak = leak

    def forward(self, f, dropout_on=None):
        if dropout_on is None:
            dropout_on = self.training
        h = F.leaky_relu(self.down(f), self.leak)
        h = F.dropout(h, self.dropout, training=dropout_on)
        h = self.up(h)
        return F.leaky_relu(h + f, self.leak)


class Generator(nn.Module):
    def __init__(self, width=64, image_size=512, n_hourglass=4, use_hourglass=True,
                 dropout=0.7, leak=LEAK):
        super().__init__()
        if image_size % 128:
            raise ValueError("image_size must be a multiple of 128 (six halvings plus the hourglass dip)")
        self.width = width
        self.image_size = image_size
        self.leak = leak
        chans = channel_plan(width)
        ins = [3] + chans[:-1]
        self.encoder = nn.ModuleList(nn.Conv2d(i, o, 4, 2, 1) for i, o in zip(ins, chans))
        n = n_hourglass if use_hourglass else 0
        self.hourglass = nn.ModuleList(HourglassBlock(chans[-1], dropout, leak) for _ in range(n))
        # decoder stage k upsamples and is then concatenated with encoder stage 5-k
        dec_in = [chans[5]] + [2 * c for c in reversed(chans[1:5])] + [2 * chans[0]]
        dec_out = list(reversed(chans[:5])) + [3]
        self.decoder = nn.ModuleList(nn.ConvTranspose2d(i, o, 4, 2, 1) for i, o in zip(dec_in, dec_out))

    def descriptor(self):
        return {"kind": "generator", "width": self.width, "image_size": self.image_size,
                "channels": channel_plan(self.width), "n_hourglass": len(self.hourglass),
                "kernel": 4, "stride": 2, "leak": self.leak}

    def forward(self, x, dropout_on=None, return_stages=False):
        s = self.image_size
        if x.dim() != 4 or tuple(x.shape[1:]) != (3, s, s):
            raise ValueError(f"generator expects input of shape ({s}, {s}, 3) "
                             f"(tensor layout N x 3 x {s} x {s}), got {tuple(x.shape)}")
        stages = {}
        skips = []
        h = x
        for k, conv in enumerate(self.encoder, 1):
            h = F.leaky_relu(conv(h), self.leak)
            skips.append(h)
            stages[f"enc{k}"] = h
        for k, block in enumerate(self.hourglass, 1):
            h = block(h, dropout_on)
            stages[f"hourglass{k}"] = h
        for k, deconv in enumerate(self.decoder, 1):
            h = deconv(h)
            if k < len(self.decoder):
                h = F.leaky_relu(h, self.leak)
                h = torch.cat([h, skips[-1 - k]], dim=1)
            stages[f"dec{k}"] = h
        out = torch.tanh(h)
        if return_stages:
            return out, stages
        return out


class Discriminator(nn.Module):
    """Five 4x4 conv stages: three stride-2, two stride-1 with padding 1, sigmoid output."""

    def __init__(self, width=64, leak=LEAK):
        super().__init__()
        self.width = width
        self.leak = leak
        chans = [6, width, 2 * width, 4 * width, 8 * width, 1]
        strides = [2, 2, 2, 1, 1]
        self.layers = nn.ModuleList(nn.Conv2d(chans[i], chans[i + 1], 4, strides[i], 1)
                                    for i in range(5))

    def descriptor(self):
        return {"kind": "discriminator", "width": self.width, "channels":
                [self.width, 2 * self.width, 4 * self.width, 8 * self.width, 1],
                "strides": [2, 2, 2, 1, 1], "kernel": 4, "leak": self.leak}

    def forward(self, x, g, return_stages=False):
        if x.shape != g.shape:
            raise ValueError(f"discriminator inputs differ in shape: {tuple(x.shape)} vs {tuple(g.shape)}")
        h = torch.cat([x, g], dim=1)
        stages = []
        for i, conv in enumerate(self.layers):
            h = conv(h)
            h = torch.sigmoid(h) if i == len(self.layers) - 1 else F.leaky_relu(h, self.leak)
            stages.append(h)
        return (h, stages) if return_stages else h


def init_weights(module, seed, std=0.02):
    """Normal(0, std) weights and zero biases, drawn from a generator seeded with ``seed``."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, p in module.named_parameters():
            if name.endswith("bias"):
                p.zero_()
            else:
                p.normal_(0.0, std, generator=gen)
    return module


def init_params(seed, width=64, image_size=512, use_hourglass=True, dropout=0.7,
                disc_width=None):
    """Freshly initialised (Generator, Discriminator); deterministic under ``seed``."""
    g = Generator(width, image_size, use_hourglass=use_hourglass, dropout=dropout)
    d = Discriminator(width if disc_width is None else disc_width)
    init_weights(g, seed)
    init_weights(d, seed + 1)
    return g, d
