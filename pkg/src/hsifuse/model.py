"""Segmentation networks for paired 6x8x8 HSI and 3x16x16 RGB tiles.

Parameter names carry a group prefix: ``phi.`` (channel attention),
``gamma.`` (HSI encoder), ``theta.`` (RGB encoder) and ``psi.`` (decoder).
"""
from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

KINDS = ("siamese", "unet_rgb", "cnn_rgb")


class ShapeError(ValueError):
    pass


def _check(x: torch.Tensor, channels: int, hw: int, where: str) -> None:
    if x.dim() != 4 or x.shape[1] != channels or x.shape[2] != hw or x.shape[3] != hw:
        raise ShapeError(f"{where}: expected (N, {channels}, {hw}, {hw}), got {tuple(x.shape)}")


class IWCA(nn.Module):
    """Importance-weighted channel attention.

    A full 3x3 convolution produces features; a depthwise 3x3 convolution,
    global average pooling and a sigmoid produce one weight per channel that
    rescales those features.
    """

    def __init__(self, channels: int = 6):
        super().__init__()
        self.channels = channels
        self.mix = nn.Conv2d(channels, channels, 3, padding=1)
        self.gate = nn.Conv2d(channels, channels, 3, padding=1, groups=channels)

    def weights(self, x):
        return torch.sigmoid(self.gate(x).mean(dim=(2, 3)))

    def forward(self, x):
        if x.dim() != 4 or x.shape[1] != self.channels:
            raise ShapeError(f"iwca: expected {self.channels} channels, got {tuple(x.shape)}")
        return self.mix(x) * self.weights(x)[:, :, None, None]


class ConvBlock(nn.Module):
    """1x1 -> 3x3 -> 1x1 convolutions, each followed by ReLU."""

    def __init__(self, cin: int, cout: int):
        super().__init__()
        self.cin = cin
        self.pre = nn.Conv2d(cin, cout, 1)
        self.mid = nn.Conv2d(cout, cout, 3, padding=1)
        self.post = nn.Conv2d(cout, cout, 1)

    def forward(self, x):
        if x.shape[1] != self.cin:
            raise ShapeError(f"conv block expects {self.cin} channels, got {x.shape[1]}")
        x = F.relu(self.pre(x))
        x = F.relu(self.mid(x))
        return F.relu(self.post(x))


def upsample2(x):
    return F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)


class Decoder(nn.Module):
    """Fusion conv at 4x4, then two bilinear x2 stages with skip concatenation."""

    def __init__(self, fused: int, skip8: int, skip16: int, n_classes: int,
                 widths: tuple = (128, 64, 32)):
        super().__init__()
        w0, w1, w2 = widths
        self.fuse = nn.Conv2d(fused, w0, 3, padding=1)
        self.up1 = nn.Conv2d(w0 + skip8, w1, 3, padding=1)
        self.up2 = nn.Conv2d(w1 + skip16, w2, 3, padding=1)
        self.head = nn.Conv2d(w2, n_classes, 1)

    def forward(self, bottleneck, skips8, skip16):
        x = F.relu(self.fuse(bottleneck))
        x = torch.cat([upsample2(x), *skips8], dim=1)
        x = F.relu(self.up1(x))
        x = torch.cat([upsample2(x), skip16], dim=1)
        x = F.relu(self.up2(x))
        return self.head(x)


class RGBEncoder(nn.Module):
    def __init__(self):
        super().__init__()
        self.b1 = ConvBlock(3, 32)
        self.b2 = ConvBlock(32, 64)

    def forward(self, z):
        _check(z, 3, 16, "rgb input")
        s16 = self.b1(z)
        s8 = self.b2(F.max_pool2d(s16, 2))
        return F.max_pool2d(s8, 2), s8, s16


class HSIEncoder(nn.Module):
    def __init__(self, bands: int = 6):
        super().__init__()
        self.b1 = ConvBlock(bands, 32)
        self.b2 = ConvBlock(32, 64)

    def forward(self, x):
        s8 = self.b2(self.b1(x))
        return F.max_pool2d(s8, 2), s8


class SiameseUNet(nn.Module):
    kind = "siamese"

    def __init__(self, n_classes: int, bands: int = 6):
        super().__init__()
        self.bands = bands
        self.phi = IWCA(bands)
        self.gamma = HSIEncoder(bands)
        self.theta = RGBEncoder()
        self.psi = Decoder(128, 128, 32, n_classes)

    def forward(self, x, z):
        _check(x, self.bands, 8, "hsi input")
        h4, h8 = self.gamma(self.phi(x))
        r4, r8, r16 = self.theta(z)
        return self.psi(torch.cat([h4, r4], dim=1), [r8, h8], r16)


class UNetRGB(nn.Module):
    """The Siamese network with the HSI branch and attention removed."""

    kind = "unet_rgb"

    def __init__(self, n_classes: int):
        super().__init__()
        self.theta = RGBEncoder()
        self.psi = Decoder(64, 64, 32, n_classes)

    def forward(self, x, z):
        r4, r8, r16 = self.theta(z)
        return self.psi(r4, [r8], r16)


class CNNRGB(nn.Module):
    """Four 3x3 convolutions at full resolution, no pooling or skips."""

    kind = "cnn_rgb"

    def __init__(self, n_classes: int):
        super().__init__()
        self.theta = nn.Sequential(
            nn.Conv2d(3, 32, 3, padding=1), nn.ReLU(),
            nn.Conv2d(32, 64, 3, padding=1), nn.ReLU(),
            nn.Conv2d(64, 32, 3, padding=1), nn.ReLU(),
            nn.Conv2d(32, n_classes, 3, padding=1),
        )

    def forward(self, x, z):
        _check(z, 3, 16, "rgb input")
        return self.theta(z)


def build_model(kind: str, n_classes: int, bands: int = 6) -> nn.Module:
    if kind == "siamese":
        return SiameseUNet(n_classes, bands)
    if kind == "unet_rgb":
        return UNetRGB(n_classes)
    if kind == "cnn_rgb":
        return CNNRGB(n_classes)
    raise ValueError(f"unknown model kind {kind!r}; expected one of {KINDS}")


def init_params(model: nn.Module, seed: int) -> nn.Module:
    """Seeded fan-in uniform init: weights U(+-sqrt(6/fan_in)), biases U(+-1/sqrt(fan_in))."""
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for name, mod in model.named_modules():
            if isinstance(mod, nn.Conv2d):
                fan_in = mod.weight[0].numel()
                w = math.sqrt(6.0 / fan_in)
                b = 1.0 / math.sqrt(fan_in)
                mod.weight.copy_(torch.rand(mod.weight.shape, generator=gen, dtype=mod.weight.dtype) * 2 * w - w)
                mod.bias.copy_(torch.rand(mod.bias.shape, generator=gen, dtype=mod.bias.dtype) * 2 * b - b)
    return model


def param_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def param_groups(model: nn.Module) -> dict:
    groups = {}
    for name, p in model.named_parameters():
        groups.setdefault(name.split(".", 1)[0], []).append(name)
    return groups
