"""Scene encoder with its depth-estimation head and the berHu loss."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..errors import ValidationError
from .blocks import NEGATIVE_SLOPE
from .config import GeneratorConfig


class _ConvBlock(nn.Module):
    def __init__(self, in_channels, out_channels, stride=1):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, 3, stride=stride, padding=1)
        self.norm = nn.BatchNorm2d(out_channels)

    def forward(self, x):
        return F.leaky_relu(self.norm(self.conv(x)), NEGATIVE_SLOPE)


class _ResidualBlock(nn.Module):
    def __init__(self, in_channels, out_channels, stride):
        super().__init__()
        self.body = nn.Sequential(
            _ConvBlock(in_channels, out_channels, stride=stride),
            nn.Conv2d(out_channels, out_channels, 3, padding=1),
            nn.BatchNorm2d(out_channels),
        )
        self.skip = nn.Sequential(
            nn.Conv2d(in_channels, out_channels, 1, stride=stride),
            nn.BatchNorm2d(out_channels),
        )

    def forward(self, x):
        return F.leaky_relu(self.body(x) + self.skip(x), NEGATIVE_SLOPE)


class SceneEncoder(nn.Module):
    """Small residual conv net mapping an RGB scene to a feature vector.

    Returns both the pooled scene feature and the final spatial map, which
    feeds the depth head.  The expected image size is fixed per instance.
    """

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.image_height = cfg.image_height
        self.image_width = cfg.image_width
        channels = cfg.encoder_channels
        self.stem = _ConvBlock(3, channels[0], stride=2)
        self.stages = nn.Sequential(
            *[
                _ResidualBlock(channels[i - 1], channels[i], stride=2)
                for i in range(1, len(channels))
            ]
        )
        self.head = nn.Linear(channels[-1], cfg.scene_feature_dim)

    def forward(self, images: torch.Tensor):
        if images.dim() != 4 or images.shape[1] != 3:
            raise ValidationError(f"images must be (N, 3, H, W), got {tuple(images.shape)}")
        if images.shape[2] != self.image_height or images.shape[3] != self.image_width:
            raise ValidationError(
                f"expected {self.image_height}x{self.image_width} images, "
                f"got {images.shape[2]}x{images.shape[3]}"
            )
        feature_map = self.stages(self.stem(images))
        pooled = feature_map.mean(dim=(2, 3))
        return self.head(pooled), feature_map


class DepthHead(nn.Module):
    """Decodes the encoder map back to a strictly positive full-size depth."""

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        # Channels halve per upsampling step; resolution doubles, cost stays flat.
        channels = [cfg.encoder_channels[-1]]
        for _ in range(len(cfg.encoder_channels) - 1):
            channels.append(max(channels[-1] // 2, 8))
        self.ups = nn.ModuleList(
            [_ConvBlock(channels[i - 1], channels[i]) for i in range(1, len(channels))]
        )
        self.out = nn.Conv2d(channels[-1], 1, 3, padding=1)
        self.image_height = cfg.image_height
        self.image_width = cfg.image_width

    def forward(self, feature_map: torch.Tensor) -> torch.Tensor:
        x = feature_map
        for block in self.ups:
            x = block(F.interpolate(x, scale_factor=2, mode="nearest"))
        x = F.interpolate(x, size=(self.image_height, self.image_width), mode="bilinear",
                          align_corners=False)
        return F.softplus(self.out(x)).squeeze(1) + 1e-3


def berhu_loss(pred: torch.Tensor, target: torch.Tensor, mask: torch.Tensor | None = None):
    """Reverse Huber depth loss: L1 up to c = 0.2 max|r|, scaled quadratic above.

    The quadratic branch (r^2 + c^2) / (2c) meets the L1 branch continuously
    at |r| = c.  Averaged over valid pixels.
    """
    if pred.shape != target.shape:
        raise ValidationError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    if mask is not None:
        if mask.shape != pred.shape:
            raise ValidationError("mask shape must match predictions")
        if not bool(mask.any()):
            raise ValidationError("mask selects no pixels")
        residual = (pred - target)[mask]
    else:
        residual = (pred - target).reshape(-1)
    abs_r = residual.abs()
    cutoff = 0.2 * abs_r.max().detach()
    if cutoff <= 0:
        return abs_r.mean()
    quadratic = (residual * residual + cutoff * cutoff) / (2.0 * cutoff)
    return torch.where(abs_r <= cutoff, abs_r, quadratic).mean()


def image_to_tensor(image: np.ndarray) -> torch.Tensor:
    """(H, W, 3) float array in [0, 1] to a (3, H, W) float32 tensor."""
    arr = np.asarray(image, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValidationError(f"image must be (H, W, 3), got {arr.shape}")
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1)))
