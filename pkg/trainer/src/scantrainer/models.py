"""The three networks: restorer, degrader, and critic.

Restorer and degrader share a 3-level u-architecture (base width 16); the
restorer carries channel attention everywhere plus an attention U-block at
the bottleneck, the degrader uses plain residual blocks. The critic is a
stack of spectral-normalized strided convolutions with one self-attention
stage, scoring patches with a single real number.
"""
from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn
from torch.nn.utils.parametrizations import spectral_norm

from .blocks import BlurPool, RecaBlock, RecaUBlock, ResBlock, SelfAttention2d, upsample2


class _UNetBase(nn.Module):
    """Shared encoder/decoder scaffolding; block_cls picks the level block."""

    def __init__(self, block_cls, base_width: int = 16, use_u_bottleneck: bool = False):
        super().__init__()
        w = base_width
        self.stem = nn.Conv2d(3, w, 3, padding=1)
        self.enc0 = block_cls(w)
        self.down0 = nn.Sequential(BlurPool(), nn.Conv2d(w, 2 * w, 1))
        self.enc1 = block_cls(2 * w)
        self.down1 = nn.Sequential(BlurPool(), nn.Conv2d(2 * w, 4 * w, 1))
        self.bottleneck = RecaUBlock(4 * w) if use_u_bottleneck else block_cls(4 * w)
        self.up1 = nn.Conv2d(4 * w, 2 * w, 1)
        self.dec1 = block_cls(2 * w)
        self.up0 = nn.Conv2d(2 * w, w, 1)
        self.dec0 = block_cls(w)
        self.head = nn.Conv2d(w, 3, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] % 16 or x.shape[-2] % 16:
            raise ValueError(f"input sides must be divisible by 16, got {tuple(x.shape[-2:])}")
        s0 = self.enc0(self.stem(x))
        s1 = self.enc1(self.down0(s0))
        b = self.bottleneck(self.down1(s1))
        d1 = self.dec1(self.up1(upsample2(b)) + s1)
        d0 = self.dec0(self.up0(upsample2(d1)) + s0)
        return torch.sigmoid(self.head(d0))


class Restorer(_UNetBase):
    """Scanned patch -> restored patch, bounded into [0, 1]."""

    def __init__(self, base_width: int = 16):
        super().__init__(RecaBlock, base_width, use_u_bottleneck=True)


class Degrader(_UNetBase):
    """Clean patch -> pseudo-scanned patch (no attention)."""

    def __init__(self, base_width: int = 16):
        super().__init__(ResBlock, base_width, use_u_bottleneck=False)


class Critic(nn.Module):
    """Spectral-normalized strided conv stack with one self-attention stage;
    returns one score per patch."""

    def __init__(self, base_width: int = 32):
        super().__init__()
        w = base_width
        self.conv1 = spectral_norm(nn.Conv2d(3, w, 4, stride=2, padding=1))
        self.conv2 = spectral_norm(nn.Conv2d(w, 2 * w, 4, stride=2, padding=1))
        self.attention = SelfAttention2d(2 * w)
        self.conv3 = spectral_norm(nn.Conv2d(2 * w, 4 * w, 4, stride=2, padding=1))
        self.conv4 = spectral_norm(nn.Conv2d(4 * w, 1, 3, padding=1))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = F.leaky_relu(self.conv1(x), 0.1)
        y = F.leaky_relu(self.conv2(y), 0.1)
        y = self.attention(y)
        y = F.leaky_relu(self.conv3(y), 0.1)
        return self.conv4(y).mean(dim=(1, 2, 3))


def model_set(base_width: int = 16, critic_width: int = 32, seed: int = 0):
    """Seeded construction of (restorer, degrader, critic)."""
    torch.manual_seed(seed)
    return Restorer(base_width), Degrader(base_width), Critic(critic_width)
