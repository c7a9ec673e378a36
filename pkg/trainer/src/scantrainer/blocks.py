"""Building blocks: EvoNorm-S0, anti-aliased pooling, channel attention.

The residual attention block wraps conv -> norm/act -> conv -> efficient
channel attention -> residual sum; its U-shaped variant nests two
down/up levels with summed skips.
"""
from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn


class EvoNormS0(nn.Module):
    """y = x * sigmoid(v * x) / group_std(x) * gamma + beta (groups fixed)."""

    def __init__(self, channels: int, groups: int = 8, eps: float = 1e-5):
        super().__init__()
        if channels % groups != 0:
            raise ValueError(f"channels {channels} not divisible by groups {groups}")
        self.groups = groups
        self.eps = eps
        self.v = nn.Parameter(torch.ones(1, channels, 1, 1))
        self.gamma = nn.Parameter(torch.ones(1, channels, 1, 1))
        self.beta = nn.Parameter(torch.zeros(1, channels, 1, 1))

    def group_std(self, x: torch.Tensor) -> torch.Tensor:
        n, c, h, w = x.shape
        grouped = x.reshape(n, self.groups, c // self.groups, h, w)
        var = grouped.var(dim=(2, 3, 4), keepdim=True, unbiased=False)
        std = torch.sqrt(var + self.eps)
        return std.expand(n, self.groups, c // self.groups, h, w).reshape(n, c, h, w)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x * torch.sigmoid(self.v * x) / self.group_std(x) * self.gamma + self.beta


def _binomial_kernel(dtype, device) -> torch.Tensor:
    k = torch.tensor([1.0, 2.0, 1.0], dtype=dtype, device=device)
    k2 = torch.outer(k, k)
    return k2 / k2.sum()


class BlurPool(nn.Module):
    """Anti-aliased downsampling: stride-1 max pool, then a stride-2
    binomial ([1,2,1] x [1,2,1]) low-pass."""

    def __init__(self):
        super().__init__()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = F.pad(x, (0, 1, 0, 1), mode="replicate")
        x = F.max_pool2d(x, kernel_size=2, stride=1)
        c = x.shape[1]
        k = _binomial_kernel(x.dtype, x.device).expand(c, 1, 3, 3)
        x = F.pad(x, (1, 1, 1, 1), mode="replicate")
        return F.conv2d(x, k, stride=2, groups=c)


class PlainPool(nn.Module):
    """Strided max pool baseline (no anti-aliasing); kept for comparisons."""

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.max_pool2d(x, kernel_size=2, stride=2)


class ChannelAttention(nn.Module):
    """Efficient channel attention: global average pool, 1-D cross-channel
    convolution, logistic gate, channel-wise rescale."""

    def __init__(self, channels: int):
        super().__init__()
        t = int(abs(math.log2(channels) / 2.0 + 0.5))
        k = t if t % 2 else t + 1
        self.conv = nn.Conv1d(1, 1, kernel_size=max(k, 3), padding=max(k, 3) // 2, bias=False)

    def gates(self, x: torch.Tensor) -> torch.Tensor:
        pooled = x.mean(dim=(2, 3))  # (N, C)
        z = self.conv(pooled.unsqueeze(1)).squeeze(1)
        return torch.sigmoid(z)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x * self.gates(x).unsqueeze(-1).unsqueeze(-1)


class RecaBlock(nn.Module):
    """conv -> EvoNorm-S0 -> conv -> channel attention -> + input."""

    def __init__(self, channels: int, groups: int = 8):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm = EvoNormS0(channels, groups=groups)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.attention = ChannelAttention(channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = self.conv1(x)
        y = self.norm(y)
        y = self.conv2(y)
        y = self.attention(y)
        return x + y


class ResBlock(nn.Module):
    """Attention-free residual block (the plain generator uses these)."""

    def __init__(self, channels: int, groups: int = 8):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm = EvoNormS0(channels, groups=groups)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.conv2(self.norm(self.conv1(x)))


def upsample2(x: torch.Tensor) -> torch.Tensor:
    return F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)


class RecaUBlock(nn.Module):
    """Two-level nested down/up structure with attention blocks per level,
    anti-aliased downsampling, bilinear upsampling, and summed skips.

    Spatial dims must be divisible by 4.
    """

    def __init__(self, channels: int, groups: int = 8, pool_factory=BlurPool):
        super().__init__()
        self.block_in = RecaBlock(channels, groups)
        self.down1 = pool_factory()
        self.block_mid = RecaBlock(channels, groups)
        self.down2 = pool_factory()
        self.block_bottom = RecaBlock(channels, groups)
        self.block_up_mid = RecaBlock(channels, groups)
        self.block_out = RecaBlock(channels, groups)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] % 4 or x.shape[-2] % 4:
            raise ValueError(f"spatial dims must be divisible by 4, got {tuple(x.shape[-2:])}")
        top = self.block_in(x)
        mid = self.block_mid(self.down1(top))
        bottom = self.block_bottom(self.down2(mid))
        up_mid = self.block_up_mid(upsample2(bottom) + mid)
        return self.block_out(upsample2(up_mid) + top)


class SelfAttention2d(nn.Module):
    """Lightweight non-local attention over spatial positions."""

    def __init__(self, channels: int):
        super().__init__()
        inner = max(channels // 8, 1)
        self.query = nn.Conv2d(channels, inner, 1)
        self.key = nn.Conv2d(channels, inner, 1)
        self.value = nn.Conv2d(channels, channels, 1)
        self.gain = nn.Parameter(torch.zeros(1))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        n, c, h, w = x.shape
        q = self.query(x).flatten(2).transpose(1, 2)  # (N, HW, inner)
        k = self.key(x).flatten(2)  # (N, inner, HW)
        attn = torch.softmax(q @ k / math.sqrt(k.shape[1]), dim=-1)  # (N, HW, HW)
        v = self.value(x).flatten(2)  # (N, C, HW)
        out = (v @ attn.transpose(1, 2)).reshape(n, c, h, w)
        return x + self.gain * out
