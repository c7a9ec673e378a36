"""Loss system: supervised restoration losses, hinge adversarial losses,
and the stop-gradient cycle that lets unscanned images train the restorer.

Two weight regimes ship as presets: the supervised pre-training values and
the semi-supervised fine-tuning values. The structural term enters as
1 - MS-SSIM so every restoration loss is minimized at the ground truth.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn


@dataclass(frozen=True)
class LossWeights:
    alpha: float  # pixel term
    beta: float  # perceptual term
    gamma: float  # structural term
    delta: float  # adversarial term on the degrader
    eta: float = 0.5  # supervised/unsupervised balance

    def __post_init__(self) -> None:
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if min(self.alpha, self.beta, self.gamma, self.delta) < 0:
            raise ValueError("loss weights must be nonnegative")


PRETRAIN_WEIGHTS = LossWeights(alpha=1.0, beta=0.2, gamma=1.0, delta=0.05)
FINETUNE_WEIGHTS = LossWeights(alpha=1.0, beta=0.1, gamma=0.25, delta=0.05, eta=0.5)


# --- differentiable MS-SSIM ---------------------------------------------------

_MS_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
_WINDOW = 11
_SIGMA = 1.5
_C1 = 0.01**2
_C2 = 0.03**2


def _gaussian_window(dtype, device) -> torch.Tensor:
    half = (_WINDOW - 1) / 2.0
    x = torch.arange(_WINDOW, dtype=dtype, device=device) - half
    g = torch.exp(-(x * x) / (2.0 * _SIGMA * _SIGMA))
    g = g / g.sum()
    return torch.outer(g, g)


def _local_mean(x: torch.Tensor, win: torch.Tensor) -> torch.Tensor:
    c = x.shape[1]
    k = win.expand(c, 1, _WINDOW, _WINDOW)
    return F.conv2d(x, k, groups=c)


def _ssim_terms(x: torch.Tensor, y: torch.Tensor, win: torch.Tensor):
    mu_x = _local_mean(x, win)
    mu_y = _local_mean(y, win)
    var_x = _local_mean(x * x, win) - mu_x * mu_x
    var_y = _local_mean(y * y, win) - mu_y * mu_y
    cov = _local_mean(x * y, win) - mu_x * mu_y
    lum = (2 * mu_x * mu_y + _C1) / (mu_x * mu_x + mu_y * mu_y + _C1)
    cs = (2 * cov + _C2) / (var_x + var_y + _C2)
    return lum.mean(), cs.mean()


def _downsample2(x: torch.Tensor) -> torch.Tensor:
    k1 = torch.tensor([0.25, 0.5, 0.25], dtype=x.dtype, device=x.device)
    k = torch.outer(k1, k1)
    c = x.shape[1]
    x = F.pad(x, (1, 1, 1, 1), mode="replicate")
    low = F.conv2d(x, k.expand(c, 1, 3, 3), groups=c)
    h, w = low.shape[-2:]
    low = low[..., : h - h % 2, : w - w % 2]
    return F.avg_pool2d(low, kernel_size=2)


def ms_ssim(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Multi-scale structural similarity, differentiable, data range 1.

    Inputs too small for 5 dyadic scales use fewer scales with the exponent
    weights renormalized; luminance enters at the coarsest scale only.
    """
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    n_scales = 1
    dim = min(a.shape[-2:])
    if dim < _WINDOW:
        raise ValueError(f"inputs must be at least {_WINDOW} px per side")
    while n_scales < len(_MS_WEIGHTS) and dim // 2 >= _WINDOW:
        dim //= 2
        n_scales += 1
    weights = torch.tensor(_MS_WEIGHTS[:n_scales], dtype=a.dtype, device=a.device)
    weights = weights / weights.sum()

    win = _gaussian_window(a.dtype, a.device)
    score = torch.ones((), dtype=a.dtype, device=a.device)
    x, y = a, b
    for s in range(n_scales):
        lum, cs = _ssim_terms(x, y, win)
        term = lum * cs if s == n_scales - 1 else cs
        score = score * term.clamp_min(0.0) ** weights[s]
        if s != n_scales - 1:
            x = _downsample2(x)
            y = _downsample2(y)
    return score


# --- perceptual proxy -----------------------------------------------------------


class PerceptualProxy(nn.Module):
    """Frozen, seeded, randomly initialized 3-stage conv pyramid.

    Features are channel-unit-normalized per position and stages weigh in
    uniformly, preserving the plumbing and gradient path of a learned
    perceptual metric without shipping pretrained weights. The interface
    accepts any module with the same call signature.
    """

    def __init__(self, seed: int = 0, width: int = 16):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        self.stages = nn.ModuleList()
        in_c = 3
        for i in range(3):
            out_c = width * (2**i)
            conv = nn.Conv2d(in_c, out_c, 3, stride=1 if i == 0 else 2, padding=1)
            with torch.no_grad():
                conv.weight.copy_(
                    torch.randn(conv.weight.shape, generator=gen) / (in_c * 9) ** 0.5
                )
                conv.bias.zero_()
            self.stages.append(conv)
            in_c = out_c
        for p in self.parameters():
            p.requires_grad_(False)

    @staticmethod
    def _unit(feat: torch.Tensor) -> torch.Tensor:
        return feat / torch.sqrt((feat * feat).sum(dim=1, keepdim=True) + 1e-10)

    def forward(self, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        fa, fb = a, b
        total = torch.zeros((), dtype=a.dtype, device=a.device)
        for stage in self.stages:
            fa = torch.tanh(stage(fa))
            fb = torch.tanh(stage(fb))
            diff = self._unit(fa) - self._unit(fb)
            total = total + (diff * diff).mean()
        return total / len(self.stages)


# --- restoration losses -----------------------------------------------------------


def restoration_loss(
    restored: torch.Tensor,
    target: torch.Tensor,
    weights: LossWeights,
    perceptual: nn.Module | None = None,
) -> torch.Tensor:
    """alpha * MSE + beta * perceptual + gamma * (1 - MS-SSIM)."""
    loss = weights.alpha * F.mse_loss(restored, target)
    if weights.beta > 0 and perceptual is not None:
        loss = loss + weights.beta * perceptual(restored, target)
    if weights.gamma > 0:
        loss = loss + weights.gamma * (1.0 - ms_ssim(restored, target))
    return loss


def combined_restoration_loss(
    supervised: torch.Tensor, unsupervised: torch.Tensor, eta: float
) -> torch.Tensor:
    """eta-weighted blend of the supervised and unsupervised restoration
    errors."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    return eta * supervised + (1.0 - eta) * unsupervised


# --- adversarial losses --------------------------------------------------------------


def critic_hinge_loss(
    real_scores: torch.Tensor,
    fake_scores_scanned: torch.Tensor,
    fake_scores_unscanned: torch.Tensor | None = None,
    stage: str = "supervised",
) -> torch.Tensor:
    """Hinge loss for the critic.

    Supervised stage penalizes real scores below +1 and fake scores above
    -1; the semi stage splits the fake expectation 0.5/0.5 between fakes
    from scanned-source and unscanned-source images.
    """
    real_term = F.relu(1.0 - real_scores).mean()
    if stage == "supervised":
        return real_term + F.relu(1.0 + fake_scores_scanned).mean()
    if stage == "semi":
        if fake_scores_unscanned is None:
            raise ValueError("semi stage requires unscanned-source fake scores")
        return real_term + 0.5 * (
            F.relu(1.0 + fake_scores_scanned).mean() + F.relu(1.0 + fake_scores_unscanned).mean()
        )
    raise ValueError(f"unknown stage {stage!r}")


def degrader_adv_loss(
    fake_scores_scanned: torch.Tensor,
    fake_scores_unscanned: torch.Tensor | None = None,
    stage: str = "supervised",
) -> torch.Tensor:
    """Generator side of the hinge game: negative mean critic score."""
    if stage == "supervised":
        return -fake_scores_scanned.mean()
    if stage == "semi":
        if fake_scores_unscanned is None:
            raise ValueError("semi stage requires unscanned-source fake scores")
        return -0.5 * (fake_scores_scanned.mean() + fake_scores_unscanned.mean())
    raise ValueError(f"unknown stage {stage!r}")


def degrader_total_loss(
    degraded: torch.Tensor,
    scanned: torch.Tensor,
    adv: torch.Tensor,
    weights: LossWeights,
) -> torch.Tensor:
    """alpha * L1 on scanned pairs + delta * adversarial. The L1 term stays
    supervised-only in both stages."""
    return weights.alpha * F.l1_loss(degraded, scanned) + weights.delta * adv


# --- unsupervised cycle ----------------------------------------------------------------


def unsupervised_cycle(
    clean_unscanned: torch.Tensor,
    degrader: nn.Module,
    restorer: nn.Module,
    weights: LossWeights,
    perceptual: nn.Module | None = None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """clean -> pseudo-scan -> restored, with the gradient into the degrader
    severed at the pseudo-scan so the restoration error cannot falsify the
    learned degradation distribution.

    Returns (restored, loss).
    """
    pseudo = degrader(clean_unscanned)
    restored = restorer(pseudo.detach())
    loss = restoration_loss(restored, clean_unscanned, weights, perceptual)
    return restored, loss
