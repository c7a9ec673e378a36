"""Training loops: supervised pre-training and semi-supervised fine-tuning.

Pre-training fits the restorer alone on scanned pairs and, independently,
the degrader/critic pair. Fine-tuning alternates critic, degrader, and
restorer steps per iteration, with the restorer's objective blending the
supervised error on scanned pairs and the unsupervised cycle error on
ground-truth-only images. With no unscanned data the semi stage degrades
gracefully to eta-weighted supervised updates (the unsupervised term is
simply zero).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .data import BatchSampler, PatchFolder
from .losses import (
    FINETUNE_WEIGHTS,
    PRETRAIN_WEIGHTS,
    LossWeights,
    PerceptualProxy,
    combined_restoration_loss,
    critic_hinge_loss,
    degrader_adv_loss,
    degrader_total_loss,
    restoration_loss,
    unsupervised_cycle,
)
from .models import Restorer, model_set


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    steps: int = 200
    batch_size: int = 4
    lr: float = 2e-4
    betas: tuple[float, float] = (0.5, 0.999)
    base_width: int = 16
    critic_width: int = 32
    seed: int = 0
    weights_pretrain: LossWeights = field(default_factory=lambda: PRETRAIN_WEIGHTS)
    weights_finetune: LossWeights = field(default_factory=lambda: FINETUNE_WEIGHTS)


def _check_finite(value: torch.Tensor, name: str, step: int) -> None:
    if not torch.isfinite(value):
        raise TrainingDiverged(f"{name} became non-finite at step {step}: {value.item()!r}")


def _adam(module: nn.Module, cfg: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(module.parameters(), lr=cfg.lr, betas=cfg.betas)


class Trainer:
    def __init__(self, scanned: PatchFolder, unscanned: PatchFolder | None, cfg: TrainConfig):
        if scanned.scan is None:
            raise ValueError("the scanned store must carry scan patches")
        self.cfg = cfg
        self.scanned = scanned
        self.unscanned = unscanned if unscanned is not None and len(unscanned) else None
        torch.manual_seed(cfg.seed)
        self.restorer, self.degrader, self.critic = model_set(
            cfg.base_width, cfg.critic_width, seed=cfg.seed
        )
        self.perceptual = PerceptualProxy(seed=cfg.seed + 1)
        self.opt_restorer = _adam(self.restorer, cfg)
        self.opt_degrader = _adam(self.degrader, cfg)
        self.opt_critic = _adam(self.critic, cfg)
        self.curves: list[dict] = []

    # -- batches ------------------------------------------------------------

    def _scanned_batch(self, sampler: BatchSampler) -> tuple[torch.Tensor, torch.Tensor]:
        idx = sampler.next_indices()
        return self.scanned.scan[idx], self.scanned.gt[idx]

    def _unscanned_batch(self, sampler: BatchSampler | None) -> torch.Tensor | None:
        if sampler is None:
            return None
        return self.unscanned.gt[sampler.next_indices()]

    # -- stages --------------------------------------------------------------

    def pretrain(self, steps: int | None = None) -> list[dict]:
        """Supervised stage: restorer alone, then degrader/critic jointly."""
        cfg = self.cfg
        steps = steps or cfg.steps
        w = cfg.weights_pretrain
        sampler = BatchSampler(len(self.scanned), cfg.batch_size, seed=cfg.seed)
        for step in range(steps):
            x_s, y_s = self._scanned_batch(sampler)

            self.opt_restorer.zero_grad()
            restored = self.restorer(x_s)
            loss_g1 = restoration_loss(restored, y_s, w, self.perceptual)
            _check_finite(loss_g1, "restorer loss", step)
            loss_g1.backward()
            self.opt_restorer.step()

            self.opt_critic.zero_grad()
            fake = self.degrader(y_s)
            loss_d = critic_hinge_loss(self.critic(x_s), self.critic(fake.detach()))
            _check_finite(loss_d, "critic loss", step)
            loss_d.backward()
            self.opt_critic.step()

            self.opt_degrader.zero_grad()
            fake = self.degrader(y_s)
            adv = degrader_adv_loss(self.critic(fake))
            loss_g2 = degrader_total_loss(fake, x_s, adv, w)
            _check_finite(loss_g2, "degrader loss", step)
            loss_g2.backward()
            self.opt_degrader.step()

            self.curves.append(
                {
                    "stage": "pretrain",
                    "step": step,
                    "restorer": float(loss_g1.detach()),
                    "critic": float(loss_d.detach()),
                    "degrader": float(loss_g2.detach()),
                }
            )
        return self.curves

    def finetune(self, steps: int | None = None) -> list[dict]:
        """Semi-supervised stage: critic, degrader, restorer steps in turn."""
        cfg = self.cfg
        steps = steps or cfg.steps
        w = cfg.weights_finetune
        sampler_s = BatchSampler(len(self.scanned), cfg.batch_size, seed=cfg.seed + 10)
        sampler_u = (
            BatchSampler(len(self.unscanned), cfg.batch_size, seed=cfg.seed + 20)
            if self.unscanned
            else None
        )
        for step in range(steps):
            x_s, y_s = self._scanned_batch(sampler_s)
            y_u = self._unscanned_batch(sampler_u)

            # Critic: real scans against fakes from both sources.
            self.opt_critic.zero_grad()
            fake_s = self.degrader(y_s).detach()
            if y_u is not None:
                fake_u = self.degrader(y_u).detach()
                loss_d = critic_hinge_loss(
                    self.critic(x_s), self.critic(fake_s), self.critic(fake_u), stage="semi"
                )
            else:
                loss_d = critic_hinge_loss(self.critic(x_s), self.critic(fake_s))
            _check_finite(loss_d, "critic loss", step)
            loss_d.backward()
            self.opt_critic.step()

            # Degrader: L1 stays supervised-only; adversarial covers both sources.
            self.opt_degrader.zero_grad()
            fake_s = self.degrader(y_s)
            if y_u is not None:
                fake_u = self.degrader(y_u)
                adv = degrader_adv_loss(self.critic(fake_s), self.critic(fake_u), stage="semi")
            else:
                adv = degrader_adv_loss(self.critic(fake_s))
            loss_g2 = degrader_total_loss(fake_s, x_s, adv, w)
            _check_finite(loss_g2, "degrader loss", step)
            loss_g2.backward()
            self.opt_degrader.step()

            # Restorer: supervised error blended with the stop-gradient cycle.
            self.opt_restorer.zero_grad()
            sup = restoration_loss(self.restorer(x_s), y_s, w, self.perceptual)
            if y_u is not None:
                _, unsup = unsupervised_cycle(y_u, self.degrader, self.restorer, w, self.perceptual)
            else:
                unsup = torch.zeros((), dtype=sup.dtype)
            loss_g1 = combined_restoration_loss(sup, unsup, w.eta)
            _check_finite(loss_g1, "restorer loss", step)
            loss_g1.backward()
            self.opt_restorer.step()

            self.curves.append(
                {
                    "stage": "semi",
                    "step": step,
                    "restorer": float(loss_g1.detach()),
                    "supervised": float(sup.detach()),
                    "unsupervised": float(unsup.detach()),
                    "critic": float(loss_d.detach()),
                    "degrader": float(loss_g2.detach()),
                }
            )
        return self.curves

    # -- persistence -----------------------------------------------------------

    def save_checkpoint(self, path: str | Path, stage: str) -> None:
        # Plain primitives only, so checkpoints load under weights_only=True.
        config = {
            "steps": self.cfg.steps,
            "batch_size": self.cfg.batch_size,
            "lr": self.cfg.lr,
            "betas": list(self.cfg.betas),
            "base_width": self.cfg.base_width,
            "critic_width": self.cfg.critic_width,
            "seed": self.cfg.seed,
        }
        torch.save(
            {
                "stage": stage,
                "config": config,
                "restorer": self.restorer.state_dict(),
                "degrader": self.degrader.state_dict(),
                "critic": self.critic.state_dict(),
            },
            path,
        )

    def save_curves(self, path: str | Path) -> None:
        if not self.curves:
            return
        fields = sorted({k for row in self.curves for k in row})
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            writer.writerows(self.curves)


def load_restorer(path: str | Path, base_width: int = 16) -> Restorer:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    model = Restorer(base_width)
    model.load_state_dict(payload["restorer"])
    model.eval()
    return model


def restore_store(model: Restorer, folder: PatchFolder, out_dir: str | Path) -> list[str]:
    """Run the restorer over a store's scan patches; write {id}.png outputs
    in the layout the metrics CLI scores."""
    from PIL import Image

    if folder.scan is None:
        raise ValueError("store has no scan patches to restore")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    with torch.no_grad():
        for i, patch_id in enumerate(folder.ids):
            restored = model(folder.scan[i : i + 1])[0]
            arr = (restored.clamp(0, 1).permute(1, 2, 0).numpy() * 255.0).round().astype(np.uint8)
            Image.fromarray(arr, mode="RGB").save(out_dir / f"{patch_id}.png")
            written.append(patch_id)
    return written
