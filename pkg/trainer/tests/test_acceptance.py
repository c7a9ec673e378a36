"""Acceptance suite for the trainer: gradient fidelity, stop-gradient,
hinge arithmetic, and the overfit smoke test, each printing a PASS line."""
import time

import torch

from scantrainer.data import PatchFolder
from scantrainer.losses import (
    FINETUNE_WEIGHTS,
    LossWeights,
    PerceptualProxy,
    critic_hinge_loss,
    degrader_adv_loss,
    degrader_total_loss,
    restoration_loss,
    unsupervised_cycle,
)
from scantrainer.models import Degrader, Restorer
from scantrainer.train import TrainConfig, Trainer

from conftest import fd_gradient, relative_error, write_store


def _passline(name: str, detail: str = "") -> None:
    print(f"\n[PASS] {name}" + (f"  ({detail})" if detail else ""))


def _check_input_gradient(loss_fn, tensor: torch.Tensor, n_probes: int = 4) -> float:
    """Autograd vs central differences on the strongest input coordinates."""
    tensor.requires_grad_(True)
    if tensor.grad is not None:
        tensor.grad = None
    loss = loss_fn()
    loss.backward()
    grad = tensor.grad.detach().clone()
    tensor.requires_grad_(False)
    flat = grad.abs().flatten()
    order = torch.argsort(flat, descending=True)[:n_probes]
    worst = 0.0
    for flat_idx in order:
        idx = tuple(torch.unravel_index(flat_idx, grad.shape))
        fd = fd_gradient(loss_fn, tensor.data, idx)
        worst = max(worst, relative_error(fd, grad[idx].item()))
    return worst


def test_gradient_suite():
    t0 = time.time()
    torch.manual_seed(0)
    dtype = torch.float64
    worst = {}

    # Supervised restoration loss (pixel + perceptual + structural terms).
    restored = torch.rand(8, 3, 32, 32, dtype=dtype)
    target = torch.rand(8, 3, 32, 32, dtype=dtype)
    perceptual = PerceptualProxy(seed=1).double()
    w = LossWeights(alpha=1.0, beta=0.2, gamma=1.0, delta=0.05)
    worst["restoration"] = _check_input_gradient(
        lambda: restoration_loss(restored, target, w, perceptual), restored
    )

    # Degradation L1 (away from zero-difference kinks by construction).
    degraded = torch.rand(8, 3, 32, 32, dtype=dtype) * 0.4 + 0.55
    scanned = torch.rand(8, 3, 32, 32, dtype=dtype) * 0.4
    adv = torch.tensor(0.7, dtype=dtype)
    worst["degrader_l1"] = _check_input_gradient(
        lambda: degrader_total_loss(degraded, scanned, adv, w), degraded
    )

    # Hinge losses (scores kept away from the corners at +-1).
    real = torch.tensor([0.3, -0.4, 0.6, 0.1, -0.2, 0.5, -0.6, 0.2], dtype=dtype)
    fake_s = torch.tensor([-0.3, 0.4, -0.5, 0.2, 0.6, -0.1, 0.3, -0.4], dtype=dtype)
    fake_u = torch.tensor([0.2, -0.5, 0.4, -0.3, 0.1, 0.5, -0.2, 0.6], dtype=dtype)
    worst["critic_hinge"] = _check_input_gradient(
        lambda: critic_hinge_loss(real, fake_s, fake_u, stage="semi"), fake_s
    )
    worst["degrader_adv"] = _check_input_gradient(
        lambda: degrader_adv_loss(fake_s, fake_u, stage="semi"), fake_s
    )

    # Unsupervised cycle loss, probed through a restorer weight.
    torch.manual_seed(2)
    restorer = Restorer(16).double()
    degrader = Degrader(16).double()
    y_u = torch.rand(2, 3, 32, 32, dtype=dtype)

    def cycle_loss():
        _, loss = unsupervised_cycle(y_u, degrader, restorer, FINETUNE_WEIGHTS, perceptual)
        return loss

    loss = cycle_loss()
    loss.backward()
    weight = restorer.head.weight
    grad = weight.grad.detach().clone()
    idx = tuple(torch.unravel_index(torch.argmax(grad.abs()), grad.shape))
    fd = fd_gradient(cycle_loss, weight.data, idx)
    worst["cycle"] = relative_error(fd, grad[idx].item())

    elapsed = time.time() - t0
    for name, err in worst.items():
        assert err < 1e-4, f"{name}: rel err {err}"
    assert elapsed < 120.0
    _passline("gradient suite", ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; {elapsed:.1f}s")


def test_stop_gradient():
    torch.manual_seed(3)
    restorer = Restorer(16)
    degrader = Degrader(16)
    y_u = torch.rand(2, 3, 32, 32)
    _, loss = unsupervised_cycle(y_u, degrader, restorer, FINETUNE_WEIGHTS, PerceptualProxy(seed=4))
    loss.backward()
    for name, param in degrader.named_parameters():
        assert param.grad is None or torch.all(param.grad == 0), f"gradient leaked into {name}"
    nonzero = sum(
        1 for p in restorer.parameters() if p.grad is not None and p.grad.abs().sum() > 0
    )
    assert nonzero > 0
    _passline("stop-gradient", f"degrader grads all zero; {nonzero} restorer tensors nonzero")


def test_hinge_arithmetic():
    z = torch.zeros(16)
    assert float(critic_hinge_loss(z, z)) == 2.0  # exactly
    torch.manual_seed(4)
    real = torch.randn(16)
    fakes = torch.randn(16)
    semi = float(critic_hinge_loss(real, fakes, fakes.clone(), stage="semi"))
    pooled = float(critic_hinge_loss(real, fakes))
    assert abs(semi - pooled) < 1e-9
    _passline("hinge arithmetic", f"zero-score loss 2.0; semi/pooled gap {abs(semi - pooled):.1e}")


def test_overfit_smoke(tmp_path):
    t0 = time.time()
    store_dir = tmp_path / "store"
    write_store(store_dir, n=8, side=32, seed=5, with_scan=True)
    scanned = PatchFolder.load(store_dir)
    cfg = TrainConfig(steps=500, batch_size=8, seed=0)
    trainer = Trainer(scanned, None, cfg)
    curves = trainer.pretrain()
    initial = curves[0]["restorer"]
    final = curves[-1]["restorer"]
    elapsed = time.time() - t0
    assert final < 0.10 * initial
    assert elapsed < 300.0
    _passline("overfit smoke", f"{initial:.3f} -> {final:.3f} in 500 steps, {elapsed:.0f}s")
