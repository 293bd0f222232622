"""Self-supervised fitting of all learnable parameters on one volume."""

import copy
from dataclasses import dataclass

import numpy as np
import torch

from .loss import Self2SelfLoss
from .unroll import DestripeModel, NumericalAbort, unfolded_forward


@dataclass
class TrainResult:
    model: DestripeModel
    output: np.ndarray  # destriped volume at the best epoch
    log: list  # per-epoch dicts
    best_epoch: int
    best_loss: float


def build_model(cfg, generator=None):
    """Fresh model with deterministic seeded initialization."""
    model = DestripeModel(cfg, in_channels=2)
    if generator is None:
        generator = torch.Generator()
        generator.manual_seed(cfg.rng_seed)
    model.reset_parameters(generator)
    return model


def _log_entry(epoch, mse, iso, total, model, cfg):
    entry = {
        "epoch": epoch,
        "mse": float(mse),
        "isotropy": float(iso),
        "total": float(total),
    }
    for k in range(cfg.unroll_K):
        p = model.iteration_params(k)
        entry[f"mu_{k}"] = p.mu
        entry[f"alpha_{k}"] = p.alpha
    return entry


def train(y, cfg, gt, field, annuli, model=None):
    """Adam over the full-volume Self2Self loss; keeps the best epoch.

    ``y`` is the observed volume as a numpy array. Returns the trained
    model (restored to its best parameters), the corresponding output
    volume and the per-epoch log.
    """
    y_t = torch.as_tensor(np.asarray(y, dtype=np.float64))
    if model is None:
        model = build_model(cfg)
    criterion = Self2SelfLoss(field, annuli, cfg.loss_beta)
    optimizer = torch.optim.Adam(
        model.parameters(), lr=cfg.learning_rate, betas=(0.9, 0.999), eps=1e-8
    )
    log = []
    best_loss = float("inf")
    best_epoch = -1
    best_state = None
    for epoch in range(cfg.train_epochs):
        optimizer.zero_grad(set_to_none=True)
        x = unfolded_forward(y_t, cfg, model, gt)
        total, mse, iso = criterion(x, y_t)
        if not bool(torch.isfinite(total)):
            raise NumericalAbort(f"non-finite loss at epoch {epoch}")
        log.append(_log_entry(epoch, mse, iso, total, model, cfg))
        if float(total) < best_loss:
            best_loss = float(total)
            best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())
        total.backward()
        optimizer.step()
    if best_state is not None:
        model.load_state_dict(best_state)
    with torch.no_grad():
        output = unfolded_forward(y_t, cfg, model, gt)
    return TrainResult(
        model=model,
        output=output.numpy(),
        log=log,
        best_epoch=best_epoch,
        best_loss=best_loss,
    )


def _parameter_samples(model, n_samples, rng):
    """Coordinates spread round-robin over every parameter tensor."""
    named = [(name, p) for name, p in model.named_parameters()]
    samples = []
    i = 0
    while len(samples) < n_samples:
        name, p = named[i % len(named)]
        flat = int(rng.integers(0, p.numel()))
        samples.append((name, flat))
        i += 1
    return samples


def loss_gradient_check(y, cfg, gt, field, annuli, n_params_sampled=50, step=1e-6, seed=0):
    """Max relative error of analytic vs central-difference loss gradients.

    Parameters are first perturbed away from the zero-initialized start so
    every gradient path is active.
    """
    y_t = torch.as_tensor(np.asarray(y, dtype=np.float64))
    model = build_model(cfg)
    gen = torch.Generator()
    gen.manual_seed(cfg.rng_seed + 1)
    # a healthy perturbation keeps every gradient path well above the
    # finite-difference noise floor eps*|loss|/step
    with torch.no_grad():
        for p in model.parameters():
            p.add_(0.3 * torch.randn(p.shape, generator=gen, dtype=torch.float64))
    criterion = Self2SelfLoss(field, annuli, cfg.loss_beta)

    def total_loss():
        x = unfolded_forward(y_t, cfg, model, gt)
        return criterion(x, y_t)[0]

    model.zero_grad(set_to_none=True)
    total_loss().backward()
    analytic = {n: p.grad.detach().clone() for n, p in model.named_parameters()}

    rng = np.random.Generator(np.random.Philox(key=[seed, 0]))
    params = dict(model.named_parameters())
    worst = 0.0
    details = []
    for name, flat in _parameter_samples(model, n_params_sampled, rng):
        p = params[name]
        with torch.no_grad():
            orig = p.view(-1)[flat].item()
            p.view(-1)[flat] = orig + step
            up = float(total_loss())
            p.view(-1)[flat] = orig - step
            down = float(total_loss())
            p.view(-1)[flat] = orig
        fd = (up - down) / (2 * step)
        an = float(analytic[name].view(-1)[flat])
        rel = abs(an - fd) / max(abs(an), abs(fd), 1e-10)
        details.append({"param": name, "index": flat, "analytic": an, "fd": fd, "rel": rel})
        worst = max(worst, rel)
    return worst, details
