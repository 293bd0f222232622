"""Unrolled split-Bregman restoration with learned spectral data updates.

Each of the K iterations runs: a graph-network data update that predicts
and subtracts stripe spectra from the observation, a shrinkage update of
the six derivative-domain split variables, and a Bregman accumulation.
Iteration k has its own network and its own positive (mu, alpha) pair
produced by softplus of learned scalars. The previous iteration's split
state feeds back into the network as a second spectral input channel.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .hessian import (
    hessian_directions,
    second_derivative,
    second_derivative_adjoint,
    shrink,
)
from .network import DestripeNetwork, network_forward, stripe_subtract


class NumericalAbort(RuntimeError):
    """A non-finite value appeared mid-computation; maps to CLI exit 3."""


@dataclass
class IterationParams:
    mu: float
    alpha: float


@dataclass
class UnrolledState:
    x: object  # current estimate
    z: dict  # split variables per direction
    b: dict  # Bregman variables per direction
    k: int = 0


def _softplus_inverse(y):
    return math.log(math.expm1(y))


def fft2_centered(x):
    """Per-slice centered 2D FFT of a real torch volume."""
    return torch.fft.fftshift(torch.fft.fft2(x, dim=(-2, -1)), dim=(-2, -1))


def ifft2_centered(spec):
    return torch.fft.ifft2(torch.fft.ifftshift(spec, dim=(-2, -1)), dim=(-2, -1))


class DestripeModel(nn.Module):
    """All learnable state: K unrolled networks plus hyper-parameter scalars."""

    def __init__(self, cfg, in_channels=2):
        super().__init__()
        self.cfg = cfg
        n_nets = 1 if cfg.tie_unroll_weights else cfg.unroll_K
        self.nets = nn.ModuleList(
            DestripeNetwork(cfg, in_channels=in_channels) for _ in range(n_nets)
        )
        self.raw_mu = nn.Parameter(
            torch.full((cfg.unroll_K,), _softplus_inverse(1.0), dtype=torch.float64)
        )
        self.raw_alpha = nn.Parameter(
            torch.full((cfg.unroll_K,), _softplus_inverse(0.1), dtype=torch.float64)
        )

    def reset_parameters(self, generator):
        for net in self.nets:
            net.reset_parameters(generator)
        with torch.no_grad():
            self.raw_mu.fill_(_softplus_inverse(1.0))
            self.raw_alpha.fill_(_softplus_inverse(0.1))

    def net_for(self, k):
        return self.nets[0 if self.cfg.tie_unroll_weights else k]

    def hyperparams(self, k):
        """Strictly positive (mu_k, alpha_k); initialized to (1.0, 0.1)."""
        return (
            torch.nn.functional.softplus(self.raw_mu[k]),
            torch.nn.functional.softplus(self.raw_alpha[k]),
        )

    def iteration_params(self, k):
        mu, alpha = self.hyperparams(k)
        return IterationParams(mu=float(mu), alpha=float(alpha))


def gather_spectrum(spec, gt):
    b = gt.bins
    return spec[b[:, 0], b[:, 1], b[:, 2]]


def data_update(y_spec, gt, net, feedback=None):
    """One learned data update: predict stripe spectrum, subtract, invert.

    Node attributes are the observed spectrum plus the spectrum of the
    spatial feedback volume (zero on the first iteration). Returns the new
    spatial estimate and the recovered spectrum.
    """
    y_nodes = gather_spectrum(y_spec, gt)
    if feedback is None:
        f_nodes = torch.zeros_like(y_nodes)
    else:
        f_nodes = gather_spectrum(fft2_centered(feedback), gt)
    h0 = torch.stack([y_nodes, f_nodes], dim=1)
    activation = network_forward(net, gt, h0)
    recovered = stripe_subtract(y_spec, gt, activation)
    x = ifft2_centered(recovered).real
    return x, recovered


def prior_update(x, b, directions, threshold, boundary="reflect"):
    """Z_i = shrink(lam_i * D_i(X) + B_i, alpha/mu) for every direction."""
    return {
        d: shrink(lam * second_derivative(x, d, boundary) + b[d], threshold)
        for d, lam in directions.items()
    }


def bregman_update(x, z, b, directions, boundary="reflect"):
    """B_i += lam_i * D_i(X) - Z_i for every direction."""
    return {
        d: b[d] + lam * second_derivative(x, d, boundary) - z[d]
        for d, lam in directions.items()
    }


def combine_feedback(z, b, directions, boundary="reflect"):
    """Adjoint-combined image sum_i D_i^T (Z_i - B_i); exactly mean-free."""
    out = None
    for d in directions:
        term = second_derivative_adjoint(z[d] - b[d], d, boundary)
        out = term if out is None else out + term
    return out


def unfolded_forward(y, cfg, model, gt, collect_report=False):
    """Run the K-iteration unrolled loop; fully differentiable.

    ``y`` is a real torch volume. Raises NumericalAbort naming the failing
    iteration and step if anything goes non-finite.
    """
    n_d = y.shape[0]
    directions = hessian_directions(cfg, n_d)
    y_spec = fft2_centered(y)
    zeros = {d: torch.zeros_like(y) for d in directions}
    state = UnrolledState(x=y, z=zeros, b=dict(zeros), k=0)
    report = []
    for k in range(cfg.unroll_K):
        feedback = None if k == 0 else combine_feedback(state.z, state.b, directions)
        x, _ = data_update(y_spec, gt, model.net_for(k), feedback)
        if not bool(torch.isfinite(x).all()):
            raise NumericalAbort(f"non-finite estimate in data update, iteration {k}")
        mu, alpha = model.hyperparams(k)
        b_prev = state.b
        z = prior_update(x, b_prev, directions, alpha / mu)
        b = bregman_update(x, z, b_prev, directions)
        for d in directions:
            if not bool(torch.isfinite(z[d]).all() and torch.isfinite(b[d]).all()):
                raise NumericalAbort(
                    f"non-finite split state in direction {d}, iteration {k}"
                )
        if collect_report:
            with torch.no_grad():
                data_term = float(((y - x) ** 2).sum())
                prior_term = 0.0
                residuals = {}
                for d, lam in directions.items():
                    dx = second_derivative(x, d, "reflect")
                    prior_term += lam * float(dx.abs().sum())
                    residuals[d] = float((z[d] - lam * dx - b_prev[d]).norm())
                report.append(
                    {
                        "iteration": k,
                        "mu": float(mu),
                        "alpha": float(alpha),
                        "data_term": data_term,
                        "hessian_l1": prior_term,
                        "objective": data_term + float(alpha) * prior_term,
                        "residuals": residuals,
                    }
                )
        state = UnrolledState(x=x, z=z, b=b, k=k + 1)
    if collect_report:
        return state.x, report
    return state.x
