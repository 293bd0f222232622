"""Second-order derivative operators, shrinkage, and the classic solver.

The main restoration path uses reflective (edge-clamped) boundaries so no
wraparound artifacts leak across volume borders; the classic quadratic
solver uses periodic boundaries, where the normal equations diagonalize in
Fourier space and can be solved exactly. Every operator comes with its
exact adjoint.

Axis convention: x is the in-slice column axis (2), y the row axis (1),
z the slice axis (0).
"""

import math

import numpy as np
import torch

DIRECTION_ORDER = ("xx", "yy", "zz", "xy", "xz", "yz")
_AXIS = {"x": 2, "y": 1, "z": 0}


def hessian_directions(cfg, n_d):
    """Active direction labels with their coupling weights.

    zz/xz/yz are dropped for stacks with fewer than 3 slices.
    """
    lx, ly, lz = cfg.lambda_x, cfg.lambda_y, cfg.lambda_z
    weights = {
        "xx": lx,
        "yy": ly,
        "zz": lz,
        "xy": 2.0 * math.sqrt(lx * ly),
        "xz": 2.0 * math.sqrt(lx * lz),
        "yz": 2.0 * math.sqrt(ly * lz),
    }
    active = [d for d in DIRECTION_ORDER if n_d >= 3 or "z" not in d]
    return {d: weights[d] for d in active}


def shrink(v, t):
    """Soft threshold sign(v) * max(|v| - t, 0), elementwise."""
    if isinstance(v, torch.Tensor):
        return torch.sign(v) * torch.clamp(torch.abs(v) - t, min=0)
    v = np.asarray(v)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _check_axis(x, dim):
    if x.shape[dim] < 3:
        raise ValueError(
            f"axis {dim} has length {x.shape[dim]}; derivative needs >= 3 samples"
        )


def _gather_prev(x, dim):
    idx = torch.clamp(torch.arange(x.shape[dim]) - 1, min=0)
    return x.index_select(dim, idx)


def _gather_next(x, dim):
    n = x.shape[dim]
    idx = torch.clamp(torch.arange(n) + 1, max=n - 1)
    return x.index_select(dim, idx)


def _scatter_prev(y, dim):
    # transpose of the clamped i-1 gather
    y = torch.movedim(y, dim, 0)
    head = y[0:1] + y[1:2]
    mid = y[2:]
    tail = torch.zeros_like(y[0:1])
    return torch.movedim(torch.cat([head, mid, tail], dim=0), 0, dim)


def _scatter_next(y, dim):
    y = torch.movedim(y, dim, 0)
    n = y.shape[0]
    head = torch.zeros_like(y[0:1])
    mid = y[0 : n - 2]
    tail = y[n - 2 : n - 1] + y[n - 1 : n]
    return torch.movedim(torch.cat([head, mid, tail], dim=0), 0, dim)


def _d2(x, dim, boundary):
    _check_axis(x, dim)
    if boundary == "reflect":
        return _gather_prev(x, dim) + _gather_next(x, dim) - 2 * x
    return torch.roll(x, 1, dims=dim) + torch.roll(x, -1, dims=dim) - 2 * x


def _d2_adj(y, dim, boundary):
    _check_axis(y, dim)
    if boundary == "reflect":
        return _scatter_prev(y, dim) + _scatter_next(y, dim) - 2 * y
    return torch.roll(y, 1, dims=dim) + torch.roll(y, -1, dims=dim) - 2 * y


def _d1(x, dim, boundary):
    _check_axis(x, dim)
    if boundary == "reflect":
        return _gather_next(x, dim) - x
    return torch.roll(x, -1, dims=dim) - x


def _d1_adj(y, dim, boundary):
    _check_axis(y, dim)
    if boundary == "reflect":
        return _scatter_next(y, dim) - y
    return torch.roll(y, 1, dims=dim) - y


def second_derivative(x, direction, boundary="reflect"):
    """Apply the second-difference stencil for one Hessian direction."""
    numpy_in = not isinstance(x, torch.Tensor)
    t = torch.as_tensor(np.asarray(x, dtype=np.float64)) if numpy_in else x
    a, b = direction[0], direction[1]
    if a == b:
        out = _d2(t, _AXIS[a], boundary)
    else:
        out = _d1(_d1(t, _AXIS[a], boundary), _AXIS[b], boundary)
    return out.numpy() if numpy_in else out


def second_derivative_adjoint(y, direction, boundary="reflect"):
    """Exact transpose of :func:`second_derivative`."""
    numpy_in = not isinstance(y, torch.Tensor)
    t = torch.as_tensor(np.asarray(y, dtype=np.float64)) if numpy_in else y
    a, b = direction[0], direction[1]
    if a == b:
        out = _d2_adj(t, _AXIS[a], boundary)
    else:
        out = _d1_adj(_d1_adj(t, _AXIS[b], boundary), _AXIS[a], boundary)
    return out.numpy() if numpy_in else out


# --- classic-mode solver (numpy, periodic boundaries) ---------------------


def _symbol_d1(n):
    return np.exp(2j * np.pi * np.arange(n) / n) - 1.0


def _symbol_d2(n):
    return 2.0 * np.cos(2 * np.pi * np.arange(n) / n) - 2.0


def _direction_symbol_sq(shape, direction):
    """|Fourier symbol|^2 of the periodic stencil on the given grid."""
    n_d, n_h, n_v = shape
    sizes = {"z": n_d, "y": n_h, "x": n_v}
    a, b = direction[0], direction[1]
    if a == b:
        sym = np.abs(_symbol_d2(sizes[a])) ** 2
        axes = (_AXIS[a],)
        parts = [sym]
    else:
        axes = (_AXIS[a], _AXIS[b])
        parts = [np.abs(_symbol_d1(sizes[a])) ** 2, np.abs(_symbol_d1(sizes[b])) ** 2]
    out = np.ones(shape)
    for ax, p in zip(axes, parts):
        sh = [1, 1, 1]
        sh[ax] = -1
        out = out * p.reshape(sh)
    return out


def classic_data_update(y, z, b, lambdas, mu):
    """Exact minimizer of the quadratic data sub-problem (periodic grid).

    Solves (2 I + mu * sum_i lam_i^2 D_i^T D_i) X =
           2 Y + mu * sum_i lam_i D_i^T (Z_i - B_i)
    by diagonalizing every stencil in Fourier space.
    """
    y = np.asarray(y, dtype=np.float64)
    rhs = 2.0 * y
    denom = np.full(y.shape, 2.0)
    for d, lam in lambdas.items():
        rhs = rhs + mu * lam * second_derivative_adjoint(z[d] - b[d], d, "periodic")
        denom = denom + mu * lam * lam * _direction_symbol_sq(y.shape, d)
    x = np.fft.ifftn(np.fft.fftn(rhs) / denom).real
    return x


def hessian_objective(y, x, lambdas, alpha, boundary="periodic"):
    """J(X) = sum (Y-X)^2 + alpha * sum_i lam_i * ||D_i X||_1."""
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    data = float(((y - x) ** 2).sum())
    prior = 0.0
    for d, lam in lambdas.items():
        prior += lam * float(np.abs(second_derivative(x, d, boundary)).sum())
    return data + alpha * prior, data, prior


def classic_split_bregman(y, lambdas, alpha, mu, n_iters):
    """Reference split-Bregman loop with the exact quadratic data solve.

    Returns the final estimate and the objective trace (evaluated after
    each data update).
    """
    y = np.asarray(y, dtype=np.float64)
    z = {d: np.zeros_like(y) for d in lambdas}
    b = {d: np.zeros_like(y) for d in lambdas}
    objectives = []
    x = y.copy()
    for _ in range(n_iters):
        x = classic_data_update(y, z, b, lambdas, mu)
        for d, lam in lambdas.items():
            v = lam * second_derivative(x, d, "periodic")
            z[d] = shrink(v + b[d], alpha / mu)
            b[d] = b[d] + v - z[d]
        objectives.append(hessian_objective(y, x, lambdas, alpha, "periodic")[0])
    return x, np.asarray(objectives)
