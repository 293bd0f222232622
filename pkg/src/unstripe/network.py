"""Complex-valued graph network over the spectral graph.

The stack alternates two-branch message passing (separate projections for
uncorrupted and corrupted nodes, weighted-mean aggregation over sampled
ring neighbors) with a frequency-aware single-head attention unit whose
features include the node's normalized polar coordinates. Complex
arithmetic is simulated with pairs of real tensors throughout, and the
final layer is zero-initialized so an untrained network performs the
identity recovery.

Neighbor aggregation runs as CSR sparse matrix products over the edge
list; edges are stored row-major with columns in ascending node order, so
per-node accumulation order is a function of the node's neighbor set only.
That makes outputs bitwise independent of which other nodes happen to be
in the graph (pruned versus full-spectrum builds).
"""

import json
import struct

import numpy as np
import torch
from torch import nn

CHECKPOINT_MAGIC = b"USTRCKPT"
CHECKPOINT_VERSION = 1


def crelu(z):
    """Split rectifier: ReLU applied to real and imaginary parts separately."""
    return torch.complex(torch.relu(z.real), torch.relu(z.imag))


class ComplexLinear(nn.Module):
    """y = x @ (W_re + i W_im) (+ bias), x complex, weights real pairs."""

    def __init__(self, n_in, n_out, bias=False):
        super().__init__()
        self.n_in = n_in
        self.n_out = n_out
        self.w_re = nn.Parameter(torch.zeros(n_in, n_out, dtype=torch.float64))
        self.w_im = nn.Parameter(torch.zeros(n_in, n_out, dtype=torch.float64))
        if bias:
            self.b_re = nn.Parameter(torch.zeros(n_out, dtype=torch.float64))
            self.b_im = nn.Parameter(torch.zeros(n_out, dtype=torch.float64))
        else:
            self.register_parameter("b_re", None)
            self.register_parameter("b_im", None)

    def reset_uniform(self, generator):
        bound = 1.0 / np.sqrt(self.n_in)
        for w in (self.w_re, self.w_im):
            with torch.no_grad():
                w.uniform_(-bound, bound, generator=generator)

    def zero_(self):
        with torch.no_grad():
            self.w_re.zero_()
            self.w_im.zero_()
            if self.b_re is not None:
                self.b_re.zero_()
                self.b_im.zero_()

    def forward(self, z):
        re = z.real @ self.w_re - z.imag @ self.w_im
        im = z.real @ self.w_im + z.imag @ self.w_re
        if self.b_re is not None:
            re = re + self.b_re
            im = im + self.b_im
        return torch.complex(re, im)


def _as_real_pairs(z):
    """(N, C) complex -> (N, 2C) real, channel-interleaved re/im."""
    return torch.view_as_real(z).reshape(z.shape[0], -1)


def _as_complex(r, width):
    return torch.view_as_complex(r.view(r.shape[0], width, 2).contiguous())


class GraphTensors:
    """CSR edge structure of a SpectralGraph, validated for aggregation."""

    def __init__(self, graph):
        if graph.n_nodes == 0:
            raise ValueError("graph is empty; nothing to run the network on")
        self.n_nodes = graph.n_nodes
        counts = torch.from_numpy(np.ascontiguousarray(graph.nbr_count))
        if bool((counts[torch.from_numpy(graph.corrupted)] == 0).any()):
            raise ValueError("corrupted node with empty neighbor set survived graph build")

        valid = graph.nbr_index >= 0
        # row-major edge order; columns ascend inside each row by construction
        self.row = torch.from_numpy(
            np.repeat(np.arange(graph.n_nodes, dtype=np.int64), graph.nbr_count)
        )
        self.col = torch.from_numpy(graph.nbr_index[valid])
        self.edge_weight = torch.from_numpy(graph.nbr_weight[valid]).to(torch.float64)
        self.n_edges = int(self.col.shape[0])
        self.crow = torch.zeros(self.n_nodes + 1, dtype=torch.int64)
        self.crow[1:] = counts.cumsum(0)

        # transpose structure: stable col-major permutation of the edges
        perm = torch.argsort(self.col, stable=True)
        self.perm_t = perm
        self.crow_t = torch.zeros(self.n_nodes + 1, dtype=torch.int64)
        self.crow_t[1:] = torch.bincount(self.col, minlength=self.n_nodes).cumsum(0)
        self.col_t = self.row[perm]

        self.weight_sum = torch.zeros(self.n_nodes, dtype=torch.float64).index_add(
            0, self.row, self.edge_weight
        )
        if bool((self.weight_sum <= 0).any()):
            raise ValueError("node with zero total neighbor weight; cannot normalize")

        self.corrupted = torch.from_numpy(np.ascontiguousarray(graph.corrupted))
        self.corrupted_idx = torch.from_numpy(np.ascontiguousarray(graph.corrupted_index))
        self.bins = torch.from_numpy(np.ascontiguousarray(graph.bins))
        rho = torch.from_numpy(np.ascontiguousarray(graph.rho_norm)).to(torch.float64)
        theta = torch.from_numpy(np.ascontiguousarray(graph.theta)).to(torch.float64)
        self.freq_feats = torch.stack([rho, torch.cos(theta), torch.sin(theta)], dim=1)
        self.h0 = torch.from_numpy(np.ascontiguousarray(graph.h0)).to(torch.complex128)

    def csr(self, values):
        return torch.sparse_csr_tensor(
            self.crow, self.col, values, size=(self.n_nodes, self.n_nodes)
        )

    def csr_t(self, values):
        return torch.sparse_csr_tensor(
            self.crow_t, self.col_t, values[self.perm_t], size=(self.n_nodes, self.n_nodes)
        )


class _EdgeWeightedSum(torch.autograd.Function):
    """out[p] = sum over edges (p -> q) of w_e * dense[q], CSR-backed."""

    @staticmethod
    def forward(ctx, dense, edge_values, gt):
        ctx.gt = gt
        ctx.save_for_backward(dense, edge_values)
        return torch.sparse.mm(gt.csr(edge_values.detach()), dense)

    @staticmethod
    def backward(ctx, grad_out):
        dense, edge_values = ctx.saved_tensors
        gt = ctx.gt
        grad_out = grad_out.contiguous()
        grad_dense = grad_edges = None
        if ctx.needs_input_grad[0]:
            grad_dense = torch.sparse.mm(gt.csr_t(edge_values.detach()), grad_out)
        if ctx.needs_input_grad[1]:
            zeros = gt.csr(torch.zeros(gt.n_edges, dtype=torch.float64))
            grad_edges = torch.sparse.sampled_addmm(
                zeros, grad_out, dense.t().contiguous(), beta=0.0
            ).values()
        return grad_dense, grad_edges, None


def edge_weighted_sum(gt, dense, edge_values):
    return _EdgeWeightedSum.apply(dense, edge_values, gt)


class _EdgeDot(torch.autograd.Function):
    """Per-edge dot product scores_e = <queries[row_e], keys[col_e]>."""

    @staticmethod
    def forward(ctx, queries, keys, gt):
        ctx.gt = gt
        ctx.save_for_backward(queries, keys)
        zeros = gt.csr(torch.zeros(gt.n_edges, dtype=torch.float64))
        return torch.sparse.sampled_addmm(
            zeros, queries, keys.t().contiguous(), beta=0.0
        ).values()

    @staticmethod
    def backward(ctx, grad_vals):
        queries, keys = ctx.saved_tensors
        gt = ctx.gt
        grad_vals = grad_vals.contiguous()
        grad_q = grad_k = None
        if ctx.needs_input_grad[0]:
            grad_q = torch.sparse.mm(gt.csr(grad_vals), keys)
        if ctx.needs_input_grad[1]:
            grad_k = torch.sparse.mm(gt.csr_t(grad_vals), queries)
        return grad_q, grad_k, None


def edge_dot(gt, queries, keys):
    return _EdgeDot.apply(queries, keys, gt)


def complex_neighbor_sum(gt, values, edge_values):
    """Edge-weighted sum of complex node values (real edge weights)."""
    width = values.shape[1]
    out = edge_weighted_sum(gt, _as_real_pairs(values), edge_values)
    return _as_complex(out, width)


class FGNNLayer(nn.Module):
    """Two-branch complex message passing over sampled ring neighbors.

    Uncorrupted nodes average their own projection with the weighted
    neighbor mean; corrupted nodes subtract the neighbor mean (the sample
    estimate) from their own separately projected value.
    """

    def __init__(self, n_in, n_out, activation=True):
        super().__init__()
        self.w1 = ComplexLinear(n_in, n_out)
        self.w2 = ComplexLinear(n_in, n_out)
        self.activation = activation

    def forward(self, gt, h):
        hw1 = self.w1(h)
        hw2 = self.w2(h)
        agg = complex_neighbor_sum(gt, hw1, gt.edge_weight) / gt.weight_sum.unsqueeze(1)
        out = torch.where(gt.corrupted.unsqueeze(1), hw2 - agg, 0.5 * (hw1 + agg))
        if self.activation:
            out = crelu(out)
        return out


class FAttLayer(nn.Module):
    """Frequency-aware single-head attention over each node's neighbor set.

    Queries/keys/values are projected from [Re(h), Im(h), rho/rho_max,
    cos(theta), sin(theta)]; the attended neighbor combination is added to
    the input as a residual.
    """

    def __init__(self, width):
        super().__init__()
        self.width = width
        feat = 2 * width + 3
        self.wq = nn.Parameter(torch.zeros(feat, width, dtype=torch.float64))
        self.wk = nn.Parameter(torch.zeros(feat, width, dtype=torch.float64))
        self.wv = nn.Parameter(torch.zeros(feat, 2 * width, dtype=torch.float64))
        # no key bias: a constant key offset shifts every score in a row
        # equally and cancels in the softmax
        self.bq = nn.Parameter(torch.zeros(width, dtype=torch.float64))
        self.bv = nn.Parameter(torch.zeros(2 * width, dtype=torch.float64))

    def reset_uniform(self, generator):
        bound = 1.0 / np.sqrt(2 * self.width + 3)
        with torch.no_grad():
            for w in (self.wq, self.wk, self.wv):
                w.uniform_(-bound, bound, generator=generator)

    def forward(self, gt, h):
        feats = torch.cat([h.real, h.imag, gt.freq_feats], dim=1)
        q = feats @ self.wq + self.bq
        k = feats @ self.wk
        v_flat = feats @ self.wv + self.bv
        v = torch.complex(v_flat[:, : self.width], v_flat[:, self.width :])

        scores = edge_dot(gt, q, k) / np.sqrt(self.width)
        row_max = torch.full((gt.n_nodes,), float("-inf"), dtype=torch.float64)
        row_max = row_max.scatter_reduce(
            0, gt.row, scores.detach(), reduce="amax", include_self=True
        )
        expd = torch.exp(scores - row_max[gt.row])
        denom = torch.zeros(gt.n_nodes, dtype=torch.float64).index_add(0, gt.row, expd)
        probs = expd / denom[gt.row]
        attended = complex_neighbor_sum(gt, v, probs)
        return h + attended


class DestripeNetwork(nn.Module):
    """Alternating FGNN / FAtt stack mapping node spectra to stripe spectra.

    Widths run [in_channels, hidden..., 1]; the final FGNN layer has no
    activation and starts zeroed, so the initial stripe estimate is zero.
    """

    def __init__(self, cfg, in_channels=1):
        super().__init__()
        layers_l = cfg.layers_L
        widths = [in_channels] + list(cfg.hidden_dims[: layers_l - 1]) + [1]
        self.fgnn = nn.ModuleList(
            FGNNLayer(widths[i], widths[i + 1], activation=(i < layers_l - 1))
            for i in range(layers_l)
        )
        self.fatt = nn.ModuleList(FAttLayer(widths[i + 1]) for i in range(layers_l - 1))

    def reset_parameters(self, generator):
        for layer in self.fgnn:
            layer.w1.reset_uniform(generator)
            layer.w2.reset_uniform(generator)
        for layer in self.fatt:
            layer.reset_uniform(generator)
        # identity start: zero final layer means zero stripe activation
        self.fgnn[-1].w1.zero_()
        self.fgnn[-1].w2.zero_()

    def forward(self, gt, h):
        for i, layer in enumerate(self.fgnn):
            h = layer(gt, h)
            if i < len(self.fatt):
                h = self.fatt[i](gt, h)
        return h


def network_forward(net, gt, h0=None):
    """Run the stack; returns the stripe activation on the corrupted nodes."""
    if h0 is None:
        h0 = gt.h0.unsqueeze(1)
    out = net(gt, h0)
    return out[gt.corrupted_idx, 0]


def stripe_subtract(coeffs, gt, activation):
    """Subtract the stripe activation at corrupted bins, then re-symmetrize.

    Each masked bin is averaged with the conjugate of its Hermitian mirror
    (the masked set is mirror-closed) so the recovered spectrum stays that
    of a real image.
    """
    n_h, n_v = coeffs.shape[-2:]
    b = gt.bins[gt.corrupted_idx]
    kk, ii, jj = b[:, 0], b[:, 1], b[:, 2]
    rec = coeffs.index_put((kk, ii, jj), coeffs[kk, ii, jj] - activation)
    mi = (2 * (n_h // 2) - ii) % n_h
    mj = (2 * (n_v // 2) - jj) % n_v
    sym = 0.5 * (rec[kk, ii, jj] + rec[kk, mi, mj].conj())
    return rec.index_put((kk, ii, jj), sym)


def network_gradients(net, gt, upstream, h0=None):
    """Exact reverse-mode gradients of the stripe activation.

    ``upstream`` carries d(loss)/d(Re out) + i d(loss)/d(Im out) per
    corrupted node. Raises on non-finite gradients, naming the parameter.
    """
    net.zero_grad(set_to_none=True)
    out = network_forward(net, gt, h0)
    scalar = (out * upstream.conj()).real.sum()
    scalar.backward()
    grads = {}
    for name, p in net.named_parameters():
        g = p.grad if p.grad is not None else torch.zeros_like(p)
        if not bool(torch.isfinite(g).all()):
            raise FloatingPointError(f"non-finite gradient in parameter {name}")
        grads[name] = g.detach().clone()
    return grads


def named_parameter_blob(module):
    """Deterministically ordered (name, shape, float64 bytes) triples."""
    items = []
    for name, p in module.named_parameters():
        arr = p.detach().cpu().numpy().astype("<f8")
        items.append((name, list(arr.shape), arr.tobytes()))
    return items


def save_checkpoint(module, path, meta=None):
    """Versioned binary checkpoint: magic, version, JSON manifest, raw f64."""
    items = named_parameter_blob(module)
    manifest = {
        "version": CHECKPOINT_VERSION,
        "dtype": "float64",
        "byte_order": "little",
        "parameters": [
            {"name": n, "shape": s, "nbytes": len(b)} for n, s, b in items
        ],
        "meta": meta or {},
    }
    mjson = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<Q", len(mjson)))
        fh.write(mjson)
        for _, _, blob in items:
            fh.write(blob)


def load_checkpoint(module, path):
    """Restore parameters saved by :func:`save_checkpoint`; returns meta."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a checkpoint file: {path}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (mlen,) = struct.unpack("<Q", fh.read(8))
        manifest = json.loads(fh.read(mlen).decode("utf-8"))
        params = dict(module.named_parameters())
        listed = [entry["name"] for entry in manifest["parameters"]]
        if listed != list(params):
            raise ValueError("checkpoint parameter set does not match the model")
        for entry in manifest["parameters"]:
            blob = fh.read(entry["nbytes"])
            arr = np.frombuffer(blob, dtype="<f8").reshape(entry["shape"]).copy()
            with torch.no_grad():
                params[entry["name"]].copy_(torch.from_numpy(arr))
    return manifest.get("meta", {})
