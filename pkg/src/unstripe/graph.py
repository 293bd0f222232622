"""Polar-coordinate neighborhood graph over Fourier coefficients.

Every node samples its neighbor set uniformly without replacement from the
uncorrupted members of its own (slice, ring), using a counter-based RNG
keyed by (seed, slice, row, col). The sampling pool is the full ring
membership, never the current node set, so a node draws the same neighbors
whether it lives in the pruned graph or in the all-bins graph; pruned and
full graphs are therefore exchangeable for network evaluation. The pruned
node set is the corrupted bins plus the closure of neighbor sampling, which
keeps every referenced node resolvable.

Edge weight a_pq is the corruption matrix value of the neighbor bin.
"""

import json
from dataclasses import dataclass

import numpy as np


@dataclass
class SpectralGraph:
    bins: np.ndarray  # (Nn, 3) int64 (slice, row, col), lexicographically sorted
    corrupted: np.ndarray  # (Nn,) bool
    h0: np.ndarray  # (Nn,) complex128, layer-0 attribute = Fourier coefficient
    nbr_index: np.ndarray  # (Nn, N) int64 node indices, -1 padded
    nbr_weight: np.ndarray  # (Nn, N) float64, 0 padded
    nbr_count: np.ndarray  # (Nn,) int64
    ring: np.ndarray  # (Nn,) int64
    rho_norm: np.ndarray  # (Nn,) float64, radius / max radius
    theta: np.ndarray  # (Nn,) float64, spectral angle in radians
    neighbors_N: int
    shortfall_count: int
    unrecoverable: np.ndarray  # (Nu, 3) int64 corrupted bins with no usable ring
    seed: int

    @property
    def n_nodes(self):
        return self.bins.shape[0]

    @property
    def corrupted_index(self):
        return np.flatnonzero(self.corrupted)


def _node_key(seed, k, i, j):
    return [int(seed) % 2**64, (int(k) << 42) | (int(i) << 21) | int(j)]


def _sample_neighbors(seed, k, i, j, pool, n_neighbors):
    """Deterministic draw of up to n_neighbors flat bin ids from the pool."""
    if pool.size <= n_neighbors:
        return pool
    rng = np.random.Generator(np.random.Philox(key=_node_key(seed, k, i, j)))
    sel = rng.choice(pool.size, size=n_neighbors, replace=False)
    return np.sort(pool[sel])


def build_spectral_graph(spec, field, annuli, cfg, seed=None, full=False):
    """Build the neighborhood graph for the corrupted bins of a spectrum.

    With ``full=True`` every bin of the volume becomes a node (the Eq.-style
    whole-spectrum graph); otherwise the node set is the corrupted bins plus
    all transitively sampled neighbors.
    """
    if seed is None:
        seed = cfg.rng_seed
    coeffs = spec.coeffs
    n_d, n_h, n_v = coeffs.shape
    if field.M.shape != coeffs.shape:
        raise ValueError(
            f"corruption field shape {field.M.shape} does not match spectrum {coeffs.shape}"
        )
    n_neighbors = cfg.neighbors_N
    ring_id = annuli.ring_id
    rho_max = float(annuli.rho.max())

    # per (slice, ring): sorted flat ids (i * n_v + j) of uncorrupted bins
    pools = {}
    for k in range(n_d):
        uncorrupted = ~field.M[k]
        for r in range(annuli.n_rings):
            rows, cols = annuli.ring_members[r]
            if rows.size == 0:
                continue
            ok = uncorrupted[rows, cols]
            pools[(k, r)] = rows[ok] * n_v + cols[ok]

    corrupted_bins = np.argwhere(field.M)
    keep, unrecoverable = [], []
    for k, i, j in corrupted_bins:
        if pools.get((int(k), int(ring_id[i, j])), np.empty(0)).size > 0:
            keep.append((int(k), int(i), int(j)))
        else:
            unrecoverable.append((int(k), int(i), int(j)))

    neighbor_bins = {}  # (k, i, j) -> flat in-slice ids of sampled neighbors
    if full:
        excluded = set(unrecoverable)
        node_set = {
            (k, i, j)
            for k in range(n_d)
            for i in range(n_h)
            for j in range(n_v)
            if (k, i, j) not in excluded
        }
        pending = sorted(node_set)
    else:
        node_set = set(keep)
        pending = sorted(node_set)
    while pending:
        new = []
        for k, i, j in pending:
            pool = pools[(k, int(ring_id[i, j]))]
            nbrs = _sample_neighbors(seed, k, i, j, pool, n_neighbors)
            neighbor_bins[(k, i, j)] = nbrs
            for flat in nbrs:
                node = (k, int(flat) // n_v, int(flat) % n_v)
                if node not in node_set:
                    node_set.add(node)
                    new.append(node)
        pending = sorted(new)

    nodes = sorted(node_set)
    n_nodes = len(nodes)
    bins = np.array(nodes, dtype=np.int64).reshape(n_nodes, 3)
    index_of = {node: idx for idx, node in enumerate(nodes)}

    corrupted_set = set(keep)
    corrupted = np.fromiter((n in corrupted_set for n in nodes), dtype=bool, count=n_nodes)
    nbr_index = np.full((n_nodes, n_neighbors), -1, dtype=np.int64)
    nbr_weight = np.zeros((n_nodes, n_neighbors), dtype=np.float64)
    nbr_count = np.zeros(n_nodes, dtype=np.int64)
    shortfall = 0
    for idx, (k, i, j) in enumerate(nodes):
        nbrs = neighbor_bins[(k, i, j)]
        cnt = nbrs.size
        if cnt < n_neighbors:
            shortfall += 1
        nbr_count[idx] = cnt
        for col, flat in enumerate(nbrs):
            ii, jj = int(flat) // n_v, int(flat) % n_v
            nbr_index[idx, col] = index_of[(k, ii, jj)]
            nbr_weight[idx, col] = field.W[k, ii, jj]

    if n_nodes:
        rows, cols = bins[:, 1], bins[:, 2]
        rho = annuli.rho[rows, cols]
        off_y = rows - n_h // 2
        off_x = cols - n_v // 2
        theta = np.arctan2(off_y, off_x)
        ring = ring_id[rows, cols]
        h0 = coeffs[bins[:, 0], rows, cols]
    else:
        rho = np.zeros(0)
        theta = np.zeros(0)
        ring = np.zeros(0, dtype=np.int64)
        h0 = np.zeros(0, dtype=np.complex128)

    return SpectralGraph(
        bins=bins,
        corrupted=corrupted,
        h0=h0.astype(np.complex128),
        nbr_index=nbr_index,
        nbr_weight=nbr_weight,
        nbr_count=nbr_count,
        ring=ring,
        rho_norm=rho / rho_max if rho_max > 0 else rho,
        theta=theta,
        neighbors_N=n_neighbors,
        shortfall_count=shortfall,
        unrecoverable=np.array(unrecoverable, dtype=np.int64).reshape(-1, 3),
        seed=int(seed),
    )


def gather_node_values(graph, grid):
    """Pick per-node values out of a (N_d, N_h, N_v) grid."""
    if graph.n_nodes == 0:
        return np.zeros(0, dtype=np.asarray(grid).dtype)
    b = graph.bins
    return np.asarray(grid)[b[:, 0], b[:, 1], b[:, 2]]


def graph_stats(graph):
    """Summary counts used by reports and tests."""
    n = graph.n_nodes
    return {
        "nodes": int(n),
        "corrupted": int(graph.corrupted.sum()),
        "mean_neighbors": float(graph.nbr_count.mean()) if n else 0.0,
        "shortfall": int(graph.shortfall_count),
        "unrecoverable": int(graph.unrecoverable.shape[0]),
    }


def dump_jsonl(graph, path):
    """One node per line: bin, corruption flag, neighbor bins and weights."""
    with open(path, "w", encoding="utf-8") as fh:
        for idx in range(graph.n_nodes):
            cnt = int(graph.nbr_count[idx])
            nbrs = graph.nbr_index[idx, :cnt]
            fh.write(
                json.dumps(
                    {
                        "bin": [int(v) for v in graph.bins[idx]],
                        "corrupted": bool(graph.corrupted[idx]),
                        "neighbors": [[int(v) for v in graph.bins[q]] for q in nbrs],
                        "weights": [float(w) for w in graph.nbr_weight[idx, :cnt]],
                    },
                    sort_keys=True,
                )
                + "\n"
            )
