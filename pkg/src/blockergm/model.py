"""Model terms, sufficient statistics, and curved natural-parameter maps.

Coordinate layout of the statistic vector (and of eta): block-major, the
configured within terms in order for block 0, then block 1, ..., then one
trailing between-edge coordinate. Geometrically weighted terms contribute one
coordinate per decay index ``t = 1..truncation``; indices beyond the
truncation carry natural parameter 0 by definition and are not stored.

Parameter vector theta: the within terms' parameters in term order (edge and
transitive terms one scalar each, geometrically weighted terms a
(scale, decay) pair), then the between-edge scalar last.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .graph import Graph, Membership, neighborhood_sizes

__all__ = [
    "Term",
    "ModelSpec",
    "sufficient_statistics",
    "change_statistics",
    "natural_parameters",
    "natural_parameter_jacobian",
    "log_unnormalized",
]

WITHIN_KINDS = ("edges", "transitive", "gwdegree", "gwesp")
DEFAULT_GWD_TRUNC = 20
DEFAULT_GWESP_TRUNC = 12


@dataclass(frozen=True)
class Term:
    kind: str
    bins: int
    theta_width: int


class ModelSpec:
    """Ordered term list with fixed coordinate and parameter layouts."""

    def __init__(self, within_terms, gwd_trunc=DEFAULT_GWD_TRUNC,
                 gwesp_trunc=DEFAULT_GWESP_TRUNC):
        terms = []
        for kind in within_terms:
            if kind == "edges":
                terms.append(Term("edges", 1, 1))
            elif kind == "transitive":
                terms.append(Term("transitive", 1, 1))
            elif kind == "gwdegree":
                terms.append(Term("gwdegree", int(gwd_trunc), 2))
            elif kind == "gwesp":
                terms.append(Term("gwesp", int(gwesp_trunc), 2))
            else:
                raise ValidationError(f"unknown term {kind!r}")
        if sum(t.kind == "edges" for t in terms) != 1:
            raise ValidationError("model needs exactly one within-edge term")
        if any(t.bins < 1 for t in terms):
            raise ValidationError("truncation thresholds must be >= 1")
        self.within_terms = tuple(terms)
        self.between_term = Term("between", 1, 1)
        self.within_width = sum(t.bins for t in terms)
        self.theta_dim = sum(t.theta_width for t in terms) + 1

    @classmethod
    def edge_transitive(cls):
        """The within-edge + transitive-edge + between-edge model."""
        return cls(["edges", "transitive"])

    @classmethod
    def curved(cls, gwd_trunc=DEFAULT_GWD_TRUNC, gwesp_trunc=DEFAULT_GWESP_TRUNC):
        """Edges + geometrically weighted degree/shared-partner model."""
        return cls(["edges", "gwdegree", "gwesp"], gwd_trunc, gwesp_trunc)

    # -- layout helpers -------------------------------------------------
    def stat_dim(self, K: int) -> int:
        return K * self.within_width + 1

    def block_slice(self, k: int) -> slice:
        return slice(k * self.within_width, (k + 1) * self.within_width)

    def between_index(self, K: int) -> int:
        return K * self.within_width

    def theta_slices(self):
        """Per within-term slices into theta; the between scalar is last."""
        out = []
        off = 0
        for t in self.within_terms:
            out.append(slice(off, off + t.theta_width))
            off += t.theta_width
        return out

    def term_codes(self):
        """(codes, bins) arrays for the chain kernels."""
        code = {"edges": 0, "transitive": 1, "gwdegree": 2, "gwesp": 3}
        return (
            np.array([code[t.kind] for t in self.within_terms], dtype=np.int32),
            np.array([t.bins for t in self.within_terms], dtype=np.int32),
        )

    def labels(self, K: int):
        out = []
        for k in range(K):
            for t in self.within_terms:
                if t.bins == 1:
                    out.append(f"{t.kind}[block {k + 1}]")
                else:
                    out.extend(
                        f"{t.kind}[block {k + 1}, t={j + 1}]" for j in range(t.bins)
                    )
        out.append("between")
        return out

    def theta_labels(self):
        out = []
        for t in self.within_terms:
            if t.theta_width == 1:
                out.append(t.kind)
            else:
                out.extend([f"{t.kind}.scale", f"{t.kind}.decay"])
        out.append("between")
        return out

    def __repr__(self):
        kinds = ",".join(t.kind for t in self.within_terms)
        return f"ModelSpec({kinds}+between)"


# -- within-block statistics --------------------------------------------

def within_block_stats(adj: np.ndarray, model: ModelSpec) -> np.ndarray:
    """Statistic vector of one block given its dense 0/1 adjacency."""
    m = adj.shape[0]
    out = np.zeros(model.within_width, dtype=np.float64)
    if m < 2:
        return out
    a = adj.astype(np.int64)
    common = a @ a
    iu = np.triu_indices(m, k=1)
    edge_mask = a[iu] == 1
    deg = a.sum(axis=1)
    off = 0
    for t in model.within_terms:
        if t.kind == "edges":
            out[off] = edge_mask.sum()
        elif t.kind == "transitive":
            out[off] = np.count_nonzero(common[iu][edge_mask] > 0)
        elif t.kind == "gwdegree":
            counts = np.bincount(deg, minlength=t.bins + 1)
            out[off:off + t.bins] = counts[1:t.bins + 1]
        elif t.kind == "gwesp":
            esp = common[iu][edge_mask]
            counts = np.bincount(esp, minlength=t.bins + 1)
            out[off:off + t.bins] = counts[1:t.bins + 1]
        off += t.bins
    return out


def sufficient_statistics(g: Graph, z: Membership, model: ModelSpec) -> np.ndarray:
    """Exact statistic vector of ``g`` under membership ``z``."""
    if g.n != z.n:
        raise ValidationError("graph and membership disagree on n")
    K = z.K
    s = np.zeros(model.stat_dim(K), dtype=np.float64)
    within_edges = 0
    assignment = z.assignment
    for k, nodes in enumerate(z.blocks()):
        if nodes.size < 2:
            continue
        local = -np.ones(g.n, dtype=np.int64)
        local[nodes] = np.arange(nodes.size)
        adj = np.zeros((nodes.size, nodes.size), dtype=np.uint8)
        if g.num_edges:
            mask = (assignment[g.edges[:, 0]] == k) & (assignment[g.edges[:, 1]] == k)
            sub = local[g.edges[mask]]
            adj[sub[:, 0], sub[:, 1]] = 1
            adj[sub[:, 1], sub[:, 0]] = 1
        s[model.block_slice(k)] = within_block_stats(adj, model)
        within_edges += int(adj.sum()) // 2
    s[model.between_index(K)] = g.num_edges - within_edges
    return s


def _within_neighbors(g: Graph, z: Membership, node: int, k: int, skip: int):
    adj = g.adjacency_lists()[node]
    return {int(h) for h in adj if z.assignment[h] == k and h != skip}


def change_statistics(g: Graph, z: Membership, model: ModelSpec, pair) -> np.ndarray:
    """s(g with dyad set) - s(g with dyad unset), computed locally."""
    i, j = pair
    if i == j:
        raise ValidationError("dyad endpoints must differ")
    K = z.K
    delta = np.zeros(model.stat_dim(K), dtype=np.float64)
    ki, kj = int(z.assignment[i]), int(z.assignment[j])
    if ki != kj:
        delta[model.between_index(K)] = 1.0
        return delta
    k = ki
    # neighbor sets of the state *without* the dyad
    Ni = _within_neighbors(g, z, i, k, skip=j)
    Nj = _within_neighbors(g, z, j, k, skip=i)
    common = Ni & Nj
    off = model.block_slice(k).start
    for t in model.within_terms:
        if t.kind == "edges":
            delta[off] = 1.0
        elif t.kind == "transitive":
            d = 1.0 if common else 0.0
            for h in common:
                Nh = _within_neighbors(g, z, h, k, skip=-1)
                # (i,h) and (j,h) are existing edges; they become transitive
                # unless they already had a shared partner other than j / i.
                if not (Ni & Nh - {h, j}):
                    d += 1.0
                if not (Nj & Nh - {h, i}):
                    d += 1.0
            delta[off] = d
        elif t.kind == "gwdegree":
            for d0 in (len(Ni), len(Nj)):
                if 1 <= d0 <= t.bins:
                    delta[off + d0 - 1] -= 1.0
                if d0 + 1 <= t.bins:
                    delta[off + d0] += 1.0
        elif t.kind == "gwesp":
            c = len(common)
            if 1 <= c <= t.bins:
                delta[off + c - 1] += 1.0
            for h in common:
                Nh = _within_neighbors(g, z, h, k, skip=-1)
                for (a_set, other) in ((Ni, i), (Nj, j)):
                    c0 = len((a_set & Nh) - {h, other})
                    if 1 <= c0 <= t.bins:
                        delta[off + c0 - 1] -= 1.0
                    if c0 + 1 <= t.bins:
                        delta[off + c0] += 1.0
        off += t.bins
    return delta


# -- curved parameter maps ------------------------------------------------

def _gw_weights(decay: float, bins: int) -> np.ndarray:
    t = np.arange(1, bins + 1, dtype=np.float64)
    u = 1.0 - np.exp(-decay)
    return np.exp(decay) * (1.0 - u ** t)


def _gw_weights_ddecay(decay: float, bins: int) -> np.ndarray:
    t = np.arange(1, bins + 1, dtype=np.float64)
    u = 1.0 - np.exp(-decay)
    return np.exp(decay) * (1.0 - u ** t) - t * u ** (t - 1)


def within_eta(theta: np.ndarray, model: ModelSpec, n_k: int) -> np.ndarray:
    """Within-block natural parameters for a block of ``n_k`` nodes."""
    eta = np.zeros(model.within_width, dtype=np.float64)
    if n_k <= 1:
        return eta
    log_nk = np.log(float(n_k))
    off = 0
    for t, sl in zip(model.within_terms, model.theta_slices()):
        th = theta[sl]
        if t.kind in ("edges", "transitive"):
            eta[off] = th[0] * log_nk
        else:
            eta[off:off + t.bins] = th[0] * log_nk * _gw_weights(th[1], t.bins)
        off += t.bins
    return eta


def natural_parameters(theta, z: Membership, model: ModelSpec) -> np.ndarray:
    """Full eta(theta, z); natural log throughout."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (model.theta_dim,):
        raise ValidationError(
            f"theta must have length {model.theta_dim}, got {theta.shape}"
        )
    if not np.all(np.isfinite(theta)):
        raise ValidationError("theta must be finite")
    sizes = neighborhood_sizes(z)
    eta = np.zeros(model.stat_dim(z.K), dtype=np.float64)
    for k in range(z.K):
        eta[model.block_slice(k)] = within_eta(theta, model, int(sizes[k]))
    eta[model.between_index(z.K)] = theta[-1] * np.log(float(z.n))
    return eta


def natural_parameter_jacobian(theta, z: Membership, model: ModelSpec) -> np.ndarray:
    """J = d eta / d theta, shape (stat_dim, theta_dim); closed forms."""
    theta = np.asarray(theta, dtype=np.float64)
    sizes = neighborhood_sizes(z)
    J = np.zeros((model.stat_dim(z.K), model.theta_dim), dtype=np.float64)
    for k in range(z.K):
        n_k = int(sizes[k])
        if n_k <= 1:
            continue
        log_nk = np.log(float(n_k))
        off = model.block_slice(k).start
        for t, sl in zip(model.within_terms, model.theta_slices()):
            th = theta[sl]
            if t.kind in ("edges", "transitive"):
                J[off, sl.start] = log_nk
            else:
                J[off:off + t.bins, sl.start] = log_nk * _gw_weights(th[1], t.bins)
                J[off:off + t.bins, sl.start + 1] = (
                    th[0] * log_nk * _gw_weights_ddecay(th[1], t.bins)
                )
            off += t.bins
    J[model.between_index(z.K), model.theta_dim - 1] = np.log(float(z.n))
    return J


def log_unnormalized(g: Graph, z: Membership, model: ModelSpec, theta) -> float:
    """Inner product of eta(theta, z) with the observed statistics."""
    eta = natural_parameters(theta, z, model)
    s = sufficient_statistics(g, z, model)
    return float(eta @ s)
