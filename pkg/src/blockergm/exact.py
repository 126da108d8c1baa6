"""Brute-force exact computation for tiny neighborhoods.

Enumerates all 2^(m choose 2) within-block graphs to evaluate log-normalizers,
likelihoods, deviations, and expectations; used as ground truth for the
sampler and the Monte Carlo maximum likelihood machinery. Also hosts the
K^n-membership enumeration of the observed-data log-likelihood of the
dyad-independent (block-model) family, and the Hamming metric for tests.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import BudgetExceededError, ValidationError
from .graph import Graph, Membership, neighborhood_sizes
from .model import ModelSpec, natural_parameters, sufficient_statistics, within_eta

__all__ = [
    "EnumerationBudget",
    "exact_log_normalizer",
    "exact_expected_stats",
    "exact_loglik",
    "exact_deviation",
    "exact_observed_data_loglik",
    "hamming_distance",
]

_CHUNK = 1 << 16
_MAX_DYADS = 21  # enumeration size capped at 2^21


@dataclass(frozen=True)
class EnumerationBudget:
    max_within_nodes: int = 7

    def check(self, m: int):
        dyads = m * (m - 1) // 2
        if m > self.max_within_nodes or dyads > _MAX_DYADS:
            raise BudgetExceededError(
                f"block of {m} nodes needs 2^{dyads} graphs; "
                f"budget allows blocks up to {self.max_within_nodes} nodes",
                required=m,
            )


DEFAULT_BUDGET = EnumerationBudget()


def _dyad_index(m):
    pos = np.zeros((m, m), dtype=np.int64)
    p = 0
    for i in range(m):
        for j in range(i + 1, m):
            pos[i, j] = pos[j, i] = p
            p += 1
    return pos


def _chunk_stats(idx: np.ndarray, m: int, model: ModelSpec) -> np.ndarray:
    """Within-block statistics for each graph index in ``idx``."""
    D = m * (m - 1) // 2
    pos = _dyad_index(m)
    bits = [((idx >> p) & 1).astype(np.int64) for p in range(D)]
    cn = {}
    for i in range(m):
        for j in range(i + 1, m):
            acc = np.zeros(idx.shape[0], dtype=np.int64)
            for h in range(m):
                if h == i or h == j:
                    continue
                acc += bits[pos[i, h]] * bits[pos[j, h]]
            cn[(i, j)] = acc
    out = np.zeros((idx.shape[0], model.within_width), dtype=np.float64)
    off = 0
    for t in model.within_terms:
        if t.kind == "edges":
            acc = np.zeros(idx.shape[0], dtype=np.int64)
            for p in range(D):
                acc += bits[p]
            out[:, off] = acc
        elif t.kind == "transitive":
            acc = np.zeros(idx.shape[0], dtype=np.int64)
            for i in range(m):
                for j in range(i + 1, m):
                    acc += bits[pos[i, j]] * (cn[(i, j)] > 0)
            out[:, off] = acc
        elif t.kind == "gwdegree":
            deg = [np.zeros(idx.shape[0], dtype=np.int64) for _ in range(m)]
            for i in range(m):
                for j in range(m):
                    if j != i:
                        deg[i] += bits[pos[i, j]]
            for d in deg:
                for tt in range(1, t.bins + 1):
                    out[:, off + tt - 1] += d == tt
        elif t.kind == "gwesp":
            for i in range(m):
                for j in range(i + 1, m):
                    e = bits[pos[i, j]]
                    c = cn[(i, j)]
                    for tt in range(1, t.bins + 1):
                        out[:, off + tt - 1] += e * (c == tt)
        off += t.bins
    return out


_enum_cache: dict = {}


def _model_key(model: ModelSpec):
    return tuple((t.kind, t.bins) for t in model.within_terms)


def _enumerate(m: int, eta: np.ndarray, model: ModelSpec):
    """(psi, expected within stats) over all graphs on ``m`` nodes."""
    eta = np.asarray(eta, dtype=np.float64)
    if eta.shape != (model.within_width,):
        raise ValidationError(
            f"eta must have the within width {model.within_width}"
        )
    key = (_model_key(model), m, eta.tobytes())
    if key in _enum_cache:
        return _enum_cache[key]
    D = m * (m - 1) // 2
    total = 1 << D
    partials = []  # (chunk max, sum exp, sum exp * stats)
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total), dtype=np.uint64)
        stats = _chunk_stats(idx, m, model)
        energy = stats @ eta
        mx = float(energy.max())
        wgt = np.exp(energy - mx)
        partials.append((mx, float(wgt.sum()), wgt @ stats))
    M = max(p[0] for p in partials)
    denom = sum(p[1] * np.exp(p[0] - M) for p in partials)
    numer = sum(p[2] * np.exp(p[0] - M) for p in partials)
    result = (M + float(np.log(denom)), numer / denom)
    _enum_cache[key] = result
    return result


def exact_log_normalizer(m: int, eta, model: ModelSpec,
                         budget: EnumerationBudget = DEFAULT_BUDGET) -> float:
    """Exact psi: log-sum-exp of <eta, s> over all 2^(m choose 2) graphs."""
    if m <= 1:
        return 0.0
    budget.check(m)
    return _enumerate(m, np.asarray(eta, dtype=np.float64), model)[0]


def exact_expected_stats(m: int, eta, model: ModelSpec,
                         budget: EnumerationBudget = DEFAULT_BUDGET) -> np.ndarray:
    """Exact expectation of the within statistics under eta."""
    if m <= 1:
        return np.zeros(model.within_width)
    budget.check(m)
    return _enumerate(m, np.asarray(eta, dtype=np.float64), model)[1].copy()


def _between_loglik(g: Graph, z: Membership, eta_b: float) -> float:
    a = z.assignment
    sizes = neighborhood_sizes(z)
    pairs_total = z.n * (z.n - 1) // 2
    within_pairs = int(np.sum(sizes * (sizes - 1) // 2))
    n_between = pairs_total - within_pairs
    if g.num_edges:
        s_b = int(np.count_nonzero(a[g.edges[:, 0]] != a[g.edges[:, 1]]))
    else:
        s_b = 0
    return s_b * eta_b - n_between * float(np.logaddexp(0.0, eta_b))


def exact_loglik(g: Graph, z: Membership, model: ModelSpec, theta,
                 budget: EnumerationBudget = DEFAULT_BUDGET) -> float:
    """Exact log-likelihood under local dependence.

    Sum over blocks of <eta_k, s_k> - psi_k, plus the independent-Bernoulli
    between-dyad log-likelihood.
    """
    theta = np.asarray(theta, dtype=np.float64)
    s = sufficient_statistics(g, z, model)
    sizes = neighborhood_sizes(z)
    ll = 0.0
    for k in range(z.K):
        m_k = int(sizes[k])
        if m_k < 2:
            continue
        eta_k = within_eta(theta, model, m_k)
        s_k = s[model.block_slice(k)]
        ll += float(eta_k @ s_k) - exact_log_normalizer(m_k, eta_k, model, budget)
    eta_b = float(theta[-1]) * np.log(float(z.n))
    return ll + _between_loglik(g, z, eta_b)


def _edge_only_eta(eta_k: np.ndarray, model: ModelSpec) -> np.ndarray:
    """Copy of a within-eta vector with every non-edge coordinate zeroed."""
    out = np.zeros_like(eta_k)
    off = 0
    for t in model.within_terms:
        if t.kind == "edges":
            out[off] = eta_k[off]
        off += t.bins
    return out


def exact_deviation(g: Graph, z: Membership, model: ModelSpec, theta,
                    budget: EnumerationBudget = DEFAULT_BUDGET) -> float:
    """Log-likelihood gap to the dyad-independent model with the same edges.

    Computed directly as the sum of per-block within-subgraph contributions;
    between-dyad terms are identical under both models and never enter, so
    the value is invariant to toggling any between-block edge.
    """
    theta = np.asarray(theta, dtype=np.float64)
    s = sufficient_statistics(g, z, model)
    sizes = neighborhood_sizes(z)
    dev = 0.0
    for k in range(z.K):
        m_k = int(sizes[k])
        if m_k < 2:
            continue
        eta_k = within_eta(theta, model, m_k)
        eta_0 = _edge_only_eta(eta_k, model)
        s_k = s[model.block_slice(k)]
        dev += float((eta_k - eta_0) @ s_k)
        dev -= exact_log_normalizer(m_k, eta_k, model, budget)
        dev += exact_log_normalizer(m_k, eta_0, model, budget)
    return dev


def exact_observed_data_loglik(g: Graph, K: int, pi, dyad_eta) -> float:
    """log sum_z p(x | z) p(z) over all K^n memberships.

    Only valid for dyad-independent (block-model) families: ``dyad_eta(k, l,
    sizes, n)`` must return the natural parameter of a dyad between blocks
    ``k`` and ``l`` given the hard block sizes under ``z``.
    """
    pi = np.asarray(pi, dtype=np.float64)
    n = g.n
    if n * np.log(K) > 18 * np.log(2):
        raise BudgetExceededError(f"K^n = {K}**{n} memberships exceed budget")
    with np.errstate(divide="ignore"):
        log_pi = np.log(pi)
    iu, ju = np.triu_indices(n, k=1)
    x = np.zeros((n, n), dtype=np.float64)
    if g.num_edges:
        x[g.edges[:, 0], g.edges[:, 1]] = 1.0
        x[g.edges[:, 1], g.edges[:, 0]] = 1.0
    xv = x[iu, ju]
    terms = []
    for z_tuple in itertools.product(range(K), repeat=n):
        lp_z = float(log_pi[list(z_tuple)].sum())
        if lp_z == -np.inf:
            continue
        zz = np.array(z_tuple)
        sizes = np.bincount(zz, minlength=K)
        eta = np.array(
            [dyad_eta(int(zz[i]), int(zz[j]), sizes, n) for i, j in zip(iu, ju)]
        )
        ll = float(np.sum(xv * eta - np.logaddexp(0.0, eta)))
        terms.append(lp_z + ll)
    if not terms:
        return -np.inf
    return float(logsumexp(np.array(terms)))


def hamming_distance(g1: Graph, g2: Graph) -> int:
    """Number of dyads on which two graphs on the same nodes disagree."""
    if g1.n != g2.n:
        raise ValidationError("graphs must share the node set")
    k1 = {(int(i), int(j)) for i, j in g1.edges}
    k2 = {(int(i), int(j)) for i, j in g2.edges}
    return len(k1 ^ k2)
