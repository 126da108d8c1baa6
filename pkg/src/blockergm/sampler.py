"""Graph simulation: multinomial memberships, Bernoulli between-block edges,
and Metropolis-Hastings chains for within-block subgraphs.

Each block's chain runs on its own splitmix64 substream derived from
``(seed, "within", block)``, so results are independent of the worker layout
and merge deterministically by block id.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ValidationError
from .graph import Graph, Membership, neighborhood_sizes, within_subgraph
from .model import ModelSpec, within_eta
from .seeding import derive_seed, rng_for

__all__ = [
    "McmcConfig",
    "WithinSample",
    "SampleBatch",
    "sample_memberships",
    "sample_between",
    "sample_within",
    "simulate_graph",
    "sample_stat_batch",
]


@dataclass(frozen=True)
class McmcConfig:
    """Chain settings; a sweep is one proposed toggle per within-dyad."""

    burn_in: int = 200
    interval: int = 10
    num_samples: int = 1000
    seed: int = 0

    def __post_init__(self):
        if min(self.burn_in, self.interval, self.num_samples) < 1:
            raise ValidationError("burn_in, interval, num_samples must be >= 1")


@dataclass
class WithinSample:
    """Retained per-sample statistics of one block's chain."""

    stats: np.ndarray            # (num_samples, within_width)
    final_adj: np.ndarray        # (m, m) uint8 end state
    states: np.ndarray | None    # (num_samples, m, m) when requested
    seed: int


@dataclass
class SampleBatch:
    """Monte Carlo statistic sample drawn at a reference parameter.

    ``block_stats[k]`` has shape (num_samples, within_width); empty or
    singleton blocks carry all-zero rows. Provenance (seeds, config, theta0)
    is recorded for exact replay.
    """

    block_stats: list
    theta0: np.ndarray
    z: Membership
    config: McmcConfig
    block_seeds: list = field(default_factory=list)

    @property
    def num_samples(self) -> int:
        return self.config.num_samples


def _check_simplex(pi):
    pi = np.asarray(pi, dtype=np.float64)
    if pi.ndim != 1 or np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-10:
        raise ValidationError("pi must lie on the probability simplex")
    return pi


def sample_memberships(pi, n: int, seed: int) -> Membership:
    """n iid multinomial block draws; deterministic given the seed."""
    pi = _check_simplex(pi)
    rng = np.random.Generator(np.random.PCG64(seed))
    assignment = rng.choice(pi.size, size=n, p=pi)
    return Membership(assignment, pi.size)


def _decode_dyad(t: int, n: int):
    # linear index over lexicographic (i, j), i < j; row i starts at
    # i*(n-1) - i*(i-1)/2 and holds n-1-i entries
    i = int(n - 0.5 - math.sqrt(max((n - 0.5) ** 2 - 2.0 * t, 0.0)))
    i = min(max(i, 0), n - 2)
    while True:
        start = i * (n - 1) - i * (i - 1) // 2
        if t < start:
            i -= 1
        elif t >= start + (n - 1 - i):
            i += 1
        else:
            return i, t - start + i + 1


def sample_between(z: Membership, theta_between: float, n: int, seed: int):
    """Cross-block edges, each Bernoulli(logit^-1(theta_between * ln n)).

    Returns an (M, 2) array of node pairs. Uses geometric skipping over the
    dyad sequence when p < 1e-3, so sparse regimes cost O(expected edges).
    """
    eta = float(theta_between) * math.log(n)
    p = 1.0 / (1.0 + math.exp(-eta)) if eta > -700 else 0.0
    rng = np.random.Generator(np.random.PCG64(seed))
    a = z.assignment
    edges = []
    if p <= 0.0:
        return np.empty((0, 2), dtype=np.int64)
    total = n * (n - 1) // 2
    if p < 1e-3:
        t = -1
        while True:
            t += int(rng.geometric(p))
            if t >= total:
                break
            i, j = _decode_dyad(t, n)
            if a[i] != a[j]:
                edges.append((i, j))
    else:
        for i in range(n - 1):
            hits = np.flatnonzero(rng.random(n - 1 - i) < p) + i + 1
            for j in hits:
                if a[i] != a[j]:
                    edges.append((i, int(j)))
    if not edges:
        return np.empty((0, 2), dtype=np.int64)
    return np.array(edges, dtype=np.int64)


def sample_within(block_size: int, eta_k, model: ModelSpec, cfg: McmcConfig,
                  seed: int, init_adj=None, keep_states=False) -> WithinSample:
    """MH chain over one block's dyads; toggles accepted with
    min(1, exp(<eta, delta s>)) using local change statistics."""
    m = int(block_size)
    if init_adj is None:
        init_adj = np.zeros((m, m), dtype=np.uint8)
    codes, bins = model.term_codes()
    stats, states, final = kernels.run_chain(
        init_adj, np.asarray(eta_k, dtype=np.float64), codes, bins,
        cfg.burn_in, cfg.interval, cfg.num_samples, seed & ((1 << 64) - 1),
        keep_states=keep_states,
    )
    return WithinSample(stats=stats, final_adj=final, states=states, seed=seed)


def _within_task(args):
    block_size, eta_k, model_terms, truncs, cfg, seed, init_adj, keep = args
    model = ModelSpec(model_terms, *truncs)
    return sample_within(block_size, eta_k, model, cfg, seed, init_adj, keep)


def _map_blocks(tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [_within_task(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_within_task, tasks, chunksize=chunk))


def _model_args(model: ModelSpec):
    kinds = [t.kind for t in model.within_terms]
    gwd = next((t.bins for t in model.within_terms if t.kind == "gwdegree"), 20)
    gwesp = next((t.bins for t in model.within_terms if t.kind == "gwesp"), 12)
    return kinds, (gwd, gwesp)


def sample_stat_batch(z: Membership, theta0, model: ModelSpec, cfg: McmcConfig,
                      workers: int = 1, phase="batch", init_graph: Graph | None = None,
                      ) -> SampleBatch:
    """Per-block statistic samples at eta(theta0, z), parallel over blocks."""
    theta0 = np.asarray(theta0, dtype=np.float64)
    sizes = neighborhood_sizes(z)
    kinds, truncs = _model_args(model)
    tasks = []
    task_blocks = []
    for k in range(z.K):
        m_k = int(sizes[k])
        if m_k < 2:
            continue
        eta_k = within_eta(theta0, model, m_k)
        init = None
        if init_graph is not None:
            sub, _ = within_subgraph(init_graph, z, k)
            init = sub.dense_adjacency()
        seed = derive_seed(cfg.seed, phase, "within", k)
        tasks.append((m_k, eta_k, kinds, truncs, cfg, seed, init, False))
        task_blocks.append(k)
    results = _map_blocks(tasks, workers)
    block_stats = [
        np.zeros((cfg.num_samples, model.within_width)) for _ in range(z.K)
    ]
    block_seeds = [None] * z.K
    for k, res in zip(task_blocks, results):
        block_stats[k] = res.stats
        block_seeds[k] = res.seed
    return SampleBatch(block_stats=block_stats, theta0=theta0.copy(), z=z,
                       config=cfg, block_seeds=block_seeds)


def simulate_graph(theta, model: ModelSpec, cfg: McmcConfig,
                   z: Membership | None = None, pi=None, n: int | None = None,
                   workers: int = 1):
    """Draw one graph: memberships (if needed), between edges, and one
    retained within-block chain state per block; returns (Graph, Membership)."""
    theta = np.asarray(theta, dtype=np.float64)
    if z is None:
        if pi is None or n is None:
            raise ValidationError("need either z or (pi, n)")
        z = sample_memberships(pi, n, derive_seed(cfg.seed, "memberships"))
    n = z.n
    between = sample_between(z, float(theta[-1]), n,
                             derive_seed(cfg.seed, "between"))
    sizes = neighborhood_sizes(z)
    kinds, truncs = _model_args(model)
    one = McmcConfig(burn_in=cfg.burn_in, interval=cfg.interval,
                     num_samples=1, seed=cfg.seed)
    tasks = []
    task_blocks = []
    for k in range(z.K):
        m_k = int(sizes[k])
        if m_k < 2:
            continue
        eta_k = within_eta(theta, model, m_k)
        seed = derive_seed(cfg.seed, "simulate", "within", k)
        tasks.append((m_k, eta_k, kinds, truncs, one, seed, None, False))
        task_blocks.append(k)
    results = _map_blocks(tasks, workers)
    edges = [between] if between.size else []
    blocks = z.blocks()
    for k, res in zip(task_blocks, results):
        nodes = blocks[k]
        li, lj = np.nonzero(np.triu(res.final_adj, k=1))
        if li.size:
            edges.append(np.stack([nodes[li], nodes[lj]], axis=1))
    all_edges = np.vstack(edges) if edges else np.empty((0, 2), dtype=np.int64)
    return Graph(n, all_edges), z
