"""Neighborhood-recovery scoring and goodness-of-fit summaries.

Yule's phi compares two hard partitions through their pair co-membership
indicators. The GOF battery summarizes within-block structure: geodesic
distances of within-block pairs, dyadwise and edgewise shared-partner
histograms, and the transitive-edge count; simulation envelopes flag bins
where the observed value leaves the central 95% band.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .graph import Graph, Membership

__all__ = [
    "PairCounts",
    "GofSummary",
    "pair_counts",
    "yule_phi",
    "gof_statistics",
    "gof_envelope",
    "EnvelopeRow",
]

GEO_CAP = 20
SP_CAP = 25


@dataclass(frozen=True)
class PairCounts:
    """Pair co-membership contingency: n_ab over unordered node pairs."""

    n00: int
    n01: int
    n10: int
    n11: int

    @property
    def total(self) -> int:
        return self.n00 + self.n01 + self.n10 + self.n11


def _same_pairs(counts: np.ndarray) -> int:
    return int(np.sum(counts * (counts - 1) // 2))


def pair_counts(z_star: Membership, z: Membership) -> PairCounts:
    if z_star.n != z.n:
        raise ValidationError("memberships must have the same length")
    n = z.n
    joint = np.zeros((z_star.K, z.K), dtype=np.int64)
    np.add.at(joint, (z_star.assignment, z.assignment), 1)
    n11 = _same_pairs(joint.ravel())
    n1x = _same_pairs(joint.sum(axis=1))  # same under z_star
    nx1 = _same_pairs(joint.sum(axis=0))  # same under z
    n10 = n1x - n11
    n01 = nx1 - n11
    n00 = n * (n - 1) // 2 - n11 - n10 - n01
    return PairCounts(n00=n00, n01=n01, n10=n10, n11=n11)


def yule_phi(z_star: Membership, z: Membership) -> float:
    """Pair-agreement correlation; NaN when a marginal factor is zero."""
    c = pair_counts(z_star, z)
    f = [
        (c.n00 + c.n01), (c.n10 + c.n11), (c.n00 + c.n10), (c.n01 + c.n11),
    ]
    if any(v == 0 for v in f):
        return float("nan")
    num = c.n00 * c.n11 - c.n01 * c.n10
    return num / math.sqrt(float(f[0]) * f[1] * f[2] * f[3])


@dataclass
class GofSummary:
    """Within-block structural summaries.

    ``geodesic[d-1]`` counts within-block pairs at distance d (d = 1..cap,
    distances beyond the cap accumulate in the top bin); ``geodesic[-1]`` is
    the disconnected (infinite) bucket. ``dsp[t]`` / ``esp[t]`` count
    within-block dyads / edges with t shared partners (top bin = overflow).
    """

    geodesic: np.ndarray   # length geo_cap + 1
    dsp: np.ndarray        # length sp_cap + 1
    esp: np.ndarray        # length sp_cap + 1
    transitive: int
    geo_cap: int = GEO_CAP
    sp_cap: int = SP_CAP

    def __add__(self, other: "GofSummary") -> "GofSummary":
        return GofSummary(
            geodesic=self.geodesic + other.geodesic,
            dsp=self.dsp + other.dsp,
            esp=self.esp + other.esp,
            transitive=self.transitive + other.transitive,
            geo_cap=self.geo_cap, sp_cap=self.sp_cap,
        )


def _empty_summary(geo_cap, sp_cap) -> GofSummary:
    return GofSummary(
        geodesic=np.zeros(geo_cap + 1, dtype=np.int64),
        dsp=np.zeros(sp_cap + 1, dtype=np.int64),
        esp=np.zeros(sp_cap + 1, dtype=np.int64),
        transitive=0, geo_cap=geo_cap, sp_cap=sp_cap,
    )


def _block_summary(adj: np.ndarray, geo_cap: int, sp_cap: int) -> GofSummary:
    m = adj.shape[0]
    out = _empty_summary(geo_cap, sp_cap)
    if m < 2:
        return out
    nbrs = [np.flatnonzero(adj[i]) for i in range(m)]
    for i in range(m):
        dist = np.full(m, -1, dtype=np.int64)
        dist[i] = 0
        q = deque([i])
        while q:
            u = q.popleft()
            for v in nbrs[u]:
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    q.append(v)
        for j in range(i + 1, m):
            d = dist[j]
            if d < 0:
                out.geodesic[geo_cap] += 1
            else:
                out.geodesic[min(d, geo_cap) - 1] += 1
    common = adj.astype(np.int64) @ adj.astype(np.int64)
    iu = np.triu_indices(m, k=1)
    sp = np.minimum(common[iu], sp_cap)
    np.add.at(out.dsp, sp, 1)
    on_edge = adj[iu] == 1
    np.add.at(out.esp, sp[on_edge], 1)
    out.transitive += int(np.count_nonzero(common[iu][on_edge] > 0))
    return out


def gof_statistics(g: Graph, z: Membership, geo_cap: int = GEO_CAP,
                   sp_cap: int = SP_CAP) -> GofSummary:
    """Blockwise summaries summed over blocks (within statistics only)."""
    if g.n != z.n:
        raise ValidationError("graph and membership disagree on n")
    total = _empty_summary(geo_cap, sp_cap)
    a = z.assignment
    for k, nodes in enumerate(z.blocks()):
        if nodes.size < 2:
            continue
        local = -np.ones(g.n, dtype=np.int64)
        local[nodes] = np.arange(nodes.size)
        adj = np.zeros((nodes.size, nodes.size), dtype=np.uint8)
        if g.num_edges:
            mask = (a[g.edges[:, 0]] == k) & (a[g.edges[:, 1]] == k)
            sub = local[g.edges[mask]]
            adj[sub[:, 0], sub[:, 1]] = 1
            adj[sub[:, 1], sub[:, 0]] = 1
        total = total + _block_summary(adj, geo_cap, sp_cap)
    return total


@dataclass
class EnvelopeRow:
    stat: str
    bin: str
    observed: float
    sim_min: float
    q025: float
    median: float
    q975: float
    sim_max: float
    flag: str  # "", "+", "-"


def _bin_labels(summary: GofSummary):
    geo = [str(d) for d in range(1, summary.geo_cap + 1)]
    geo[-1] = f"{summary.geo_cap}+"
    geo.append("inf")
    sp = [str(t) for t in range(summary.sp_cap + 1)]
    sp[-1] = f"{summary.sp_cap}+"
    return geo, sp


def gof_envelope(observed: GofSummary, simulated) -> list:
    """Per-bin simulation envelope rows (2.5/50/97.5 percent quantiles).

    A bin is flagged "+" when the observed value exceeds the upper band,
    "-" when it falls below the lower band.
    """
    simulated = list(simulated)
    if len(simulated) < 2:
        raise ValidationError("need at least 2 simulated summaries")
    geo_labels, sp_labels = _bin_labels(observed)
    rows = []
    families = [
        ("geodesic", geo_labels, observed.geodesic,
         np.array([s.geodesic for s in simulated], dtype=np.float64)),
        ("dsp", sp_labels, observed.dsp,
         np.array([s.dsp for s in simulated], dtype=np.float64)),
        ("esp", sp_labels, observed.esp,
         np.array([s.esp for s in simulated], dtype=np.float64)),
        ("transitive", ["total"], np.array([observed.transitive]),
         np.array([[s.transitive] for s in simulated], dtype=np.float64)),
    ]
    for name, labels, obs, sims in families:
        q025 = np.quantile(sims, 0.025, axis=0)
        q500 = np.quantile(sims, 0.5, axis=0)
        q975 = np.quantile(sims, 0.975, axis=0)
        lo = sims.min(axis=0)
        hi = sims.max(axis=0)
        for b, label in enumerate(labels):
            o = float(obs[b])
            flag = ""
            if o > q975[b]:
                flag = "+"
            elif o < q025[b]:
                flag = "-"
            rows.append(EnvelopeRow(
                stat=name, bin=label, observed=o, sim_min=float(lo[b]),
                q025=float(q025[b]), median=float(q500[b]),
                q975=float(q975[b]), sim_max=float(hi[b]), flag=flag,
            ))
    return rows


def envelope_csv(rows) -> str:
    """CSV with the documented column order."""
    out = ["stat,bin,observed,min,q025,median,q975,max,flag"]
    for r in rows:
        out.append(
            f"{r.stat},{r.bin},{r.observed:g},{r.sim_min:g},{r.q025:g},"
            f"{r.median:g},{r.q975:g},{r.sim_max:g},{r.flag}"
        )
    return "\n".join(out) + "\n"


def envelope_table(rows) -> str:
    """Plain-text rendering of the envelope report."""
    header = f"{'stat':<12}{'bin':>6}{'obs':>10}{'q025':>10}{'med':>10}{'q975':>10} flag"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r.stat:<12}{r.bin:>6}{r.observed:>10g}{r.q025:>10g}"
            f"{r.median:>10g}{r.q975:>10g} {r.flag}"
        )
    return "\n".join(lines) + "\n"
