"""Sparse undirected graph storage, edge-list I/O, and block membership.

Node ids are 1-based in files and 0-based everywhere else; the file boundary
converts exactly once. Graphs are immutable after construction so many
workers can read them concurrently.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, ValidationError

__all__ = [
    "Graph",
    "Membership",
    "SoftMembership",
    "load_edge_list",
    "dump_edge_list",
    "load_membership",
    "dump_membership",
    "neighborhood_sizes",
    "within_subgraph",
    "between_edge_count",
]

ALPHA_FLOOR = 1e-6


class Graph:
    """Simple undirected graph on nodes ``0..n-1`` with binary edges.

    Edges are stored once as pairs ``(i, j)`` with ``i < j`` in lexicographic
    order. No self-loops.
    """

    __slots__ = ("n", "edges", "_adj", "_edge_keys")

    def __init__(self, n: int, edges):
        if n < 0:
            raise ValidationError("node count must be nonnegative")
        pairs = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        if pairs.size:
            lo = np.minimum(pairs[:, 0], pairs[:, 1])
            hi = np.maximum(pairs[:, 0], pairs[:, 1])
            if np.any(lo == hi):
                raise ValidationError("self-loops are not allowed")
            if lo.min() < 0 or hi.max() >= n:
                raise ValidationError("edge endpoint out of range")
            pairs = np.unique(np.stack([lo, hi], axis=1), axis=0)
        self.n = int(n)
        self.edges = pairs
        self.edges.setflags(write=False)
        self._adj = None
        self._edge_keys = None

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    def adjacency_lists(self):
        """Per-node sorted neighbor arrays (built once, cached)."""
        if self._adj is None:
            adj = [[] for _ in range(self.n)]
            for i, j in self.edges:
                adj[i].append(j)
                adj[j].append(i)
            self._adj = [np.array(sorted(a), dtype=np.int64) for a in adj]
        return self._adj

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        if self.num_edges:
            np.add.at(deg, self.edges[:, 0], 1)
            np.add.at(deg, self.edges[:, 1], 1)
        return deg

    def _keys(self):
        if self._edge_keys is None:
            self._edge_keys = frozenset(
                int(i) * self.n + int(j) for i, j in self.edges
            )
        return self._edge_keys

    def has_edge(self, i: int, j: int) -> bool:
        if i == j:
            return False
        i, j = (i, j) if i < j else (j, i)
        return i * self.n + j in self._keys()

    def dense_adjacency(self) -> np.ndarray:
        """Dense 0/1 adjacency matrix (uint8). Intended for small graphs."""
        a = np.zeros((self.n, self.n), dtype=np.uint8)
        if self.num_edges:
            a[self.edges[:, 0], self.edges[:, 1]] = 1
            a[self.edges[:, 1], self.edges[:, 0]] = 1
        return a

    def with_edge(self, i: int, j: int, present: bool) -> "Graph":
        """Copy of the graph with dyad (i, j) set to ``present``."""
        if i == j:
            raise ValidationError("self-loops are not allowed")
        i, j = (i, j) if i < j else (j, i)
        mask = (self.edges[:, 0] == i) & (self.edges[:, 1] == j)
        if present and not mask.any():
            return Graph(self.n, np.vstack([self.edges, [[i, j]]]))
        if not present and mask.any():
            return Graph(self.n, self.edges[~mask])
        return self

    def __eq__(self, other):
        return (
            isinstance(other, Graph)
            and self.n == other.n
            and self.edges.shape == other.edges.shape
            and bool(np.all(self.edges == other.edges))
        )

    def __repr__(self):
        return f"Graph(n={self.n}, edges={self.num_edges})"


@dataclass(frozen=True)
class Membership:
    """Hard block assignment: ``assignment[i]`` in ``0..K-1``."""

    assignment: np.ndarray
    K: int

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=np.int64)
        if self.K < 1:
            raise ValidationError("K must be >= 1")
        if a.ndim != 1:
            raise ValidationError("assignment must be a vector")
        if a.size and (a.min() < 0 or a.max() >= self.K):
            raise ValidationError("block ids out of range")
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)

    @property
    def n(self) -> int:
        return self.assignment.size

    def blocks(self):
        """List of node-index arrays, one per block (possibly empty)."""
        return [np.flatnonzero(self.assignment == k) for k in range(self.K)]


@dataclass
class SoftMembership:
    """Row-stochastic n-by-K matrix of block responsibilities."""

    alpha: np.ndarray
    floor: float = field(default=ALPHA_FLOOR)

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=np.float64)
        if a.ndim != 2:
            raise ValidationError("alpha must be an n-by-K matrix")
        if np.any(a < 0):
            raise ValidationError("alpha entries must be nonnegative")
        rs = a.sum(axis=1)
        if a.shape[1] and np.any(np.abs(rs - 1.0) > 1e-10):
            raise ValidationError("alpha rows must sum to 1 within 1e-10")
        self.alpha = a

    @property
    def n(self) -> int:
        return self.alpha.shape[0]

    @property
    def K(self) -> int:
        return self.alpha.shape[1]

    def floored(self) -> "SoftMembership":
        """Affine shift onto {alpha >= floor, rows sum to 1}."""
        K = self.alpha.shape[1]
        a = (1.0 - K * self.floor) * self.alpha + self.floor
        return SoftMembership(a, floor=self.floor)

    def harden(self) -> Membership:
        """Row-wise argmax with lowest-index tie-break."""
        return Membership(np.argmax(self.alpha, axis=1), self.K)


def _parse_lines(stream):
    if isinstance(stream, (str, bytes)):
        stream = io.StringIO(
            stream.decode("ascii") if isinstance(stream, bytes) else stream
        )
    for lineno, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def load_edge_list(stream) -> Graph:
    """Parse a whitespace-separated, 1-based edge list.

    ``#`` starts a comment; an optional ``n=<count>`` line fixes the node
    count (otherwise the maximum id seen is used). Duplicate and reversed
    duplicate pairs collapse to one edge; self-loops are rejected.
    """
    n_header = None
    pairs = []
    max_id = 0
    for lineno, line in _parse_lines(stream):
        if line.startswith("n="):
            try:
                n_header = int(line[2:].strip())
            except ValueError:
                raise ParseError("malformed n= header", line=lineno) from None
            continue
        fields = line.split()
        if len(fields) != 2:
            raise ParseError(f"expected two node ids, got {line!r}", line=lineno)
        try:
            i, j = int(fields[0]), int(fields[1])
        except ValueError:
            raise ParseError(f"non-integer node id in {line!r}", line=lineno) from None
        if i < 1 or j < 1:
            raise ParseError("node ids must be positive", line=lineno)
        if i == j:
            raise ParseError(f"self-loop at node {i}", line=lineno)
        pairs.append((i - 1, j - 1))
        max_id = max(max_id, i, j)
    n = n_header if n_header is not None else max_id
    if n < max_id:
        raise ParseError(f"n= header {n} smaller than max node id {max_id}")
    return Graph(n, pairs)


def dump_edge_list(g: Graph) -> str:
    """Canonical text form: ``n=`` header then sorted 1-based pairs, LF."""
    lines = [f"n={g.n}"]
    lines.extend(f"{i + 1} {j + 1}" for i, j in g.edges)
    return "\n".join(lines) + "\n"


def load_membership(stream, K: int | None = None) -> Membership:
    """Parse ``node_id block_id`` lines (1-based, ``#`` comments)."""
    entries = {}
    max_node = 0
    max_block = 0
    for lineno, line in _parse_lines(stream):
        fields = line.split()
        if len(fields) != 2:
            raise ParseError(f"expected 'node block', got {line!r}", line=lineno)
        try:
            node, block = int(fields[0]), int(fields[1])
        except ValueError:
            raise ParseError(f"non-integer id in {line!r}", line=lineno) from None
        if node < 1 or block < 1:
            raise ParseError("ids must be positive", line=lineno)
        if node in entries:
            raise ParseError(f"duplicate node {node}", line=lineno)
        entries[node] = block
        max_node = max(max_node, node)
        max_block = max(max_block, block)
    if len(entries) != max_node:
        missing = sorted(set(range(1, max_node + 1)) - set(entries))
        raise ParseError(f"missing nodes: {missing[:5]}")
    assignment = np.array([entries[i] - 1 for i in range(1, max_node + 1)])
    return Membership(assignment, K if K is not None else max_block)


def dump_membership(z: Membership) -> str:
    lines = [f"{i + 1} {int(k) + 1}" for i, k in enumerate(z.assignment)]
    return "\n".join(lines) + "\n"


def neighborhood_sizes(z: Membership) -> np.ndarray:
    """Block sizes ``count_k = |{i : z_i = k}|``; sums to n."""
    return np.bincount(z.assignment, minlength=z.K)


def within_subgraph(g: Graph, z: Membership, k: int):
    """Induced subgraph on block ``k`` plus the local->global index map.

    Block ids are 0-based here (internal convention).
    """
    if not 0 <= k < z.K:
        raise ValidationError(f"block id {k} out of range")
    if g.n != z.n:
        raise ValidationError("graph and membership disagree on n")
    nodes = np.flatnonzero(z.assignment == k)
    local = -np.ones(g.n, dtype=np.int64)
    local[nodes] = np.arange(nodes.size)
    if g.num_edges:
        a = z.assignment
        mask = (a[g.edges[:, 0]] == k) & (a[g.edges[:, 1]] == k)
        sub_edges = local[g.edges[mask]]
    else:
        sub_edges = np.empty((0, 2), dtype=np.int64)
    return Graph(nodes.size, sub_edges), nodes


def between_edge_count(g: Graph, z: Membership) -> int:
    """Number of edges whose endpoints lie in different blocks."""
    if g.num_edges == 0:
        return 0
    a = z.assignment
    return int(np.count_nonzero(a[g.edges[:, 0]] != a[g.edges[:, 1]]))
