import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockergm.errors import ValidationError
from blockergm.graph import Graph, Membership
from blockergm.model import (
    ModelSpec,
    change_statistics,
    log_unnormalized,
    natural_parameter_jacobian,
    natural_parameters,
    sufficient_statistics,
)

TRI = Graph(3, [(0, 1), (1, 2), (0, 2)])


def test_model_validation():
    with pytest.raises(ValidationError):
        ModelSpec(["transitive"])  # no within-edge term
    with pytest.raises(ValidationError):
        ModelSpec(["edges", "nonsense"])


def test_triangle_one_block():
    m = ModelSpec.edge_transitive()
    s = sufficient_statistics(TRI, Membership([0, 0, 0], 1), m)
    assert s.tolist() == [3.0, 3.0, 0.0]


def test_triangle_split():
    m = ModelSpec.edge_transitive()
    s = sufficient_statistics(TRI, Membership([0, 0, 1], 2), m)
    # within edges 1, transitive 0 in block 1; block 2 empty; between 2
    assert s.tolist() == [1.0, 0.0, 0.0, 0.0, 2.0]


def test_empty_graph_zero_stats():
    m = ModelSpec.curved(gwd_trunc=5, gwesp_trunc=4)
    g = Graph(6, [])
    s = sufficient_statistics(g, Membership([0, 0, 0, 1, 1, 1], 2), m)
    assert not np.any(s)


def test_change_path_toggle():
    m = ModelSpec.edge_transitive()
    g = Graph(3, [(0, 1)])
    d = change_statistics(g, Membership([0, 0, 0], 1), m, (1, 2))
    assert d.tolist() == [1.0, 0.0, 0.0]


def test_change_closes_triangle():
    m = ModelSpec.edge_transitive()
    g = Graph(3, [(0, 1), (1, 2)])
    d = change_statistics(g, Membership([0, 0, 0], 1), m, (0, 2))
    assert d.tolist() == [1.0, 3.0, 0.0]


def test_change_between_block_only():
    m = ModelSpec.edge_transitive()
    g = Graph(4, [(0, 1), (2, 3)])
    z = Membership([0, 0, 1, 1], 2)
    d = change_statistics(g, z, m, (1, 2))
    assert d[m.between_index(2)] == 1.0
    d[m.between_index(2)] = 0.0
    assert not np.any(d)


@settings(max_examples=120, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_change_matches_full_difference(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 13))
    K = int(rng.integers(1, 4))
    z = Membership(rng.integers(0, K, n), K)
    edges = [
        (i, j) for i in range(n) for j in range(i + 1, n)
        if rng.random() < rng.uniform(0.1, 0.8)
    ]
    g = Graph(n, edges)
    if seed % 2:
        m = ModelSpec.edge_transitive()
    else:
        m = ModelSpec(["edges", "gwdegree", "gwesp"], 5, 4)
    i = int(rng.integers(0, n))
    j = int((i + 1 + rng.integers(0, n - 1)) % n)
    if i == j:
        return
    delta = change_statistics(g, z, m, (i, j))
    s1 = sufficient_statistics(g.with_edge(i, j, True), z, m)
    s0 = sufficient_statistics(g.with_edge(i, j, False), z, m)
    assert np.allclose(delta, s1 - s0)


def test_block_permutation_equivariance(rng):
    m = ModelSpec.edge_transitive()
    n, K = 10, 3
    z = Membership(rng.integers(0, K, n), K)
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.4]
    g = Graph(n, edges)
    s = sufficient_statistics(g, z, m)
    perm = np.array([2, 0, 1])
    z_perm = Membership(perm[z.assignment], K)
    s_perm = sufficient_statistics(g, z_perm, m)
    for k in range(K):
        assert np.allclose(s[m.block_slice(k)], s_perm[m.block_slice(perm[k])])
    assert s[m.between_index(K)] == s_perm[m.between_index(K)]


def test_eta_spec_values():
    m = ModelSpec.edge_transitive()
    z = Membership([0] * 10, 1)
    eta = natural_parameters(np.array([-0.434, 0.0, 0.0]), z, m)
    assert eta[0] == pytest.approx(-0.434 * np.log(10), abs=1e-12)
    assert eta[0] == pytest.approx(-0.99932, abs=1e-4)


def test_eta_gwd_collapses_at_t1():
    m = ModelSpec(["edges", "gwdegree"], gwd_trunc=20)
    z = Membership([0] * 50, 1)
    theta = np.array([0.0, 1.086, 0.760, 0.0])
    eta = natural_parameters(theta, z, m)
    # t=1 coordinate: the geometric bracket times exp(decay) collapses to 1
    assert eta[1] == pytest.approx(1.086 * np.log(50), rel=1e-12)
    assert eta[1] == pytest.approx(4.2486, abs=1e-4)


def test_eta_singleton_block_zero():
    m = ModelSpec.curved(gwd_trunc=4, gwesp_trunc=3)
    z = Membership([0, 1, 1, 1], 2)
    eta = natural_parameters(rng_theta(m), z, m)
    assert not np.any(eta[m.block_slice(0)])


def rng_theta(m):
    return np.linspace(0.3, -0.4, m.theta_dim)


def test_eta_non_finite_rejected():
    m = ModelSpec.edge_transitive()
    with pytest.raises(ValidationError):
        natural_parameters(np.array([np.nan, 0, 0]), Membership([0, 0], 1), m)
    with pytest.raises(ValidationError):
        natural_parameters(np.zeros(5), Membership([0, 0], 1), m)


def test_truncation_zero_beyond_threshold():
    # eta has no coordinates beyond the truncation, and stats computed with a
    # larger truncation show the truncated coordinates are genuinely dropped
    m_small = ModelSpec(["edges", "gwdegree", "gwesp"], 3, 2)
    m_big = ModelSpec(["edges", "gwdegree", "gwesp"], 6, 5)
    g = Graph(6, [(i, j) for i in range(6) for j in range(i + 1, 6)])  # K6
    z = Membership([0] * 6, 1)
    s_small = sufficient_statistics(g, z, m_small)
    s_big = sufficient_statistics(g, z, m_big)
    # complete graph: every node degree 5, every edge 4 shared partners
    assert s_big[1 + 4] == 6.0  # gwd bin t=5
    assert not np.any(s_small[1:4])  # bins t=1..3 empty, t>3 not stored


def test_jacobian_matches_finite_differences(rng):
    m = ModelSpec.curved(gwd_trunc=6, gwesp_trunc=5)
    z = Membership(rng.integers(0, 3, 14), 3)
    theta = np.array([-0.4, 0.8, 0.5, 0.3, 1.1, -0.9])
    J = natural_parameter_jacobian(theta, z, m)
    h = 1e-6
    for p in range(m.theta_dim):
        e = np.zeros(m.theta_dim)
        e[p] = h
        fd = (natural_parameters(theta + e, z, m)
              - natural_parameters(theta - e, z, m)) / (2 * h)
        assert np.allclose(J[:, p], fd, atol=1e-6)


def test_log_unnormalized():
    m = ModelSpec.edge_transitive()
    z = Membership([0, 0, 0], 1)
    assert log_unnormalized(Graph(3, []), z, m, np.zeros(3)) == 0.0
    assert log_unnormalized(TRI, z, m, np.zeros(3)) == 0.0
    val = log_unnormalized(TRI, z, m, np.array([1.0, 0.0, 0.0]))
    assert val == pytest.approx(3 * np.log(3), rel=1e-12)
