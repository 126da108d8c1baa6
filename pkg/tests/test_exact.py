import numpy as np
import pytest

from blockergm.errors import BudgetExceededError
from blockergm.exact import (
    EnumerationBudget,
    exact_deviation,
    exact_expected_stats,
    exact_log_normalizer,
    exact_loglik,
    exact_observed_data_loglik,
    hamming_distance,
)
from blockergm.graph import Graph, Membership
from blockergm.model import ModelSpec, natural_parameters, sufficient_statistics

EDGE_TRANS = ModelSpec.edge_transitive()


def test_psi_single_dyad():
    for eta in (0.0, 1.3, -2.0):
        want = np.log(1 + np.exp(eta))
        assert exact_log_normalizer(2, [eta, 0.0], EDGE_TRANS) == pytest.approx(want)
    assert exact_log_normalizer(2, [0.0, 0.0], EDGE_TRANS) == pytest.approx(np.log(2))


def test_psi_independence_when_no_transitive():
    assert exact_log_normalizer(3, [0.0, 0.0], EDGE_TRANS) == pytest.approx(3 * np.log(2))
    eta = 0.7
    want = 6 * np.log(1 + np.exp(eta))
    assert exact_log_normalizer(4, [eta, 0.0], EDGE_TRANS) == pytest.approx(want)


def test_psi_triangle_enumeration():
    # 8 graphs on 3 nodes; only the triangle has transitive statistic 3
    assert exact_log_normalizer(3, [0.0, 1.0], EDGE_TRANS) == pytest.approx(
        np.log(7 + np.exp(3.0))
    )


def test_psi_uniform_counts_dyads():
    for m in (2, 3, 4, 5, 6, 7):
        dyads = m * (m - 1) // 2
        assert exact_log_normalizer(m, np.zeros(2), EDGE_TRANS) == pytest.approx(
            dyads * np.log(2)
        )


def test_budget_refusal():
    with pytest.raises(BudgetExceededError) as err:
        exact_log_normalizer(8, np.zeros(2), EDGE_TRANS)
    assert err.value.required == 8
    small = EnumerationBudget(max_within_nodes=4)
    with pytest.raises(BudgetExceededError):
        exact_log_normalizer(5, np.zeros(2), EDGE_TRANS, budget=small)


def test_expected_stats_examples():
    e = exact_expected_stats(2, [0.0, 0.0], EDGE_TRANS)
    assert e[0] == pytest.approx(0.5)
    e = exact_expected_stats(3, [0.0, 0.0], EDGE_TRANS)
    assert e[0] == pytest.approx(1.5)
    assert e[1] == pytest.approx(3 / 8)
    e = exact_expected_stats(3, [0.0, 50.0], EDGE_TRANS)
    assert e[1] == pytest.approx(3.0, abs=1e-8)


def test_expected_stats_is_psi_gradient():
    # dpsi/deta_j equals E[s_j], checked by central differences
    m = ModelSpec(["edges", "gwdegree", "gwesp"], 3, 2)
    eta = np.array([0.3, 0.2, -0.1, 0.4, 0.15, -0.25])
    e = exact_expected_stats(5, eta, m)
    h = 1e-5
    for j in range(eta.size):
        d = np.zeros_like(eta)
        d[j] = h
        fd = (exact_log_normalizer(5, eta + d, m)
              - exact_log_normalizer(5, eta - d, m)) / (2 * h)
        assert fd == pytest.approx(e[j], abs=1e-6)


def test_exact_loglik_uniform():
    g = Graph(6, [(0, 1), (2, 3), (1, 4)])
    z = Membership([0, 0, 0, 1, 1, 1], 2)
    want = -15 * np.log(2)  # theta = 0: uniform over 2^(n choose 2)
    assert exact_loglik(g, z, EDGE_TRANS, np.zeros(3)) == pytest.approx(want)


def test_exact_loglik_single_dyad():
    g = Graph(2, [(0, 1)])
    z = Membership([0, 0], 1)
    theta = np.array([0.8, 0.0, 0.0])
    eta = 0.8 * np.log(2)
    assert exact_loglik(g, z, EDGE_TRANS, theta) == pytest.approx(
        eta - np.log(1 + np.exp(eta))
    )


def test_exact_loglik_sbm_reduces_to_dyad_products(rng):
    # with the transitive coordinate zero the likelihood factorizes
    for _ in range(10):
        n = 6
        z = Membership(rng.integers(0, 2, n), 2)
        edges = [
            (i, j) for i in range(n) for j in range(i + 1, n)
            if rng.random() < 0.4
        ]
        g = Graph(n, edges)
        theta = np.array([rng.normal(), 0.0, rng.normal()])
        sizes = np.bincount(z.assignment, minlength=2)
        want = 0.0
        a = z.assignment
        x = np.zeros((n, n))
        if g.num_edges:
            x[g.edges[:, 0], g.edges[:, 1]] = 1
        for i in range(n):
            for j in range(i + 1, n):
                if a[i] == a[j]:
                    nk = sizes[a[i]]
                    eta = theta[0] * np.log(nk) if nk > 1 else 0.0
                else:
                    eta = theta[2] * np.log(n)
                want += x[i, j] * eta - np.log(1 + np.exp(eta))
        assert exact_loglik(g, z, EDGE_TRANS, theta) == pytest.approx(want)


def test_deviation_zero_when_transitive_zero(rng):
    g = Graph(5, [(0, 1), (1, 2), (3, 4)])
    z = Membership([0, 0, 0, 1, 1], 2)
    theta = np.array([rng.normal(), 0.0, rng.normal()])
    assert exact_deviation(g, z, EDGE_TRANS, theta) == pytest.approx(0.0, abs=1e-12)


def test_deviation_ignores_between_edges(rng):
    theta = np.array([-0.434, 0.217, -0.882])
    for _ in range(10):
        n = 7
        z = Membership(np.array([0, 0, 0, 1, 1, 1, 1]), 2)
        edges = [
            (i, j) for i in range(n) for j in range(i + 1, n)
            if rng.random() < 0.5
        ]
        g = Graph(n, edges)
        base = exact_deviation(g, z, EDGE_TRANS, theta)
        # toggling any cross-block dyad leaves the value bitwise unchanged
        a = z.assignment
        for i in range(n):
            for j in range(i + 1, n):
                if a[i] != a[j]:
                    g2 = g.with_edge(i, j, not g.has_edge(i, j))
                    assert exact_deviation(g2, z, EDGE_TRANS, theta) == base


def test_deviation_matches_loglik_difference(rng):
    theta = np.array([0.2, 0.5, -0.6])
    z = Membership(np.array([0, 0, 0, 1, 1, 1]), 2)
    for _ in range(5):
        edges = [
            (i, j) for i in range(6) for j in range(i + 1, 6)
            if rng.random() < 0.5
        ]
        g = Graph(6, edges)
        direct = exact_deviation(g, z, EDGE_TRANS, theta)
        via_loglik = exact_loglik(g, z, EDGE_TRANS, theta) - exact_loglik(
            g, z, EDGE_TRANS, np.array([theta[0], 0.0, theta[2]])
        )
        assert direct == pytest.approx(via_loglik, abs=1e-9)


def test_observed_data_loglik_k1_matches_exact():
    g = Graph(4, [(0, 1), (2, 3)])
    z = Membership([0, 0, 0, 0], 1)
    theta_w = 0.4
    ll = exact_observed_data_loglik(
        g, 1, [1.0], lambda k, l, sizes, n: theta_w * np.log(max(sizes[k], 2))
    )
    assert ll == pytest.approx(exact_loglik(g, z, EDGE_TRANS, np.array([theta_w, 0, 0])))


def test_observed_data_loglik_concentrated_prior():
    # pi degenerate at one block: reduces to that z's likelihood
    g = Graph(3, [(0, 1)])
    eta_fix = -0.3
    ll = exact_observed_data_loglik(g, 2, [1.0, 0.0],
                                    lambda k, l, sizes, n: eta_fix)
    want = eta_fix - 3 * np.log(1 + np.exp(eta_fix))
    assert ll == pytest.approx(want)


def test_hamming():
    g1 = Graph(4, [(0, 1), (1, 2)])
    g2 = Graph(4, [(0, 1), (2, 3)])
    assert hamming_distance(g1, g2) == 2
    assert hamming_distance(g1, g1) == 0
