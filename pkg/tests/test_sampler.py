import numpy as np
import pytest

from blockergm.errors import ValidationError
from blockergm.exact import exact_expected_stats
from blockergm.graph import Membership, neighborhood_sizes
from blockergm.model import ModelSpec, sufficient_statistics
from blockergm.sampler import (
    McmcConfig,
    _decode_dyad,
    sample_between,
    sample_memberships,
    sample_stat_batch,
    sample_within,
    simulate_graph,
)
from conftest import batch_mean_se

EDGE_TRANS = ModelSpec.edge_transitive()


def test_mcmc_config_validation():
    with pytest.raises(ValidationError):
        McmcConfig(burn_in=0)
    with pytest.raises(ValidationError):
        McmcConfig(num_samples=0)


def test_memberships_degenerate():
    z = sample_memberships([1.0, 0.0, 0.0], 50, seed=1)
    assert np.all(z.assignment == 0)


def test_memberships_lln():
    z = sample_memberships([0.5, 0.5], 10_000, seed=2)
    frac = np.mean(z.assignment == 0)
    assert abs(frac - 0.5) < 0.02


def test_memberships_deterministic():
    a = sample_memberships([0.3, 0.7], 100, seed=9)
    b = sample_memberships([0.3, 0.7], 100, seed=9)
    assert np.array_equal(a.assignment, b.assignment)


def test_memberships_invalid_pi():
    with pytest.raises(ValidationError):
        sample_memberships([0.5, 0.6], 10, seed=0)


def test_decode_dyad_covers_all():
    n = 9
    seen = [_decode_dyad(t, n) for t in range(n * (n - 1) // 2)]
    want = [(i, j) for i in range(n) for j in range(i + 1, n)]
    assert seen == want


def test_between_extremes():
    z = Membership([0, 0, 1, 1], 2)
    assert sample_between(z, -400.0, 4, seed=1).size == 0


def test_between_half_density():
    # theta=0 -> every cross dyad independently present with p = .5
    n = 60
    z = Membership(np.arange(n) % 2, 2)
    edges = sample_between(z, 0.0, n, seed=3)
    cross = (n // 2) ** 2
    assert abs(edges.shape[0] / cross - 0.5) < 0.05
    a = z.assignment
    assert np.all(a[edges[:, 0]] != a[edges[:, 1]])


def test_between_sparse_rate():
    # the paper-scale rate: p = logit^-1(-1.197 ln 10448) ~ 1.55e-5
    theta = -1.197
    n = 10_448
    p = 1 / (1 + np.exp(1.197 * np.log(n)))
    assert p == pytest.approx(1.55e-5, rel=0.01)
    z = Membership(np.arange(n) % 2, 2)
    edges = sample_between(z, theta, n, seed=4)
    cross = (n // 2) ** 2
    expect = cross * p
    assert abs(edges.shape[0] - expect) < 5 * np.sqrt(expect)


def test_within_uniform_edge_mean():
    ws = sample_within(4, [0.0, 0.0], EDGE_TRANS,
                       McmcConfig(burn_in=100, interval=5, num_samples=4000),
                       seed=11)
    mean, se = batch_mean_se(ws.stats)
    assert abs(mean[0] - 3.0) < 3 * se[0] + 1e-9  # (4 choose 2)/2


def test_within_matches_exact_oracle():
    eta = np.array([0.0, 1.0])
    ws = sample_within(3, eta, EDGE_TRANS,
                       McmcConfig(burn_in=300, interval=5, num_samples=8000),
                       seed=12)
    mean, se = batch_mean_se(ws.stats)
    exact = exact_expected_stats(3, eta, EDGE_TRANS)
    assert exact[1] == pytest.approx(2.2247, abs=1e-4)
    for c in range(2):
        assert abs(mean[c] - exact[c]) < 3 * se[c]


def test_within_deterministic():
    cfg = McmcConfig(burn_in=50, interval=2, num_samples=100)
    a = sample_within(5, [0.1, 0.2], EDGE_TRANS, cfg, seed=77)
    b = sample_within(5, [0.1, 0.2], EDGE_TRANS, cfg, seed=77)
    assert np.array_equal(a.stats, b.stats)
    assert np.array_equal(a.final_adj, b.final_adj)


def test_simulate_empty_when_theta_tiny():
    theta = np.array([-50.0, 0.0, -50.0])
    g, z = simulate_graph(theta, EDGE_TRANS,
                          McmcConfig(burn_in=20, interval=2, num_samples=1, seed=5),
                          z=Membership([0, 0, 1, 1], 2))
    assert g.num_edges == 0


def test_simulate_k1_single_block():
    theta = np.array([0.0, 0.0, -5.0])
    g, z = simulate_graph(theta, EDGE_TRANS,
                          McmcConfig(burn_in=100, interval=5, num_samples=1, seed=6),
                          z=Membership([0] * 8, 1))
    assert z.K == 1 and g.n == 8


def test_simulate_with_pi_draws_memberships():
    theta = np.array([0.3, 0.1, -0.9])
    g, z = simulate_graph(theta, EDGE_TRANS,
                          McmcConfig(burn_in=50, interval=2, num_samples=1, seed=8),
                          pi=[0.5, 0.5], n=30)
    assert z.n == 30 and g.n == 30
    assert neighborhood_sizes(z).sum() == 30


def test_between_within_streams_independent():
    # regenerating the between edges never alters the within sample
    theta = np.array([0.2, 0.1, -0.5])
    z = Membership([0, 0, 0, 1, 1, 1], 2)
    cfg = McmcConfig(burn_in=50, interval=2, num_samples=1, seed=13)
    g1, _ = simulate_graph(theta, EDGE_TRANS, cfg, z=z)
    theta2 = theta.copy()
    theta2[-1] = -3.0  # different between parameter, same within seeds
    g2, _ = simulate_graph(theta2, EDGE_TRANS, cfg, z=z)
    a = z.assignment

    def within_edges(g):
        return {(int(i), int(j)) for i, j in g.edges if a[i] == a[j]}

    assert within_edges(g1) == within_edges(g2)


def test_batch_provenance_and_replay():
    theta0 = np.array([0.1, 0.05, -0.4])
    z = Membership([0, 0, 0, 0, 1, 1, 1], 2)
    cfg = McmcConfig(burn_in=30, interval=2, num_samples=50, seed=99)
    b1 = sample_stat_batch(z, theta0, EDGE_TRANS, cfg, workers=1)
    b2 = sample_stat_batch(z, theta0, EDGE_TRANS, cfg, workers=1)
    for k in range(2):
        assert np.array_equal(b1.block_stats[k], b2.block_stats[k])
    assert b1.block_seeds == b2.block_seeds


def test_batch_worker_layout_invariance():
    theta0 = np.array([0.1, 0.05, -0.4])
    z = Membership(np.arange(12) % 3, 3)
    cfg = McmcConfig(burn_in=20, interval=2, num_samples=30, seed=41)
    serial = sample_stat_batch(z, theta0, EDGE_TRANS, cfg, workers=1)
    parallel = sample_stat_batch(z, theta0, EDGE_TRANS, cfg, workers=3)
    for k in range(3):
        assert np.array_equal(serial.block_stats[k], parallel.block_stats[k])
