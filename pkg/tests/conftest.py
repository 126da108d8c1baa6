import numpy as np
import pytest

from blockergm.graph import Graph, Membership


def random_graph(rng, n, density):
    edges = [
        (i, j)
        for i in range(n)
        for j in range(i + 1, n)
        if rng.random() < density
    ]
    return Graph(n, edges)


def random_membership(rng, n, K):
    return Membership(rng.integers(0, K, n), K)


def batch_mean_se(samples: np.ndarray, num_batches: int = 20):
    """Batch-means standard error of the chain mean (columnwise)."""
    size = samples.shape[0] // num_batches
    means = samples[: num_batches * size].reshape(num_batches, size, -1).mean(axis=1)
    return samples.mean(axis=0), means.std(axis=0, ddof=1) / np.sqrt(num_batches)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
