import hypothesis
import numpy as np
import pytest

hypothesis.settings.register_profile(
    "default", max_examples=60, deadline=None,
    suppress_health_check=[hypothesis.HealthCheck.too_slow],
)
hypothesis.settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def random_graph(n_nodes: int, edge_prob: float, seed: int, feature_dim: int = 3):
    """Small random test graph with Gaussian features."""
    from sage.graph import build_graph

    rng = np.random.default_rng(seed)
    mask = np.triu(rng.random((n_nodes, n_nodes)) < edge_prob, k=1)
    edges = list(zip(*np.nonzero(mask)))
    features = rng.standard_normal((n_nodes, feature_dim)).astype(np.float32)
    return build_graph(edges, features, range(n_nodes))
