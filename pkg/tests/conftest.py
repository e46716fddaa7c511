import numpy as np
import pytest

from picardnet import catalog_entry


@pytest.fixture(scope="session")
def ode_entry():
    return catalog_entry("ode-exp")


@pytest.fixture(scope="session")
def heat_entry():
    return catalog_entry("heat")


@pytest.fixture(scope="session")
def relu_entry():
    return catalog_entry("relu-exact")


@pytest.fixture(scope="session")
def bs_entry():
    return catalog_entry("bs-like")


@pytest.fixture()
def rng():
    return np.random.default_rng(987654321)


def random_network(rng, in_dim, out_dim, depth, width=4, scale=1.0):
    """Random dense ReLU net with the requested endpoint dims and depth."""
    from picardnet import ReluNetwork

    widths = [in_dim] + [int(width)] * (depth - 2) + [out_dim]
    layers = []
    for a, b in zip(widths, widths[1:]):
        layers.append((scale * rng.standard_normal((b, a)), scale * rng.standard_normal(b)))
    return ReluNetwork(tuple(layers))
