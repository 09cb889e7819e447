import numpy as np
import pytest

from gfe.manifold import Euclidean, Hyperbolic2, Sphere2


@pytest.fixture
def rng():
    return np.random.default_rng(20261019)


MANIFOLDS = [Euclidean(2), Sphere2(), Hyperbolic2()]
CURVED = [Sphere2(), Hyperbolic2()]


def manifold_id(m):
    return type(m).__name__


def fd_oracle(f, x, direction, step=1e-5):
    """Central difference of f at x along direction (generic test oracle)."""
    return (f(x + step * direction) - f(x - step * direction)) / (2 * step)


def random_pairs(M, rng, n, radius):
    p = M.random_point(rng, n, radius=1.0)
    v = M.random_tangent(rng, p)
    v *= (radius * rng.uniform(size=(n, 1))) / np.maximum(M.norm(v)[:, None], 1e-300)
    return p, M.exp(p, v)
