"""Shared builders for random discrete data."""
import numpy as np

from gfe.interpolation import GfeFunction, GfeVectorField
from gfe.mesh import build_uniform_mesh


def random_gfe(M, rng, dim=2, order=1, k=2, radius=0.2, center=None):
    domain = (0.0, 1.0) if dim == 1 else ((0.0, 1.0), (0.0, 1.0))
    mesh = build_uniform_mesh(domain, k)
    nn = mesh.lagrange_nodes(order).num_nodes
    p0 = M.random_point(rng, radius=0.5) if center is None else center
    base = np.repeat(p0[None], nn, axis=0)
    v = M.random_tangent(rng, base)
    v *= radius * rng.uniform(size=(nn, 1)) / np.maximum(M.norm(v)[:, None], 1e-300)
    return GfeFunction(mesh, order, M, M.exp(base, v))


def random_field(u, rng, scale=1.0, vanish_on_boundary=False):
    V = scale * u.manifold.random_tangent(rng, u.values)
    if vanish_on_boundary:
        V[u.nodes.boundary] = 0.0
    return GfeVectorField(u, V)


def random_rotation(rng):
    Q, R = np.linalg.qr(rng.standard_normal((3, 3)))
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] *= -1
    return Q


def interior_points(rng, n, dim):
    """Random reference points strictly inside the simplex."""
    return rng.dirichlet(np.ones(dim + 1), size=n)[:, 1:]
