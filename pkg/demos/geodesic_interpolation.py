"""
Geodesic interpolation on the sphere
====================================

A geodesic finite element function takes, on every element, the weighted
Frechet mean of its nodal values with the Lagrange shape functions as
weights.  This script evaluates one such mean, its spatial derivative, and
the interpolated variation of the nodal values.
"""
import numpy as np

from gfe import GfeFunction, Sphere2, build_uniform_mesh, evaluate, evaluate_differential, geodesic_interpolate
from gfe.interpolation import GfeVectorField, interpolate_vector_field

S = Sphere2()

# Three points near the north pole and their mean with weights (0.2, 0.3, 0.5).
north = np.array([0.0, 0.0, 1.0])
values = S.exp(np.repeat(north[None], 3, 0), np.array([[0.2, 0, 0], [0, 0.2, 0], [-0.1, -0.1, 0]]))
q = geodesic_interpolate(values, [0.2, 0.3, 0.5], S)
print("mean:", q)
print("first-order residual:", S.norm(sum(w * S.log(q, v) for w, v in zip([0.2, 0.3, 0.5], values))))

# A second-order function on a 2 x 2 grid of the unit square.
mesh = build_uniform_mesh(((0.0, 1.0), (0.0, 1.0)), 2)


def bump(x):
    v = np.stack([0.3 * x[:, 0], 0.3 * x[:, 1] ** 2, np.zeros(len(x))], axis=1)
    return S.exp(np.repeat(north[None], len(x), 0), v)


u = GfeFunction.interpolate(mesh, 2, S, bump)
x = np.array([[0.25, 0.25]])
print("u(x) on element 0:", evaluate(u, 0, x)[0])
print("du(x):\n", evaluate_differential(u, 0, x)[0])

# Rotating the nodal values by a common rotation rotates the interpolant.
c, s = np.cos(0.4), np.sin(0.4)
R = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
print("equivariance defect:", np.abs(evaluate(u.with_values(u.values @ R.T), 0, x) - evaluate(u, 0, x) @ R.T).max())

# The interpolated vector field is the derivative of the interpolant when
# every node moves along its nodal vector.
W = GfeVectorField(u, S.proj(u.values, np.tile([1.0, 0.0, 0.0], (u.nodes.num_nodes, 1))))
print("V_I(x):", interpolate_vector_field(W, 0, x)[0])
