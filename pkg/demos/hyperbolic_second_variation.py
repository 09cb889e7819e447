"""
Second variation in hyperbolic space
====================================

For targets of nonpositive curvature the curvature term of the second
variation has a sign: d^2 E(V, V) >= int |nabla V|^2.  We solve the
conformal test problem on the hyperboloid and check this for a few random
test fields that vanish on the boundary.
"""
import numpy as np

from gfe import GfeFunction, build_uniform_mesh
from gfe.energy import dirichlet_form, second_variation
from gfe.interpolation import GfeVectorField
from gfe.problems import get_problem
from gfe.solver import solve

pdef = get_problem("P3-conformal")
H = pdef.manifold
mesh = build_uniform_mesh(pdef.domain, 8)
u, report = solve(GfeFunction.interpolate(mesh, 1, H, pdef.exact.value))
print("converged:", report.converged, "in", report.iterations, "iterations")

rng = np.random.default_rng(0)
for _ in range(5):
    V = H.random_tangent(rng, u.values)
    V[u.nodes.boundary] = 0.0
    W = GfeVectorField(u, V)
    print(f"d2E(V,V) = {second_variation(u, W, W):10.4f}   int|dV|^2 = {dirichlet_form(W):10.4f}")
