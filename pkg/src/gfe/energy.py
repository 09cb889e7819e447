"""Harmonic energy 1/2 int |du|^2 of geodesic finite element functions, its
first variation with respect to nodal values and its second variation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .interpolation import PointSet
from .mesh import quadrature_for
from .parallel import map_chunks


def default_energy_degree(order):
    return 2 * order + 2


@dataclass(frozen=True)
class EnergyValue:
    total: float
    per_element: np.ndarray


@dataclass(frozen=True)
class NodalGradient:
    """Riemannian gradient entries at the free nodes."""

    nodes: np.ndarray     # global node ids
    vectors: np.ndarray   # (len(nodes), N), tangent at the nodal values

    def norm(self, manifold):
        return float(np.sqrt(np.sum(manifold.inner(self.vectors, self.vectors))))


def _points(u, quad):
    if quad is None:
        quad = quadrature_for(u.mesh.dim, default_energy_degree(u.order))
    elif isinstance(quad, (int, np.integer)):
        quad = quadrature_for(u.mesh.dim, int(quad))
    return PointSet.quadrature(u.mesh, u.order, quad), len(quad)


def _per_element(u, density, nq):
    return density.reshape(u.mesh.num_elements, nq).sum(axis=1)


def harmonic_energy(u, quad=None):
    """Quadrature value of the harmonic energy, with per-element contributions."""
    pts, nq = _points(u, quad)

    def work(a, b):
        sub = pts.subset(a, b)
        return sub.weights * u.state(sub).energy_density()

    dens = np.concatenate(map_chunks(work, len(pts)))
    per = _per_element(u, dens, nq)
    return EnergyValue(float(per.sum()), per)


def _scatter(u, pts, cov):
    """Sum per-point nodal covectors (P, l, N) into global nodes."""
    ids = u.nodes.elem_nodes[pts.elements].ravel()
    nn = u.nodes.num_nodes
    flat = cov.reshape(-1, cov.shape[-1])
    return np.stack([np.bincount(ids, weights=flat[:, k], minlength=nn) for k in range(flat.shape[1])], axis=1)


def energy_and_gradient(u, quad=None):
    """Energy value and the Riemannian gradient at every node, shape (nn, N)."""
    pts, nq = _points(u, quad)

    def work(a, b):
        sub = pts.subset(a, b)
        st = u.state(sub)
        return sub.weights * st.energy_density(), st.energy_covectors()

    parts = map_chunks(work, len(pts))
    dens = np.concatenate([p[0] for p in parts])
    cov = np.concatenate([p[1] for p in parts])
    per = _per_element(u, dens, nq)
    M = u.manifold
    grad = M.proj(u.values, _scatter(u, pts, cov) / M.metric_diag)
    return EnergyValue(float(per.sum()), per), grad


def energy_gradient(u, quad=None, free=None):
    """Gradient of the energy with respect to the free nodal values.

    Entry j is the tangent vector g_j at node j with
    d/dt E(u with node j moved to exp(t e)) = <g_j, e> for tangent e.
    """
    _, grad = energy_and_gradient(u, quad)
    nodes = u.nodes.free if free is None else np.asarray(free, dtype=int)
    return NodalGradient(nodes, grad[nodes])


def second_variation_terms(u, V, W, quad=None):
    """The two parts of the second variation, as (int <dV, dW>, int <du, R(du, W) V>)."""
    pts, _ = _points(u, quad)
    M = u.manifold

    def work(a, b):
        sub = pts.subset(a, b)
        st = u.state(sub)
        VI, dV = st.vector_field(V.element_vectors(sub.elements))
        WI, dW = st.vector_field(W.element_vectors(sub.elements))
        grad_term = np.sum(M.inner(dV, dW), axis=-1)
        R = M.curvature_op(st.q[:, None, :], st.du, WI[:, None, :], VI[:, None, :])
        curv_term = np.sum(M.inner(st.du, R), axis=-1)
        return float(np.sum(sub.weights * grad_term)), float(np.sum(sub.weights * curv_term))

    parts = map_chunks(work, len(pts))
    return sum(p[0] for p in parts), sum(p[1] for p in parts)


def second_variation(u, V, W, quad=None):
    """int <nabla V, nabla W> - int <du, R(du, W) V> at u along fields V, W."""
    g, c = second_variation_terms(u, V, W, quad)
    return g - c


def dirichlet_form(V, quad=None):
    """int |nabla V|^2 of an interpolated vector field."""
    return second_variation_terms(V.base, V, V, quad)[0]
