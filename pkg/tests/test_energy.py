import numpy as np
import pytest

import gfe.parallel as parallel
from conftest import MANIFOLDS, manifold_id
from helpers import random_field, random_gfe
from gfe.energy import (
    dirichlet_form,
    energy_and_gradient,
    energy_gradient,
    harmonic_energy,
    second_variation,
    second_variation_terms,
)
from gfe.interpolation import GfeFunction
from gfe.manifold import Euclidean, Hyperbolic2, Sphere2
from gfe.mesh import build_uniform_mesh, stiffness_matrix

UNIT = ((0.0, 1.0), (0.0, 1.0))


def test_constant_map_has_zero_energy(rng):
    S = Sphere2()
    mesh = build_uniform_mesh(UNIT, 3)
    p = S.random_point(rng)
    u = GfeFunction(mesh, 2, S, np.repeat(p[None], mesh.lagrange_nodes(2).num_nodes, axis=0))
    E = harmonic_energy(u)
    # exact up to rounding in log_p p
    assert E.total <= 1e-30 and np.all(E.per_element <= 1e-30)


@pytest.mark.parametrize("order", [1, 2])
def test_euclidean_linear_map(order, rng):
    A = rng.standard_normal((2, 2))
    mesh = build_uniform_mesh(UNIT, 3)
    u = GfeFunction.interpolate(mesh, order, Euclidean(2), lambda x: x @ A.T)
    assert harmonic_energy(u).total == pytest.approx(0.5 * np.sum(A * A), abs=1e-12)


@pytest.mark.parametrize("order", [1, 2])
def test_geodesic_energy(order):
    L = 1.0
    mesh = build_uniform_mesh((0.0, 1.0), 5)

    def geo(x):
        t = L * x[:, 0]
        return np.stack([np.cos(t), np.sin(t), np.zeros_like(t)], axis=1)

    u = GfeFunction.interpolate(mesh, order, Sphere2(), geo)
    assert harmonic_energy(u).total == pytest.approx(L**2 / 2, abs=1e-10)


@pytest.mark.parametrize("M", MANIFOLDS, ids=manifold_id)
def test_energy_per_element_sum(M, rng):
    u = random_gfe(M, rng, order=2, radius=0.24)
    E = harmonic_energy(u)
    assert np.all(E.per_element >= 0)
    assert E.total == pytest.approx(E.per_element.sum(), rel=1e-12)
    E2, _ = energy_and_gradient(u)
    assert E2.total == E.total


def _fd_gradient_component(u, j, e, step=1e-5):
    M = u.manifold

    def energy(t):
        vals = np.array(u.values)
        vals[j] = M.exp(vals[j], t * e)
        return harmonic_energy(u.with_values(vals)).total

    return (energy(step) - energy(-step)) / (2 * step)


@pytest.mark.parametrize("M", MANIFOLDS, ids=manifold_id)
@pytest.mark.parametrize("order", [1, 2])
def test_gradient_matches_finite_differences(M, order, rng):
    u = random_gfe(M, rng, order=order, k=3, radius=0.24)
    g = energy_gradient(u)
    assert np.max(M.tangency_residual(u.values[g.nodes], g.vectors)) <= 1e-12
    basis = M.tangent_basis(u.values)
    for j in rng.choice(g.nodes, size=min(3, len(g.nodes)), replace=False):
        k = list(g.nodes).index(j)
        for e in basis[j]:
            fd = _fd_gradient_component(u, j, e)
            an = M.inner(g.vectors[k], e)
            assert abs(an - fd) / (abs(fd) + 1e-12) <= 1e-6 or abs(an - fd) <= 1e-9


@pytest.mark.parametrize("order", [1, 2])
def test_euclidean_gradient_is_stiffness_residual(order, rng):
    mesh = build_uniform_mesh(((0.0, 1.0), (0.0, 2.0)), 3)
    nodes = mesh.lagrange_nodes(order)
    vals = rng.standard_normal((nodes.num_nodes, 2))
    u = GfeFunction(mesh, order, Euclidean(2), vals)
    K = stiffness_matrix(mesh, order)
    g = energy_gradient(u)
    np.testing.assert_allclose(g.vectors, (K @ vals)[nodes.free], atol=1e-10)


def test_gradient_vanishes_at_exact_geodesic():
    mesh = build_uniform_mesh((0.0, 1.0), 6)
    t = mesh.vertices[:, 0]
    u = GfeFunction(mesh, 1, Sphere2(), np.stack([np.cos(t), np.sin(t), np.zeros_like(t)], axis=1))
    assert energy_gradient(u).norm(u.manifold) <= 1e-12


@pytest.mark.parametrize("M", MANIFOLDS, ids=manifold_id)
def test_second_variation_symmetric(M, rng):
    u = random_gfe(M, rng, order=2, radius=0.24)
    V, W = random_field(u, rng), random_field(u, rng)
    a, b = second_variation(u, V, W), second_variation(u, W, V)
    assert abs(a - b) <= 1e-10 * max(abs(a), abs(b), 1e-300)


def test_second_variation_euclidean_is_dirichlet(rng):
    u = random_gfe(Euclidean(2), rng, order=2)
    V, W = random_field(u, rng), random_field(u, rng)
    K = stiffness_matrix(u.mesh, 2)
    expect = np.sum(V.vectors * (K @ W.vectors))
    assert second_variation(u, V, W) == pytest.approx(expect, rel=1e-12, abs=1e-12)
    assert dirichlet_form(V) == pytest.approx(np.sum(V.vectors * (K @ V.vectors)), rel=1e-12)
    assert second_variation_terms(u, V, V)[1] == 0.0


@pytest.mark.parametrize("M,sign", [(Sphere2(), 1), (Hyperbolic2(), -1)], ids=["Sphere2", "Hyperbolic2"])
def test_curvature_term_sign(M, sign, rng):
    u = random_gfe(M, rng, order=1, radius=0.24)
    for _ in range(5):
        V = random_field(u, rng)
        grad, curv = second_variation_terms(u, V, V)
        assert sign * curv >= 0
        if sign < 0:
            assert second_variation(u, V, V) >= (1 - 1e-10) * grad


def test_second_variation_matches_finite_differences(rng):
    S = Sphere2()
    mesh = build_uniform_mesh((0.0, 1.0), 4)  # 5 nodes
    t = 0.8 * mesh.vertices[:, 0]
    u = GfeFunction(mesh, 1, S, np.stack([np.cos(t), np.sin(t), np.zeros_like(t)], axis=1))
    for _ in range(3):
        V = random_field(u, rng, vanish_on_boundary=True)
        W = random_field(u, rng, vanish_on_boundary=True)
        h = 1e-4

        def E(s, r):
            return harmonic_energy(u.with_values(S.exp(u.values, s * V.vectors + r * W.vectors))).total

        fd = (E(h, h) - E(h, -h) - E(-h, h) + E(-h, -h)) / (4 * h * h)
        an = second_variation(u, V, W)
        assert abs(fd - an) <= 1e-4 * abs(an)


def test_threaded_assembly_is_bitwise_reproducible(rng, monkeypatch):
    u = random_gfe(Sphere2(), rng, order=2, k=24, radius=0.24)
    monkeypatch.setenv("GFE_THREADS", "1")
    E1, G1 = energy_and_gradient(u)
    monkeypatch.setattr(parallel.os, "cpu_count", lambda: 4)
    monkeypatch.setenv("GFE_THREADS", "4")
    assert parallel.thread_count() == 4
    E4, G4 = energy_and_gradient(u)
    assert E1.total == E4.total
    np.testing.assert_array_equal(G1, G4)


def test_thread_count_parsing(monkeypatch):
    monkeypatch.setattr(parallel.os, "cpu_count", lambda: 8)
    monkeypatch.setenv("GFE_THREADS", "3")
    assert parallel.thread_count() == 3
    monkeypatch.setenv("GFE_THREADS", "64")
    assert parallel.thread_count() == 8
    monkeypatch.setenv("GFE_THREADS", "0")
    assert parallel.thread_count() == 1
    monkeypatch.setenv("GFE_THREADS", "lots")
    assert parallel.thread_count() == 1
    monkeypatch.delenv("GFE_THREADS")
    assert parallel.thread_count() == 8
