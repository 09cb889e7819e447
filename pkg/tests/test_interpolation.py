import numpy as np
import pytest

from conftest import CURVED, MANIFOLDS, manifold_id
from helpers import interior_points, random_field, random_gfe, random_rotation
from gfe.errors import BallViolation, OutsideElement
from gfe.interpolation import (
    GfeFunction,
    GfeVectorField,
    PointSet,
    evaluate,
    evaluate_differential,
    frechet_mean,
    geodesic_interpolate,
    interpolate_vector_field,
)
from gfe.manifold import Euclidean, Sphere2
from gfe.mesh import build_uniform_mesh, refine


def foc_residual(M, q, values, lam):
    """|sum_i lam_i log_q v_i|, computed with the plain log map."""
    r = sum(lam[..., i, None] * M.log(q, values[..., i, :]) for i in range(values.shape[-2]))
    return M.norm(r)


def test_constant_values_give_constant(rng):
    S = Sphere2()
    p = S.random_point(rng)
    lam = np.array([0.2, -0.1, 0.9])
    np.testing.assert_allclose(geodesic_interpolate(np.stack([p, p, p]), lam, S), p, atol=1e-15)


def test_euclidean_weighted_average(rng):
    E = Euclidean(3)
    v = rng.standard_normal((6, 3))
    lam = rng.standard_normal(6)
    lam /= lam.sum()
    np.testing.assert_allclose(geodesic_interpolate(v, lam, E), lam @ v, atol=1e-14)


def test_sphere_midpoint():
    pair = np.array([[1.0, 0, 0], [0, 1.0, 0]])
    # the pair is pi/2 apart, beyond the default ball; widen it explicitly
    with pytest.raises(BallViolation):
        geodesic_interpolate(pair, [0.5, 0.5], Sphere2())
    q = geodesic_interpolate(pair, [0.5, 0.5], Sphere2(), radius=np.pi / 2)
    np.testing.assert_allclose(q, [np.sqrt(2) / 2, np.sqrt(2) / 2, 0], atol=1e-15)


def test_ball_violation_and_weight_checks():
    S = Sphere2()
    far = np.array([[1.0, 0, 0], [0, 0, 1.0], [0, 1.0, 0]])
    with pytest.raises(BallViolation):
        GfeFunction(build_uniform_mesh(((0, 1), (0, 1)), 1), 1, S, np.vstack([far, far[:1]]))
    with pytest.raises(ValueError):
        geodesic_interpolate(far[:2] * 1.0, [0.5, 0.6], S)


@pytest.mark.parametrize("M", MANIFOLDS, ids=manifold_id)
@pytest.mark.parametrize("order", [1, 2])
def test_first_order_condition_residual(M, order, rng):
    u = random_gfe(M, rng, order=order, radius=0.24)
    pts = PointSet.at(u.mesh, order, np.repeat(np.arange(u.mesh.num_elements), 20),
                      interior_points(rng, 20 * u.mesh.num_elements, 2))
    vals = u.element_values(pts.elements)
    q, _ = frechet_mean(M, vals, pts.lam)
    d = np.max(M.dist(q[:, None, :], vals), axis=1)
    assert np.all(foc_residual(M, q, vals, pts.lam) <= 1e-12 * d + 1e-14 + 1e-15)


def test_frechet_mean_is_batch_independent(rng):
    S = Sphere2()
    u = random_gfe(S, rng, order=2, radius=0.24)
    pts = PointSet.at(u.mesh, 2, np.repeat(np.arange(8), 10), interior_points(rng, 80, 2))
    vals = u.element_values(pts.elements)
    q_all, _ = frechet_mean(S, vals, pts.lam)
    for i in (0, 17, 79):
        q_one, _ = frechet_mean(S, vals[i:i + 1], pts.lam[i:i + 1])
        np.testing.assert_array_equal(q_one[0], q_all[i])


@pytest.mark.parametrize("M", MANIFOLDS, ids=manifold_id)
@pytest.mark.parametrize("order", [1, 2])
def test_nodal_reproduction_and_constants(M, order, rng):
    u = random_gfe(M, rng, order=order)
    for t in range(u.mesh.num_elements):
        got = evaluate(u, t, u.ref.nodes)
        np.testing.assert_allclose(got, u.element_values([t])[0], atol=1e-13)
    p = M.random_point(rng)
    c = u.with_values(np.repeat(p[None], u.nodes.num_nodes, axis=0))
    x = interior_points(rng, 5, 2)
    np.testing.assert_allclose(evaluate(c, 3, x), np.repeat(p[None], 5, axis=0), atol=1e-14)
    np.testing.assert_allclose(evaluate_differential(c, 3, x), 0.0, atol=1e-14)


def test_scalar_and_stacked_calls(rng):
    S = Sphere2()
    u = random_gfe(S, rng, dim=1, k=3)
    assert evaluate(u, 1, 0.3).shape == (3,)
    assert evaluate(u, 1, np.array([[0.3], [0.6]])).shape == (2, 3)
    assert evaluate_differential(u, 1, 0.3).shape == (1, 3)
    with pytest.raises(OutsideElement):
        evaluate(u, 0, 1.5)


@pytest.mark.parametrize("M", CURVED, ids=manifold_id)
@pytest.mark.parametrize("order", [1, 2])
def test_continuity_across_edges(M, order, rng):
    u = random_gfe(M, rng, order=order, k=3, radius=0.24)
    mesh = u.mesh
    uniq, e2e = mesh.edges
    s = np.linspace(0.1, 0.9, 5)
    worst = 0.0
    for e in np.flatnonzero(np.bincount(e2e.ravel()) == 2):
        a, b = mesh.vertices[uniq[e]]
        x = a + s[:, None] * (b - a)
        t1, t2 = np.flatnonzero(np.any(e2e == e, axis=1))
        q1 = evaluate(u, t1, mesh.to_reference(np.full(5, t1), x))
        q2 = evaluate(u, t2, mesh.to_reference(np.full(5, t2), x))
        worst = max(worst, np.max(M.dist(q1, q2)))
    assert worst <= 1e-12


def test_isometry_equivariance(rng):
    S = Sphere2()
    u = random_gfe(S, rng, order=2, radius=0.24)
    R = random_rotation(rng)
    v = u.with_values(u.values @ R.T)
    x = interior_points(rng, 30, 2)
    for t in range(u.mesh.num_elements):
        np.testing.assert_allclose(evaluate(v, t, x), evaluate(u, t, x) @ R.T, atol=1e-10)
        np.testing.assert_allclose(evaluate_differential(v, t, x), evaluate_differential(u, t, x) @ R.T, atol=1e-10)


def _classical_p1_triangle(coords, vals, x):
    # barycentric weights by solving the affine system
    A = np.vstack([coords.T, np.ones(3)])
    lam = np.linalg.solve(A, np.vstack([x.T, np.ones(len(x))]))
    grad = np.linalg.solve(A, np.vstack([np.eye(2), np.zeros(2)]))  # (3, 2)
    return lam.T @ vals, grad.T @ vals


def test_euclidean_reduction_p1(rng):
    E = Euclidean(2)
    mesh = build_uniform_mesh(((0.0, 2.0), (-1.0, 1.0)), 3)
    vals = rng.standard_normal((mesh.num_vertices, 2))
    u = GfeFunction(mesh, 1, E, vals)
    for t in range(mesh.num_elements):
        xi = interior_points(rng, 4, 2)
        x = mesh.to_physical(np.full(4, t), xi)
        cv, cg = _classical_p1_triangle(mesh.vertices[mesh.elements[t]], vals[mesh.elements[t]], x)
        np.testing.assert_allclose(evaluate(u, t, xi), cv, atol=1e-13)
        np.testing.assert_allclose(evaluate_differential(u, t, xi), np.broadcast_to(cg, (4, 2, 2)), atol=1e-13)


def test_geodesic_constant_speed(rng):
    S = Sphere2()
    k, L = 4, 0.3
    mesh = build_uniform_mesh((0.0, 1.0), k)
    t = L * mesh.vertices[:, 0]
    vals = np.stack([np.cos(t), np.sin(t), np.zeros_like(t)], axis=1)
    u = GfeFunction(mesh, 1, S, vals)
    x = np.linspace(0.0, 1.0, 11)[:, None]
    du = evaluate_differential(u, 2, x)
    np.testing.assert_allclose(S.norm(du[:, 0]), L, atol=1e-12)
    # |du| = (arc length per element) / h
    np.testing.assert_allclose(S.norm(du[:, 0]), S.dist(vals[2], vals[3]) / mesh.h, atol=1e-12)
    h = 1e-5
    xi = np.array([[0.37]])
    fd = (evaluate(u, 2, xi + h) - evaluate(u, 2, xi - h)) / (2 * h) / mesh.h
    np.testing.assert_allclose(evaluate_differential(u, 2, xi)[0, 0], fd[0], atol=1e-6)


@pytest.mark.parametrize("M", MANIFOLDS, ids=manifold_id)
@pytest.mark.parametrize("order", [1, 2])
def test_differential_matches_finite_differences(M, order, rng):
    u = random_gfe(M, rng, order=order, k=2, radius=0.24)
    mesh = u.mesh
    h = 1e-5
    for t in (0, 5):
        xi = interior_points(rng, 5, 2) * 0.8 + 0.05
        du = evaluate_differential(u, t, xi)
        B = mesh.jacobians[t]
        for a in range(2):
            # physical direction e_a corresponds to reference direction B^-1 e_a
            dr = np.linalg.solve(B, np.eye(2)[a])
            fd = (evaluate(u, t, xi + h * dr) - evaluate(u, t, xi - h * dr)) / (2 * h)
            assert np.max(np.abs(fd - du[:, a])) <= 1e-6


@pytest.mark.parametrize("M", MANIFOLDS, ids=manifold_id)
@pytest.mark.parametrize("order", [1, 2])
def test_hessian_matches_covariant_finite_differences(M, order, rng):
    u = random_gfe(M, rng, order=order, k=2, radius=0.24)
    mesh = u.mesh
    h = 1e-4
    t = 3
    xi = interior_points(rng, 4, 2) * 0.8 + 0.05
    st = u.state_at(np.full(4, t), xi)
    H = st.hessian(mesh)
    B = mesh.jacobians[t]
    for b in range(2):
        dr = np.linalg.solve(B, np.eye(2)[b])
        dplus = evaluate_differential(u, t, xi + h * dr)
        dminus = evaluate_differential(u, t, xi - h * dr)
        # project the ambient difference to the tangent space at the centre point
        fd = M.proj(st.q[:, None, :], (dplus - dminus) / (2 * h))
        assert np.max(np.abs(fd - H[:, :, b])) <= 1e-6


def test_vector_field_examples(rng):
    S = Sphere2()
    u = random_gfe(S, rng, order=2)
    zero = GfeVectorField(u, np.zeros_like(u.values))
    np.testing.assert_array_equal(interpolate_vector_field(zero, 2, [0.2, 0.3]), 0.0)
    p = S.random_point(rng)
    c = u.with_values(np.repeat(p[None], u.nodes.num_nodes, axis=0))
    V = S.random_tangent(rng, c.values)
    W = GfeVectorField(c, V)
    x = np.array([[0.2, 0.3], [0.1, 0.1]])
    lam, _ = u.ref.shape_values(x)
    expect = lam @ V[c.nodes.elem_nodes[4]]
    np.testing.assert_allclose(interpolate_vector_field(W, 4, x), expect, atol=1e-14)
    with pytest.raises(ValueError):
        GfeVectorField(u, np.zeros((2, 3)))


@pytest.mark.parametrize("M", MANIFOLDS, ids=manifold_id)
@pytest.mark.parametrize("order", [1, 2])
def test_vector_field_is_variation_of_interpolant(M, order, rng):
    u = random_gfe(M, rng, order=order, radius=0.24)
    W = random_field(u, rng)
    t = 6
    x = interior_points(rng, 6, 2)
    VI = interpolate_vector_field(W, t, x)
    q0 = evaluate(u, t, x)

    def quotient(s):
        us = u.with_values(M.exp(u.values, s * W.vectors))
        return M.log(q0, evaluate(us, t, x)) / s

    extrapolated = 2 * quotient(5e-4) - quotient(1e-3)
    assert np.max(np.abs(extrapolated - VI)) <= 1e-5


@pytest.mark.parametrize("M", MANIFOLDS, ids=manifold_id)
def test_vector_field_implicit_equation_and_bound(M, rng):
    u = random_gfe(M, rng, order=2, radius=0.24)
    W = random_field(u, rng)
    worst_c = 0.0
    for t in range(u.mesh.num_elements):
        x = interior_points(rng, 5, 2)
        q = evaluate(u, t, x)
        VI = interpolate_vector_field(W, t, x)
        lam, _ = u.ref.shape_values(x)
        vals, vecs = u.element_values([t])[0], W.element_vectors([t])[0]
        res = np.zeros_like(q)
        for i in range(len(vals)):
            vi = np.repeat(vals[i][None], len(x), axis=0)
            Db = M.dlog_base(q, vi)
            Dt = M.dlog_target(q, vi)
            res += lam[:, i, None] * (np.einsum("pij,pj->pi", Db, VI) + np.einsum("pij,pj->pi", Dt, np.repeat(vecs[i][None], len(x), 0)))
        assert np.max(M.norm(M.proj(q, res))) <= 1e-11
        worst_c = max(worst_c, np.max(M.norm(VI)) / np.max(M.norm(vecs)))
    # measured constant of |V_I| <= C max |V_i|
    assert worst_c < 3.0


@pytest.mark.parametrize("M", MANIFOLDS, ids=manifold_id)
def test_vector_field_derivative_matches_transport_fd(M, rng):
    u = random_gfe(M, rng, order=2, radius=0.24)
    W = random_field(u, rng)
    t = 2
    xi = interior_points(rng, 3, 2) * 0.8 + 0.05
    st = u.state_at(np.full(3, t), xi)
    VI, dV = st.vector_field(W.element_vectors(np.full(3, t)))
    h = 1e-4
    B = u.mesh.jacobians[t]
    for a in range(2):
        dr = np.linalg.solve(B, np.eye(2)[a])
        qp, qm = evaluate(u, t, xi + h * dr), evaluate(u, t, xi - h * dr)
        Vp = M.parallel_transport(qp, st.q, interpolate_vector_field(W, t, xi + h * dr))
        Vm = M.parallel_transport(qm, st.q, interpolate_vector_field(W, t, xi - h * dr))
        assert np.max(np.abs((Vp - Vm) / (2 * h) - dV[:, a])) <= 1e-6


def test_values_are_read_only(rng):
    u = random_gfe(Sphere2(), rng)
    with pytest.raises(ValueError):
        u.values[0, 0] = 1.0
    with pytest.raises(ValueError):
        GfeFunction(u.mesh, 1, Sphere2(), u.values[:-1])


@pytest.mark.parametrize("order", [1, 2])
def test_prolongation_preserves_function(order, rng):
    S = Sphere2()
    u = random_gfe(S, rng, order=order, radius=0.24)
    fine = refine(u.mesh)
    v = u.prolong(fine)
    anc = fine.ancestor_map(u.mesh)
    xi = interior_points(rng, 3, 2)
    for t in range(0, fine.num_elements, 5):
        x = fine.to_physical(np.full(3, t), xi)
        coarse_xi = u.mesh.to_reference(np.full(3, anc[t]), x)
        # the two functions agree at fine nodes and stay close in between
        assert np.max(S.dist(evaluate(v, t, xi), evaluate(u, anc[t], coarse_xi))) <= 0.05
    np.testing.assert_allclose(v.values[: u.mesh.num_vertices], u.values[: u.mesh.num_vertices], atol=1e-13)
