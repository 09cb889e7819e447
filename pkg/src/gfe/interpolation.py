"""Geodesic interpolation and its derivatives.

Values of a geodesic finite element function are weighted Frechet means of
the nodal values, characterized by the first-order condition

    F(q) = sum_i lambda_i log_q v_i = 0.

All derivatives (in space, with respect to nodal values, of vector fields)
follow from differentiating this condition.  Every linear system that comes
up has the same operator, the covariant Jacobian of F at the mean, so it is
inverted once per evaluation point and reused.

Everything here is batched: a batch is a stack of P evaluation points, each
with its own l nodal values and weights.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BallViolation, NoConvergence, OutsideElement, SingularSystem
from .manifold import LogJet
from .mesh import ReferenceElement

MAX_NEWTON_ITERS = 100
RESIDUAL_RTOL = 1e-12
RESIDUAL_ATOL = 1e-14
SINGULAR_LIMIT = 1e8
BALL_SLACK = 1e-10


def _mv(m, v):
    return np.einsum("...ij,...j->...i", m, v)


def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


# -- Frechet mean -------------------------------------------------------------

def _residual(manifold, q, values, lam):
    jet = LogJet(manifold, q[:, None, :], values)
    F = manifold.proj(q, np.einsum("pl,pln->pn", lam, jet.L))
    dmax = np.max(manifold.norm(jet.L), axis=1)
    return jet, F, manifold.norm(F), dmax


def _tangent_operator(manifold, q, jet, lam):
    """Matrix acting as the covariant Jacobian of F on T_q M and as the
    identity on the normal line, together with the tangent projector."""
    J = np.einsum("pl,plij->pij", lam, jet.dq_mat())
    if manifold.kappa == 0:
        return J, None
    Pm = manifold._proj_matrix(q)
    Nm = np.eye(manifold.ambient_dim) - Pm
    return Pm @ J @ Pm + Nm, Pm


def frechet_mean(manifold, values, lam, max_iter=MAX_NEWTON_ITERS):
    """Weighted Frechet means of a batch.

    ``values`` has shape (P, l, N) and ``lam`` shape (P, l).  Returns the means
    (P, N) and the number of iterations used by the slowest point.

    Damped Newton on the first-order condition, started at the projected
    ambient average.  Points whose residual does not drop even after four
    halvings of the Newton step take a fixed-point step q <- exp_q(tau F)
    instead.  Points are frozen as soon as they meet the tolerance, so the
    result for a point does not depend on the rest of the batch.
    """
    values = np.asarray(values, dtype=float)
    lam = np.asarray(lam, dtype=float)
    P = values.shape[0]
    q = manifold.project_to_manifold(np.einsum("pl,pln->pn", lam, values))
    same = np.all(values == values[:, :1], axis=(1, 2))
    q[same] = values[same, 0]
    _, F, res, dmax = _residual(manifold, q, values, lam)

    def unconverged(idx):
        return idx[res[idx] > RESIDUAL_RTOL * dmax[idx] + RESIDUAL_ATOL]

    active = unconverged(np.arange(P))
    tau = np.ones(P)
    fixed_point = np.zeros(P, dtype=bool)
    it = 0
    while active.size:
        if it >= max_iter:
            raise NoConvergence(
                f"Frechet mean: {active.size} points unconverged after {max_iter} iterations, "
                f"worst residual {res[active].max():.3g}"
            )
        it += 1
        qa, Fa, va, la = q[active], F[active], values[active], lam[active]
        jet = LogJet(manifold, qa[:, None, :], va)
        M, _ = _tangent_operator(manifold, qa, jet, la)
        fp = fixed_point[active]
        try:
            step = -np.linalg.solve(M, Fa[..., None])[..., 0]
        except np.linalg.LinAlgError:
            fixed_point[active] = fp = True
            step = Fa
        step = np.where(fp[:, None], Fa, step) * tau[active][:, None]
        trial = manifold.exp(qa, manifold.proj(qa, step))
        _, Ft, rt, dt = _residual(manifold, trial, va, la)
        better = rt < res[active]
        acc = active[better]
        q[acc], F[acc], res[acc], dmax[acc] = trial[better], Ft[better], rt[better], dt[better]
        tau[acc] = np.where(fixed_point[acc], 1.0, np.minimum(1.0, 2.0 * tau[acc]))
        fixed_point[acc] = False
        rej = active[~better]
        tau[rej] *= 0.5
        # give up on Newton after four halvings, on fixed-point steps after ten
        switch = rej[~fixed_point[rej] & (tau[rej] < 1.0 / 16.0)]
        fixed_point[switch], tau[switch] = True, 1.0
        stalled = rej[fixed_point[rej] & (tau[rej] < 1.0 / 1024.0)]
        if stalled.size:
            floor = 1e3 * (RESIDUAL_RTOL * dmax[stalled] + RESIDUAL_ATOL)
            if np.any(res[stalled] > floor):
                raise NoConvergence(f"Frechet mean stalled, residual {res[stalled].max():.3g}")
            # stuck at the rounding floor just above the tolerance
            res[stalled] = 0.0
        active = unconverged(active)
    return q, it


def check_ball(manifold, values, radius=None):
    """Raise BallViolation unless every value lies within rho of the first one."""
    rho = manifold.ball_radius if radius is None else radius
    if not np.isfinite(rho):
        return
    values = np.asarray(values, dtype=float)
    d = manifold.dist(values[..., :1, :], values)
    worst = float(np.max(d, initial=0.0))
    if worst > rho * (1.0 + BALL_SLACK):
        raise BallViolation(f"nodal values spread {worst:.6g} exceeds ball radius {rho:.6g}")


def geodesic_interpolate(values, weights, manifold, radius=None):
    """Weighted Frechet mean of ``values`` (l, N) with weights (l,) summing to one.

    ``radius`` overrides the well-posedness ball radius used to screen the
    inputs (default: the manifold's ``ball_radius``).
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if abs(weights.sum() - 1.0) > 1e-12:
        raise ValueError("interpolation weights must sum to one")
    manifold.check_point(values)
    check_ball(manifold, values, radius)
    q, _ = frechet_mean(manifold, values[None], weights[None])
    return q[0]


# -- batched evaluation -----------------------------------------------------

@dataclass(frozen=True, eq=False)
class PointSet:
    """Evaluation points on a mesh: element ids, shape function data and
    integration weights (quadrature weight times |det DF|, or ones)."""

    elements: np.ndarray   # (P,)
    xi: np.ndarray         # (P, d) reference coordinates
    lam: np.ndarray        # (P, l)
    dlam: np.ndarray       # (P, l, d) physical gradients
    weights: np.ndarray    # (P,)
    ref: ReferenceElement

    @classmethod
    def at(cls, mesh, order, elements, xi, weights=None):
        ref = ReferenceElement(mesh.dim, order)
        elements = np.asarray(elements, dtype=int)
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        lam, dref = ref.shape_values(xi)
        Binv = mesh.inverse_jacobians[elements]
        dlam = np.einsum("pld,pde->ple", dref, Binv)
        w = np.ones(len(elements)) if weights is None else np.asarray(weights, dtype=float)
        return cls(elements, xi, lam, dlam, w, ref)

    @classmethod
    def quadrature(cls, mesh, order, rule):
        key = ("points", order, rule.dim, rule.degree)
        if key not in mesh._cache:
            ne, nq = mesh.num_elements, len(rule)
            elements = np.repeat(np.arange(ne), nq)
            xi = np.tile(rule.points, (ne, 1))
            w = np.tile(rule.weights, ne) * np.repeat(np.abs(mesh.det), nq)
            mesh._cache[key] = cls.at(mesh, order, elements, xi, w)
        return mesh._cache[key]

    def __len__(self):
        return len(self.elements)

    def subset(self, start, stop):
        sl = slice(start, stop)
        return PointSet(self.elements[sl], self.xi[sl], self.lam[sl], self.dlam[sl], self.weights[sl], self.ref)

    def physical_points(self, mesh):
        return mesh.to_physical(self.elements, self.xi)

    def shape_hessians(self, mesh):
        Hr = self.ref.shape_hessians()
        Binv = mesh.inverse_jacobians[self.elements]
        return np.einsum("lab,pac,pbd->plcd", Hr, Binv, Binv)


class InterpolationState:
    """A geodesic finite element function evaluated on a point set.

    Holds the means ``q`` (P, N), the first derivatives ``du`` (P, d, N) in
    physical coordinates and the pieces needed for further differentiation:
    the log-map jets at (q, v_i) and the inverse ``Minv`` of the covariant
    Jacobian of the first-order condition.
    """

    def __init__(self, manifold, values, points):
        self.manifold = manifold
        self.values = values
        self.points = points
        self.lam = points.lam
        self.dlam = points.dlam
        self.q, self.newton_iters = frechet_mean(manifold, values, self.lam)
        self.jet = LogJet(manifold, self.q[:, None, :], values)
        M, Pm = _tangent_operator(manifold, self.q, self.jet, self.lam)
        try:
            Minv = np.linalg.inv(M)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem("interpolation Jacobian is singular") from exc
        big = float(np.max(np.abs(Minv), initial=0.0))
        if not np.isfinite(big) or big > SINGULAR_LIMIT:
            raise SingularSystem(f"interpolation Jacobian inverse norm {big:.3g} exceeds {SINGULAR_LIMIT:g}")
        self.Minv = Minv
        self.Pm = Pm
        self.MP = Minv if Pm is None else Minv @ Pm
        rhs = np.einsum("pla,pln->pan", self.dlam, self.jet.L)
        self.du = -np.einsum("pij,paj->pai", self.MP, rhs)

    @property
    def dim(self):
        return self.dlam.shape[-1]

    def solve(self, r):
        """Tangent solution x of J x = -P r for ambient right-hand sides r (..., N)."""
        if r.ndim == 2:
            return -_mv(self.MP, r)
        return -np.einsum("pij,p...j->p...i", self.MP, r)

    def II(self, a, b):
        return self.manifold.normal_part(self.q, a, b)

    def dq_sum(self, coef, a):
        """sum_i coef_i D_q L_i [a] for a (P, N) and coef (P, l)."""
        return np.einsum("pl,pln->pn", coef, self.jet.dq(a[:, None, :]))

    # -- first-order variations ------------------------------------------------
    def variation(self, V):
        """Derivative of the mean when node i moves with velocity V[:, i] (P, l, N)."""
        r = np.einsum("pl,pln->pn", self.lam, self.jet.dv(V))
        return self.solve(r)

    # -- second-order quantities ------------------------------------------------
    def covariant_mixed(self, q1, q2, lam1, lam2, lam12, vel1, vel2, acc=None):
        """Covariant derivative nabla_2 of d_1 q for a two-parameter family.

        ``q1``, ``q2`` (P, N) are the first derivatives of the mean, ``lam1``,
        ``lam2``, ``lam12`` (P, l) derivatives of the weights, ``vel1``,
        ``vel2`` (P, l, N) or None nodal velocities, ``acc`` ambient second
        derivatives of the nodes.
        """
        jet = self.jet
        r = np.zeros_like(self.q)
        if lam12 is not None:
            r += np.einsum("pl,pln->pn", lam12, jet.L)
        inner = jet.dq(q2[:, None, :])
        if vel2 is not None:
            inner = inner + jet.dv(vel2)
        if lam1 is not None:
            r += np.einsum("pl,pln->pn", lam1, inner)
        inner = jet.dq(q1[:, None, :])
        if vel1 is not None:
            inner = inner + jet.dv(vel1)
        if lam2 is not None:
            r += np.einsum("pl,pln->pn", lam2, inner)
        a, b = q1[:, None, :], q2[:, None, :]
        s = jet.d2qq(a, b) + jet.dq(self.II(q1, q2)[:, None, :])
        if vel2 is not None:
            s = s + jet.d2qv(a, vel2)
        if vel1 is not None:
            s = s + jet.d2qv(b, vel1)
        if vel1 is not None and vel2 is not None:
            s = s + jet.d2vv(vel1, vel2)
        if acc is not None:
            s = s + jet.dv(acc)
        r += np.einsum("pl,pln->pn", self.lam, s)
        return self.solve(r)

    def hessian(self, mesh):
        """Covariant second derivatives nabla_b d_a u, shape (P, d, d, N)."""
        H = self.points.shape_hessians(mesh)
        d = self.dim
        out = np.empty(self.q.shape[:1] + (d, d, self.q.shape[1]))
        for a in range(d):
            for b in range(a, d):
                out[:, a, b] = self.covariant_mixed(
                    self.du[:, a], self.du[:, b],
                    self.dlam[..., a], self.dlam[..., b], H[..., a, b], None, None,
                )
                out[:, b, a] = out[:, a, b]
        return out

    def vector_field(self, V):
        """Interpolated vector field and its covariant x-derivatives.

        ``V`` (P, l, N) holds the nodal vectors of each point's element.
        Returns (VI, dVI) with shapes (P, N) and (P, d, N).
        """
        VI = self.variation(V)
        dV = np.empty(self.du.shape)
        for a in range(self.dim):
            dV[:, a] = self.covariant_mixed(
                self.du[:, a], VI, self.dlam[..., a], None, None, None, V,
            )
        return VI, dV

    # -- energy ---------------------------------------------------------------
    def energy_density(self):
        """Integrand 1/2 sum_a |d_a u|^2 at every point."""
        return 0.5 * np.sum(self.manifold.inner(self.du, self.du), axis=-1)

    def energy_covectors(self):
        """Ambient covectors c (P, l, N) with dE = sum_p sum_i c[p, i] . V_i,
        where E = sum_p w_p * energy_density_p and V_i is the velocity of the
        element's i-th node."""
        jet, w = self.jet, self.points.weights
        g = self.manifold.metric_diag
        kappa = self.manifold.kappa
        lam, dlam = self.lam, self.dlam
        # y_a = -(G u_a)^T Minv P
        y = -np.einsum("pan,pnm->pam", g * self.du, self.MP)
        c = np.zeros(self.values.shape)
        b = np.zeros(self.q.shape)
        dq_q = None
        if kappa != 0:
            dq_q = jet.dq(self.q[:, None, :])
        for a in range(self.dim):
            ya = (w[:, None] * y[:, a])[:, None, :]
            ua = self.du[:, a][:, None, :]
            c += dlam[..., a][..., None] * jet.row_dv(ya) + lam[..., None] * jet.row_d2qv(ya, ua)
            rows = dlam[..., a][..., None] * jet.row_dq(ya) + lam[..., None] * jet.row_d2qq(ya, ua)
            b += rows.sum(axis=1)
            if kappa != 0:
                # D_q L [II(u_a, q')] with II(a, b) = -kappa <a, b> q
                coef = np.einsum("pl,pl->p", lam, _dot(ya, dq_q))
                b += -kappa * coef[:, None] * (g * self.du[:, a])
        z = np.einsum("pn,pnm->pm", b, self.MP)
        c -= lam[..., None] * jet.row_dv(z[:, None, :])
        return c


# -- user-facing function classes -------------------------------------------

class GfeFunction:
    """Geodesic finite element function: one manifold value per Lagrange node."""

    def __init__(self, mesh, order, manifold, values, check=True):
        self.mesh = mesh
        self.order = int(order)
        self.manifold = manifold
        self.nodes = mesh.lagrange_nodes(self.order)
        self.ref = ReferenceElement(mesh.dim, self.order)
        values = np.array(values, dtype=float)
        if values.shape != (self.nodes.num_nodes, manifold.ambient_dim):
            raise ValueError(
                f"expected values of shape {(self.nodes.num_nodes, manifold.ambient_dim)}, got {values.shape}"
            )
        if check:
            manifold.check_point(values)
            check_ball(manifold, values[self.nodes.elem_nodes])
        values.setflags(write=False)
        self.values = values

    def with_values(self, values, check=True):
        return GfeFunction(self.mesh, self.order, self.manifold, values, check=check)

    @classmethod
    def interpolate(cls, mesh, order, manifold, fn, check=True):
        """Nodal interpolant of a map given as a callable on physical points."""
        nodes = mesh.lagrange_nodes(order)
        return cls(mesh, order, manifold, fn(nodes.coords), check=check)

    def element_values(self, elements):
        return self.values[self.nodes.elem_nodes[np.asarray(elements, dtype=int)]]

    def state(self, points):
        return InterpolationState(self.manifold, self.element_values(points.elements), points)

    def state_at(self, elements, xi):
        return self.state(PointSet.at(self.mesh, self.order, elements, xi))

    def evaluate_points(self, elements, xi):
        pts = PointSet.at(self.mesh, self.order, elements, xi)
        q, _ = frechet_mean(self.manifold, self.element_values(pts.elements), pts.lam)
        return q

    def at_physical(self, x, fine_mesh=None, fine_elements=None):
        """Values at physical points ``x`` located inside elements of a
        refinement ``fine_mesh`` (element ids ``fine_elements``)."""
        elems = fine_mesh.ancestor_map(self.mesh)[fine_elements]
        xi = self.mesh.to_reference(elems, x)
        xi = np.clip(xi, 0.0, 1.0)
        return self.evaluate_points(elems, xi), elems, xi

    def prolong(self, fine_mesh):
        """Nodal interpolant of this function on a refinement of its mesh."""
        fnodes = fine_mesh.lagrange_nodes(self.order)
        # locate every fine node through one fine element containing it
        owner = np.empty(fnodes.num_nodes, dtype=int)
        owner[fnodes.elem_nodes.ravel()] = np.repeat(np.arange(fine_mesh.num_elements), fnodes.elem_nodes.shape[1])
        q, _, _ = self.at_physical(fnodes.coords, fine_mesh, owner)
        return GfeFunction(fine_mesh, self.order, self.manifold, q)


class GfeVectorField:
    """Tangent vectors at the nodal values of a GfeFunction."""

    def __init__(self, base, vectors, check=True):
        vectors = np.array(vectors, dtype=float)
        if vectors.shape != base.values.shape:
            raise ValueError("one vector per Lagrange node required")
        if check:
            base.manifold.check_tangent(base.values, vectors, tol=1e-10)
        self.base = base
        self.vectors = vectors

    def element_vectors(self, elements):
        return self.vectors[self.base.nodes.elem_nodes[np.asarray(elements, dtype=int)]]


def _points(u, element, x):
    xi = np.asarray(x, dtype=float).reshape(-1, u.mesh.dim)
    elems = np.broadcast_to(np.asarray(element, dtype=int), (len(xi),))
    return elems, xi


def evaluate(u, element, x):
    """Value of ``u`` at reference coordinates ``x`` of ``element``.

    ``x`` is one point (shape (d,), or a scalar when d = 1) or a stack (P, d);
    the result has shape (N,) or (P, N) accordingly.
    """
    elems, xi = _points(u, element, x)
    q = u.evaluate_points(elems, xi)
    return q[0] if np.ndim(x) <= 1 else q


def evaluate_differential(u, element, x):
    """Physical partial derivatives d_a u, shape (d, N) (or (P, d, N))."""
    elems, xi = _points(u, element, x)
    du = u.state_at(elems, xi).du
    return du[0] if np.ndim(x) <= 1 else du


def interpolate_vector_field(W, element, x):
    """Interpolated vector field V_I at reference coordinates ``x`` of ``element``."""
    elems, xi = _points(W.base, element, x)
    VI = W.base.state_at(elems, xi).variation(W.element_vectors(elems))
    return VI[0] if np.ndim(x) <= 1 else VI


__all__ = [
    "GfeFunction",
    "GfeVectorField",
    "InterpolationState",
    "PointSet",
    "OutsideElement",
    "check_ball",
    "evaluate",
    "evaluate_differential",
    "frechet_mean",
    "geodesic_interpolate",
    "interpolate_vector_field",
]
