"""Intrinsic error measures between maps into a manifold, computed by
quadrature, and experimental orders of convergence.

A "map" is either a :class:`GfeFunction` (on the integration mesh or on a
mesh it refines) or an :class:`ExactMap` given by closed forms.  Both are
sampled at the quadrature points of the integration mesh.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GfeError
from .interpolation import GfeFunction, PointSet
from .manifold import LogJet
from .mesh import quadrature_for

EXACT_TOL = 1e-14


class DegenerateSample(GfeError):
    """An error value is too small for a meaningful convergence order."""


def default_error_degree(order):
    return 2 * (order + 1) + 2


@dataclass(frozen=True)
class ExactMap:
    """Closed-form map: ``value(x)`` -> (P, N), ``differential(x)`` -> (P, d, N),
    optional ``hessian(x)`` -> (P, d, d, N) ambient second derivatives."""

    manifold: object
    value: object
    differential: object = None
    hessian: object = None


@dataclass(frozen=True)
class Sample:
    """A map sampled at points: values, first and (optional) covariant
    second derivatives."""

    q: np.ndarray
    du: np.ndarray | None
    ddu: np.ndarray | None = None


def _rule(mesh, quad, order_hint):
    if quad is None:
        return quadrature_for(mesh.dim, default_error_degree(order_hint))
    if isinstance(quad, (int, np.integer)):
        return quadrature_for(mesh.dim, int(quad))
    return quad


def _order_of(*maps):
    return max((m.order for m in maps if isinstance(m, GfeFunction)), default=1)


@dataclass(frozen=True, eq=False)
class SampledMap:
    """A map already sampled at the error quadrature points of ``mesh``;
    reusing it avoids re-evaluating an expensive reference solution."""

    manifold: object
    mesh: object
    elements: np.ndarray
    xi: np.ndarray
    data: Sample

    @classmethod
    def of(cls, fn, mesh, quad=None, derivatives=1):
        rule = _rule(mesh, quad, _order_of(fn))
        el, xi, _ = _quad_points(mesh, rule)
        return cls(fn.manifold, mesh, el, xi, sample(fn, mesh, el, xi, derivatives))


def sample(fn, mesh, elements, xi, derivatives=1):
    """Sample ``fn`` at reference points ``xi`` of ``elements`` of ``mesh``."""
    if isinstance(fn, SampledMap):
        if fn.mesh is not mesh or not (np.array_equal(fn.elements, elements) and np.array_equal(fn.xi, xi)):
            raise ValueError("sampled map does not match the requested points")
        if derivatives >= 2 and fn.data.ddu is None or derivatives >= 1 and fn.data.du is None:
            raise ValueError("sampled map lacks the requested derivatives")
        return fn.data
    if isinstance(fn, GfeFunction):
        if fn.mesh is mesh:
            el, ref = elements, xi
        else:
            x = mesh.to_physical(elements, xi)
            el = mesh.ancestor_map(fn.mesh)[elements]
            ref = np.clip(fn.mesh.to_reference(el, x), 0.0, 1.0)
        if derivatives == 0:
            return Sample(fn.evaluate_points(el, ref), None)
        st = fn.state(PointSet.at(fn.mesh, fn.order, el, ref))
        ddu = st.hessian(fn.mesh) if derivatives >= 2 else None
        return Sample(st.q, st.du, ddu)
    x = mesh.to_physical(elements, xi)
    q = np.asarray(fn.value(x), dtype=float)
    if derivatives == 0:
        return Sample(q, None)
    du = np.asarray(fn.differential(x), dtype=float)
    ddu = None
    if derivatives >= 2:
        if fn.hessian is None:
            raise ValueError("closed-form map has no second derivatives")
        H = np.asarray(fn.hessian(x), dtype=float)
        ddu = fn.manifold.proj(q[:, None, None, :], H)
    return Sample(q, du, ddu)


def _quad_points(mesh, rule):
    ne, nq = mesh.num_elements, len(rule)
    elements = np.repeat(np.arange(ne), nq)
    xi = np.tile(rule.points, (ne, 1))
    w = np.tile(rule.weights, ne) * np.repeat(np.abs(mesh.det), nq)
    return elements, xi, w


def lp_distance(u, v, mesh, quad=None, p=2):
    """(int d(u, v)^p)^(1/p); p = inf gives the max over quadrature points."""
    rule = _rule(mesh, quad, _order_of(u, v))
    el, xi, w = _quad_points(mesh, rule)
    M = u.manifold
    d = M.dist(sample(u, mesh, el, xi, 0).q, sample(v, mesh, el, xi, 0).q)
    if np.isinf(p):
        return float(np.max(d))
    return float(np.sum(w * d**p) ** (1.0 / p))


def error_pair(u, v, mesh, quad=None):
    """(d_L2(u, v), D_12(u, v)) from one sampling of each map."""
    rule = _rule(mesh, quad, _order_of(u, v))
    el, xi, w = _quad_points(mesh, rule)
    su, sv = sample(u, mesh, el, xi), sample(v, mesh, el, xi)
    return _l2_from(u.manifold, su, sv, w), _d12_from(u.manifold, su, sv, w)


def _l2_from(M, su, sv, w):
    return float(np.sqrt(np.sum(w * M.dist(su.q, sv.q) ** 2)))


def _d12_from(M, su, sv, w):
    jet = LogJet(M, su.q[:, None, :], sv.q[:, None, :])
    D = M.proj(su.q[:, None, :], jet.dq(su.du) + jet.dv(sv.du))
    # log_u u = 0 identically, so coinciding samples contribute nothing
    same = np.all(su.q == sv.q, axis=1) & np.all(su.du == sv.du, axis=(1, 2))
    D[same] = 0.0
    return float(np.sqrt(np.sum(w * np.sum(M.inner(D, D), axis=1))))


def d12_halfmetric(u, v, mesh, quad=None):
    """Intrinsic first-order distance (sum_a int |nabla_a log_u v|^2)^(1/2).

    The covariant x-derivative of log_{u(x)} v(x) is
    dlog_target(u, v) d_a v + dlog_base(u, v) d_a u.
    """
    rule = _rule(mesh, quad, _order_of(u, v))
    el, xi, w = _quad_points(mesh, rule)
    return _d12_from(u.manifold, sample(u, mesh, el, xi), sample(v, mesh, el, xi), w)


def _descriptor_terms(M, s, k, p, Q):
    if k == 0:
        return M.dist(s.q, Q)
    if k == 1:
        return np.sqrt(np.sum(M.inner(s.du, s.du), axis=1))
    grad2 = np.sqrt(np.sum(M.inner(s.ddu, s.ddu), axis=(1, 2)))
    return grad2, np.sum(M.inner(s.du, s.du), axis=1)


def smoothness_descriptor(u, mesh, quad=None, k=1, p=2, Q=None):
    """Smoothness descriptor theta_{k,p} of a map.

    k = 0: (int d(u, Q)^p)^(1/p) with Q the value at the domain barycenter
    unless given.  k = 1: (int |du|^p)^(1/p).  k = 2: (int |nabla du|^p +
    int |du|^(2p))^(1/p).  p = inf takes maxima over quadrature points.
    """
    rule = _rule(mesh, quad, _order_of(u))
    el, xi, w = _quad_points(mesh, rule)
    M = u.manifold
    s = sample(u, mesh, el, xi, derivatives=k)
    if k == 0:
        if Q is None:
            Q = value_at_barycenter(u, mesh)
        t = _descriptor_terms(M, s, 0, p, Q)
        return float(np.max(t)) if np.isinf(p) else float(np.sum(w * t**p) ** (1.0 / p))
    if k == 1:
        t = _descriptor_terms(M, s, 1, p, Q)
        return float(np.max(t)) if np.isinf(p) else float(np.sum(w * t**p) ** (1.0 / p))
    if k == 2:
        a, b = _descriptor_terms(M, s, 2, p, Q)
        if np.isinf(p):
            return float(max(np.max(a), np.max(b)))
        return float((np.sum(w * a**p) + np.sum(w * b**p)) ** (1.0 / p))
    raise ValueError("k must be 0, 1 or 2")


def value_at_barycenter(u, mesh):
    center = mesh.vertices.mean(axis=0)
    bary = mesh.vertices[mesh.elements].mean(axis=1)
    e = int(np.argmin(np.linalg.norm(bary - center, axis=1)))
    xi = mesh.to_reference(np.array([e]), center[None])
    xi = np.clip(xi, 0.0, 1.0)
    return sample(u, mesh, np.array([e]), xi, 0).q[0]


def inverse_estimate_ratio(u, quad=None):
    """max over elements T of h_T sup_T |du| / sup_T d(u, Q_T).

    Q_T is the value at the element barycenter and the suprema run over the
    quadrature points and Lagrange nodes of T.
    """
    mesh = u.mesh
    rule = _rule(mesh, quad, u.order)
    pts = np.vstack([rule.points, u.ref.nodes])
    ne, nq = mesh.num_elements, len(pts)
    el = np.repeat(np.arange(ne), nq)
    xi = np.tile(pts, (ne, 1))
    s = sample(u, mesh, el, xi)
    M = u.manifold
    speed = np.sqrt(np.sum(M.inner(s.du, s.du), axis=1)).reshape(ne, nq)
    center = np.full((ne, mesh.dim), 1.0 / (mesh.dim + 1))
    Q = sample(u, mesh, np.arange(ne), center, 0).q
    spread = M.dist(s.q.reshape(ne, nq, -1), Q[:, None, :])
    num = mesh.diameters * speed.max(axis=1)
    den = spread.max(axis=1)
    ok = den > 0
    return float(np.max(num[ok] / den[ok])) if np.any(ok) else 0.0


# -- convergence bookkeeping ------------------------------------------------

@dataclass(frozen=True)
class ErrorSample:
    h: float
    d_L2: float
    D_12: float
    energy: float = 0.0

    def __post_init__(self):
        for name in ("h", "d_L2", "D_12"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be nonnegative")


EXACT = "exact"


def eoc(errors, hs, exact_tol=EXACT_TOL):
    """Pairwise orders log(e_i / e_{i+1}) / log(h_i / h_{i+1}).

    Entries whose errors fall below ``exact_tol`` are the string ``"exact"``.
    """
    out = []
    for i in range(len(errors) - 1):
        e0, e1 = errors[i], errors[i + 1]
        if e0 <= exact_tol or e1 <= exact_tol:
            out.append(EXACT)
        else:
            out.append(float(np.log(e0 / e1) / np.log(hs[i] / hs[i + 1])))
    return out


@dataclass
class ConvergenceReport:
    samples: list
    eoc_L2: list = field(default_factory=list)
    eoc_D12: list = field(default_factory=list)
    extra: list = field(default_factory=list)

    def final(self, column):
        vals = self.eoc_L2 if column == "L2" else self.eoc_D12
        return vals[-1] if vals else None


def compute_eoc(samples, exact_tol=EXACT_TOL, strict=False):
    """Convergence report of samples ordered by decreasing h.

    With ``strict`` a DegenerateSample is raised instead of marking
    underflowing entries as exact.
    """
    samples = list(samples)
    if len(samples) < 2:
        raise ValueError("need at least two samples")
    hs = [s.h for s in samples]
    if any(not hs[i] > hs[i + 1] for i in range(len(hs) - 1)):
        raise ValueError("mesh widths must be strictly decreasing")
    l2 = eoc([s.d_L2 for s in samples], hs, exact_tol)
    d12 = eoc([s.D_12 for s in samples], hs, exact_tol)
    if strict and (EXACT in l2 or EXACT in d12):
        raise DegenerateSample(f"error below {exact_tol:g}; convergence order undefined")
    return ConvergenceReport(samples, l2, d12)
