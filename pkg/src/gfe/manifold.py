"""Constant-curvature model manifolds in embedded coordinates.

Three targets are supported: Euclidean space R^n, the unit sphere S^2 in R^3
and the hyperboloid model of H^2 in Minkowski space R^{1,2}.  Points and
tangent vectors are plain numpy arrays whose last axis holds the ambient
coordinates; every operation broadcasts over leading axes.

The sphere and the hyperboloid share one set of formulas.  With the ambient
(pseudo-)metric ``G`` and the sectional curvature ``kappa`` in {+1, -1} we
have ``<p, p>_G = kappa`` on the manifold, ``cos``-like quantity
``c = kappa <p, q>_G`` (cos d on S^2, cosh d on H^2), and the logarithm

    log_p q = f(c) (q - c p),    f(c) = arccos(c) / sqrt(1 - c^2),

where ``f`` is one analytic function of ``c`` across c = 1 (it equals
arccosh(c) / sqrt(c^2 - 1) for c > 1).
"""
from __future__ import annotations

from functools import cached_property

import numpy as np

from .errors import AntipodalPair, ConstraintViolation

ANTIPODAL_TOL = 1e-8
CONSTRAINT_TOL = 1e-12

# Taylor coefficients of f around c = 1 in t = c - 1.  f solves
# (1 - c^2) f' = c f - 1, which gives a_k = -k a_{k-1} / (2k + 1).
_NTERMS = 24
_F_COEFFS = np.empty(_NTERMS)
_F_COEFFS[0] = 1.0
for _k in range(1, _NTERMS):
    _F_COEFFS[_k] = -_k * _F_COEFFS[_k - 1] / (2 * _k + 1)
_F1_COEFFS = np.arange(1, _NTERMS) * _F_COEFFS[1:]
_F2_COEFFS = np.arange(1, _NTERMS - 1) * _F1_COEFFS[1:]
_SERIES_RADIUS = 0.1


def theta_over_sin(t):
    """Return f, f', f'' at c = 1 + t for f(c) = arccos(c)/sqrt(1-c^2)."""
    t = np.asarray(t, dtype=float)
    if t.ndim == 0:
        return tuple(v[0] for v in theta_over_sin(t[None]))
    poly = np.polynomial.polynomial.polyval
    near = np.abs(t) < _SERIES_RADIUS
    f = poly(t, _F_COEFFS)
    f1 = poly(t, _F1_COEFFS)
    f2 = poly(t, _F2_COEFFS)
    if not np.all(near):
        far = ~near
        c = 1.0 + t[far]
        one_minus_c2 = -t[far] * (2.0 + t[far])
        with np.errstate(invalid="ignore", divide="ignore"):
            sph = c < 1.0
            theta = np.where(sph, np.arccos(np.clip(c, -1.0, 1.0)), np.arccosh(np.maximum(c, 1.0)))
            s = np.sqrt(np.abs(one_minus_c2))
            ff = theta / s
            ff1 = (c * ff - 1.0) / one_minus_c2
            ff2 = (ff + 3.0 * c * ff1) / one_minus_c2
        f[far], f1[far], f2[far] = ff, ff1, ff2
    return f, f1, f2


def _sinc(t):
    return np.sinc(t / np.pi)


def _sinhc(t):
    out = np.ones_like(t)
    big = np.abs(t) > 1e-4
    out[big] = np.sinh(t[big]) / t[big]
    tb = t[~big]
    out[~big] = 1.0 + tb * tb / 6.0 + tb**4 / 120.0
    return out


class Manifold:
    """Common interface of the model manifolds.

    Attributes
    ----------
    kind : str
        One of ``"euclidean"``, ``"sphere2"``, ``"hyperbolic2"``.
    dim, ambient_dim : int
        Intrinsic dimension n and length N of the coordinate vectors.
    kappa : float
        Constant sectional curvature (+1, 0 or -1).
    """

    kind = ""
    dim = 0
    ambient_dim = 0
    kappa = 0.0

    @property
    def curvature_bound(self):
        """|Rm|_inf, the sup-norm of the curvature tensor."""
        return abs(self.kappa)

    @property
    def injectivity_radius(self):
        return np.inf

    @property
    def ball_radius(self):
        """Radius rho of the ball that all nodal values of an element must lie in."""
        r = 0.5 * self.injectivity_radius
        if self.curvature_bound > 0:
            r = min(r, 0.5 / np.sqrt(self.curvature_bound))
        return r

    def __repr__(self):
        return f"{type(self).__name__}()"

    def __eq__(self, other):
        return type(self) is type(other) and self.ambient_dim == other.ambient_dim

    def __hash__(self):
        return hash((type(self).__name__, self.ambient_dim))

    # -- metric -----------------------------------------------------------
    @property
    def metric_diag(self):
        return np.ones(self.ambient_dim)

    def inner(self, a, b):
        return np.sum(np.asarray(a) * self.metric_diag * np.asarray(b), axis=-1)

    def norm(self, v):
        return np.sqrt(np.maximum(self.inner(v, v), 0.0))

    def proj(self, p, x):
        """Orthogonal projection of an ambient vector onto T_p M."""
        return np.asarray(x, dtype=float)

    def normal_part(self, p, a, b):
        """Second fundamental form II(a, b): normal component of the ambient
        derivative of a tangent field."""
        return np.zeros(np.broadcast(p, a, b).shape)

    def project_to_manifold(self, x):
        return np.asarray(x, dtype=float)

    # -- validation ---------------------------------------------------------
    def constraint_residual(self, p):
        return np.zeros(np.shape(p)[:-1])

    def tangency_residual(self, p, v):
        return np.zeros(np.broadcast(p, v).shape[:-1])

    def check_point(self, p, tol=CONSTRAINT_TOL):
        p = np.asarray(p, dtype=float)
        if p.shape[-1] != self.ambient_dim:
            raise ConstraintViolation(f"expected {self.ambient_dim} coordinates, got {p.shape[-1]}")
        res = np.max(self.constraint_residual(p), initial=0.0)
        if res > tol:
            raise ConstraintViolation(f"point off manifold, residual {res:.3g}")
        return p

    def check_tangent(self, p, v, tol=CONSTRAINT_TOL):
        res = np.max(self.tangency_residual(p, v), initial=0.0)
        if res > tol:
            raise ConstraintViolation(f"vector not tangent, residual {res:.3g}")
        return np.asarray(v, dtype=float)

    # -- geometry -------------------------------------------------------------
    def dist(self, p, q):
        raise NotImplementedError

    def exp(self, p, v):
        raise NotImplementedError

    def log(self, p, q):
        raise NotImplementedError

    def parallel_transport(self, p, q, v):
        raise NotImplementedError

    def curvature_op(self, p, x, y, z):
        """R(X, Y) Z = kappa (<Y, Z> X - <X, Z> Y)."""
        x, y, z = (np.asarray(a, dtype=float) for a in (x, y, z))
        return self.kappa * (self.inner(y, z)[..., None] * x - self.inner(x, z)[..., None] * y)

    def dlog_target(self, p, q):
        """Matrix of the derivative of log_p q with respect to q (T_q M -> T_p M)."""
        raise NotImplementedError

    def dlog_base(self, p, q):
        """Matrix of the covariant derivative of log_p q with respect to p."""
        raise NotImplementedError

    def hlog(self, p, vp, q, vq):
        """Logarithm of the horizontal lift on TM.

        Returns ``(log_p q, dlog_target(p, q) vq + dlog_base(p, q) vp)``.
        """
        first = self.log(p, q)
        second = _matvec(self.dlog_target(p, q), vq) + _matvec(self.dlog_base(p, q), vp)
        return first, second

    def log_jet(self, q, v):
        return LogJet(self, q, v)

    def tangent_basis(self, p):
        """Orthonormal basis of T_p M, shape (..., n, N)."""
        p = np.asarray(p, dtype=float)
        N = self.ambient_dim
        if self.kappa == 0:
            return np.broadcast_to(np.eye(N), p.shape[:-1] + (N, N)).copy()
        # Gram-Schmidt on projected coordinate axes, skipping the one most
        # aligned with the normal
        skip = np.argmax(np.abs(self.metric_diag * p), axis=-1)
        basis = []
        for k in range(self.dim):
            axis = k + (k >= skip)
            e = (np.arange(N) == axis[..., None]).astype(float)
            b = self.proj(p, e)
            for prev in basis:
                b = b - self.inner(prev, b)[..., None] * prev
            basis.append(b / self.norm(b)[..., None])
        return np.stack(basis, axis=-2)

    # -- sampling -------------------------------------------------------------
    def random_tangent(self, rng, p, scale=1.0):
        p = np.asarray(p, dtype=float)
        return scale * self.proj(p, rng.standard_normal(p.shape))

    def random_point(self, rng, size=(), center=None, radius=1.0):
        """Random point within geodesic distance ``radius`` of ``center``."""
        size = (size,) if np.isscalar(size) else tuple(size)
        if center is None:
            center = self.origin
        center = np.broadcast_to(center, size + (self.ambient_dim,))
        v = self.proj(center, rng.standard_normal(center.shape))
        nv = self.norm(v)[..., None]
        r = radius * rng.uniform(size=size + (1,)) ** (1.0 / self.dim)
        v = np.where(nv > 0, v / np.where(nv > 0, nv, 1.0), 0.0) * r
        return self.exp(center, v)

    @property
    def origin(self):
        raise NotImplementedError


class Euclidean(Manifold):
    kind = "euclidean"
    kappa = 0.0

    def __init__(self, n=2):
        self.dim = int(n)
        self.ambient_dim = int(n)

    def __repr__(self):
        return f"Euclidean({self.dim})"

    @property
    def origin(self):
        return np.zeros(self.dim)

    def dist(self, p, q):
        return np.linalg.norm(np.asarray(q, dtype=float) - p, axis=-1)

    def exp(self, p, v):
        return np.asarray(p, dtype=float) + v

    def log(self, p, q):
        return np.asarray(q, dtype=float) - p

    def parallel_transport(self, p, q, v):
        return np.broadcast_to(np.asarray(v, dtype=float), np.broadcast(p, q, v).shape).copy()

    def dlog_target(self, p, q):
        shape = np.broadcast(p, q).shape[:-1]
        return np.broadcast_to(np.eye(self.dim), shape + (self.dim, self.dim)).copy()

    def dlog_base(self, p, q):
        return -self.dlog_target(p, q)


class _ConstantCurvature2(Manifold):
    """Shared implementation of S^2 and H^2 in 3 ambient coordinates."""

    dim = 2
    ambient_dim = 3

    def constraint_residual(self, p):
        p = np.asarray(p, dtype=float)
        return np.abs(self.inner(p, p) - self.kappa)

    def tangency_residual(self, p, v):
        return np.abs(self.inner(p, v))

    def proj(self, p, x):
        p = np.asarray(p, dtype=float)
        x = np.asarray(x, dtype=float)
        return x - self.kappa * self.inner(p, x)[..., None] * p

    def normal_part(self, p, a, b):
        return -self.kappa * self.inner(a, b)[..., None] * np.asarray(p, dtype=float)

    def _cos_minus_one(self, p, q):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        return self.kappa * self.inner(p, q - p)

    def _check_antipodal(self, p, q):
        if self.injectivity_radius < np.inf:
            d = self.dist(p, q)
            if np.any(d >= self.injectivity_radius - ANTIPODAL_TOL):
                raise AntipodalPair(f"points at distance {np.max(d):.12g} have no unique geodesic")

    def log(self, p, q):
        self._check_antipodal(p, q)
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        t = self._cos_minus_one(p, q)
        w = (q - p) - t[..., None] * p
        f, _, _ = theta_over_sin(t)
        return f[..., None] * w

    def parallel_transport(self, p, q, v):
        self._check_antipodal(p, q)
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        v = np.asarray(v, dtype=float)
        c = 1.0 + self._cos_minus_one(p, q)
        coef = self.kappa * self.inner(q, v) / (1.0 + c)
        return v - coef[..., None] * (p + q)

    def _transport_matrix(self, src, dst):
        """Matrix of parallel transport from ``src`` to ``dst``."""
        c = 1.0 + self._cos_minus_one(src, dst)
        g = self.metric_diag
        m = -(self.kappa / (1.0 + c))[..., None, None] * ((src + dst)[..., :, None] * (g * dst)[..., None, :])
        return m + np.eye(3)

    def _frame(self, p, q):
        """Unit direction of log_p q (zero when p == q), cos-quantity c and f(c)."""
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        t = self._cos_minus_one(p, q)
        w = (q - p) - t[..., None] * p
        nw = self.norm(w)
        xi = np.where(nw[..., None] > 0, w / np.where(nw > 0, nw, 1.0)[..., None], 0.0)
        f, _, _ = theta_over_sin(t)
        return xi, 1.0 + t, f

    def _proj_matrix(self, p):
        g = self.metric_diag
        return np.eye(3) - self.kappa * p[..., :, None] * (g * p)[..., None, :]

    def dlog_base(self, p, q):
        self._check_antipodal(p, q)
        p = np.asarray(p, dtype=float)
        xi, c, f = self._frame(p, q)
        g = self.metric_diag
        along = xi[..., :, None] * (g * xi)[..., None, :]
        cf = (c * f)[..., None, None]
        # -Id along the geodesic, -theta*cot(theta) (resp. coth) across it
        return -cf * self._proj_matrix(p) + (cf - 1.0) * along

    def dlog_target(self, p, q):
        self._check_antipodal(p, q)
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        xi, _, f = self._frame(p, q)
        g = self.metric_diag
        along = xi[..., :, None] * (g * xi)[..., None, :]
        f = f[..., None, None]
        scale = f * self._proj_matrix(p) + (1.0 - f) * along
        return scale @ self._transport_matrix(q, p)


class Sphere2(_ConstantCurvature2):
    """Unit sphere S^2 in R^3."""

    kind = "sphere2"
    kappa = 1.0

    @property
    def injectivity_radius(self):
        return np.pi

    @property
    def origin(self):
        return np.array([0.0, 0.0, 1.0])

    def project_to_manifold(self, x):
        x = np.asarray(x, dtype=float)
        return x / np.linalg.norm(x, axis=-1, keepdims=True)

    def dist(self, p, q):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        t = self._cos_minus_one(p, q)
        w = (q - p) - t[..., None] * p
        return np.arctan2(np.linalg.norm(w, axis=-1), 1.0 + t)

    def exp(self, p, v):
        p = np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        t = np.linalg.norm(v, axis=-1)[..., None]
        return self.project_to_manifold(np.cos(t) * p + _sinc(t) * v)


class Hyperbolic2(_ConstantCurvature2):
    """Hyperboloid model {x : -x0^2 + x1^2 + x2^2 = -1, x0 > 0} of H^2."""

    kind = "hyperbolic2"
    kappa = -1.0

    @property
    def metric_diag(self):
        return np.array([-1.0, 1.0, 1.0])

    @property
    def origin(self):
        return np.array([1.0, 0.0, 0.0])

    def constraint_residual(self, p):
        p = np.asarray(p, dtype=float)
        res = np.abs(self.inner(p, p) + 1.0)
        return np.where(p[..., 0] > 0, res, np.inf)

    def project_to_manifold(self, x):
        x = np.asarray(x, dtype=float)
        s = np.sqrt(-self.inner(x, x))[..., None]
        return x / s

    def dist(self, p, q):
        d = np.asarray(q, dtype=float) - p
        chord = np.sqrt(np.maximum(self.inner(d, d), 0.0))
        return 2.0 * np.arcsinh(0.5 * chord)

    def exp(self, p, v):
        p = np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        t = self.norm(v)[..., None]
        return self.project_to_manifold(np.cosh(t) * p + _sinhc(t) * v)


def get_manifold(name, n=2):
    """Construct a manifold from a tag as used in configuration files."""
    key = name.lower().replace("-", "").replace("_", "")
    if key in ("sphere", "sphere2", "s2"):
        return Sphere2()
    if key in ("hyperbolic", "hyperbolic2", "h2", "hyperboloid"):
        return Hyperbolic2()
    if key.startswith("euclidean") or key.startswith("r"):
        digits = "".join(ch for ch in key if ch.isdigit())
        return Euclidean(int(digits) if digits else n)
    raise ValueError(f"unknown manifold {name!r}")


def _matvec(m, v):
    return np.einsum("...ij,...j->...i", m, v)


class LogJet:
    """Derivatives of the ambient extension of (q, v) -> log_q v up to order two.

    ``q`` and ``v`` are broadcast against each other.  The formulas extend the
    logarithm off the manifold by ``L(q, v) = f(c) (v - c q)``; projected onto
    T_q M the first derivatives are the covariant derivatives of the log map.
    Matrices act on the last axis; ``*_mat`` methods build the matrix of a
    bilinear form with one argument frozen.
    """

    def __init__(self, manifold, q, v):
        self.manifold = manifold
        q = np.asarray(q, dtype=float)
        v = np.asarray(v, dtype=float)
        q, v = np.broadcast_arrays(q, v)
        self.q, self.v = q, v
        N = manifold.ambient_dim
        self._eye = np.eye(N)
        self.flat = manifold.kappa == 0
        if self.flat:
            self.L = v - q
            return
        k = manifold.kappa
        g = manifold.metric_diag
        # c - 1, written to avoid cancellation for nearby points
        t = k * manifold.inner(q, v - q) + (k * manifold.inner(q, q) - 1.0)
        self.c = 1.0 + t
        self.w = (v - q) - t[..., None] * q
        self.f, self.f1, self.f2 = theta_over_sin(t)
        self.L = self.f[..., None] * self.w
        # gradients of c with respect to q and v (as row vectors)
        self.kg = k * g
        self.dc_dq = self.kg * v
        self.dc_dv = self.kg * q

    # recurring vector combinations, built on first use
    @cached_property
    def u1(self):
        return self.f1[..., None] * self.w - self.f[..., None] * self.q

    @cached_property
    def u2(self):
        return self.f2[..., None] * self.w - 2.0 * self.f1[..., None] * self.q

    @cached_property
    def h(self):
        return self.f1 * self.c + self.f

    def _s(self, x):
        return np.einsum("...i,...i->...", self.dc_dq, x)

    def _r(self, x):
        return np.einsum("...i,...i->...", self.dc_dv, x)

    @staticmethod
    def _outer(a, b):
        return a[..., :, None] * b[..., None, :]

    def dq_mat(self):
        if self.flat:
            return np.broadcast_to(-self._eye, self.q.shape + (self.q.shape[-1],))
        return self._outer(self.u1, self.dc_dq) - (self.f * self.c)[..., None, None] * self._eye

    def dv_mat(self):
        if self.flat:
            return np.broadcast_to(self._eye, self.q.shape + (self.q.shape[-1],))
        return self._outer(self.u1, self.dc_dv) + self.f[..., None, None] * self._eye

    def dq(self, a):
        if self.flat:
            return -np.broadcast_to(a, np.broadcast(a, self.q).shape)
        return self.u1 * self._s(a)[..., None] - (self.f * self.c)[..., None] * a

    def dv(self, b):
        if self.flat:
            return np.broadcast_to(b, np.broadcast(b, self.q).shape).copy()
        return self.u1 * self._r(b)[..., None] + self.f[..., None] * b

    def d2qq(self, a, b):
        if self.flat:
            return np.zeros(np.broadcast(a, b, self.q).shape)
        sa, sb = self._s(a)[..., None], self._s(b)[..., None]
        return sa * sb * self.u2 - self.h[..., None] * (sa * b + sb * a)

    def d2qq_mat(self, b):
        """Matrix of a -> d2qq(a, b)."""
        if self.flat:
            return np.zeros(np.broadcast(b, self.q).shape + (self.q.shape[-1],))
        sb = self._s(b)[..., None, None]
        h = self.h[..., None, None]
        return sb * self._outer(self.u2, self.dc_dq) - h * (self._outer(b, self.dc_dq) + sb * self._eye)

    def d2vv(self, a, b):
        if self.flat:
            return np.zeros(np.broadcast(a, b, self.q).shape)
        ra, rb = self._r(a)[..., None], self._r(b)[..., None]
        return ra * rb * self.u2 + self.f1[..., None] * (ra * b + rb * a)

    def d2qv(self, a, b):
        """Mixed derivative: ``a`` moves q, ``b`` moves v."""
        if self.flat:
            return np.zeros(np.broadcast(a, b, self.q).shape)
        sa, rb = self._s(a)[..., None], self._r(b)[..., None]
        ab = np.einsum("...i,...i->...", self.kg * a, b)[..., None]
        return sa * (rb * self.u2 + self.f1[..., None] * b) + ab * self.u1 - self.h[..., None] * rb * a

    def d2qv_mat(self, a):
        """Matrix of b -> d2qv(a, b)."""
        if self.flat:
            return np.zeros(np.broadcast(a, self.q).shape + (self.q.shape[-1],))
        sa = self._s(a)[..., None, None]
        return (
            sa * (self._outer(self.u2, self.dc_dv) + self.f1[..., None, None] * self._eye)
            + self._outer(self.u1, self.kg * a)
            - self.h[..., None, None] * self._outer(a, self.dc_dv)
        )

    # Row-vector forms y^T D[...]: the covector of a linear functional of one
    # argument, used by adjoint assembly.

    @staticmethod
    def _dot(a, b):
        return np.einsum("...i,...i->...", a, b)

    def row_dq(self, y):
        if self.flat:
            return -np.broadcast_to(y, np.broadcast(y, self.q).shape)
        return self._dot(y, self.u1)[..., None] * self.dc_dq - (self.f * self.c)[..., None] * y

    def row_dv(self, y):
        if self.flat:
            return np.broadcast_to(y, np.broadcast(y, self.q).shape).copy()
        return self._dot(y, self.u1)[..., None] * self.dc_dv + self.f[..., None] * y

    def row_d2qq(self, y, a):
        """Covector of b -> y . d2qq(a, b)."""
        if self.flat:
            return np.zeros(np.broadcast(y, a, self.q).shape)
        sa = self._s(a)[..., None]
        h = self.h[..., None]
        return sa * self._dot(y, self.u2)[..., None] * self.dc_dq - h * sa * y - h * self._dot(y, a)[..., None] * self.dc_dq

    def row_d2qv(self, y, a):
        """Covector of b -> y . d2qv(a, b), with ``a`` moving q."""
        if self.flat:
            return np.zeros(np.broadcast(y, a, self.q).shape)
        sa = self._s(a)[..., None]
        return (
            sa * (self._dot(y, self.u2)[..., None] * self.dc_dv + self.f1[..., None] * y)
            + self._dot(y, self.u1)[..., None] * self.kg * a
            - self.h[..., None] * self._dot(y, a)[..., None] * self.dc_dv
        )
