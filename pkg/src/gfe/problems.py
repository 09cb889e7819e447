"""Manufactured benchmark problems.

Each problem fixes a domain, a target manifold, boundary data and either a
closed-form harmonic solution or a recipe for a fine-grid reference.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .error_metrics import ExactMap
from .manifold import Euclidean, Hyperbolic2, Sphere2

SQUARE = ((-0.5, 0.5), (-0.5, 0.5))


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    description: str
    dim: int
    domain: tuple
    manifold: object
    boundary_map: ExactMap
    """Smooth map whose trace is the Dirichlet data; its interpolant is the
    initial iterate on the coarsest level."""
    exact: ExactMap | None = None
    reference_levels: int = 2
    base_subdivisions: int = 4
    levels: int = 4
    exact_in_discrete_space: bool = False
    orders: tuple = (1, 2)
    notes: str = ""
    extra: dict = field(default_factory=dict)


# -- S^2: inverse stereographic projection ----------------------------------

def stereo_inverse(w):
    """Inverse stereographic projection from the south pole, R^2 -> S^2."""
    s = 1.0 + np.sum(w * w, axis=-1, keepdims=True)
    return np.concatenate([2.0 * w, 2.0 - s], axis=-1) / s


def stereo_inverse_jac(w):
    """Derivative (P, 2, 3): row b is d/dw_b of stereo_inverse."""
    s = 1.0 + np.sum(w * w, axis=-1)
    P = len(w)
    J = np.zeros((P, 2, 3))
    for b in range(2):
        J[:, b, :2] = -4.0 * w[:, b, None] * w / s[:, None] ** 2
        J[:, b, b] += 2.0 / s
        J[:, b, 2] = -4.0 * w[:, b] / s**2
    return J


def stereo_inverse_hess(w):
    """Second derivatives (P, 2, 2, 3)."""
    s = 1.0 + np.sum(w * w, axis=-1)
    P = len(w)
    H = np.zeros((P, 2, 2, 3))
    for a in range(2):
        for b in range(2):
            dab = float(a == b)
            for c in range(2):
                dac, dbc = float(a == c), float(b == c)
                H[:, a, b, c] = (
                    -4.0 * (dab * w[:, c] + dac * w[:, b] + dbc * w[:, a]) / s**2
                    + 16.0 * w[:, a] * w[:, b] * w[:, c] / s**3
                )
            H[:, a, b, 2] = -4.0 * dab / s**2 + 16.0 * w[:, a] * w[:, b] / s**3
    return H


def _linear_pullback(fn_w, jac_w, hess_w, A):
    """Compose a map of w with the linear map w = x A^T."""
    A = np.asarray(A, dtype=float)

    def value(x):
        return fn_w(x @ A.T)

    def differential(x):
        return np.einsum("ba,pbn->pan", A, jac_w(x @ A.T))

    def hessian(x):
        return np.einsum("ca,db,pcdn->pabn", A, A, hess_w(x @ A.T))

    return value, differential, hessian


def _p2_map(scale=0.5):
    v, d, h = _linear_pullback(stereo_inverse, stereo_inverse_jac, stereo_inverse_hess, scale * np.eye(2))
    return ExactMap(Sphere2(), v, d, h)


# -- H^2: Poincare disk to hyperboloid ------------------------------------

def disk_to_hyperboloid(w):
    s = np.sum(w * w, axis=-1, keepdims=True)
    return np.concatenate([1.0 + s, 2.0 * w], axis=-1) / (1.0 - s)


def disk_to_hyperboloid_jac(w):
    s = np.sum(w * w, axis=-1)
    P = len(w)
    J = np.zeros((P, 2, 3))
    r = 1.0 - s
    for b in range(2):
        J[:, b, 0] = 4.0 * w[:, b] / r**2
        J[:, b, 1:] = 4.0 * w[:, b, None] * w / r[:, None] ** 2
        J[:, b, 1 + b] += 2.0 / r
    return J


def disk_to_hyperboloid_hess(w):
    s = np.sum(w * w, axis=-1)
    r = 1.0 - s
    P = len(w)
    H = np.zeros((P, 2, 2, 3))
    for a in range(2):
        for b in range(2):
            dab = float(a == b)
            H[:, a, b, 0] = 4.0 * dab / r**2 + 16.0 * w[:, a] * w[:, b] / r**3
            for c in range(2):
                dac, dbc = float(a == c), float(b == c)
                H[:, a, b, 1 + c] = (
                    4.0 * (dab * w[:, c] + dac * w[:, b] + dbc * w[:, a]) / r**2
                    + 16.0 * w[:, a] * w[:, b] * w[:, c] / r**3
                )
    return H


def _p3_boundary_map(scale=0.4, bend=0.1):
    """A smooth map into the disk that is not conformal: w = scale z + bend (y^2, -x^2)."""

    def w_of(x):
        return np.stack([scale * x[:, 0] + bend * x[:, 1] ** 2, scale * x[:, 1] - bend * x[:, 0] ** 2], axis=1)

    def dw(x):
        P = len(x)
        D = np.zeros((P, 2, 2))  # D[:, a, b] = d w_b / d x_a
        D[:, 0, 0] = scale
        D[:, 1, 1] = scale
        D[:, 1, 0] = 2.0 * bend * x[:, 1]
        D[:, 0, 1] = -2.0 * bend * x[:, 0]
        return D

    def ddw(x):
        P = len(x)
        H = np.zeros((P, 2, 2, 2))  # H[:, a, b, c] = d^2 w_c / dx_a dx_b
        H[:, 1, 1, 0] = 2.0 * bend
        H[:, 0, 0, 1] = -2.0 * bend
        return H

    def value(x):
        return disk_to_hyperboloid(w_of(x))

    def differential(x):
        return np.einsum("pab,pbn->pan", dw(x), disk_to_hyperboloid_jac(w_of(x)))

    def hessian(x):
        w, D = w_of(x), dw(x)
        Hw = ddw(x)
        return np.einsum("pac,pbd,pcdn->pabn", D, D, disk_to_hyperboloid_hess(w)) + np.einsum(
            "pabc,pcn->pabn", Hw, disk_to_hyperboloid_jac(w)
        )

    return ExactMap(Hyperbolic2(), value, differential, hessian)


def _p3_conformal_map(scale=0.4):
    v, d, h = _linear_pullback(disk_to_hyperboloid, disk_to_hyperboloid_jac, disk_to_hyperboloid_hess, scale * np.eye(2))
    return ExactMap(Hyperbolic2(), v, d, h)


# -- d = 1 geodesic ---------------------------------------------------------

def _p1_map(length=1.0):
    def value(x):
        t = length * x[:, 0]
        return np.stack([np.cos(t), np.sin(t), np.zeros_like(t)], axis=1)

    def differential(x):
        t = length * x[:, 0]
        return (length * np.stack([-np.sin(t), np.cos(t), np.zeros_like(t)], axis=1))[:, None, :]

    def hessian(x):
        return -(length**2) * value(x)[:, None, None, :]

    return ExactMap(Sphere2(), value, differential, hessian)


def _p1_start(length=1.0, bump=0.2):
    """Geodesic pushed off its great circle by a bump vanishing at the ends."""
    base = _p1_map(length)

    def value(x):
        z = bump * np.sin(np.pi * x[:, 0])
        q = base.value(x)
        return np.concatenate([np.sqrt(1.0 - z**2)[:, None] * q[:, :2], z[:, None]], axis=1)

    def differential(x):
        t = x[:, 0]
        z = bump * np.sin(np.pi * t)
        dz = bump * np.pi * np.cos(np.pi * t)
        r = np.sqrt(1.0 - z**2)
        dr = -z * dz / r
        q, dq = base.value(x), base.differential(x)[:, 0]
        d = np.concatenate([dr[:, None] * q[:, :2] + r[:, None] * dq[:, :2], dz[:, None]], axis=1)
        return d[:, None, :]

    return ExactMap(Sphere2(), value, differential)


# -- Euclidean --------------------------------------------------------------

def _p4_map():
    def value(x):
        return (x[:, 0] ** 2 - x[:, 1] ** 2)[:, None]

    def differential(x):
        return np.stack([2.0 * x[:, 0], -2.0 * x[:, 1]], axis=1)[:, :, None]

    def hessian(x):
        H = np.zeros((len(x), 2, 2, 1))
        H[:, 0, 0, 0] = 2.0
        H[:, 1, 1, 0] = -2.0
        return H

    return ExactMap(Euclidean(1), value, differential, hessian)


def _p4_1d_map():
    def value(x):
        return 0.5 + 0.75 * x

    def differential(x):
        return np.full((len(x), 1, 1), 0.75)

    def hessian(x):
        return np.zeros((len(x), 1, 1, 1))

    return ExactMap(Euclidean(1), value, differential, hessian)


def problem_registry():
    """All benchmark problems, keyed by name (insertion ordered)."""
    p1, p2, p3b, p3c, p4, p41 = _p1_map(), _p2_map(), _p3_boundary_map(), _p3_conformal_map(), _p4_map(), _p4_1d_map()
    probs = [
        ProblemSpec(
            "P1", "d=1 into S^2: geodesic of length 1 between (1,0,0) and (cos 1, sin 1, 0)",
            1, (0.0, 1.0), Sphere2(), _p1_start(), exact=p1, exact_in_discrete_space=True,
            orders=(1,),
        ),
        ProblemSpec(
            "P2", "d=2 into S^2: inverse stereographic projection of z -> z/2 on [-1/2, 1/2]^2",
            2, SQUARE, Sphere2(), p2, exact=p2,
        ),
        ProblemSpec(
            "P3", "d=2 into H^2: boundary data of a non-conformal map into the disk, reference solution two levels finer",
            2, SQUARE, Hyperbolic2(), p3b, exact=None, orders=(1,),
        ),
        ProblemSpec(
            "P3-conformal", "d=2 into H^2: the harmonic map z -> 0.4 z into the Poincare disk, on the hyperboloid",
            2, SQUARE, Hyperbolic2(), p3c, exact=p3c,
        ),
        ProblemSpec(
            "P4", "d=2 into R: harmonic polynomial x^2 - y^2 on [-1/2, 1/2]^2",
            2, SQUARE, Euclidean(1), p4, exact=p4,
        ),
        ProblemSpec(
            "P4-1d", "d=1 into R: affine map 1/2 + 3x/4 on [0, 1]",
            1, (0.0, 1.0), Euclidean(1), p41, exact=p41, exact_in_discrete_space=True,
        ),
    ]
    return {p.name: p for p in probs}


def get_problem(name):
    reg = problem_registry()
    if name not in reg:
        from .errors import ConfigError

        raise ConfigError(f"unknown problem {name!r}; available: {', '.join(reg)}")
    return reg[name]
