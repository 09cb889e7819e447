"""Minimization of the harmonic energy over geodesic finite element functions
with fixed (Dirichlet) boundary nodes.

The iteration is a Riemannian nonlinear conjugate gradient method on the
product of the free nodal manifolds.  Directions are preconditioned with the
scalar Lagrange stiffness matrix K acting componentwise on the ambient
coordinates of the gradient covector, then projected back to the tangent
spaces.  For a flat target this is exactly Newton's method; for curved
targets it removes the h^-2 conditioning of the energy Hessian, so iteration
counts stay bounded under refinement.

Near convergence the energy decrease of a step drops below the rounding
noise of the energy itself.  There the Armijo test is evaluated on the
trapezoidal estimate of the decrease, t/2 (phi'(0) + phi'(t)), which only
involves gradients.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import splu

from .energy import energy_and_gradient
from .errors import BallViolation, GfeError, LineSearchStall, NoConvergence, SingularSystem
from .mesh import stiffness_matrix

METHODS = ("gradient_descent", "nonlinear_cg")
NOISE_FACTOR = 1e3
POWELL_RESTART = 0.2


@dataclass(frozen=True)
class SolverConfig:
    grad_tol: float = 1e-9
    max_iters: int = 2000
    backtrack: float = 0.5
    armijo: float = 1e-4
    method: str = "nonlinear_cg"
    min_step: float = 1e-14
    precondition: bool = True
    quad_degree: int | None = None
    max_node_step: float = 0.25

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtracking factor must lie in (0, 1)")
        if not 0 < self.armijo < 0.5:
            raise ValueError("sufficient-decrease constant must lie in (0, 1/2)")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")


@dataclass
class SolveReport:
    iterations: int = 0
    grad_norm: float = np.inf
    energies: list = field(default_factory=list)
    converged: bool = False
    noise_steps: int = 0
    restarts: int = 0
    rejected: int = 0
    message: str = ""


class _Problem:
    """Energy, gradient and preconditioner restricted to the free nodes."""

    def __init__(self, u, config):
        self.template = u
        self.M = u.manifold
        self.free = u.nodes.free
        self.quad = config.quad_degree
        self.lu = None
        if config.precondition and self.free.size:
            K = stiffness_matrix(u.mesh, u.order)
            self.lu = splu(K[self.free][:, self.free].tocsc())

    def evaluate(self, values):
        u = self.template.with_values(values)
        E, G = energy_and_gradient(u, self.quad)
        return u, E.total, G[self.free]

    def inner(self, a, b):
        return float(np.sum(self.M.inner(a, b)))

    def precondition(self, x, g):
        """Preconditioned gradient (tangent) for gradient ``g`` at free values ``x``.

        K^-1 acts componentwise on the ambient coordinates, followed by the
        metric projection onto the tangent spaces.  With an indefinite
        ambient metric this is not guaranteed to be a descent direction; if
        it is not, the ambient covector is used with Euclidean-orthogonal
        projections instead, which always is.
        """
        if self.lu is None:
            return g.copy()
        z = self.M.proj(x, self.lu.solve(g))
        if self.M.kappa >= 0 or self.inner(z, g) > 0:
            return z
        c = g * self.M.metric_diag
        n = self.M.metric_diag * x
        nn = np.sum(n * n, axis=1, keepdims=True)
        c = c - np.sum(n * c, axis=1, keepdims=True) / nn * n
        z = self.lu.solve(c)
        return z - np.sum(n * z, axis=1, keepdims=True) / nn * n


def _boundary_values(u0, boundary):
    values = np.array(u0.values)
    bnodes = u0.nodes.boundary
    if boundary is None:
        return values
    if isinstance(boundary, dict):
        for j, v in boundary.items():
            values[int(j)] = v
        return values
    boundary = np.asarray(boundary, dtype=float)
    if boundary.shape == values.shape:
        values[bnodes] = boundary[bnodes]
    elif boundary.shape == (len(bnodes), values.shape[1]):
        values[bnodes] = boundary
    else:
        raise ValueError("boundary data must give one value per boundary node or per node")
    return values


def solve(u0, boundary=None, config=None, callback=None):
    """Minimize the harmonic energy starting from ``u0``.

    ``boundary`` prescribes the boundary nodal values: None keeps those of
    ``u0``; otherwise an array with one row per boundary node (in the order
    of ``u0.nodes.boundary``) or per global node, or a dict node -> value.
    Boundary values are copied bit for bit into every iterate.

    Returns ``(u_h, report)``.  Raises LineSearchStall when no step of
    length >= ``min_step`` decreases the energy even along the preconditioned
    gradient.
    """
    cfg = config or SolverConfig()
    values = _boundary_values(u0, boundary)
    prob = _Problem(u0.with_values(values), cfg)
    M, free = prob.M, prob.free
    report = SolveReport()

    u, E, g = prob.evaluate(values)
    report.energies.append(E)
    gnorm = np.sqrt(prob.inner(g, g))
    report.grad_norm = gnorm
    z = prob.precondition(values[free], g)
    d = -z
    zg = prob.inner(z, g)
    t_prev = 1.0

    while True:
        if gnorm <= cfg.grad_tol:
            report.converged = True
            report.message = "gradient tolerance reached"
            break
        if report.iterations >= cfg.max_iters:
            report.message = f"maximum of {cfg.max_iters} iterations reached"
            break
        if callback is not None:
            callback(report.iterations, u, E, gnorm)

        slope = prob.inner(g, d)
        if not slope < 0:
            d, slope = -z, -zg
            report.restarts += 1
        x = values[free]
        dnorm = np.max(M.norm(d))
        t = min(1.0, 2.0 * t_prev) if cfg.method == "gradient_descent" else 1.0
        if dnorm * t > cfg.max_node_step:
            t = cfg.max_node_step / dnorm
        noise = NOISE_FACTOR * np.finfo(float).eps * max(abs(E), 1.0)
        accepted = None
        while t >= cfg.min_step:
            trial_vals = values.copy()
            trial_vals[free] = M.exp(x, t * d)
            try:
                ut, Et, gt = prob.evaluate(trial_vals)
            except (BallViolation, NoConvergence, SingularSystem):
                report.rejected += 1
                t *= cfg.backtrack
                continue
            if Et <= E + cfg.armijo * t * slope and Et < E:
                accepted = (ut, Et, gt, trial_vals, False)
                break
            if abs(Et - E) <= noise:
                # decrease below the energy's rounding level: judge by slopes
                vel = M.parallel_transport(x, trial_vals[free], d)
                slope_t = prob.inner(gt, vel)
                if 0.5 * t * (slope + slope_t) <= cfg.armijo * t * slope:
                    accepted = (ut, Et, gt, trial_vals, True)
                    break
            report.rejected += 1
            t *= cfg.backtrack
        if accepted is None:
            if np.array_equal(d, -z):
                report.message = "line search stalled along the preconditioned gradient"
                err = LineSearchStall(report.message)
                err.report, err.solution = report, u
                raise err
            d, report.restarts = -z, report.restarts + 1
            continue

        ut, Et, gt, new_vals, by_noise = accepted
        report.noise_steps += int(by_noise)
        x_new = new_vals[free]
        # direction update
        z_new = prob.precondition(x_new, gt)
        zg_new = prob.inner(z_new, gt)
        if cfg.method == "nonlinear_cg":
            g_old = M.parallel_transport(x, x_new, g)
            d_old = M.parallel_transport(x, x_new, d)
            overlap = prob.inner(z_new, g_old)
            if abs(overlap) >= POWELL_RESTART * zg_new:
                # successive gradients far from conjugate: restart
                beta = 0.0
            else:
                beta = max(0.0, (zg_new - overlap) / zg)
            d = -z_new + beta * d_old
        else:
            d = -z_new
        u, E, g, values, z, zg, t_prev = ut, Et, gt, new_vals, z_new, zg_new, t
        gnorm = np.sqrt(prob.inner(g, g))
        report.iterations += 1
        report.energies.append(E)
        report.grad_norm = gnorm
    return u, report


def check_stationarity(u, quad=None):
    """Largest |dE(u)(V)| over unit nodal test directions at the free nodes."""
    free = u.nodes.free
    if free.size == 0:
        return 0.0
    _, G = energy_and_gradient(u, quad)
    basis = u.manifold.tangent_basis(u.values[free])
    comps = u.manifold.inner(basis, G[free][:, None, :])
    return float(np.max(np.abs(comps)))


__all__ = ["SolverConfig", "SolveReport", "solve", "check_stationarity", "GfeError"]
