"""Refinement studies on the registered problems, written as CSV tables."""
from __future__ import annotations

import io
import logging
import sys
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .energy import default_energy_degree, harmonic_energy
from .error_metrics import (
    EXACT,
    ErrorSample,
    SampledMap,
    compute_eoc,
    default_error_degree,
    error_pair,
    smoothness_descriptor,
)
from .errors import ConfigError
from .interpolation import GfeFunction
from .mesh import build_uniform_mesh, quadrature_for, refine
from .problems import get_problem
from .solver import SolverConfig, solve

log = logging.getLogger("gfe.bench")

BENCH_HEADER = "level,h,nodes,d_L2,eoc_L2,D_12,eoc_D12,energy,grad_norm,iters"
INTERP_HEADER = "level,h,d_L2,eoc_L2,D_12,eoc_D12,theta_1q"
EXACT_DISCRETE_TOL = 1e-8
THETA_Q = 4


@dataclass(frozen=True)
class RunConfig:
    problem: str
    order: int = 1
    levels: int = 4
    out: str | None = None
    quad_degree: int | None = None
    seed: int = 0
    perturbation: float = 0.1
    base_subdivisions: int | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.levels < 2:
            raise ConfigError("levels must be at least 2")
        if self.order not in (1, 2):
            raise ConfigError("order must be 1 or 2")
        if self.quad_degree is not None and not 0 <= self.quad_degree <= 8:
            raise ConfigError("quadrature degree override must lie in [0, 8]")
        if self.base_subdivisions is not None and self.base_subdivisions < 1:
            raise ConfigError("base_subdivisions must be positive")
        if self.perturbation < 0:
            raise ConfigError("perturbation must be nonnegative")

    def degrees(self):
        """Quadrature degrees (energy, errors)."""
        if self.quad_degree is None:
            return default_energy_degree(self.order), default_error_degree(self.order)
        return self.quad_degree, self.quad_degree + 2


def fmt(x):
    if isinstance(x, str):
        return x
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path, header, rows):
    text = header + "\n" + "".join(",".join(fmt(v) for v in row) + "\n" for row in rows)
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text


def _meshes(pdef, cfg, count):
    k0 = cfg.base_subdivisions or pdef.base_subdivisions
    mesh = build_uniform_mesh(pdef.domain, k0)
    out = [mesh]
    for _ in range(count - 1):
        mesh = refine(mesh)
        out.append(mesh)
    return out


def _perturb(u, amplitude, seed):
    if amplitude == 0:
        return u
    rng = np.random.default_rng(seed)
    M = u.manifold
    free = u.nodes.free
    vals = np.array(u.values)
    step = M.proj(vals[free], rng.standard_normal(vals[free].shape))
    step *= amplitude * u.mesh.h / np.maximum(np.max(M.norm(step)), 1e-300)
    vals[free] = M.exp(vals[free], step)
    return u.with_values(vals)


def _solve_level(pdef, cfg, mesh, warm):
    M = pdef.manifold
    exact_bd = GfeFunction.interpolate(mesh, cfg.order, M, pdef.boundary_map.value)
    if warm is None:
        u0 = _perturb(exact_bd, cfg.perturbation, cfg.seed)
    else:
        u0 = warm.prolong(mesh)
    bnodes = exact_bd.nodes.boundary
    solver_cfg = replace(cfg.solver, quad_degree=cfg.degrees()[0])
    return solve(u0, exact_bd.values[bnodes], solver_cfg)


@dataclass
class BenchResult:
    report: object
    rows: list
    csv: str
    converged: bool
    solutions: list
    solve_reports: list


def run(config, keep_solutions=False):
    """Solve the problem on ``config.levels`` nested meshes and tabulate errors.

    Levels are solved in order, each warm-started from the prolonged solution
    of the previous one.  Problems without a closed-form solution are
    measured against a solution on a mesh ``reference_levels`` refinements
    finer than the finest level.
    """
    pdef = get_problem(config.problem)
    if config.order not in pdef.orders:
        raise ConfigError(f"problem {pdef.name} supports orders {pdef.orders}")
    if pdef.exact is None:
        meshes = _meshes(pdef, config, config.levels + pdef.reference_levels)
    else:
        meshes = _meshes(pdef, config, config.levels)
    _, err_deg = config.degrees()
    err_quad = quadrature_for(pdef.dim, err_deg)

    sols, reports = [], []
    warm = None
    all_converged = True
    for lvl, mesh in enumerate(meshes):
        uh, rep = _solve_level(pdef, config, mesh, warm)
        log.info("level %d: h=%.4g iters=%d |g|=%.3g converged=%s", lvl, mesh.h, rep.iterations, rep.grad_norm, rep.converged)
        all_converged &= rep.converged
        sols.append(uh)
        reports.append(rep)
        warm = uh

    if pdef.exact is None:
        ref = SampledMap.of(sols[-1], meshes[-1], err_quad)

        def target(lvl):
            return ref, meshes[-1]
    else:

        def target(lvl):
            return pdef.exact, meshes[lvl]

    samples, rows = [], []
    for lvl in range(config.levels):
        uh, rep, mesh = sols[lvl], reports[lvl], meshes[lvl]
        u, imesh = target(lvl)
        dl2, d12 = error_pair(u, uh, imesh, err_quad)
        E = harmonic_energy(uh, config.degrees()[0]).total
        samples.append(ErrorSample(mesh.h, dl2, d12, E))
        rows.append([lvl, mesh.h, uh.nodes.num_nodes, dl2, None, d12, None, E, rep.grad_norm, rep.iterations])
    tol = EXACT_DISCRETE_TOL if pdef.exact_in_discrete_space else None
    report = compute_eoc(samples, **({"exact_tol": tol} if tol else {}))
    for i, row in enumerate(rows):
        row[4] = report.eoc_L2[i - 1] if i else ""
        row[6] = report.eoc_D12[i - 1] if i else ""
    text = write_csv(config.out, BENCH_HEADER, rows)
    return BenchResult(report, rows, text, all_converged, sols if keep_solutions else [], reports)


def interpolation_study(config):
    """Interpolation errors of the exact solution (no solve) under refinement."""
    pdef = get_problem(config.problem)
    if pdef.exact is None:
        raise ConfigError(f"problem {pdef.name} has no closed-form solution to interpolate")
    meshes = _meshes(pdef, config, config.levels)
    _, err_deg = config.degrees()
    err_quad = quadrature_for(pdef.dim, err_deg)
    samples, rows = [], []
    for lvl, mesh in enumerate(meshes):
        uI = GfeFunction.interpolate(mesh, config.order, pdef.manifold, pdef.exact.value)
        dl2, d12 = error_pair(pdef.exact, uI, mesh, err_quad)
        theta = smoothness_descriptor(uI, mesh, err_quad, k=1, p=THETA_Q)
        samples.append(ErrorSample(mesh.h, dl2, d12))
        rows.append([lvl, mesh.h, dl2, None, d12, None, theta])
    tol = EXACT_DISCRETE_TOL if pdef.exact_in_discrete_space else None
    report = compute_eoc(samples, **({"exact_tol": tol} if tol else {}))
    for i, row in enumerate(rows):
        row[3] = report.eoc_L2[i - 1] if i else ""
        row[5] = report.eoc_D12[i - 1] if i else ""
    text = write_csv(config.out, INTERP_HEADER, rows)
    return BenchResult(report, rows, text, True, [], [])


# -- config files -------------------------------------------------------------

def _toml():
    try:
        import tomllib
    except ModuleNotFoundError:  # Python 3.10
        import tomli as tomllib
    return tomllib


_SOLVER_KEYS = {f.name for f in fields(SolverConfig)}


def load_config(path, **overrides):
    """Read a run configuration from a TOML file with [problem], [solver] and
    [output] tables.  Keyword overrides that are not None take precedence."""
    try:
        with open(path, "rb") as fh:
            data = _toml().load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    return config_from_dict(data, **overrides)


def config_from_dict(data, **overrides):
    unknown = set(data) - {"problem", "solver", "output"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    prob = dict(data.get("problem", {}))
    solver = dict(data.get("solver", {}))
    output = dict(data.get("output", {}))
    bad = set(solver) - _SOLVER_KEYS
    if bad:
        raise ConfigError(f"unknown [solver] keys: {sorted(bad)}")
    kw = {
        "problem": prob.pop("name", None),
        "order": prob.pop("order", 1),
        "levels": prob.pop("levels", 4),
        "seed": prob.pop("seed", 0),
        "perturbation": prob.pop("perturbation", 0.1),
        "base_subdivisions": prob.pop("base_subdivisions", None),
        "quad_degree": prob.pop("quad_degree", None),
        "out": output.pop("path", None),
    }
    if prob:
        raise ConfigError(f"unknown [problem] keys: {sorted(prob)}")
    if output:
        raise ConfigError(f"unknown [output] keys: {sorted(output)}")
    kw.update({k: v for k, v in overrides.items() if v is not None})
    if not kw["problem"]:
        raise ConfigError("no problem given")
    try:
        kw["solver"] = SolverConfig(**solver)
        return RunConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def summary(result, order, kind="bench"):
    """Short human-readable account of the final convergence orders."""
    buf = io.StringIO()
    r = result.report
    buf.write(f"final EOC: d_L2 {fmt_eoc(r.final('L2'))} (expected {order + 1}), ")
    buf.write(f"D_12 {fmt_eoc(r.final('D12'))} (expected {order})\n")
    if kind == "bench":
        buf.write("all levels converged\n" if result.converged else "SOLVER FAILURE on at least one level\n")
    return buf.getvalue()


def fmt_eoc(v):
    return v if v == EXACT else f"{v:.3f}"
