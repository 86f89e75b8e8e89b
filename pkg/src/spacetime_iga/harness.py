"""Convergence-study driver and command line interface.

Ships the manufactured model problems (fixed and moving space-time
cylinders with a smooth exact solution), runs refinement sweeps that
report errors in the L2 and discrete energy norms, writes CSV, and
hosts the self-verification suite behind ``spacetime-iga verify``.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .assembly import (LinearSystem, ManufacturedCase, SchemeParams, StabilityWarning,
                       apply_dirichlet, assemble_fixed, assemble_moving,
                       assemble_norm_matrices)
from .geometry import GeometryMap, mesh_metrics
from .linsolve import solve_direct, solve_gmres
from .postproc import (ConvergenceReport, DiscreteField, LevelRecord, error_energy,
                       error_l2, estimate_inverse_constant, mesh_ratio, rates)
from .splines import KnotVector, refine_uniform, single_span
from .tensor_space import build_space, classify_dirichlet

__all__ = [
    'CaseConfig',
    'CaseDefinition',
    'builtin_cases',
    'load_config',
    'run_case',
    'emit_csv',
    'run_verification',
    'cli_main',
    'main',
]

CSV_HEADER = 'level,dofs,h,error_l2,rate_l2,error_energy,rate_energy,solver,iters,residual,time_s'
DIRECT_DOF_LIMIT = 200_000


# ---------------------------------------------------------------------------
# built-in cases

def _sin_solution(d: int):
    """Manufactured family u = sin(pi x_1) ... sin(pi x_d) sin(pi t)."""

    def space_factor(x):
        out = np.ones(x.shape[0])
        for a in range(d):
            out *= np.sin(np.pi * x[:, a])
        return out

    def u(x):
        return space_factor(x) * np.sin(np.pi * x[:, d])

    def u_t(x):
        return space_factor(x) * np.pi * np.cos(np.pi * x[:, d])

    def grad_u(x):
        out = np.empty((x.shape[0], d))
        st = np.sin(np.pi * x[:, d])
        for a in range(d):
            g = np.pi * np.cos(np.pi * x[:, a]) * st
            for b in range(d):
                if b != a:
                    g *= np.sin(np.pi * x[:, b])
            out[:, a] = g
        return out

    def f(x):
        return space_factor(x) * np.pi * (np.cos(np.pi * x[:, d])
                                          + d * np.pi * np.sin(np.pi * x[:, d]))

    return u, u_t, grad_u, f


@dataclass(frozen=True)
class CaseDefinition:
    """A manufactured case together with its coarse geometry map."""

    case: ManufacturedCase
    geometry: GeometryMap
    description: str


def _make_geometry(degrees, control_points, weights=None) -> GeometryMap:
    kvs = [single_span(p) for p in degrees]
    space = build_space(kvs, weights)
    return GeometryMap(space, np.asarray(control_points, dtype=float))


def _make_case(name, d, moving) -> ManufacturedCase:
    u, u_t, grad_u, f = _sin_solution(d)
    return ManufacturedCase(name, d, moving, u, u_t, grad_u, f)


def builtin_cases() -> dict:
    """The shipped model problems, keyed by case id."""
    quarter = 1.0 - 0.25  # inner radius of the curvilinear motion at mid-time
    cases = {
        'fixed-1d': CaseDefinition(
            _make_case('fixed-1d', 1, False),
            _make_geometry([1, 1], [[0, 0], [1, 0], [0, 1], [1, 1]]),
            'unit square cylinder, 1d heat equation'),
        'fixed-2d': CaseDefinition(
            _make_case('fixed-2d', 2, False),
            _make_geometry([1, 1, 1], [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0],
                                       [0, 0, 1], [1, 0, 1], [0, 1, 1], [1, 1, 1]]),
            'unit cube cylinder, 2d heat equation'),
        'moving-simple-1d': CaseDefinition(
            _make_case('moving-simple-1d', 1, True),
            _make_geometry([1, 1], [[0, 0], [1, 0], [-0.5, 1], [1.5, 1]]),
            'linearly expanding interval (-t/2, 1 + t/2)'),
        'moving-curvi-1d': CaseDefinition(
            _make_case('moving-curvi-1d', 1, True),
            _make_geometry([1, 2], [[0, 0], [1, 0],
                                    [0.25, 0.5], [quarter, 0.5],
                                    [0, 1], [1, 1]]),
            'interval contracting to (t(1-t)/2, 1 - t(1-t)/2) and back'),
        'moving-curvi-2d': CaseDefinition(
            _make_case('moving-curvi-2d', 2, True),
            _make_geometry([1, 1, 2], [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0],
                                       [0.25, 0, 0.5], [quarter, 0, 0.5],
                                       [0.25, 1, 0.5], [quarter, 1, 0.5],
                                       [0, 0, 1], [1, 0, 1], [0, 1, 1], [1, 1, 1]]),
            'rectangle with first coordinate contracting as t(1-t)/2'),
    }
    return cases


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class CaseConfig:
    """One convergence run: case, degree, refinement depth, scheme and solver."""

    case: str
    degree: int = 2
    levels: int = 5
    theta: float = 0.1
    solver: str = 'auto'
    solver_tol: float = 1e-10
    gmres_restart: int = 50
    gmres_max_iter: int = 5000
    out: str | None = None
    deterministic: bool = False
    geometry: dict | None = None
    moving: bool | None = None

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError(f'degree must be at least 1, got {self.degree}')
        if self.levels < 1:
            raise ValueError(f'levels must be at least 1, got {self.levels}')
        if not 0.0 < self.theta:
            raise ValueError(f'theta must be positive, got {self.theta}')
        if self.solver not in ('auto', 'direct', 'gmres'):
            raise ValueError(f"solver must be 'auto', 'direct' or 'gmres', got {self.solver!r}")
        if self.case != 'custom' and self.case not in builtin_cases():
            raise ValueError(f'unknown case {self.case!r}; see list-cases')
        if self.case == 'custom':
            if self.geometry is None:
                raise ValueError("case 'custom' needs a geometry block")
            if self.moving is None:
                raise ValueError("case 'custom' needs 'moving': true|false")


_CONFIG_KEYS = {'case', 'degree', 'levels', 'theta', 'solver', 'solver_tol',
                'gmres_restart', 'gmres_max_iter', 'out', 'deterministic',
                'geometry', 'moving'}


def load_config(path: str) -> CaseConfig:
    """Read a JSON run configuration."""
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError('config must be a JSON object')
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f'unknown config keys: {sorted(unknown)}')
    if 'case' not in raw:
        raise ValueError("config needs a 'case' entry")
    return CaseConfig(**raw)


def _custom_definition(config: CaseConfig) -> CaseDefinition:
    geo = config.geometry
    try:
        kvs = [KnotVector(np.asarray(k, dtype=float), int(p))
               for k, p in zip(geo['knots'], geo['degrees'], strict=True)]
        cp = np.asarray(geo['control_points'], dtype=float)
        weights = geo.get('weights')
    except (KeyError, TypeError) as exc:
        raise ValueError(f'bad custom geometry block: {exc}') from exc
    space = build_space(kvs, None if weights is None else np.asarray(weights, dtype=float))
    gmap = GeometryMap(space, cp)
    d = space.ndim - 1
    case = _make_case('custom', d, bool(config.moving))
    return CaseDefinition(case, gmap, 'user-supplied geometry, standard sine solution')


def resolve_case(config: CaseConfig) -> CaseDefinition:
    if config.case == 'custom':
        return _custom_definition(config)
    return builtin_cases()[config.case]


# ---------------------------------------------------------------------------
# driver

def solution_space(geom: GeometryMap, degree: int, level: int):
    """Degree-``degree`` spline space aligned with the geometry, refined ``level`` times."""
    kvs = []
    for kv_g in geom.space.knot_vectors:
        interior = kv_g.breakpoints[1:-1]
        knots = np.concatenate((np.zeros(degree + 1), interior, np.ones(degree + 1)))
        kv = KnotVector(knots, degree)
        for _ in range(level):
            kv = refine_uniform(kv)
        kvs.append(kv)
    return build_space(kvs)


def _solve(system: LinearSystem, config: CaseConfig):
    n = system.rhs.size
    method = config.solver
    if method == 'auto':
        method = 'direct' if n <= DIRECT_DOF_LIMIT else 'gmres'
    if method == 'direct':
        return solve_direct(system.matrix, system.rhs)
    return solve_gmres(system.matrix, system.rhs, tol=config.solver_tol,
                       restart=config.gmres_restart, max_iter=config.gmres_max_iter)


def run_case(config: CaseConfig) -> ConvergenceReport:
    """Run the refinement sweep described by ``config``.

    Levels 0 .. levels-1 halve every knot span in turn; each level
    assembles the scheme, applies Dirichlet data by boundary projection,
    solves, and records errors.  Rates are attached afterwards.
    """
    definition = resolve_case(config)
    case, geom = definition.case, definition.geometry
    d = case.d
    records = []
    errs_l2, errs_en, raw = [], [], []
    c_inv = None
    for level in range(config.levels):
        space = solution_space(geom, config.degree, level)
        dofmap = classify_dirichlet(space)
        mesh = mesh_metrics(geom, space)
        theta_bound = None
        if case.moving:
            if c_inv is None or level <= 2:
                c_inv = estimate_inverse_constant(space, geom, mesh)
            theta_bound = 1.0 / (2.0 * c_inv * mesh_ratio(mesh))
        params = SchemeParams(config.theta, mesh.h_hat, theta_bound)
        if case.moving:
            full = assemble_moving(space, geom, case, params)
        else:
            full = assemble_fixed(space, geom, case, params)
        reduced = apply_dirichlet(full, dofmap, case, space, geom)
        x, report = _solve(reduced, config)
        coeffs = reduced.dirichlet_values.copy()
        coeffs[dofmap.free] = x
        field = DiscreteField(space, geom, coeffs)
        e2 = error_l2(field, case)
        ee = error_energy(field, case, params, moving=case.moving)
        errs_l2.append(e2)
        errs_en.append(ee)
        raw.append((level, space.dim, params.h, report))
    r2 = rates(errs_l2)
    re = rates(errs_en)
    for k, (level, dofs, h, report) in enumerate(raw):
        records.append(LevelRecord(level, dofs, h, errs_l2[k], float(r2[k]),
                                   errs_en[k], float(re[k]), report))
    return ConvergenceReport(case.name, config.degree, config.theta, case.moving,
                             tuple(records))


def emit_csv(report: ConvergenceReport, path: str, deterministic: bool = False):
    """Write one row per level; floats in 6-significant-digit scientific form.

    ``deterministic`` zeroes the wall-time column so identical runs give
    byte-identical files.
    """
    lines = [CSV_HEADER]
    for r in report.records:
        t = 0.0 if deterministic else r.solve.time_s
        lines.append(','.join([
            str(r.level), str(r.dofs), f'{r.h:.5e}',
            f'{r.error_l2:.5e}', f'{r.rate_l2:.5e}',
            f'{r.error_energy:.5e}', f'{r.rate_energy:.5e}',
            r.solve.method, str(r.solve.iterations),
            f'{r.solve.residual:.5e}', f'{t:.5e}',
        ]))
    with open(path, 'w', newline='\n') as fh:
        fh.write('\n'.join(lines) + '\n')


def _format_table(report: ConvergenceReport) -> str:
    head = f'{"level":>5} {"dofs":>8} {"h":>12} {"L2 error":>12} {"rate":>6} {"energy":>12} {"rate":>6}'
    rows = [head]
    for r in report.records:
        rows.append(f'{r.level:>5} {r.dofs:>8} {r.h:>12.5e} {r.error_l2:>12.5e} '
                    f'{r.rate_l2:>6.2f} {r.error_energy:>12.5e} {r.rate_energy:>6.2f}')
    return '\n'.join(rows)


# ---------------------------------------------------------------------------
# verification suite

def _check_partition_of_unity():
    rng = np.random.default_rng(7)
    kv = KnotVector(np.array([0, 0, 0, 0.2, 0.5, 0.5, 0.8, 1, 1, 1.]), 2)
    from .splines import eval_basis
    worst = 0.0
    for xi in rng.uniform(0.0, 1.0, 500):
        row = eval_basis(kv, float(xi))
        worst = max(worst, abs(row.values.sum() - 1.0),
                    abs(row.first_derivs.sum()) * 1e-3,
                    abs(row.second_derivs.sum()) * 1e-6)
    return worst < 1e-12, f'max deviation {worst:.2e}'


def _check_quadrature():
    from .quadrature import gauss_1d
    worst = 0.0
    for n in range(1, 9):
        rule = gauss_1d(n)
        for k in range(2 * n):
            val = float(rule.weights @ rule.nodes[:, 0] ** k)
            worst = max(worst, abs(val - 1.0 / (k + 1)))
    return worst < 1e-14, f'max monomial defect {worst:.2e}'


def _check_geometry_derivatives():
    from .geometry import hessian, jacobian, map_point
    rng = np.random.default_rng(11)
    worst = 0.0
    for name in ('moving-simple-1d', 'moving-curvi-1d', 'moving-curvi-2d'):
        geom = builtin_cases()[name].geometry
        nd = geom.ndim
        e1 = 1e-5   # first differences: truncation-limited
        e2 = 1e-4   # second differences: roundoff grows as eps / e^2
        for _ in range(10):
            xi = rng.uniform(0.1, 0.9, nd)
            J, _ = jacobian(geom, xi)
            H = hessian(geom, xi)
            for a in range(nd):
                dp, dm = xi.copy(), xi.copy()
                dp[a] += e1
                dm[a] -= e1
                fd = (map_point(geom, dp) - map_point(geom, dm)) / (2 * e1)
                worst = max(worst, float(np.abs(fd - J[:, a]).max()))
                dp, dm = xi.copy(), xi.copy()
                dp[a] += e2
                dm[a] -= e2
                fd2 = (map_point(geom, dp) - 2 * map_point(geom, xi) + map_point(geom, dm)) / e2**2
                worst = max(worst, float(np.abs(fd2 - H[:, a, a]).max()) * 1e-2)
    return worst < 1e-8, f'max FD defect {worst:.2e}'


def _coercivity_defect(name: str, degree: int, level: int, theta_skew: float) -> float:
    definition = builtin_cases()[name]
    case, geom = definition.case, definition.geometry
    space = solution_space(geom, degree, level)
    dofmap = classify_dirichlet(space)
    mesh = mesh_metrics(geom, space)
    params = SchemeParams(0.1, mesh.h_hat)
    system = assemble_fixed(space, geom, case, params)
    norm_params = SchemeParams(0.1 * theta_skew, mesh.h_hat)
    norms = assemble_norm_matrices(space, geom, norm_params)
    free = dofmap.free
    K = system.matrix[free][:, free]
    N = norms.n_fixed[free][:, free]
    G = norms.face_gradient[free][:, free]
    th = norm_params.theta * norm_params.h
    rng = np.random.default_rng(23)
    worst = 0.0
    for _ in range(20):
        v = rng.standard_normal(free.size)
        lhs = float(v @ (K @ v))
        rhs = float(v @ (N @ v)) + 0.5 * th * float(v @ (G @ v))
        worst = max(worst, abs(lhs - rhs) / rhs)
    return worst


def _check_coercivity_identity(theta_skew: float):
    worst = max(_coercivity_defect('fixed-1d', 1, 2, theta_skew),
                _coercivity_defect('fixed-1d', 2, 2, theta_skew),
                _coercivity_defect('fixed-2d', 1, 1, theta_skew))
    return worst < 1e-10, f'max relative defect {worst:.2e}'


def _check_forms_agree():
    definition = builtin_cases()['fixed-1d']
    case, geom = definition.case, definition.geometry
    space = solution_space(geom, 2, 2)
    dofmap = classify_dirichlet(space)
    mesh = mesh_metrics(geom, space)
    params = SchemeParams(0.1, mesh.h_hat)
    a_sys = assemble_fixed(space, geom, case, params)
    b_sys = assemble_moving(space, geom, case, params)
    free = dofmap.free
    diff = (a_sys.matrix[free][:, free] - b_sys.matrix[free][:, free]).toarray()
    worst = float(np.abs(diff).max())
    return worst < 1e-12, f'max entry difference {worst:.2e}'


def _check_solvers_agree():
    config = CaseConfig(case='fixed-1d', degree=1, levels=1)
    definition = resolve_case(config)
    case, geom = definition.case, definition.geometry
    space = solution_space(geom, 1, 4)
    dofmap = classify_dirichlet(space)
    mesh = mesh_metrics(geom, space)
    params = SchemeParams(0.1, mesh.h_hat)
    system = apply_dirichlet(assemble_fixed(space, geom, case, params),
                             dofmap, case, space, geom)
    xd, _ = solve_direct(system.matrix, system.rhs)
    xg, _ = solve_gmres(system.matrix, system.rhs)
    gap = float(np.linalg.norm(xd - xg) / np.linalg.norm(xd))
    return gap < 1e-8, f'relative gap {gap:.2e}'


def _check_moving_coercivity():
    details = []
    ok = True
    for name in ('moving-simple-1d', 'moving-curvi-1d', 'moving-curvi-2d'):
        definition = builtin_cases()[name]
        case, geom = definition.case, definition.geometry
        level = 1 if case.d == 2 else 2
        space = solution_space(geom, 2, level)
        dofmap = classify_dirichlet(space)
        mesh = mesh_metrics(geom, space)
        c_inv = estimate_inverse_constant(space, geom, mesh)
        bound = 1.0 / (2.0 * c_inv * mesh_ratio(mesh))
        params = SchemeParams(0.1, mesh.h_hat, bound)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter('always')
            system = assemble_moving(space, geom, case, params)
        warned = any(issubclass(w.category, StabilityWarning) for w in caught)
        if params.theta >= bound:
            ok &= warned
            details.append(f'{name}: bound {bound:.3f} violated, warning {"raised" if warned else "MISSING"}')
            continue
        norms = assemble_norm_matrices(space, geom, params)
        free = dofmap.free
        B = system.matrix[free][:, free]
        N = norms.n_moving[free][:, free]
        rng = np.random.default_rng(5)
        margin = np.inf
        for _ in range(20):
            v = rng.standard_normal(free.size)
            margin = min(margin, float(v @ (B @ v)) / float(v @ (N @ v)))
        ok &= margin >= 0.5 - 1e-12
        details.append(f'{name}: bound {bound:.3f}, min ratio {margin:.3f}')
    return ok, '; '.join(details)


def _check_manufactured_residuals():
    rng = np.random.default_rng(3)
    worst = 0.0
    for name, definition in builtin_cases().items():
        case = definition.case
        d = case.d
        e = 1e-5
        pts = rng.uniform(0.1, 0.9, size=(100, d + 1))
        f_ref = case.f(pts)
        lap = np.zeros(100)
        for a in range(d):
            dp, dm = pts.copy(), pts.copy()
            dp[:, a] += e
            dm[:, a] -= e
            lap += (case.u(dp) - 2 * case.u(pts) + case.u(dm)) / e**2
        dp, dm = pts.copy(), pts.copy()
        dp[:, d] += e
        dm[:, d] -= e
        ut = (case.u(dp) - case.u(dm)) / (2 * e)
        defect = np.abs(f_ref - (ut - lap)).max() / max(1.0, np.abs(f_ref).max())
        worst = max(worst, float(defect))
    return worst < 1e-5, f'max PDE residual {worst:.2e}'


def run_verification(theta_skew: float = 1.0, stream=None) -> bool:
    """Run the consistency checks; print one PASS/FAIL line per check.

    ``theta_skew`` scales theta on the norm side of the coercivity
    identity only; any value other than 1 must make that check fail,
    which is itself checked by the test suite.
    """
    stream = stream or sys.stdout
    checks = [
        ('partition-of-unity', _check_partition_of_unity),
        ('quadrature-exactness', _check_quadrature),
        ('geometry-derivatives', _check_geometry_derivatives),
        ('coercivity-identity', lambda: _check_coercivity_identity(theta_skew)),
        ('fixed-forms-agree', _check_forms_agree),
        ('solvers-agree', _check_solvers_agree),
        ('moving-coercivity', _check_moving_coercivity),
        ('manufactured-residuals', _check_manufactured_residuals),
    ]
    all_ok = True
    for name, fn in checks:
        ok, detail = fn()
        all_ok &= ok
        print(f'{"PASS" if ok else "FAIL"} {name}: {detail}', file=stream)
    return all_ok


# ---------------------------------------------------------------------------
# command line

def cli_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog='spacetime-iga',
        description='Space-time isogeometric convergence studies for the heat equation.')
    sub = parser.add_subparsers(dest='command', required=True)

    p_run = sub.add_parser('run', help='run a convergence study from a JSON config')
    p_run.add_argument('--config', required=True, help='path to JSON configuration')
    p_run.add_argument('--degree', type=int, help='override spline degree')
    p_run.add_argument('--levels', type=int, help='override number of refinement levels')
    p_run.add_argument('--theta', type=float, help='override stabilization parameter')
    p_run.add_argument('--solver', choices=['direct', 'gmres'], help='override solver')
    p_run.add_argument('--out', help='override CSV output path')
    p_run.add_argument('--deterministic', action='store_true',
                       help='byte-stable output (zeroes timing columns)')

    sub.add_parser('list-cases', help='list built-in cases')

    p_ver = sub.add_parser('verify', help='run the self-verification suite')
    p_ver.add_argument('--theta-skew', type=float, default=1.0,
                       help='fault-injection factor on the coercivity check (default 1.0)')

    args = parser.parse_args(argv)

    if args.command == 'list-cases':
        for name, definition in builtin_cases().items():
            print(f'{name:<20} d={definition.case.d} '
                  f'{"moving" if definition.case.moving else "fixed "} {definition.description}')
        return 0

    if args.command == 'verify':
        return 0 if run_verification(theta_skew=args.theta_skew) else 1

    try:
        config = load_config(args.config)
        overrides = {}
        for key in ('degree', 'levels', 'theta', 'solver', 'out'):
            value = getattr(args, key)
            if value is not None:
                overrides[key] = value
        if args.deterministic:
            overrides['deterministic'] = True
        if overrides:
            config = replace(config, **overrides)
    except (OSError, ValueError, TypeError, json.JSONDecodeError) as exc:
        print(f'error: {exc}', file=sys.stderr)
        return 2

    report = run_case(config)
    print(f'case {report.case}, degree {report.degree}, theta {report.theta}')
    print(_format_table(report))
    if config.out:
        emit_csv(report, config.out, deterministic=config.deterministic)
        print(f'wrote {config.out}')
    return 0


def main() -> None:
    sys.exit(cli_main())
