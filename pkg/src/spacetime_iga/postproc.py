"""Error measures, convergence rates and stability constants.

Errors against a manufactured solution are integrated element by element
with a quadrature one point richer than assembly, so the reported norms
are not polluted by the integration of the scheme itself.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ._batch import ElementBatcher
from .assembly import ManufacturedCase, SchemeParams
from .geometry import GeometryMap, PhysicalMesh, jacobian, pullback_derivatives
from .linsolve import SolveReport
from .tensor_space import DiscreteSpace, eval_multivariate

__all__ = [
    'DiscreteField',
    'FieldSample',
    'LevelRecord',
    'ConvergenceReport',
    'eval_field',
    'error_l2',
    'error_energy',
    'rates',
    'estimate_inverse_constant',
    'mesh_ratio',
]


@dataclass(frozen=True)
class DiscreteField:
    """Spline/NURBS function given by coefficients over a space."""

    space: DiscreteSpace
    geom: GeometryMap
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.ascontiguousarray(np.asarray(self.coefficients, dtype=float))
        if c.shape != (self.space.dim,):
            raise ValueError(f'coefficients must have shape ({self.space.dim},), got {c.shape}')
        object.__setattr__(self, 'coefficients', c)


@dataclass(frozen=True)
class FieldSample:
    """Value, spatial gradient and time derivative at one point."""

    value: float
    grad_x: np.ndarray
    u_t: float


def eval_field(field: DiscreteField, xi) -> FieldSample:
    """Evaluate a discrete field at a parameter point, physically.

    The gradient is split into its spatial part and the time derivative
    according to the geometry's space-time axes.
    """
    mb = eval_multivariate(field.space, xi, max_deriv=1)
    J, _ = jacobian(field.geom, xi)
    _, g, _ = pullback_derivatives(J, None, mb.values, mb.gradients)
    c = field.coefficients[mb.active]
    grad = c @ g
    return FieldSample(float(c @ mb.values), grad[:-1], float(grad[-1]))


def _error_orders(space, orders):
    if orders is not None:
        return orders
    return [p + 2 for p in space.degrees]


def error_l2(field: DiscreteField, case: ManufacturedCase, orders=None) -> float:
    """L2(Q) distance between the field and the exact solution."""
    batcher = ElementBatcher(field.space, field.geom, _error_orders(field.space, orders))
    total = 0.0
    for el in batcher.elements(need=0):
        diff = el.val @ field.coefficients[el.dofs] - case.u(el.x)
        total += float(el.w @ diff**2)
    return np.sqrt(total)


def error_energy(field: DiscreteField, case: ManufacturedCase, params: SchemeParams,
                 moving: bool | None = None, orders=None) -> float:
    """Discrete energy norm of the error.

    The fixed-domain norm integrates ``|grad_x e|^2 + theta*h (dt e)^2``
    over the cylinder plus ``e^2 / 2`` on the terminal face; the moving
    variant (default when the case moves) adds ``theta*h |grad_x e|^2``
    on the terminal face.
    """
    if moving is None:
        moving = case.moving
    th = params.theta * params.h
    d = field.space.ndim - 1
    c = field.coefficients
    batcher = ElementBatcher(field.space, field.geom, _error_orders(field.space, orders))
    total = 0.0
    for el in batcher.elements(need=1):
        ca = c[el.dofs]
        e_grad = np.einsum('qma,m->qa', el.grad, ca)
        e_grad[:, :d] -= case.grad_u(el.x)
        e_grad[:, d] -= case.u_t(el.x)
        total += float(el.w @ (e_grad[:, :d] ** 2).sum(axis=1))
        total += th * float(el.w @ e_grad[:, d] ** 2)
    for el in batcher.faces(d, 1, need=1):
        ca = c[el.dofs]
        diff = el.val @ ca - case.u(el.x)
        total += 0.5 * float(el.w @ diff**2)
        if moving:
            e_gx = np.einsum('qma,m->qa', el.grad[:, :, :d], ca) - case.grad_u(el.x)
            total += th * float(el.w @ (e_gx**2).sum(axis=1))
    return np.sqrt(total)


def rates(errors) -> np.ndarray:
    """Dyadic convergence rates ``log2(e_{k-1} / e_k)``; first entry 0.

    Levels with non-positive errors on either side get NaN.
    """
    errors = np.asarray(errors, dtype=float)
    out = np.zeros(errors.size)
    for k in range(1, errors.size):
        if errors[k - 1] > 0.0 and errors[k] > 0.0:
            out[k] = np.log2(errors[k - 1] / errors[k])
        else:
            out[k] = np.nan
    return out


def estimate_inverse_constant(space: DiscreteSpace, geom: GeometryMap,
                              mesh: PhysicalMesh, orders=None) -> float:
    """Estimate of the inverse-inequality constant of the space.

    For each element the largest generalized eigenvalue of the local
    (full space-time) stiffness against the local mass matrix bounds
    ``||grad v|| / ||v||``; scaled by the element size it gives the
    sampled constant ``C`` with ``||grad v||_K <= C / h_K ||v||_K``.
    """
    batcher = ElementBatcher(space, geom, _error_orders(space, orders))
    worst = 0.0
    for el in batcher.elements(need=1):
        gw = el.grad * el.w[:, None, None]
        stiff = np.einsum('qia,qja->ij', gw, el.grad)
        mass = (el.val * el.w[:, None]).T @ el.val
        lam = scipy.linalg.eigh(stiff, mass, eigvals_only=True)[-1]
        worst = max(worst, mesh.h_elem[el.index] * np.sqrt(max(lam, 0.0)))
    return float(worst)


def mesh_ratio(mesh: PhysicalMesh) -> float:
    """Quasi-uniformity ratio ``h / min_K h_K``."""
    return float(mesh.h / mesh.h_elem.min())


@dataclass(frozen=True)
class LevelRecord:
    """One refinement level of a convergence study."""

    level: int
    dofs: int
    h: float
    error_l2: float
    rate_l2: float
    error_energy: float
    rate_energy: float
    solve: SolveReport


@dataclass(frozen=True)
class ConvergenceReport:
    """Per-level records of one case/degree run."""

    case: str
    degree: int
    theta: float
    moving: bool
    records: tuple

    @property
    def errors_l2(self) -> np.ndarray:
        return np.array([r.error_l2 for r in self.records])

    @property
    def errors_energy(self) -> np.ndarray:
        return np.array([r.error_energy for r in self.records])
