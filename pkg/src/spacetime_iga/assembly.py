"""Assembly of the stabilized space-time Galerkin forms.

Two discrete bilinear forms are provided.  On fixed spatial domains

    a_h(u, v) = int_Q  dt(u) v + theta*h dt(u) dt(v)
              + grad_x(u).grad_x(v) + theta*h grad_x(u).grad_x(dt(v)),

and on moving domains the variant with the time derivative moved onto
the trial function's spatial gradient,

    b_h(u, v) = int_Q  dt(u) v + theta*h dt(u) dt(v)
              + grad_x(u).grad_x(v) - theta*h dt(grad_x(u)).grad_x(v)
              + theta*h int_{Sigma_T} grad_x(u).grad_x(v) ds,

both tested against v + theta*h dt(v) on the right-hand side.  The global
mesh size h enters the stabilization uniformly; matrices are returned
over the full dof set and reduced by :func:`apply_dirichlet`.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ._batch import ElementBatcher
from .geometry import GeometryMap
from .tensor_space import DiscreteSpace, DofMap

__all__ = [
    'SchemeParams',
    'ManufacturedCase',
    'LinearSystem',
    'NormMatrices',
    'StabilityWarning',
    'assemble_fixed',
    'assemble_moving',
    'assemble_norm_matrices',
    'boundary_l2_project',
    'apply_dirichlet',
]


class StabilityWarning(UserWarning):
    """The stabilization parameter may violate the moving-domain coercivity bound."""


@dataclass(frozen=True)
class SchemeParams:
    """Stabilization parameter ``theta`` and global mesh size ``h``.

    ``h`` is the knot-mesh size of the parameter domain
    (:attr:`PhysicalMesh.h_hat`); it scales the upwind terms and the
    discrete norms uniformly.  ``theta_bound``, when supplied, is the
    estimated admissible upper bound ``1 / (2 C_inv C_u)`` for the
    moving-domain form; assembling with ``theta >= theta_bound`` emits
    a :class:`StabilityWarning`.
    """

    theta: float
    h: float
    theta_bound: float | None = None

    def __post_init__(self):
        if not self.theta > 0.0:
            raise ValueError(f'theta must be positive, got {self.theta}')
        if not self.h > 0.0:
            raise ValueError(f'mesh size must be positive, got {self.h}')


@dataclass(frozen=True)
class ManufacturedCase:
    """Exact solution data of a model problem dt(u) - Lap(u) = f.

    All callables take physical points as an ``(n, d+1)`` array (spatial
    coordinates first, time last) and return ``(n,)`` arrays, except
    ``grad_u`` which returns ``(n, d)``.  ``u`` doubles as the Dirichlet
    and initial datum.
    """

    name: str
    d: int
    moving: bool
    u: object
    u_t: object
    grad_u: object
    f: object


@dataclass(frozen=True)
class LinearSystem:
    """Sparse system ``matrix @ x = rhs``.

    As assembled, the system ranges over all dofs and ``free`` is None.
    After :func:`apply_dirichlet` it ranges over the free dofs listed in
    ``free``, and ``dirichlet_values`` holds the full-length lifting
    vector (boundary coefficients on Dirichlet dofs, zero elsewhere).
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    dirichlet_values: np.ndarray | None = None
    free: np.ndarray | None = None


@dataclass(frozen=True)
class NormMatrices:
    """Gram matrices of the discrete norms over the full dof set.

    ``n_fixed`` induces ``|||v|||_h^2``, ``n_moving`` adds the
    ``theta*h``-weighted spatial-gradient face term for the moving-domain
    norm, and ``face_gradient`` is that face matrix alone.
    """

    n_fixed: sp.csr_matrix
    n_moving: sp.csr_matrix
    face_gradient: sp.csr_matrix


class _Accumulator:
    """Per-element triplets, merged into CSR in bounded chunks."""

    def __init__(self, n: int, flush_at: int = 4_000_000):
        self.n = n
        self.flush_at = flush_at
        self._rows, self._cols, self._vals = [], [], []
        self._pending = 0
        self._acc = None

    def add(self, dofs: np.ndarray, local: np.ndarray):
        m = dofs.size
        self._rows.append(np.repeat(dofs, m))
        self._cols.append(np.tile(dofs, m))
        self._vals.append(local.ravel())
        self._pending += m * m
        if self._pending >= self.flush_at:
            self._merge()

    def _merge(self):
        if not self._rows:
            return
        chunk = sp.coo_matrix(
            (np.concatenate(self._vals),
             (np.concatenate(self._rows), np.concatenate(self._cols))),
            shape=(self.n, self.n)).tocsr()
        self._acc = chunk if self._acc is None else self._acc + chunk
        self._rows, self._cols, self._vals = [], [], []
        self._pending = 0

    def result(self) -> sp.csr_matrix:
        self._merge()
        if self._acc is None:
            return sp.csr_matrix((self.n, self.n))
        self._acc.sum_duplicates()
        return self._acc


def _volume_terms(el, th: float, d: int, moving: bool):
    w = el.w
    val = el.val
    dt = el.grad[:, :, d]
    gx = el.grad[:, :, :d]
    mx = el.hess[:, :, :d, d]
    valw = val * w[:, None]
    dtw = dt * w[:, None]
    gxw = gx * w[:, None, None]
    local = valw.T @ dt
    local += th * (dtw.T @ dt)
    local += np.einsum('qia,qja->ij', gxw, gx)
    if moving:
        local -= th * np.einsum('qia,qja->ij', gxw, mx)
    else:
        local += th * np.einsum('qia,qja->ij', np.einsum('qia,q->qia', mx, w), gx)
    return local


def _assemble_form(space, geom, case, params, orders, moving) -> LinearSystem:
    d = space.ndim - 1
    th = params.theta * params.h
    batcher = ElementBatcher(space, geom, orders)
    acc = _Accumulator(space.dim)
    rhs = np.zeros(space.dim)
    for el in batcher.elements(need=2):
        local = _volume_terms(el, th, d, moving)
        acc.add(el.dofs, local)
        fv = case.f(el.x)
        test = el.val + th * el.grad[:, :, d]
        rhs[el.dofs] += test.T @ (el.w * fv)
    if moving:
        for el in batcher.faces(d, 1, need=1):
            gxw = el.grad[:, :, :d] * el.w[:, None, None]
            acc.add(el.dofs, th * np.einsum('qia,qja->ij', gxw, el.grad[:, :, :d]))
    return LinearSystem(acc.result(), rhs)


def assemble_fixed(space: DiscreteSpace, geom: GeometryMap, case: ManufacturedCase,
                   params: SchemeParams, orders=None) -> LinearSystem:
    """Assemble the fixed-domain form ``a_h`` and its load vector.

    Entry ``(i, j)`` is ``a_h(phi_j, phi_i)``: the test function indexes
    the row.  Quadrature defaults to ``degree + 1`` Gauss points per
    direction.
    """
    return _assemble_form(space, geom, case, params, orders, moving=False)


def assemble_moving(space: DiscreteSpace, geom: GeometryMap, case: ManufacturedCase,
                    params: SchemeParams, orders=None) -> LinearSystem:
    """Assemble the moving-domain form ``b_h`` and its load vector.

    Emits :class:`StabilityWarning` when ``params.theta_bound`` is set
    and ``theta`` does not satisfy the coercivity threshold.
    """
    if params.theta_bound is not None and params.theta >= params.theta_bound:
        warnings.warn(
            f'theta = {params.theta} exceeds the estimated coercivity bound '
            f'{params.theta_bound:.4g}; the moving-domain form may lose stability',
            StabilityWarning, stacklevel=2)
    return _assemble_form(space, geom, case, params, orders, moving=True)


def assemble_norm_matrices(space: DiscreteSpace, geom: GeometryMap,
                           params: SchemeParams, orders=None) -> NormMatrices:
    """Gram matrices of the discrete norms.

    ``n_fixed`` integrates ``|grad_x v|^2 + theta*h |dt v|^2`` over the
    cylinder plus ``v^2 / 2`` over the terminal face; ``face_gradient``
    integrates ``|grad_x v|^2`` over the terminal face.
    """
    d = space.ndim - 1
    th = params.theta * params.h
    batcher = ElementBatcher(space, geom, orders)
    acc_n = _Accumulator(space.dim)
    acc_g = _Accumulator(space.dim)
    for el in batcher.elements(need=1):
        dt = el.grad[:, :, d]
        gx = el.grad[:, :, :d]
        local = np.einsum('qia,qja->ij', gx * el.w[:, None, None], gx)
        local += th * ((dt * el.w[:, None]).T @ dt)
        acc_n.add(el.dofs, local)
    for el in batcher.faces(d, 1, need=1):
        valw = el.val * el.w[:, None]
        acc_n.add(el.dofs, 0.5 * (valw.T @ el.val))
        gxw = el.grad[:, :, :d] * el.w[:, None, None]
        acc_g.add(el.dofs, np.einsum('qia,qja->ij', gxw, el.grad[:, :, :d]))
    n_fixed = acc_n.result()
    face_gradient = acc_g.result()
    return NormMatrices(n_fixed, (n_fixed + th * face_gradient).tocsr(), face_gradient)


def boundary_l2_project(space: DiscreteSpace, geom: GeometryMap, g,
                        dirichlet_mask: np.ndarray, orders=None) -> np.ndarray:
    """L2 projection of boundary data onto the Dirichlet dofs.

    One joint projection over the lateral boundary and the initial face:
    assemble the boundary mass matrix and moment vector of ``g`` face by
    face, restrict to the Dirichlet set, solve.  Returns a full-length
    coefficient vector, zero on free dofs.
    """
    from .linsolve import solve_direct

    d = space.ndim - 1
    batcher = ElementBatcher(space, geom, orders)
    acc = _Accumulator(space.dim)
    load = np.zeros(space.dim)
    faces = [(a, side) for a in range(d) for side in (0, 1)] + [(d, 0)]
    for fixed_dir, side in faces:
        for el in batcher.faces(fixed_dir, side, need=0):
            valw = el.val * el.w[:, None]
            acc.add(el.dofs, valw.T @ el.val)
            load[el.dofs] += valw.T @ g(el.x)
    mass = acc.result()
    idx = np.flatnonzero(dirichlet_mask)
    mdd = mass[idx][:, idx].tocsr()
    values = np.zeros(space.dim)
    values[idx], _ = solve_direct(mdd, load[idx])
    return values


def apply_dirichlet(system: LinearSystem, dofmap: DofMap, case: ManufacturedCase,
                    space: DiscreteSpace, geom: GeometryMap, orders=None) -> LinearSystem:
    """Reduce a full-space system to the free dofs.

    Dirichlet coefficients come from :func:`boundary_l2_project` of the
    case's exact solution; their columns move to the right-hand side.
    """
    values = boundary_l2_project(space, geom, case.u, dofmap.dirichlet_mask, orders)
    free = dofmap.free
    lifted = system.rhs[free] - (system.matrix @ values)[free]
    reduced = system.matrix[free][:, free].tocsr()
    return LinearSystem(reduced, lifted, values, free)
