"""Spline/NURBS geometry maps from the parameter cube to space-time.

The map ``Phi`` sends the open unit cube onto the space-time cylinder;
its last component is the time coordinate.  Besides point evaluation and
derivatives, this module provides the pullback of basis derivatives to
physical coordinates and the mesh metrics (element sizes, global mesh
size) that enter the stabilized scheme.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor_space import DiscreteSpace, eval_multivariate

__all__ = [
    'GeometryMap',
    'PhysicalMesh',
    'SingularGeometryError',
    'identity_geometry',
    'map_point',
    'jacobian',
    'hessian',
    'pullback_derivatives',
    'mesh_metrics',
]


class SingularGeometryError(RuntimeError):
    """Raised when the geometry Jacobian is singular or orientation-reversing."""


@dataclass(frozen=True)
class GeometryMap:
    """Geometry map defined by a discrete space and its control points.

    ``control_points[i]`` is the physical position (spatial coordinates
    followed by time) attached to flat dof ``i`` of ``space``.  The time
    component must reproduce the parameter time linearly for the shipped
    cylinders, but that is a property of the data, not a constraint
    enforced here.
    """

    space: DiscreteSpace
    control_points: np.ndarray

    def __post_init__(self):
        cp = np.ascontiguousarray(np.asarray(self.control_points, dtype=float))
        if cp.shape != (self.space.dim, self.space.ndim):
            raise ValueError(
                f'control points must have shape {(self.space.dim, self.space.ndim)}, got {cp.shape}')
        object.__setattr__(self, 'control_points', cp)

    @property
    def ndim(self) -> int:
        return self.space.ndim


@dataclass(frozen=True)
class PhysicalMesh:
    """Element sizes of a solution space under a geometry map.

    Elements are the tensor products of the solution space's knot spans,
    enumerated in C order (direction 0 slowest).  ``h_param[e]`` is the
    Euclidean diameter of the parameter cell, ``h_elem[e]`` its physical
    size ``max ||grad Phi||_2 * h_param`` with the norm sampled at the
    element's quadrature points, and ``h`` the global mesh size.
    """

    span_arrays: tuple
    h_param: np.ndarray
    h_elem: np.ndarray

    @property
    def n_elements(self) -> int:
        return self.h_elem.size

    @property
    def shape(self) -> tuple:
        return tuple(len(s) for s in self.span_arrays)

    @property
    def h(self) -> float:
        return float(self.h_elem.max())

    @property
    def h_hat(self) -> float:
        """Global knot-mesh size: max parameter-cell diameter.

        This is the h the stabilized forms and discrete norms are scaled
        with; ``h``/``h_elem`` keep the physically mapped sizes used by
        the quasi-uniformity ratio.
        """
        return float(self.h_param.max())

    def element_spans(self, multi):
        return [tuple(self.span_arrays[a][i]) for a, i in enumerate(multi)]


def identity_geometry(space: DiscreteSpace) -> GeometryMap:
    """Geometry map fixing the parameter cube (Greville interpolation)."""
    if space.weights is not None:
        raise ValueError('identity geometry expects an unweighted space')
    axes = [kv.greville() for kv in space.knot_vectors]
    grids = np.meshgrid(*axes, indexing='ij')
    # flat dof order runs direction 0 fastest
    nd = space.ndim
    cp = np.stack([np.transpose(g, axes=range(nd - 1, -1, -1)).ravel() for g in grids], axis=1)
    return GeometryMap(space, cp)


def map_point(geom: GeometryMap, xi) -> np.ndarray:
    """Physical image of the parameter point ``xi``."""
    mb = eval_multivariate(geom.space, xi, max_deriv=0)
    return mb.values @ geom.control_points[mb.active]


def jacobian(geom: GeometryMap, xi):
    """Jacobian matrix ``J[k, a] = d Phi_k / d xi_a`` and its determinant.

    Raises ``SingularGeometryError`` unless ``det J > 0``.
    """
    mb = eval_multivariate(geom.space, xi, max_deriv=1)
    J = np.einsum('ma,mk->ka', mb.gradients, geom.control_points[mb.active])
    det = float(np.linalg.det(J))
    if not det > 0.0:
        raise SingularGeometryError(f'non-positive Jacobian determinant {det} at xi={tuple(xi)}')
    return J, det


def hessian(geom: GeometryMap, xi) -> np.ndarray:
    """Second derivatives ``H[k, a, b] = d^2 Phi_k / d xi_a d xi_b``."""
    mb = eval_multivariate(geom.space, xi, max_deriv=2)
    return np.einsum('mab,mk->kab', mb.hessians, geom.control_points[mb.active])


def pullback_derivatives(jac, hess_geom, values, grads, hessians=None):
    """Push parameter-space basis derivatives to physical coordinates.

    Gradients solve ``J^T g = g_param``; Hessians use
    ``H = J^{-T} (H_param - sum_k g_k H_geom[k]) J^{-1}`` with the
    physical gradient ``g``.  ``values`` pass through unchanged.

    Parameters
    ----------
    jac : np.ndarray
        Geometry Jacobian ``(dim, dim)`` at the point.
    hess_geom : np.ndarray or None
        Geometry second derivatives ``(dim, dim, dim)``; required when
        ``hessians`` is given unless the map is affine (pass zeros).
    values, grads, hessians : np.ndarray
        Parameter-space rows ``(m,)``, ``(m, dim)`` and optionally
        ``(m, dim, dim)`` for ``m`` basis functions.

    Returns
    -------
    (values, grads_phys, hess_phys or None)
    """
    g = np.linalg.solve(jac.T, grads.T).T
    if hessians is None:
        return values, g, None
    Jinv = np.linalg.inv(jac)
    corr = hessians - np.einsum('mk,kab->mab', g, hess_geom)
    h = np.einsum('ia,mij,jb->mab', Jinv, corr, Jinv)
    return values, g, h


def mesh_metrics(geom: GeometryMap, space: DiscreteSpace, orders=None) -> PhysicalMesh:
    """Element and global mesh sizes of ``space`` under ``geom``.

    The solution space's spans must refine the geometry's spans in every
    direction so each element sees a smooth piece of the map.  The local
    Jacobian norm is estimated by sampling at the element's quadrature
    points (``orders`` defaulting to ``degree + 1`` per direction).
    """
    nd = space.ndim
    if geom.ndim != nd:
        raise ValueError(f'geometry dimension {geom.ndim} does not match space dimension {nd}')
    for a, (kv_s, kv_g) in enumerate(zip(space.knot_vectors, geom.space.knot_vectors)):
        missing = np.setdiff1d(kv_g.breakpoints, kv_s.breakpoints)
        if missing.size:
            raise ValueError(f'geometry breakpoints {missing} not resolved by the space in direction {a}')
    from ._batch import jacobian_samples

    span_arrays = tuple(kv.spans for kv in space.knot_vectors)
    shape = tuple(len(s) for s in span_arrays)
    n_el = int(np.prod(shape))
    h_param = np.empty(n_el)
    h_elem = np.empty(n_el)
    for e, (multi, J, _) in enumerate(jacobian_samples(space, geom, orders)):
        sides = np.array([b - a for a, b in (span_arrays[a][i] for a, i in enumerate(multi))])
        h_param[e] = float(np.linalg.norm(sides))
        h_elem[e] = float(np.linalg.norm(J, ord=2, axis=(1, 2)).max()) * h_param[e]
    return PhysicalMesh(span_arrays, h_param, h_elem)
