"""Tensor-product spline/NURBS spaces on the parameter cube.

A space over the ``dim``-cube is the product of ``dim`` univariate
B-spline spaces, optionally weighted to form a NURBS basis.  The last
parameter direction always plays the role of time; directions are
indexed from zero, and flattened multi-indices run with direction 0
fastest, so ``flat = i0 + n0 * (i1 + n1 * i2)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .splines import KnotVector, eval_basis

__all__ = [
    'DiscreteSpace',
    'MultivariateBasis',
    'DofMap',
    'build_space',
    'eval_multivariate',
    'classify_dirichlet',
]


@dataclass(frozen=True)
class DiscreteSpace:
    """Tensor-product discrete space, B-spline or NURBS.

    Parameters
    ----------
    knot_vectors : tuple[KnotVector, ...]
        One univariate factor per parameter direction; the last one is
        the time direction.
    weights : np.ndarray or None
        Flat array of positive NURBS weights in lexicographic dof order
        (direction 0 fastest), or None for a plain B-spline space.
    """

    knot_vectors: tuple
    weights: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, 'knot_vectors', tuple(self.knot_vectors))
        if self.ndim < 2:
            raise ValueError('space-time spaces need at least two directions')
        if self.weights is not None:
            w = np.ascontiguousarray(np.asarray(self.weights, dtype=float))
            if w.shape != (self.dim,):
                raise ValueError(f'weights must have shape ({self.dim},), got {w.shape}')
            if np.any(w <= 0.0):
                raise ValueError('NURBS weights must be positive')
            object.__setattr__(self, 'weights', w)

    @property
    def ndim(self) -> int:
        """Number of parameter directions (spatial dimension + 1)."""
        return len(self.knot_vectors)

    @property
    def dims(self) -> tuple:
        """Per-direction basis counts ``(n_0, ..., n_{dim-1})``."""
        return tuple(kv.n for kv in self.knot_vectors)

    @property
    def dim(self) -> int:
        """Total number of basis functions."""
        return int(np.prod(self.dims))

    @property
    def degrees(self) -> tuple:
        return tuple(kv.degree for kv in self.knot_vectors)

    @property
    def strides(self) -> tuple:
        s, out = 1, []
        for n in self.dims:
            out.append(s)
            s *= n
        return tuple(out)

    def flat_index(self, multi) -> int:
        return int(sum(i * s for i, s in zip(multi, self.strides)))

    def multi_index(self, flat: int) -> tuple:
        out = []
        for n in self.dims:
            out.append(flat % n)
            flat //= n
        return tuple(out)


@dataclass(frozen=True)
class MultivariateBasis:
    """Active basis functions at one parameter point.

    ``active[m]`` is the flat dof index of the m-th non-vanishing
    function; ``values``, ``gradients`` and ``hessians`` are its value
    and parameter-space derivatives there.
    """

    active: np.ndarray
    values: np.ndarray
    gradients: np.ndarray
    hessians: np.ndarray


@dataclass(frozen=True)
class DofMap:
    """Partition of the dofs of a space into Dirichlet and free sets.

    ``dirichlet_mask`` flags the boundary-condition carriers, ``free``
    lists the remaining flat indices in increasing order, and
    ``free_inverse[flat]`` gives the position within ``free`` (-1 on
    Dirichlet dofs).
    """

    dirichlet_mask: np.ndarray
    free: np.ndarray
    free_inverse: np.ndarray

    @property
    def n_free(self) -> int:
        return self.free.size


def build_space(knot_vectors, weights=None) -> DiscreteSpace:
    """Construct a tensor-product space from univariate knot vectors."""
    return DiscreteSpace(tuple(knot_vectors), weights)


def _tensor_outer(mats):
    # mats[a]: (m_a,) univariate rows; returns flat product, direction 0 slowest
    out = mats[0]
    for m in mats[1:]:
        out = (out[:, None] * m[None, :]).ravel()
    return out


def eval_multivariate(space: DiscreteSpace, xi, max_deriv: int = 2) -> MultivariateBasis:
    """Evaluate all non-vanishing multivariate basis functions at ``xi``.

    Returns parameter-space values, gradients and Hessians of the active
    functions.  For NURBS spaces the rational quotient rule is applied
    through second order; the active set is unchanged by weighting.

    Parameters
    ----------
    space : DiscreteSpace
    xi : array_like
        Point in the closed parameter cube, length ``space.ndim``.
    max_deriv : int
        Highest derivative order needed (0, 1 or 2); higher rows are
        zero-filled.
    """
    xi = np.asarray(xi, dtype=float)
    nd = space.ndim
    if xi.shape != (nd,):
        raise ValueError(f'expected point of length {nd}, got shape {xi.shape}')
    rows = [eval_basis(kv, x, max_deriv) for kv, x in zip(space.knot_vectors, xi)]

    idx = [np.arange(r.first_active, r.span + 1) for r in rows]
    grids = np.meshgrid(*idx, indexing='ij')
    active = sum(g.ravel() * s for g, s in zip(grids, space.strides)).astype(np.int64)

    vals = [r.values for r in rows]
    d1 = [r.first_derivs for r in rows]
    d2 = [r.second_derivs for r in rows]

    m = active.size
    values = _tensor_outer(vals)
    gradients = np.zeros((m, nd))
    hessians = np.zeros((m, nd, nd))
    if max_deriv >= 1:
        for a in range(nd):
            gradients[:, a] = _tensor_outer([d1[b] if b == a else vals[b] for b in range(nd)])
    if max_deriv >= 2:
        for a in range(nd):
            for b in range(a, nd):
                if a == b:
                    h = _tensor_outer([d2[c] if c == a else vals[c] for c in range(nd)])
                else:
                    h = _tensor_outer([d1[c] if c in (a, b) else vals[c] for c in range(nd)])
                hessians[:, a, b] = h
                hessians[:, b, a] = h

    if space.weights is not None:
        w = space.weights[active]
        bw = values * w
        gw = gradients * w[:, None]
        hw = hessians * w[:, None, None]
        W = bw.sum()
        Wg = gw.sum(axis=0)
        Wh = hw.sum(axis=0)
        values = bw / W
        if max_deriv >= 1:
            gradients = (gw - values[:, None] * Wg[None, :]) / W
        if max_deriv >= 2:
            hessians = (hw
                        - gradients[:, :, None] * Wg[None, None, :]
                        - gradients[:, None, :] * Wg[None, :, None]
                        - values[:, None, None] * Wh[None, :, :]) / W

    return MultivariateBasis(active, values, gradients, hessians)


def classify_dirichlet(space: DiscreteSpace) -> DofMap:
    """Split dofs into Dirichlet carriers and true unknowns.

    A dof is a Dirichlet carrier when its multi-index touches the lateral
    boundary in any spatial direction or the initial face in time; the
    terminal face stays free.  With open knot vectors this is exactly the
    set of basis functions with a non-zero trace on the parabolic
    boundary of the cube.
    """
    dims = space.dims
    if any(n < 2 for n in dims):
        raise ValueError(f'need at least two basis functions per direction, got dims {dims}')
    nd = space.ndim
    mask_nd = np.zeros(dims[::-1], dtype=bool)  # axes ordered slowest first
    for a in range(nd - 1):  # spatial directions: both ends
        axis = nd - 1 - a
        sl = [slice(None)] * nd
        sl[axis] = 0
        mask_nd[tuple(sl)] = True
        sl[axis] = dims[a] - 1
        mask_nd[tuple(sl)] = True
    sl = [slice(None)] * nd  # time direction: initial face only
    sl[0] = 0
    mask_nd[tuple(sl)] = True

    # axes are (slowest ... fastest); flat order wants direction 0 fastest
    dirichlet_mask = mask_nd.ravel(order='C')
    free = np.flatnonzero(~dirichlet_mask)
    free_inverse = np.full(space.dim, -1, dtype=np.int64)
    free_inverse[free] = np.arange(free.size)
    return DofMap(dirichlet_mask, free, free_inverse)
