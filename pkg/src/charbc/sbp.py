r"""
Summation-by-parts operators on uniform 1D grids.

The first-derivative operator satisfies

.. math::

    H D + (H D)^T = B = \mathrm{diag}(-1, 0, \dots, 0, 1),

with a diagonal positive norm :math:`H`, which mimics integration by parts
nodewise. Weak boundary terms enter through :func:`lifting_apply`, the
discrete counterpart of a lifting operator: ``v^T H lifting_apply(b, p)``
equals ``v_b^T p`` for every grid function ``v``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from charbc.errors import DimensionError

Array = Any


@dataclass(frozen=True)
class Grid:
    x0: float
    x1: float
    n_pts: int
    xs: Array = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.x1 > self.x0:
            raise ValueError(f"domain must satisfy x1 > x0: [{self.x0}, {self.x1}]")
        if self.n_pts < 4:
            raise ValueError(f"grid needs at least 4 points, got {self.n_pts}")
        xs = np.linspace(self.x0, self.x1, self.n_pts)
        xs.setflags(write=False)
        object.__setattr__(self, "xs", xs)

    @property
    def h(self) -> float:
        return (self.x1 - self.x0) / (self.n_pts - 1)


@dataclass(frozen=True)
class SbpOperators:
    """
    .. attribute:: d1

        First-derivative matrix, dense ``(n_pts, n_pts)``.

    .. attribute:: h_diag

        Diagonal of the norm matrix.
    """

    grid: Grid
    d1: Array
    h_diag: Array
    order: int

    @property
    def h_norm(self) -> Array:
        return np.diag(self.h_diag)

    @property
    def e_left(self) -> Array:
        e = np.zeros(self.grid.n_pts)
        e[0] = 1.0
        return e

    @property
    def e_right(self) -> Array:
        e = np.zeros(self.grid.n_pts)
        e[-1] = 1.0
        return e

    @property
    def b_matrix(self) -> Array:
        b = np.zeros((self.grid.n_pts, self.grid.n_pts))
        b[0, 0] = -1.0
        b[-1, -1] = 1.0
        return b

    def boundary_index(self, boundary: str) -> int:
        if boundary == "left":
            return 0
        if boundary == "right":
            return self.grid.n_pts - 1
        raise ValueError(f"unknown boundary '{boundary}' (expected 'left' or 'right')")


def build_sbp_21(grid: Grid) -> SbpOperators:
    """Second-order interior, first-order boundary diagonal-norm operator."""
    n, h = grid.n_pts, grid.h

    d = np.zeros((n, n))
    i = np.arange(1, n - 1)
    d[i, i - 1] = -0.5
    d[i, i + 1] = 0.5
    d[0, 0], d[0, 1] = -1.0, 1.0
    d[-1, -2], d[-1, -1] = -1.0, 1.0
    d /= h
    d.setflags(write=False)

    w = np.full(n, h)
    w[0] = w[-1] = h / 2
    w.setflags(write=False)

    return SbpOperators(grid=grid, d1=d, h_diag=w, order=2)


def discrete_energy(ops: SbpOperators, p_weight: Array, u: Array) -> float:
    """Weighted discrete norm ``sum_i H_ii u_i^T P u_i``.

    *u* is either a scalar grid function ``(n_pts,)`` or a system state
    ``(n_pts, n)``.
    """
    u = np.asarray(u, dtype=np.float64)
    p = np.atleast_2d(np.asarray(p_weight, dtype=np.float64))
    if u.ndim == 1:
        u = u[:, None]
    if u.shape[0] != ops.grid.n_pts or p.shape != (u.shape[1], u.shape[1]):
        raise DimensionError(f"state {u.shape} does not match grid {ops.grid.n_pts} and P {p.shape}")
    pointwise = np.einsum("ki,ij,kj->k", u, p, u)
    return float(ops.h_diag @ pointwise)


def lifting_apply(ops: SbpOperators, boundary: str, payload: Array) -> Array:
    """Place ``H^{-1} e_b payload`` on the grid.

    A scalar payload gives a ``(n_pts,)`` vector, an ``n``-vector payload gives
    an ``(n_pts, n)`` state.
    """
    k = ops.boundary_index(boundary)
    payload = np.asarray(payload, dtype=np.float64)
    out = np.zeros((ops.grid.n_pts,) + payload.shape)
    out[k] = payload / ops.h_diag[k]
    return out
