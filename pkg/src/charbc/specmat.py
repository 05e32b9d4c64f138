"""
Small dense symmetric-matrix toolkit.

Boundary matrices are tiny (one row per solution component), so everything
here favours robustness and reproducibility over speed: eigenpairs come from
a cyclic Jacobi iteration, and every matrix function is evaluated spectrally
as ``T f(Lambda) T^T``.

.. autoclass:: SymMatrix
.. autoclass:: SpectralSplit
.. autoclass:: Verdict

.. autofunction:: symmetrize
.. autofunction:: eig_sym
.. autofunction:: split
.. autofunction:: sqrt_psd
.. autofunction:: is_psd
.. autofunction:: negative_inertia
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from charbc.errors import ConvergenceError, DimensionError, NotPSDError

Array = Any

#: cap on the number of full Jacobi sweeps
MAX_SWEEPS = 100
#: sweeps stop once the off-diagonal Frobenius norm drops below this fraction of ``||A||_F``
JACOBI_RTOL = 1.0e-14


def default_zero_tol(lam: Array) -> float:
    """Scale-relative threshold deciding whether an eigenvalue counts as zero."""
    lam = np.asarray(lam, dtype=np.float64)
    scale = float(np.max(np.abs(lam))) if lam.size else 0.0
    return 1.0e-12 * max(1.0, scale)


# {{{ symmetric matrices


@dataclass(frozen=True)
class SymMatrix:
    """A real symmetric matrix.

    The constructor symmetrizes its input, so ``entries`` is exactly symmetric
    afterwards. The asymmetry that was removed is kept in :attr:`asymmetry`.

    .. attribute:: entries
    .. attribute:: sym_tol

        Largest asymmetry ``max|M - M^T| / 2`` accepted on construction.

    .. attribute:: asymmetry
    """

    entries: Array
    sym_tol: float = float("inf")
    asymmetry: float = field(init=False)

    def __post_init__(self) -> None:
        m = np.array(self.entries, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"expected a square matrix, got shape {m.shape}")
        if m.shape[0] < 1:
            raise DimensionError("matrix must have at least one row")
        if not np.all(np.isfinite(m)):
            raise ValueError("matrix has non-finite entries")

        asym = float(np.max(np.abs(m - m.T))) / 2.0
        if asym > self.sym_tol:
            raise ValueError(f"asymmetry {asym:.3e} exceeds sym_tol {self.sym_tol:.3e}")

        s = (m + m.T) / 2.0
        s.setflags(write=False)
        object.__setattr__(self, "entries", s)
        object.__setattr__(self, "asymmetry", asym)

    @classmethod
    def _trusted(cls, m: Array) -> "SymMatrix":
        # m is symmetric up to rounding; skips validation on hot paths
        s = (m + m.T) * 0.5
        s.setflags(write=False)
        obj = object.__new__(cls)
        object.__setattr__(obj, "entries", s)
        object.__setattr__(obj, "sym_tol", float("inf"))
        object.__setattr__(obj, "asymmetry", 0.0)
        return obj

    @property
    def n(self) -> int:
        return int(self.entries.shape[0])

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.entries
        return self.entries.astype(dtype)

    def quad(self, u: Array) -> float:
        """Evaluate the quadratic form ``u^T A u``."""
        u = np.asarray(u, dtype=np.float64)
        return float(u @ self.entries @ u)


def as_sym(a: SymMatrix | Array) -> SymMatrix:
    if isinstance(a, SymMatrix):
        return a
    return SymMatrix(np.atleast_2d(np.asarray(a, dtype=np.float64)))


def symmetrize(m: Array) -> SymMatrix:
    """Return ``(M + M^T) / 2``; the removed asymmetry is recorded on the result."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    return SymMatrix(m)


# }}}


# {{{ eigendecomposition


def _fix_signs(t: Array) -> Array:
    # make the largest-magnitude entry of each column positive
    idx = np.argmax(np.abs(t), axis=0)
    signs = np.sign(t[idx, np.arange(t.shape[1])])
    signs[signs == 0] = 1.0
    return t * signs


def _rotation(app: float, aqq: float, apq: float) -> tuple[float, float]:
    diff = aqq - app
    if abs(apq) < 1.0e-150 * abs(diff):
        # tau*tau would overflow; t = 1/(2 tau) to working precision
        t = apq / diff
        c = 1.0 / math.sqrt(1.0 + t * t)
        return c, t * c
    tau = diff / (2.0 * apq)
    if tau >= 0.0:
        t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
    else:
        t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
    c = 1.0 / math.sqrt(1.0 + t * t)
    return c, t * c


def _jacobi_2x2(m: Array) -> tuple[Array, Array]:
    # a single rotation is an exact sweep for n = 2
    app, apq, aqq = float(m[0, 0]), float(m[0, 1]), float(m[1, 1])
    if apq == 0.0:
        c, s = 1.0, 0.0
        l0, l1 = app, aqq
    else:
        c, s = _rotation(app, aqq, apq)
        t = s / c
        l0, l1 = app - t * apq, aqq + t * apq
    v = np.array([[c, s], [-s, c]])
    lam = np.array([l0, l1])
    if l1 < l0:
        v = v[:, ::-1]
        lam = lam[::-1]
    return _fix_signs(v), lam.copy()


def eig_sym(
    a: SymMatrix | Array,
    *,
    max_sweeps: int = MAX_SWEEPS,
    rtol: float = JACOBI_RTOL,
) -> tuple[Array, Array]:
    """Orthonormal eigendecomposition by cyclic Jacobi rotations.

    :returns: a tuple ``(t, lam)`` with eigenvectors in the columns of *t* and
        eigenvalues *lam* sorted in ascending order, so that
        ``t @ diag(lam) @ t.T`` reconstructs *a*.
    :raises ConvergenceError: if the off-diagonal part has not dropped below
        ``rtol * ||a||_F`` after *max_sweeps* sweeps.
    """
    a = as_sym(a)
    m = np.array(a.entries)
    n = m.shape[0]
    v = np.eye(n)

    if n == 1:
        return v, m.diagonal().copy()
    if n == 2:
        return _jacobi_2x2(m)

    threshold = rtol * float(np.sqrt(np.sum(m * m)))

    iu = np.triu_indices(n, 1)

    def off_norm() -> float:
        # summed directly: subtracting the diagonal from the total cancels catastrophically
        return float(np.sqrt(2.0 * np.sum(m[iu] ** 2)))

    for _ in range(max_sweeps):
        if off_norm() <= threshold:
            break

        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = m[p, q]
                if apq == 0.0:
                    continue

                c, s = _rotation(m[p, p], m[q, q], apq)

                mp = m[:, p].copy()
                mq = m[:, q].copy()
                m[:, p] = c * mp - s * mq
                m[:, q] = s * mp + c * mq

                mp = m[p, :].copy()
                mq = m[q, :].copy()
                m[p, :] = c * mp - s * mq
                m[q, :] = s * mp + c * mq
                m[p, q] = m[q, p] = 0.0

                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        residual = off_norm()
        if residual > threshold:
            raise ConvergenceError(f"Jacobi iteration did not converge in {max_sweeps} sweeps", residual)

    lam = m.diagonal().copy()
    order = np.argsort(lam, kind="stable")
    return _fix_signs(v[:, order]), lam[order]


def _spectral(t: Array, values: Array) -> SymMatrix:
    return SymMatrix._trusted((t * values) @ t.T)


def matrix_function(a: SymMatrix | Array, fn: Callable[[Array], Array]) -> SymMatrix:
    """Evaluate ``T fn(Lambda) T^T`` for a symmetric matrix."""
    t, lam = eig_sym(a)
    return _spectral(t, fn(lam))


# }}}


# {{{ spectral split


@dataclass(frozen=True)
class SpectralSplit:
    """Sign-based splitting of a symmetric boundary matrix.

    ``A = A^+ - |A^-|`` where ``A^+ = T Lambda^+ T^T`` collects the
    non-negative eigenvalues (eigenvalues within *zero_tol* of zero are
    clamped to zero and counted as plus) and ``|A^-| = T |Lambda^-| T^T``
    collects the magnitudes of the negative ones.
    """

    a_sym: SymMatrix
    t: Array
    lam: Array
    zero_tol: float
    plus_mask: Array
    a_plus: SymMatrix
    abs_a_minus: SymMatrix
    sqrt_a_plus: SymMatrix
    sqrt_abs_a_minus: SymMatrix

    @property
    def n(self) -> int:
        return self.a_sym.n

    @property
    def n_neg(self) -> int:
        return int(np.count_nonzero(~self.plus_mask))

    @property
    def lam_plus(self) -> Array:
        return np.where(self.plus_mask, np.maximum(self.lam, 0.0), 0.0)

    @property
    def abs_lam_minus(self) -> Array:
        return np.where(self.plus_mask, 0.0, -self.lam)

    @property
    def proj_minus(self) -> Array:
        """Orthogonal projector onto the span of the ingoing eigenvectors."""
        tm = self.t[:, ~self.plus_mask]
        return tm @ tm.T

    @property
    def proj_plus(self) -> Array:
        tp = self.t[:, self.plus_mask]
        return tp @ tp.T

    def pinv_sqrt_abs_a_minus(self) -> Array:
        """Moore-Penrose inverse of ``sqrt(|A^-|)``."""
        d = np.zeros_like(self.lam)
        neg = ~self.plus_mask
        d[neg] = 1.0 / np.sqrt(-self.lam[neg])
        return (self.t * d) @ self.t.T

    def pinv_abs_a_minus(self) -> Array:
        d = np.zeros_like(self.lam)
        neg = ~self.plus_mask
        d[neg] = -1.0 / self.lam[neg]
        return (self.t * d) @ self.t.T


def split(a: SymMatrix | Array, zero_tol: float | None = None) -> SpectralSplit:
    """Split a symmetric matrix into its positive and negative spectral parts."""
    a = as_sym(a)
    t, lam = eig_sym(a)
    if zero_tol is None:
        zero_tol = default_zero_tol(lam)
    if zero_tol < 0:
        raise ValueError(f"zero_tol must be non-negative: {zero_tol}")

    plus = lam >= -zero_tol
    for arr in (t, lam, plus):
        arr.setflags(write=False)
    lam_plus = np.where(plus, np.maximum(lam, 0.0), 0.0)
    lam_minus = np.where(plus, 0.0, -lam)

    return SpectralSplit(
        a_sym=a,
        t=t,
        lam=lam,
        zero_tol=float(zero_tol),
        plus_mask=plus,
        a_plus=_spectral(t, lam_plus),
        abs_a_minus=_spectral(t, lam_minus),
        sqrt_a_plus=_spectral(t, np.sqrt(lam_plus)),
        sqrt_abs_a_minus=_spectral(t, np.sqrt(lam_minus)),
    )


# }}}


# {{{ definiteness


@dataclass(frozen=True)
class Verdict:
    """Pass/fail outcome of a definiteness test, with its eigenvalue certificate."""

    passed: bool
    min_eigenvalue: float

    def __bool__(self) -> bool:
        return self.passed

    def to_dict(self) -> dict[str, Any]:
        return {"pass": self.passed, "min_eig": self.min_eigenvalue}


def sqrt_psd(a: SymMatrix | Array, zero_tol: float | None = None) -> SymMatrix:
    """Principal square root of a positive semi-definite matrix.

    Eigenvalues in ``[-zero_tol, 0]`` are treated as zero.

    :raises NotPSDError: if an eigenvalue is below ``-zero_tol``.
    """
    t, lam = eig_sym(a)
    if zero_tol is None:
        zero_tol = default_zero_tol(lam)
    if lam[0] < -zero_tol:
        raise NotPSDError(float(lam[0]))
    return _spectral(t, np.sqrt(np.maximum(lam, 0.0)))


def is_psd(a: SymMatrix | Array, tol: float = 0.0) -> Verdict:
    _, lam = eig_sym(a)
    min_eig = float(lam[0])
    return Verdict(passed=min_eig >= -tol, min_eigenvalue=min_eig)


def negative_inertia(a: SymMatrix | Array, tol: float | None = None) -> int:
    """Number of eigenvalues below ``-tol`` (defaults to the split threshold)."""
    _, lam = eig_sym(a)
    if tol is None:
        tol = default_zero_tol(lam)
    return int(np.count_nonzero(lam < -tol))


# }}}
