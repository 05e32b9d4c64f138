"""
Boundary operators, penalties and boundary-term evaluation.

At a boundary with symmetrized outward-normal matrix ``A`` the energy rate is
driven by ``U^T A U``. Each boundary condition is written as

.. math::

    C U - D G = 0,

with the operator ``C`` and data map ``D`` listed below, and imposed either
strongly (by substitution) or weakly through a lifting term
``2 U^T Sigma (C U - D G)`` added to the boundary term.

=============== ========================= ======= ============================
kind            ``C``                     ``D``   ``Sigma`` (weak)
=============== ========================= ======= ============================
``classical``   ``Pi^-``                  ``Pi^-`` ``|A^-|``
``flux``        ``|A^-|``                 ``I``   ``Pi^-``
``sqrtchar``    ``sqrt(|A^-|)``           ``I``   ``sqrt(|A^-|)``
``generalized`` ``sqrt(|A^-|) - R sqrt(A^+)`` ``S`` ``sqrt(|A^-|)``
=============== ========================= ======= ============================

``Pi^-`` is the orthogonal projector onto the ingoing eigenvectors. The
weak classical and flux penalties use ``Sigma = |A^-| C^+`` so that
``Sigma C = |A^-|`` in every row of the table; only the square-root rows lead
to a boundary term bounded by ``-G^T G``.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from charbc.errors import ConsistencyError, DataRangeWarning, DimensionError, InvalidRequestError, PreconditionError
from charbc.specmat import SpectralSplit, SymMatrix, Verdict, eig_sym, symmetrize

Array = Any

#: relative tolerance for cross-checks between algebraically equal forms
FORM_RTOL = 1.0e-9
#: tolerance for the consistency of a state with a strongly imposed condition
STRONG_ATOL = 1.0e-10
#: data components outside range(sqrt(|A^-|)) above this trigger a warning
DATA_RANGE_ATOL = 1.0e-10


class Kind(str, enum.Enum):
    CLASSICAL = "classical"
    FLUX = "flux"
    SQRT = "sqrtchar"
    GENERALIZED = "generalized"

    @classmethod
    def from_name(cls, name: str) -> "Kind":
        key = name.strip().lower().replace("_", "").replace("-", "")
        aliases = {
            "classical": cls.CLASSICAL,
            "classicalchar": cls.CLASSICAL,
            "flux": cls.FLUX,
            "fluxchar": cls.FLUX,
            "sqrt": cls.SQRT,
            "sqrtchar": cls.SQRT,
            "generalized": cls.GENERALIZED,
            "general": cls.GENERALIZED,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown boundary condition kind: '{name}'") from None


class Imposition(str, enum.Enum):
    STRONG = "strong"
    WEAK = "weak"

    @classmethod
    def from_name(cls, name: str) -> "Imposition":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValueError(f"unknown imposition: '{name}'") from None


def _as_tuple(m: Array | None) -> tuple[tuple[float, ...], ...] | None:
    if m is None:
        return None
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    return tuple(tuple(float(v) for v in row) for row in m)


@dataclass(frozen=True)
class BoundaryOperatorSpec:
    """Which boundary condition is used at a boundary and how it is imposed.

    For :attr:`Kind.GENERALIZED` both *r* and *s* are required. *r* must
    satisfy the (non-strict) R-condition; :attr:`data_admissible` tells
    whether the pair also bounds inhomogeneous problems.
    """

    kind: Kind
    imposition: Imposition = Imposition.WEAK
    r: tuple[tuple[float, ...], ...] | None = None
    s: tuple[tuple[float, ...], ...] | None = None
    data_admissible: bool = field(init=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "imposition", Imposition(self.imposition))
        object.__setattr__(self, "r", _as_tuple(self.r))
        object.__setattr__(self, "s", _as_tuple(self.s))

        admissible = True
        if self.kind == Kind.GENERALIZED:
            if self.r is None or self.s is None:
                raise ValueError("generalized boundary conditions need both R and S")
            if self.r_matrix.shape != self.s_matrix.shape:
                raise DimensionError("R and S must have the same shape")
            if not check_R(self.r_matrix):
                raise ValueError("R violates the condition I - R^T R >= 0")
            admissible = bool(check_R(self.r_matrix, strict=True)) and bool(
                check_S(self.r_matrix, self.s_matrix)
            )
        elif self.r is not None or self.s is not None:
            raise ValueError(f"R and S are only used by generalized conditions, not '{self.kind.value}'")
        object.__setattr__(self, "data_admissible", admissible)

    @property
    def r_matrix(self) -> Array:
        return np.array(self.r, dtype=np.float64)

    @property
    def s_matrix(self) -> Array:
        return np.array(self.s, dtype=np.float64)

    @property
    def is_weak(self) -> bool:
        return self.imposition == Imposition.WEAK

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": self.kind.value, "imposition": self.imposition.value}
        if self.kind == Kind.GENERALIZED:
            d["R"] = [list(row) for row in self.r]
            d["S"] = [list(row) for row in self.s]
        return d


@dataclass(frozen=True)
class BoundaryTermReport:
    """Value of one boundary term and its data bound ``-G^T G``."""

    raw: float
    penalty_contribution: float
    total: float
    bound: float
    tol: float = 1.0e-9

    @property
    def satisfied(self) -> bool:
        return self.total >= self.bound - self.tol


# {{{ operators and penalties


def _vec(v: Array, n: int, name: str) -> Array:
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.shape != (n,):
        raise DimensionError(f"'{name}' has shape {v.shape}, expected ({n},)")
    return v


def _mat(m: Array, n: int, name: str) -> Array:
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    if m.shape != (n, n):
        raise DimensionError(f"'{name}' has shape {m.shape}, expected ({n}, {n})")
    return m


def condition_matrices(sp: SpectralSplit, spec: BoundaryOperatorSpec) -> tuple[Array, Array]:
    """Return ``(C, D)`` such that the boundary condition reads ``C U - D G = 0``."""
    n = sp.n
    if spec.kind == Kind.CLASSICAL:
        pm = sp.proj_minus
        return pm, pm
    if spec.kind == Kind.FLUX:
        return np.array(sp.abs_a_minus), np.eye(n)
    if spec.kind == Kind.SQRT:
        return np.array(sp.sqrt_abs_a_minus), np.eye(n)

    r = _mat(spec.r_matrix, n, "R")
    s = _mat(spec.s_matrix, n, "S")
    return np.array(sp.sqrt_abs_a_minus) - r @ np.array(sp.sqrt_a_plus), s


def penalty_matrix(sp: SpectralSplit, spec: BoundaryOperatorSpec) -> Array:
    """Penalty ``Sigma`` multiplying the residual ``C U - D G`` in the lifting term."""
    if not spec.is_weak:
        raise InvalidRequestError("penalty matrices only exist for weak imposition")

    if spec.kind == Kind.CLASSICAL:
        return np.array(sp.abs_a_minus)
    if spec.kind == Kind.FLUX:
        return sp.proj_minus
    return np.array(sp.sqrt_abs_a_minus)


def delta_bt(sp: SpectralSplit, sigma: Array, c: Array) -> SymMatrix:
    """Indefinite remainder ``-|A^-| + Sigma C + (Sigma C)^T - Sigma Sigma^T``.

    The weak boundary term equals
    ``U^T A^+ U - G^T G + |Sigma^T U - G|^2 + U^T delta_bt U`` and the
    remainder vanishes for ``Sigma = C = sqrt(|A^-|)``.
    """
    n = sp.n
    sigma = _mat(sigma, n, "sigma")
    c = _mat(c, n, "c")
    sc = sigma @ c
    return symmetrize(-np.array(sp.abs_a_minus) + sc + sc.T - sigma @ sigma.T)


# }}}


# {{{ boundary terms


def _check_forms(values: list[float], scale: float, what: str) -> None:
    spread = max(values) - min(values)
    if spread > FORM_RTOL * scale:
        raise ConsistencyError(f"{what}: forms disagree by {spread:.3e} (scale {scale:.3e})")


def bt_raw(sp: SpectralSplit, u: Array) -> float:
    """Boundary term ``U^T A U``, cross-checked against its split forms."""
    u = _vec(u, sp.n, "u")
    direct = sp.a_sym.quad(u)
    plus = sp.a_plus.quad(u)
    minus = sp.abs_a_minus.quad(u)
    wp = np.array(sp.sqrt_a_plus) @ u
    wm = np.array(sp.sqrt_abs_a_minus) @ u
    roots = float(wp @ wp - wm @ wm)

    _check_forms([direct, plus - minus, roots], abs(plus) + abs(minus), "bt_raw")
    return direct


def _strong_tol(u: Array, g: Array) -> float:
    return STRONG_ATOL * max(1.0, np.linalg.norm(u) + np.linalg.norm(g))


def bt_strong_classical(sp: SpectralSplit, w_plus: Array, g: Array) -> float:
    """Boundary term after setting the ingoing characteristics to the data.

    Characteristic quantities are passed back in physical coordinates:
    *w_plus* is ``T I^+ W`` (no ingoing component) and only the ingoing part
    ``Pi^- g`` of *g* is injected. The result is
    ``W_+^T Lambda^+ W_+ - G^T |Lambda^-| G``.
    """
    w_plus = _vec(w_plus, sp.n, "w_plus")
    g = _vec(g, sp.n, "g")
    leak = np.linalg.norm(sp.proj_minus @ w_plus)
    if leak > _strong_tol(w_plus, g):
        raise PreconditionError(f"w_plus has ingoing components (norm {leak:.3e})")

    gm = sp.proj_minus @ g
    return sp.a_plus.quad(w_plus) - sp.abs_a_minus.quad(gm)


def bt_strong_flux(sp: SpectralSplit, u: Array, g: Array) -> float:
    """Boundary term ``U^T A^+ U - U^T G`` when ``|A^-| U = G`` holds."""
    u = _vec(u, sp.n, "u")
    g = _vec(g, sp.n, "g")
    gm = sp.proj_minus @ g
    residual = np.linalg.norm(np.array(sp.abs_a_minus) @ u - gm)
    if residual > _strong_tol(u, g):
        raise PreconditionError(f"state violates |A^-| u = g (residual {residual:.3e})")
    return sp.a_plus.quad(u) - float(u @ gm)


def bt_strong_sqrt(sp: SpectralSplit, u: Array, g: Array) -> float:
    """Boundary term ``U^T A^+ U - G^T G`` when ``sqrt(|A^-|) U = G`` holds.

    Only the ingoing part of *g* can be imposed, so the returned value is
    ``U^T A^+ U - |Pi^- G|^2``, which is never below ``-G^T G``.
    """
    u = _vec(u, sp.n, "u")
    g = _vec(g, sp.n, "g")
    gm = sp.proj_minus @ g
    residual = np.linalg.norm(np.array(sp.sqrt_abs_a_minus) @ u - gm)
    if residual > _strong_tol(u, g):
        raise PreconditionError(f"state violates sqrt(|A^-|) u = g (residual {residual:.3e})")
    return sp.a_plus.quad(u) - float(gm @ gm)


def _block_form(sp: SpectralSplit, r: Array, s: Array, u: Array, g: Array) -> float:
    n = sp.n
    z = np.concatenate([np.array(sp.sqrt_a_plus) @ u, g])
    rtr = r.T @ r
    rts = r.T @ s
    block = np.block([[np.eye(n) - rtr, -rts], [-rts.T, np.eye(n) - s.T @ s]])
    return float(z @ block @ z)


def bt_weak_general(
    sp: SpectralSplit, r: Array, s: Array, u: Array, g: Array, *, tol: float = 1.0e-9
) -> BoundaryTermReport:
    """Weakly imposed generalized boundary term.

    The direct value ``U^T A U + 2 U^T sqrt(|A^-|) ((sqrt(|A^-|) - R sqrt(A^+)) U - S G)``
    is cross-checked against the completed-square form
    ``|sqrt(|A^-|) U - R sqrt(A^+) U - S G|^2 + [sqrt(A^+) U; G]^T M [sqrt(A^+) U; G] - G^T G``.
    """
    n = sp.n
    r = _mat(r, n, "R")
    s = _mat(s, n, "S")
    u = _vec(u, n, "u")
    g = _vec(g, n, "g")

    raw = bt_raw(sp, u)
    sam = np.array(sp.sqrt_abs_a_minus)
    sap = np.array(sp.sqrt_a_plus)
    residual = (sam - r @ sap) @ u - s @ g
    penalty = 2.0 * float(u @ sam @ residual)
    total = raw + penalty

    square = sam @ u - r @ (sap @ u) - s @ g
    identity = float(square @ square) + _block_form(sp, r, s, u, g) - float(g @ g)
    scale = abs(raw) + abs(penalty) + float(g @ g) + float(square @ square)
    _check_forms([total, identity], scale, "bt_weak_general")

    return BoundaryTermReport(raw=raw, penalty_contribution=penalty, total=total, bound=-float(g @ g), tol=tol)


def check_data_range(sp: SpectralSplit, g: Array) -> float:
    """Size of the part of *g* outside ``range(sqrt(|A^-|))``.

    Only the projection of the data onto the ingoing characteristics enters a
    square-root condition, so anything else is silently ignored; a
    :class:`~charbc.errors.DataRangeWarning` flags that inconsistency.
    """
    g = _vec(g, sp.n, "g")
    outside = float(np.max(np.abs(g - sp.proj_minus @ g), initial=0.0))
    if outside > DATA_RANGE_ATOL:
        warnings.warn(
            f"boundary data has a component {outside:.3e} outside the ingoing characteristic space",
            DataRangeWarning,
            stacklevel=3,
        )
    return outside


def boundary_term(
    sp: SpectralSplit, spec: BoundaryOperatorSpec, u: Array, g: Array, *, tol: float = 1.0e-9
) -> BoundaryTermReport:
    """Boundary term for any boundary condition at state *u* with data *g*.

    For strong imposition *u* is assumed to already satisfy the condition and
    the total is just ``U^T A U``; for weak imposition the lifting term
    ``2 U^T Sigma (C U - D G)`` is added.
    """
    u = _vec(u, sp.n, "u")
    g = _vec(g, sp.n, "g")
    if spec.kind is Kind.SQRT:
        check_data_range(sp, g)
    raw = sp.a_sym.quad(u)
    penalty = 0.0
    if spec.is_weak:
        c, d = condition_matrices(sp, spec)
        sigma = penalty_matrix(sp, spec)
        penalty = 2.0 * float(u @ sigma @ (c @ u - d @ g))

    return BoundaryTermReport(
        raw=raw, penalty_contribution=penalty, total=raw + penalty, bound=-float(g @ g), tol=tol
    )


# }}}


# {{{ admissibility


def check_R(r: Array, tol: float = 1.0e-12, strict: bool = False) -> Verdict:
    """Check ``I - R^T R >= 0``; with *strict*, require the minimum eigenvalue ``>= tol > 0``."""
    r = np.atleast_2d(np.asarray(r, dtype=np.float64))
    n = r.shape[1]
    _, lam = eig_sym(symmetrize(np.eye(n) - r.T @ r))
    min_eig = float(lam[0])
    if strict:
        return Verdict(passed=min_eig >= max(tol, np.finfo(np.float64).tiny), min_eigenvalue=min_eig)
    return Verdict(passed=min_eig >= -tol, min_eigenvalue=min_eig)


def s_condition_matrix(r: Array, s: Array) -> Array:
    """``I - S^T S - (R^T S)^T (I - R^T R)^{-1} (R^T S)``, by dense inversion."""
    n = r.shape[1]
    rts = r.T @ s
    inner = np.linalg.solve(np.eye(n) - r.T @ r, rts)
    return np.eye(s.shape[1]) - s.T @ s - rts.T @ inner


def check_S(r: Array, s: Array, tol: float = 1.0e-12) -> Verdict:
    """Check the S-condition; only defined when *r* satisfies the strict R-condition.

    :raises PreconditionError: if the strict R-condition fails.
    """
    r = np.atleast_2d(np.asarray(r, dtype=np.float64))
    s = np.atleast_2d(np.asarray(s, dtype=np.float64))
    if r.shape[0] != s.shape[0]:
        raise DimensionError(f"R {r.shape} and S {s.shape} are incompatible")
    verdict_r = check_R(r, tol, strict=True)
    if not verdict_r:
        raise PreconditionError(
            f"S-condition undefined: strict R-condition fails (min eigenvalue {verdict_r.min_eigenvalue:.6e})"
        )
    _, lam = eig_sym(symmetrize(s_condition_matrix(r, s)))
    min_eig = float(lam[0])
    return Verdict(passed=min_eig >= -tol, min_eigenvalue=min_eig)


# }}}
