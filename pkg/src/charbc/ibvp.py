"""
Skew-symmetric IBVPs on ``[x0, x1]`` and their energy audit.

Scalar problems read ``u_t + (a u)_x + a u_x = 0`` and systems read
``P U_t + (A U)_x + A^T U_x = 0``, with coefficients that may depend on the
solution. Both are discretized with SBP operators in the same split form, so
the semi-discrete energy rate reduces to boundary terms only:

.. math::

    \\frac{d}{dt} \\frac{1}{2} \\|u\\|_{H \\otimes P}^2 = -\\mathrm{BT}_{left} - \\mathrm{BT}_{right}.

Each boundary term is evaluated from the spectral split of the outward normal
matrix ``n (A + A^T) / 2`` at the current boundary state; the outward normal
is ``-1`` on the left and ``+1`` on the right.

The energy recorded in :class:`EnergyTrace` is ``E = 1/2 ||u||^2_{H (x) P}``,
so an energy-bounded boundary treatment gives ``E(t) <= E(0) + int G^T G``.
"""

from __future__ import annotations

import csv
import functools
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Union

import numpy as np
from scipy.optimize import brentq

from charbc import bc as bcmod
from charbc.bc import BoundaryOperatorSpec, BoundaryTermReport, Kind
from charbc.errors import DivergenceError, PositivityError, StrongImpositionError
from charbc.sbp import Grid, SbpOperators, build_sbp_21, discrete_energy, lifting_apply
from charbc.specmat import SpectralSplit, split

logger = logging.getLogger(__name__)

Array = Any

BOUNDARIES = ("left", "right")
NORMALS = {"left": -1.0, "right": 1.0}
TRACE_COLUMNS = (
    "t",
    "energy",
    "energy_rate",
    "bt_left",
    "bt_right",
    "bound_rate",
    "cumulative_bound",
    "violation",
)


def _zero(t: float) -> float:
    return 0.0


# {{{ problems


@dataclass(frozen=True)
class ScalarProblem:
    """``u_t + (a u)_x + a u_x = s`` with ``a = a_fn(u, x, t) > 0``.

    All callbacks are vectorized over grid nodes. *source* is only used for
    manufactured solutions.
    """

    a_fn: Callable[[Array, Array, float], Array]
    f: Callable[[Array], Array]
    grid: Grid
    t_final: float
    bc_left: BoundaryOperatorSpec
    bc_right: BoundaryOperatorSpec
    g_left: Callable[[float], float] = _zero
    g_right: Callable[[float], float] = _zero
    cfl: float = 0.25
    source: Callable[[Array, float], Array] | None = None
    name: str = "scalar"
    ops: SbpOperators = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.t_final > 0:
            raise ValueError(f"t_final must be positive: {self.t_final}")
        if not self.cfl > 0:
            raise ValueError(f"cfl must be positive: {self.cfl}")
        object.__setattr__(self, "ops", build_sbp_21(self.grid))

    n_comp = 1

    @property
    def p_mat(self) -> Array:
        return np.eye(1)

    def g(self, boundary: str, t: float) -> Array:
        fn = self.g_left if boundary == "left" else self.g_right
        return np.array([float(fn(t))])

    def bc(self, boundary: str) -> BoundaryOperatorSpec:
        return self.bc_left if boundary == "left" else self.bc_right

    def initial_state(self) -> Array:
        xs = self.grid.xs
        return np.array(np.broadcast_to(self.f(xs), xs.shape), dtype=np.float64)

    def speed(self, u: Array, t: float) -> Array:
        xs = self.grid.xs
        a = np.broadcast_to(np.asarray(self.a_fn(u, xs, t), dtype=np.float64), xs.shape)
        if not np.all(a > 0):
            k = int(np.argmin(a))
            raise PositivityError(f"wave speed a = {a[k]:.6e} <= 0 at x = {xs[k]:.6g}, t = {t:.6g}")
        return a

    def boundary_matrix(self, boundary: str, ub: Array, t: float) -> Array:
        k = self.ops.boundary_index(boundary)
        x = self.grid.xs[k : k + 1]
        a = float(np.broadcast_to(self.a_fn(np.atleast_1d(ub)[:1], x, t), (1,))[0])
        if not a > 0:
            raise PositivityError(f"wave speed a = {a:.6e} <= 0 at the {boundary} boundary, t = {t:.6g}")
        return np.array([[NORMALS[boundary] * a]])


@dataclass(frozen=True)
class SystemProblem:
    """``P U_t + (A U)_x + A^T U_x = S`` for ``n_comp`` components.

    ``a_fn(U, x, t)`` receives ``U`` of shape ``(n_pts, n_comp)`` and returns
    the pointwise matrices, shape ``(n_pts, n_comp, n_comp)`` (a single
    ``(n_comp, n_comp)`` matrix is broadcast). *p_mat* may be semi-definite.
    """

    n_comp: int
    a_fn: Callable[[Array, Array, float], Array]
    f_vec: Callable[[Array], Array]
    grid: Grid
    t_final: float
    bc_left: BoundaryOperatorSpec
    bc_right: BoundaryOperatorSpec
    g_left: Callable[[float], Array] | None = None
    g_right: Callable[[float], Array] | None = None
    p_mat: Array = None
    cfl: float = 0.25
    source: Callable[[Array, float], Array] | None = None
    name: str = "system"
    ops: SbpOperators = field(init=False, repr=False, compare=False)
    p_pinv: Array = field(init=False, repr=False, compare=False)
    p_rank_deficient: bool = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.n_comp < 1:
            raise ValueError("n_comp must be at least 1")
        if not self.t_final > 0:
            raise ValueError(f"t_final must be positive: {self.t_final}")
        p = np.eye(self.n_comp) if self.p_mat is None else np.atleast_2d(np.asarray(self.p_mat, dtype=np.float64))
        if p.shape != (self.n_comp, self.n_comp):
            raise ValueError(f"P has shape {p.shape}, expected ({self.n_comp}, {self.n_comp})")
        if not np.allclose(p, p.T, rtol=0, atol=1e-14):
            raise ValueError("P must be symmetric")
        lam = np.linalg.eigvalsh(p)
        if lam[0] < -1e-12 * max(1.0, lam[-1]):
            raise ValueError(f"P must be positive (semi-)definite, min eigenvalue {lam[0]:.3e}")

        object.__setattr__(self, "p_mat", p)
        object.__setattr__(self, "p_pinv", np.linalg.pinv(p, hermitian=True))
        object.__setattr__(self, "p_rank_deficient", bool(lam[0] <= 1e-12 * max(1.0, lam[-1])))
        object.__setattr__(self, "ops", build_sbp_21(self.grid))

    def g(self, boundary: str, t: float) -> Array:
        fn = self.g_left if boundary == "left" else self.g_right
        if fn is None:
            return np.zeros(self.n_comp)
        return np.asarray(fn(t), dtype=np.float64).reshape(self.n_comp)

    def bc(self, boundary: str) -> BoundaryOperatorSpec:
        return self.bc_left if boundary == "left" else self.bc_right

    def initial_state(self) -> Array:
        xs = self.grid.xs
        u = np.asarray(self.f_vec(xs), dtype=np.float64)
        return np.array(np.broadcast_to(u, (xs.size, self.n_comp)))

    def coefficients(self, u: Array, t: float) -> Array:
        a = np.asarray(self.a_fn(u, self.grid.xs, t), dtype=np.float64)
        return np.broadcast_to(a, (self.grid.n_pts, self.n_comp, self.n_comp))

    def boundary_matrix(self, boundary: str, ub: Array, t: float) -> Array:
        k = self.ops.boundary_index(boundary)
        a = np.asarray(self.a_fn(ub.reshape(1, -1), self.grid.xs[k : k + 1], t), dtype=np.float64)
        a = np.broadcast_to(a, (1, self.n_comp, self.n_comp))[0]
        return NORMALS[boundary] * (a + a.T) / 2.0


Problem = Union[ScalarProblem, SystemProblem]


@functools.lru_cache(maxsize=512)
def _cached_split(key: bytes, n: int) -> SpectralSplit:
    return split(np.frombuffer(key, dtype=np.float64).reshape(n, n))


def boundary_split(problem: Problem, boundary: str, u: Array, t: float) -> SpectralSplit:
    """Spectral split of the outward-normal boundary matrix at the current state."""
    k = problem.ops.boundary_index(boundary)
    m = np.ascontiguousarray(problem.boundary_matrix(boundary, np.atleast_1d(u[k]), t), dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise DivergenceError(f"non-finite boundary matrix at the {boundary} boundary, t = {t:.6g}")
    return _cached_split(m.tobytes(), m.shape[0])


# }}}


# {{{ right-hand sides


def _sat_payload(sp: SpectralSplit, spec: BoundaryOperatorSpec, ub: Array, g: Array) -> Array:
    c, d = bcmod.condition_matrices(sp, spec)
    sigma = bcmod.penalty_matrix(sp, spec)
    return -2.0 * sigma @ (c @ ub - d @ g)


def rhs_scalar(problem: ScalarProblem, u: Array, t: float) -> Array:
    """Semi-discrete rate ``-[D (a u) + a D u]`` plus weak boundary terms."""
    ops = problem.ops
    a = problem.speed(u, t)
    rate = -(ops.d1 @ (a * u) + a * (ops.d1 @ u))
    if problem.source is not None:
        rate = rate + problem.source(problem.grid.xs, t)

    for b in BOUNDARIES:
        spec = problem.bc(b)
        if not spec.is_weak:
            continue
        k = ops.boundary_index(b)
        sp = boundary_split(problem, b, u, t)
        payload = _sat_payload(sp, spec, u[k : k + 1], problem.g(b, t))
        rate = rate + lifting_apply(ops, b, payload[0])

    return rate


def rhs_system(problem: SystemProblem, u: Array, t: float) -> Array:
    """Semi-discrete rate ``P^{-1} (-[D (A U) + A^T D U] - SAT)``."""
    ops = problem.ops
    a = problem.coefficients(u, t)
    du = ops.d1 @ u
    rate = -(ops.d1 @ np.einsum("kij,kj->ki", a, u) + np.einsum("kji,kj->ki", a, du))
    if problem.source is not None:
        rate = rate + np.asarray(problem.source(problem.grid.xs, t)).reshape(rate.shape)

    for b in BOUNDARIES:
        spec = problem.bc(b)
        if not spec.is_weak:
            continue
        k = ops.boundary_index(b)
        sp = boundary_split(problem, b, u, t)
        rate = rate + lifting_apply(ops, b, _sat_payload(sp, spec, u[k], problem.g(b, t)))

    if problem.p_rank_deficient:
        # P U_t = F can only be satisfied for F in the range of P
        kernel = rate - rate @ problem.p_pinv @ problem.p_mat
        if np.max(np.abs(kernel)) > 1e-12 * (1.0 + np.max(np.abs(rate))):
            logger.warning("rate has components in the kernel of P; the energy is only a semi-norm")

    return rate @ problem.p_pinv


def rhs(problem: Problem, u: Array, t: float) -> Array:
    if isinstance(problem, ScalarProblem):
        return rhs_scalar(problem, u, t)
    return rhs_system(problem, u, t)


# }}}


# {{{ strong imposition


def _solve_scalar_condition(
    residual: Callable[[float], float], v0: float, *, tol: float = 1.0e-12, maxit: int = 50
) -> float:
    # safeguarded Newton with a central-difference slope, bisection fallback
    v = v0
    r = residual(v)
    scale = max(1.0, abs(r))
    for _ in range(maxit):
        if abs(r) <= tol * scale:
            return v
        dv = 1.0e-7 * (1.0 + abs(v))
        slope = (residual(v + dv) - residual(v - dv)) / (2.0 * dv)
        if slope == 0.0 or not math.isfinite(slope):
            break

        step = -r / slope
        for _ in range(30):
            v_new = v + step
            r_new = residual(v_new)
            if math.isfinite(r_new) and abs(r_new) < abs(r):
                break
            step /= 2.0
        else:
            break

        if abs(v_new - v) <= 1.0e-15 * (1.0 + abs(v)):
            return v_new
        v, r = v_new, r_new

    lo, hi = v0, v0
    width = max(1.0, abs(v0))
    r_lo = r_hi = residual(v0)
    for _ in range(60):
        lo, hi = v0 - width, v0 + width
        r_lo, r_hi = residual(lo), residual(hi)
        if r_lo * r_hi <= 0:
            break
        width *= 2.0
    else:
        raise StrongImpositionError(f"no sign change of the boundary residual around v = {v0:.6g}")

    return float(brentq(residual, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200))


def _impose_scalar(problem: ScalarProblem, u: Array, t: float) -> Array:
    u = np.array(u, dtype=np.float64)
    for b in BOUNDARIES:
        spec = problem.bc(b)
        if spec.is_weak:
            continue
        k = problem.ops.boundary_index(b)
        if boundary_split(problem, b, u, t).n_neg == 0:
            continue
        g = problem.g(b, t)

        def residual(v: float) -> float:
            sp = split(problem.boundary_matrix(b, np.array([v]), t))
            c, d = bcmod.condition_matrices(sp, spec)
            return float(c[0, 0] * v - (d @ g)[0])

        u[k] = _solve_scalar_condition(residual, float(u[k]))

    return u


def _characteristic_update(sp: SpectralSplit, spec: BoundaryOperatorSpec, ub: Array, g: Array) -> Array:
    kind = spec.kind
    if kind == Kind.CLASSICAL:
        return sp.proj_minus @ g
    if kind == Kind.FLUX:
        return sp.pinv_abs_a_minus() @ g
    if kind == Kind.SQRT:
        return sp.pinv_sqrt_abs_a_minus() @ g
    data = spec.r_matrix @ (np.array(sp.sqrt_a_plus) @ ub) + spec.s_matrix @ g
    return sp.pinv_sqrt_abs_a_minus() @ data


def _impose_system(problem: SystemProblem, u: Array, t: float, *, maxit: int = 100) -> Array:
    u = np.array(u, dtype=np.float64)
    for b in BOUNDARIES:
        spec = problem.bc(b)
        if spec.is_weak:
            continue
        k = problem.ops.boundary_index(b)
        g = problem.g(b, t)
        ub = u[k].copy()
        for _ in range(maxit):
            sp = split(problem.boundary_matrix(b, ub, t))
            new = sp.proj_plus @ ub + _characteristic_update(sp, spec, ub, g)
            if not np.all(np.isfinite(new)):
                raise StrongImpositionError(f"characteristic overwrite diverged at the {b} boundary")
            done = np.linalg.norm(new - ub) <= 1.0e-13 * (1.0 + np.linalg.norm(ub))
            ub = new
            if done:
                break
        else:
            raise StrongImpositionError(f"characteristic overwrite did not converge at the {b} boundary, t = {t:.6g}")
        u[k] = ub

    return u


def has_strong(problem: Problem) -> bool:
    return not (problem.bc_left.is_weak and problem.bc_right.is_weak)


def impose_strong(problem: Problem, u: Array, t: float) -> Array:
    """Overwrite boundary values so that strongly imposed conditions hold exactly.

    Scalar problems solve ``b(v) = g`` for the boundary value; systems replace
    the ingoing characteristic components and keep the outgoing ones,
    iterating when the splitting depends on the state. Weak boundaries are
    left untouched.
    """
    if not has_strong(problem):
        return u
    if isinstance(problem, ScalarProblem):
        return _impose_scalar(problem, u, t)
    return _impose_system(problem, u, t)


# }}}


# {{{ time stepping


def rk4_step(
    f: Callable[[Array, float], Array],
    u: Array,
    t: float,
    dt: float,
    *,
    impose: Callable[[Array, float], Array] | None = None,
    k1: Array | None = None,
) -> Array:
    """Classical four-stage Runge-Kutta step; *impose* is applied to every stage state."""
    if not dt > 0:
        raise ValueError(f"time step must be positive: {dt}")
    if impose is None:

        def impose(v: Array, _t: float) -> Array:
            return v

    if k1 is None:
        k1 = f(u, t)
    k2 = f(impose(u + 0.5 * dt * k1, t + 0.5 * dt), t + 0.5 * dt)
    k3 = f(impose(u + 0.5 * dt * k2, t + 0.5 * dt), t + 0.5 * dt)
    k4 = f(impose(u + dt * k3, t + dt), t + dt)
    return impose(u + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), t + dt)


def step_rk4(problem: Problem, u: Array, t: float, dt: float, *, k1: Array | None = None, step: int = 0) -> Array:
    def f(v: Array, s: float) -> Array:
        if not np.all(np.isfinite(v)):
            raise DivergenceError("non-finite Runge-Kutta stage state", step)
        try:
            return rhs(problem, v, s)
        except DivergenceError as exc:
            if exc.step is not None:
                raise
            raise DivergenceError(exc.message, step) from None

    def imp(v: Array, s: float) -> Array:
        return impose_strong(problem, v, s)

    u_next = rk4_step(f, u, t, dt, impose=imp if has_strong(problem) else None, k1=k1)
    if not np.all(np.isfinite(u_next)):
        raise DivergenceError("non-finite state after Runge-Kutta step", step)
    return u_next


def max_speed(problem: Problem, u: Array, t: float) -> float:
    """Pointwise spectral-radius estimate used to pick the time step."""
    if isinstance(problem, ScalarProblem):
        return float(np.max(np.abs(problem.speed(u, t))))

    a = problem.coefficients(u, t)
    sym = (a + np.swapaxes(a, 1, 2)) / 2.0
    skew = (a - np.swapaxes(a, 1, 2)) / 2.0
    rho = np.max(np.abs(np.linalg.eigvalsh(sym)), axis=1)
    rho = rho + np.linalg.norm(skew, ord=2, axis=(1, 2))
    p_lam = np.linalg.eigvalsh(problem.p_mat)
    p_min = p_lam[p_lam > 1e-12 * max(1.0, p_lam[-1])].min()
    return float(np.max(rho)) / float(p_min)


# }}}


# {{{ energy traces


@dataclass
class EnergyTrace:
    """Per-step record of the discrete energy ``1/2 ||u||^2`` and its boundary budget."""

    t: Array
    energy: Array
    energy_rate: Array
    bt_left: Array
    bt_right: Array
    bound_rate: Array
    cumulative_bound: Array
    violation: Array

    def __post_init__(self) -> None:
        for name in TRACE_COLUMNS:
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))

    def __len__(self) -> int:
        return int(self.t.size)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRACE_COLUMNS)
            cols = [getattr(self, name) for name in TRACE_COLUMNS]
            for row in zip(*cols):
                writer.writerow(["%.17g" % v for v in row])

    @classmethod
    def from_csv(cls, path) -> "EnergyTrace":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != TRACE_COLUMNS:
                raise ValueError(f"unexpected trace header: {header}")
            data = np.array([[float(v) for v in row] for row in reader], dtype=np.float64)
        data = data.reshape(-1, len(TRACE_COLUMNS))
        return cls(**{name: data[:, i] for i, name in enumerate(TRACE_COLUMNS)})


def analytic_bound(trace_t: Array, e0: float, data_power: Callable[[float], float]) -> Array:
    """``E(0) + int_0^t sum_b G_b^T G_b`` on the trace times.

    Each step is integrated with Simpson's rule on the Runge-Kutta stage times
    ``t, t + dt/2, t + dt``.
    """
    t = np.asarray(trace_t, dtype=np.float64)
    out = np.empty_like(t)
    if t.size == 0:
        return out
    out[0] = e0
    q_prev = data_power(t[0])
    for i in range(1, t.size):
        dt = t[i] - t[i - 1]
        q_mid = data_power(t[i - 1] + 0.5 * dt)
        q_next = data_power(t[i])
        out[i] = out[i - 1] + dt / 6.0 * (q_prev + 4.0 * q_mid + q_next)
        q_prev = q_next
    return out


def data_power(problem: Problem, t: float) -> float:
    return float(sum(np.sum(problem.g(b, t) ** 2) for b in BOUNDARIES))


def energy(problem: Problem, u: Array) -> float:
    return 0.5 * discrete_energy(problem.ops, problem.p_mat, u)


def energy_rate(problem: Problem, u: Array, rate: Array) -> float:
    """``d/dt 1/2 ||u||^2_{H (x) P}`` along the semi-discrete rate."""
    u2 = u.reshape(problem.grid.n_pts, -1)
    r2 = rate.reshape(problem.grid.n_pts, -1)
    return float(problem.ops.h_diag @ np.einsum("ki,ij,kj->k", u2, problem.p_mat, r2))


def boundary_reports(problem: Problem, u: Array, t: float) -> dict[str, BoundaryTermReport]:
    reports = {}
    for b in BOUNDARIES:
        k = problem.ops.boundary_index(b)
        sp = boundary_split(problem, b, u, t)
        reports[b] = bcmod.boundary_term(sp, problem.bc(b), np.atleast_1d(u[k]), problem.g(b, t))
    return reports


@dataclass
class RunResult:
    trace: EnergyTrace
    snapshots: list[tuple[float, Array]]
    n_steps: int

    @property
    def final(self) -> Array:
        return self.snapshots[-1][1]


# a CFL step this small relative to t_final means the wave speed has blown up
MIN_DT_FRACTION = 1.0e-12


def run(problem: Problem, *, snapshot_every: int | None = None, max_steps: int = 10_000_000) -> RunResult:
    """Advance *problem* to ``t_final`` and record its energy budget every step.

    The time step is ``cfl * h / max_speed`` recomputed from the current state,
    shortened to land exactly on ``t_final``.  A non-finite wave speed or a
    step below ``MIN_DT_FRACTION * t_final`` raises
    :class:`~charbc.errors.DivergenceError`.
    """
    h = problem.grid.h
    t = 0.0
    u = impose_strong(problem, problem.initial_state(), t)
    snapshots = [(t, u.copy())]

    cols: dict[str, list[float]] = {name: [] for name in TRACE_COLUMNS[:6]}
    step = 0
    while True:
        k1 = rhs(problem, u, t)
        reports = boundary_reports(problem, u, t)
        cols["t"].append(t)
        cols["energy"].append(energy(problem, u))
        cols["energy_rate"].append(energy_rate(problem, u, k1))
        cols["bt_left"].append(reports["left"].total)
        cols["bt_right"].append(reports["right"].total)
        cols["bound_rate"].append(data_power(problem, t))

        remaining = problem.t_final - t
        if remaining <= 1.0e-13 * max(1.0, problem.t_final):
            break
        if step >= max_steps:
            raise DivergenceError("step limit reached before t_final", step)

        speed = max_speed(problem, u, t)
        if not np.isfinite(speed):
            raise DivergenceError(f"non-finite wave speed at t = {t:.6g}", step)
        dt = problem.cfl * h / speed if speed > 0 else problem.cfl * h
        if dt < MIN_DT_FRACTION * problem.t_final:
            raise DivergenceError(f"time step collapsed to {dt:.3g} at t = {t:.6g}", step)
        dt = min(dt, remaining)
        u = step_rk4(problem, u, t, dt, k1=k1, step=step)
        step += 1
        t = problem.t_final if dt == remaining else t + dt

        if snapshot_every and step % snapshot_every == 0:
            snapshots.append((t, u.copy()))

    if snapshots[-1][0] != t:
        snapshots.append((t, u.copy()))

    times = np.array(cols["t"])
    energies = np.array(cols["energy"])
    cumulative = analytic_bound(times, energies[0], lambda s: data_power(problem, s))
    trace = EnergyTrace(
        **{name: np.array(v) for name, v in cols.items()},
        cumulative_bound=cumulative,
        violation=energies - cumulative,
    )
    return RunResult(trace=trace, snapshots=snapshots, n_steps=step)


# }}}


# {{{ audits


@dataclass(frozen=True)
class AuditReport:
    passed: bool
    max_residual: float
    tol: float
    first_failure: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "pass": self.passed,
            "max_residual": self.max_residual,
            "tol": self.tol,
            "first_failure_t": self.first_failure,
        }


def energy_rate_audit(trace: EnergyTrace, tol: float = 1.0e-9) -> AuditReport:
    """Check ``|rate + BT_left + BT_right| <= tol (1 + |rate|)`` at every recorded step."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    residual = np.abs(trace.energy_rate + trace.bt_left + trace.bt_right)
    scaled = residual / (1.0 + np.abs(trace.energy_rate))
    bad = np.nonzero(scaled > tol)[0]
    return AuditReport(
        passed=bad.size == 0,
        max_residual=float(np.max(scaled)),
        tol=tol,
        first_failure=float(trace.t[bad[0]]) if bad.size else None,
    )


@dataclass(frozen=True)
class BoundAudit:
    passed: bool
    max_violation: float
    max_ratio: float
    tol: float
    first_violation: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "pass": self.passed,
            "max_violation": self.max_violation,
            "max_ratio": self.max_ratio,
            "tol": self.tol,
            "first_violation_t": self.first_violation,
        }


def bound_audit(trace: EnergyTrace, tol: float = 1.0e-7) -> BoundAudit:
    """Check ``E(t) <= E(0) + int G^T G + tol`` along the trace."""
    violation = trace.energy - trace.cumulative_bound
    bad = np.nonzero(violation > tol)[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(trace.cumulative_bound > 0, trace.energy / trace.cumulative_bound, 0.0)
    return BoundAudit(
        passed=bad.size == 0,
        max_violation=float(np.max(violation)),
        max_ratio=float(np.max(ratio)),
        tol=tol,
        first_violation=float(trace.t[bad[0]]) if bad.size else None,
    )


def l2_error(problem: Problem, u: Array, exact: Array) -> float:
    return math.sqrt(discrete_energy(problem.ops, problem.p_mat, np.asarray(u) - np.asarray(exact)))


# }}}
