"""Shipped experiment definitions and their translation into problems.

Every builtin is an inline problem description written in the expression
language of :mod:`charbc.expr`, so builtins and user configs share one code
path. Named constants (``amp``, ``k``) are listed in ``params`` and may be
overridden per experiment.
"""

from __future__ import annotations

import copy
from typing import Any, Mapping

import numpy as np

from charbc.bc import BoundaryOperatorSpec
from charbc.errors import ConfigError
from charbc.expr import Expression, ExpressionError, compile_expression
from charbc.ibvp import Problem, ScalarProblem, SystemProblem
from charbc.sbp import Grid

Array = Any

#: compactly supported (to rounding) initial pulse centred in the domain
BUMP = "exp(-((x-0.5)/0.08)^2)"
#: boundary data pulse, negligible at t = 0 so it is compatible with the initial data
PULSE = "amp*exp(-((t-0.4)/0.1)^2)"

BUILTINS: dict[str, dict[str, Any]] = {
    "linear_scalar": {
        "type": "scalar",
        "a": "1",
        "f": BUMP,
        "g_left": PULSE,
        "g_right": "0",
        "params": {"amp": 0.5},
    },
    "variable_scalar": {
        "type": "scalar",
        "a": "2 + sin(2*pi*x)",
        "f": BUMP,
        "g_left": PULSE,
        "g_right": "0",
        "params": {"amp": 0.5},
    },
    "nonlinear_scalar": {
        "type": "scalar",
        "a": "1 + k*u^2",
        "f": BUMP,
        "g_left": PULSE,
        "g_right": "0",
        "params": {"amp": 1.0, "k": 1.0},
    },
    "slow_scalar": {
        "type": "scalar",
        "a": "c",
        "f": BUMP,
        "g_left": PULSE,
        "g_right": "0",
        "params": {"amp": 0.5, "c": 0.5},
    },
    "linear_system": {
        "type": "system",
        "n": 2,
        "A": [["1", "1.5"], ["0.5", "-0.5"]],
        "f": [BUMP, "0.5*" + BUMP],
        # ingoing eigenvector of -(A + A^T)/2 at the left boundary
        "g_left": [f"2/sqrt(5)*{PULSE}", f"1/sqrt(5)*{PULSE}"],
        "g_right": ["0", "0"],
        "params": {"amp": 0.5},
    },
    "nonlinear_system": {
        "type": "system",
        "n": 2,
        "A": [["u1", "1 + k*u2^2"], ["1", "u1"]],
        "f": ["0.5*" + BUMP, "0.5*" + BUMP],
        "g_left": [f"1/sqrt(2)*{PULSE}", f"1/sqrt(2)*{PULSE}"],
        "g_right": ["0", "0"],
        "params": {"amp": 0.5, "k": 1.0},
    },
    "semidefinite_system": {
        "type": "system",
        "n": 2,
        "A": [["1", "0"], ["0", "0"]],
        "P": [[1.0, 0.0], [0.0, 0.0]],
        "f": [BUMP, "0"],
        "g_left": [PULSE, "0"],
        "g_right": ["0", "0"],
        "params": {"amp": 0.5},
    },
    "mms": {
        "type": "scalar",
        "a": "1",
        "f": "sin(2*pi*x)",
        "source": "2*pi*cos(2*pi*(x-t))",
        "exact": "sin(2*pi*(x-t))",
        "g_left": "sin(-2*pi*t)",
        "g_right": "0",
        "params": {},
    },
}

#: parameter schedule tried in order when a negative-control run must exhibit a bound violation
ESCALATION_SCHEDULE: tuple[dict[str, float], ...] = (
    {},
    {"amp": 1.5},
    {"amp": 2.0},
    {"amp": 2.0, "k": 2.0},
    {"amp": 3.0, "k": 2.0},
)

_ROLE_NAMES = {
    "a": None,
    "f": {"x"},
    "g_left": {"t"},
    "g_right": {"t"},
    "source": {"x", "t"},
    "exact": {"x", "t"},
}


def resolve_problem(problem: str | Mapping[str, Any], params: Mapping[str, float] | None = None) -> dict[str, Any]:
    """Return the inline description for a builtin name or inline dict, with params merged."""
    if isinstance(problem, str):
        if problem not in BUILTINS:
            raise ConfigError(f"unknown builtin problem '{problem}' (known: {', '.join(sorted(BUILTINS))})", "problem")
        desc = copy.deepcopy(BUILTINS[problem])
    elif isinstance(problem, Mapping):
        desc = copy.deepcopy(dict(problem))
    else:
        raise ConfigError("problem must be a builtin name or an inline object", "problem")

    merged = dict(desc.get("params", {}))
    merged.update(params or {})
    desc["params"] = merged
    return desc


def _compile(role: str, source: Any, constants: Mapping[str, float], n_comp: int) -> Expression:
    try:
        e = compile_expression(source, constants=constants, n_comp=n_comp)
    except ExpressionError as exc:
        raise ConfigError(str(exc), f"problem.{role}") from None
    allowed = _ROLE_NAMES.get(role.split("[")[0])
    if allowed is not None and not e.names <= allowed:
        extra = ", ".join(sorted(e.names - allowed))
        raise ConfigError(f"'{source}' may only depend on {sorted(allowed)}, found {extra}", f"problem.{role}")
    return e


def _vector(role: str, desc: Mapping[str, Any], n: int, constants, default: str | None = "0") -> list[Expression] | None:
    value = desc.get(role)
    if value is None:
        if default is None:
            return None
        value = [default] * n
    if isinstance(value, (str, int, float)):
        value = [value] * n if n > 1 else [value]
    if len(value) != n:
        raise ConfigError(f"expected {n} entries, got {len(value)}", f"problem.{role}")
    return [_compile(f"{role}[{i}]", v, constants, n) for i, v in enumerate(value)]


def has_exact_solution(desc: Mapping[str, Any]) -> bool:
    return desc.get("exact") is not None


def validate_problem(desc: Mapping[str, Any]) -> None:
    # compiling checks every expression against the grammar
    build_problem(
        desc,
        grid=Grid(0.0, 1.0, 4),
        bc_left=BoundaryOperatorSpec("sqrtchar"),
        bc_right=BoundaryOperatorSpec("sqrtchar"),
        t_final=1.0,
        cfl=0.25,
    )


def build_problem(
    desc: Mapping[str, Any],
    *,
    grid: Grid,
    bc_left: BoundaryOperatorSpec,
    bc_right: BoundaryOperatorSpec,
    t_final: float,
    cfl: float,
    name: str = "experiment",
) -> Problem:
    kind = desc.get("type", "scalar")
    constants = dict(desc.get("params", {}))
    for key, value in constants.items():
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"parameter '{key}' must be a number", f"problem.params.{key}")

    if kind == "scalar":
        for key in ("a", "f"):
            if key not in desc:
                raise ConfigError(f"scalar problems need '{key}'", f"problem.{key}")
        a = _compile("a", desc["a"], constants, 1)
        f = _compile("f", desc["f"], constants, 1)
        gl = _compile("g_left", desc.get("g_left", "0"), constants, 1)
        gr = _compile("g_right", desc.get("g_right", "0"), constants, 1)
        src = _compile("source", desc["source"], constants, 1) if desc.get("source") is not None else None

        if a.is_constant:
            a_const = float(a())

            def a_fn(u, x, t):
                return np.full(np.shape(x), a_const)

        else:

            def a_fn(u, x, t):
                return np.broadcast_to(a(u=u, u1=u, x=x, t=t), np.shape(x))

        def f_fn(x):
            return np.broadcast_to(f(x=x), np.shape(x))

        def source_fn(x, t):
            return np.broadcast_to(src(x=x, t=t), np.shape(x))

        return ScalarProblem(
            a_fn=a_fn,
            f=f_fn,
            grid=grid,
            t_final=t_final,
            bc_left=bc_left,
            bc_right=bc_right,
            g_left=lambda t: float(gl(t=t)),
            g_right=lambda t: float(gr(t=t)),
            cfl=cfl,
            source=source_fn if src is not None else None,
            name=name,
        )

    if kind != "system":
        raise ConfigError(f"problem type must be 'scalar' or 'system', got '{kind}'", "problem.type")

    n = desc.get("n")
    if not isinstance(n, int) or n < 1:
        raise ConfigError("system problems need a positive integer 'n'", "problem.n")
    rows = desc.get("A")
    if not isinstance(rows, list) or len(rows) != n or any(not isinstance(r, list) or len(r) != n for r in rows):
        raise ConfigError(f"'A' must be an {n}x{n} array of expressions", "problem.A")
    a_entries = [[_compile(f"A[{i}][{j}]", rows[i][j], constants, n) for j in range(n)] for i in range(n)]
    f_entries = _vector("f", desc, n, constants)
    gl = _vector("g_left", desc, n, constants)
    gr = _vector("g_right", desc, n, constants)
    src = _vector("source", desc, n, constants, default=None)
    p = desc.get("P")

    if all(e.is_constant for row in a_entries for e in row):
        a_const = np.array([[float(e()) for e in row] for row in a_entries])

        def a_fn(u, x, t):
            return np.broadcast_to(a_const, np.shape(x) + (n, n))

    else:

        def a_fn(u, x, t):
            env = {f"u{i + 1}": u[:, i] for i in range(n)}
            env.update(x=x, t=t)
            out = np.empty(np.shape(x) + (n, n))
            for i in range(n):
                for j in range(n):
                    out[..., i, j] = a_entries[i][j](**env)
            return out

    def f_fn(x):
        return np.stack([np.broadcast_to(fi(x=x), np.shape(x)) for fi in f_entries], axis=-1)

    def source_fn(x, t):
        return np.stack([np.broadcast_to(si(x=x, t=t), np.shape(x)) for si in src], axis=-1)

    try:
        return SystemProblem(
            n_comp=n,
            a_fn=a_fn,
            f_vec=f_fn,
            grid=grid,
            t_final=t_final,
            bc_left=bc_left,
            bc_right=bc_right,
            g_left=lambda t: np.array([float(gi(t=t)) for gi in gl]),
            g_right=lambda t: np.array([float(gi(t=t)) for gi in gr]),
            p_mat=p,
            cfl=cfl,
            source=source_fn if src is not None else None,
            name=name,
        )
    except ValueError as exc:
        raise ConfigError(str(exc), "problem.P") from None


def exact_solution(desc: Mapping[str, Any], x: Array, t: float) -> Array:
    """Evaluate the manufactured solution of *desc*."""
    if not has_exact_solution(desc):
        raise ConfigError("problem has no exact solution", "problem.exact")
    constants = dict(desc.get("params", {}))
    if desc.get("type", "scalar") == "scalar":
        e = _compile("exact", desc["exact"], constants, 1)
        return np.broadcast_to(e(x=x, t=t), np.shape(x)).astype(np.float64)
    n = desc["n"]
    es = _vector("exact", desc, n, constants)
    return np.stack([np.broadcast_to(ei(x=x, t=t), np.shape(x)) for ei in es], axis=-1)
