"""
Experiment configuration files.

Configs are JSON objects. Every field except ``problem`` and ``t_final`` has
a default::

    {
      "name": "nonlinear_sqrt",           // output file stem
      "problem": "nonlinear_scalar",      // builtin name or inline object
      "params": {"amp": 1.0},             // overrides the problem's named constants
      "grid": [101],                      // one or more grid sizes (>= 4)
      "domain": [0.0, 1.0],
      "bc": "sqrtchar",                   // shorthand for bc_left and bc_right
      "bc_left": {"kind": "generalized", "R": [[0.5]], "S": [[0.5]]},
      "imposition": "weak",               // default for bc entries without one
      "cfl": 0.25,
      "t_final": 1.0,
      "out_dir": "out",
      "seed": 0,
      "expect": "bounded",                // or "violation" for negative controls
      "violation_factor": 1.0,            // required E / bound ratio when expecting a violation
      "escalate": false,                  // retry violations along ESCALATION_SCHEDULE
      "tol": 1e-9,                        // energy-identity tolerance
      "bound_tol": 1e-7                   // energy-bound tolerance
    }

(JSON has no comments; they are only annotations here.) :func:`emit_config`
writes the fully expanded canonical form, and ``parse_config(emit_config(c))
== c``.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from typing import Any, Mapping

from charbc.bc import BoundaryOperatorSpec, Imposition, Kind
from charbc.errors import ConfigError
from charbc.experiments import resolve_problem, validate_problem

EXPECTATIONS = ("bounded", "violation")

_FIELDS = (
    "name",
    "problem",
    "params",
    "grid",
    "domain",
    "bc",
    "bc_left",
    "bc_right",
    "imposition",
    "cfl",
    "t_final",
    "out_dir",
    "seed",
    "expect",
    "violation_factor",
    "escalate",
    "tol",
    "bound_tol",
)


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str | dict[str, Any]
    t_final: float
    name: str = "experiment"
    params: dict[str, float] = field(default_factory=dict)
    grid: tuple[int, ...] = (101,)
    domain: tuple[float, float] = (0.0, 1.0)
    bc_left: BoundaryOperatorSpec = BoundaryOperatorSpec(Kind.SQRT)
    bc_right: BoundaryOperatorSpec = BoundaryOperatorSpec(Kind.SQRT)
    cfl: float = 0.25
    out_dir: str = "out"
    seed: int = 0
    expect: str = "bounded"
    violation_factor: float = 1.0
    escalate: bool = False
    tol: float = 1.0e-9
    bound_tol: float = 1.0e-7

    def with_overrides(self, **changes: Any) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    def description(self) -> dict[str, Any]:
        """Inline problem description with ``params`` merged in."""
        return resolve_problem(self.problem, self.params)


def _line_of(text: str, key: str) -> int | None:
    pattern = re.compile(r'"' + re.escape(key) + r'"\s*:')
    for i, line in enumerate(text.splitlines(), start=1):
        if pattern.search(line):
            return i
    return None


def _number(value: Any, name: str, *, positive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"expected a finite number, got {value!r}", name)
    if positive and not value > 0:
        raise ConfigError(f"must be positive, got {value!r}", name)
    return float(value)


def _bc(value: Any, name: str, default_imposition: Imposition) -> BoundaryOperatorSpec:
    if isinstance(value, str):
        value = {"kind": value}
    if not isinstance(value, Mapping):
        raise ConfigError("expected a kind name or an object with 'kind'", name)
    unknown = set(value) - {"kind", "imposition", "R", "S"}
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", name)
    if "kind" not in value:
        raise ConfigError("missing 'kind'", name)
    try:
        kind = Kind.from_name(str(value["kind"]))
        imposition = Imposition.from_name(value["imposition"]) if "imposition" in value else default_imposition
        return BoundaryOperatorSpec(kind, imposition, r=value.get("R"), s=value.get("S"))
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc), name) from None


def config_from_dict(data: Mapping[str, Any]) -> ExperimentConfig:
    """Validate a decoded JSON object; errors carry the offending field."""
    if not isinstance(data, Mapping):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - set(_FIELDS)
    if unknown:
        raise ConfigError(f"unknown field(s) {sorted(unknown)}", sorted(unknown)[0])

    if "problem" not in data:
        raise ConfigError("missing required field", "problem")
    if "t_final" not in data:
        raise ConfigError("missing required field", "t_final")

    problem = data["problem"]
    if not isinstance(problem, (str, Mapping)):
        raise ConfigError("must be a builtin name or an inline object", "problem")
    problem = problem if isinstance(problem, str) else json.loads(json.dumps(problem))

    params = data.get("params", {})
    if not isinstance(params, Mapping):
        raise ConfigError("must be an object of named numbers", "params")
    params = {str(k): _number(v, f"params.{k}") for k, v in params.items()}

    grid = data.get("grid", [101])
    if isinstance(grid, int) and not isinstance(grid, bool):
        grid = [grid]
    if not isinstance(grid, list) or not grid:
        raise ConfigError("must be a grid size or a non-empty list of sizes", "grid")
    for g in grid:
        if isinstance(g, bool) or not isinstance(g, int) or g < 4:
            raise ConfigError(f"grid sizes must be integers >= 4, got {g!r}", "grid")

    domain = data.get("domain", [0.0, 1.0])
    if not isinstance(domain, list) or len(domain) != 2:
        raise ConfigError("must be [x0, x1]", "domain")
    x0, x1 = (_number(v, "domain") for v in domain)
    if not x1 > x0:
        raise ConfigError("must satisfy x1 > x0", "domain")

    try:
        imposition = Imposition.from_name(str(data.get("imposition", "weak")))
    except ValueError as exc:
        raise ConfigError(str(exc), "imposition") from None

    both = data.get("bc", "sqrtchar")
    bc_left = _bc(data.get("bc_left", both), "bc_left" if "bc_left" in data else "bc", imposition)
    bc_right = _bc(data.get("bc_right", both), "bc_right" if "bc_right" in data else "bc", imposition)

    expect = data.get("expect", "bounded")
    if expect not in EXPECTATIONS:
        raise ConfigError(f"must be one of {list(EXPECTATIONS)}, got {expect!r}", "expect")

    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError(f"must be an integer, got {seed!r}", "seed")
    escalate = data.get("escalate", False)
    if not isinstance(escalate, bool):
        raise ConfigError("must be true or false", "escalate")
    name = data.get("name", "experiment")
    if not isinstance(name, str) or not re.fullmatch(r"[A-Za-z0-9_.-]+", name):
        raise ConfigError("must be a non-empty file-name-safe string", "name")
    out_dir = data.get("out_dir", "out")
    if not isinstance(out_dir, str) or not out_dir:
        raise ConfigError("must be a non-empty path", "out_dir")

    config = ExperimentConfig(
        problem=problem,
        t_final=_number(data["t_final"], "t_final", positive=True),
        name=name,
        params=params,
        grid=tuple(grid),
        domain=(x0, x1),
        bc_left=bc_left,
        bc_right=bc_right,
        cfl=_number(data.get("cfl", 0.25), "cfl", positive=True),
        out_dir=out_dir,
        seed=seed,
        expect=expect,
        violation_factor=_number(data.get("violation_factor", 1.0), "violation_factor", positive=True),
        escalate=escalate,
        tol=_number(data.get("tol", 1.0e-9), "tol", positive=True),
        bound_tol=_number(data.get("bound_tol", 1.0e-7), "bound_tol", positive=True),
    )

    # expressions are validated at parse time
    desc = config.description()
    validate_problem(desc)
    n = desc.get("n", 1) if desc.get("type", "scalar") == "system" else 1
    for side, spec in (("bc_left", bc_left), ("bc_right", bc_right)):
        if spec.kind == Kind.GENERALIZED and spec.r_matrix.shape != (n, n):
            raise ConfigError(f"R and S must be {n}x{n} for this problem", side if side in data else "bc")
    return config


def parse_config(text: str) -> ExperimentConfig:
    """Parse a JSON config; :class:`ConfigError` reports the field and line."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    try:
        return config_from_dict(data)
    except ConfigError as exc:
        if exc.line is not None or exc.field is None:
            raise
        top = exc.field.split(".")[0]
        # nested problem fields are located by their innermost key
        key = re.split(r"[.\[]", exc.field)[-1] if top == "problem" and "." in exc.field else top
        line = _line_of(text, key) or _line_of(text, top)
        message = str(exc).split("] ", 1)[-1]
        raise ConfigError(message, exc.field, line) from None


def config_to_dict(config: ExperimentConfig) -> dict[str, Any]:
    return {
        "name": config.name,
        "problem": config.problem,
        "params": dict(config.params),
        "grid": list(config.grid),
        "domain": list(config.domain),
        "bc_left": config.bc_left.to_dict(),
        "bc_right": config.bc_right.to_dict(),
        "cfl": config.cfl,
        "t_final": config.t_final,
        "out_dir": config.out_dir,
        "seed": config.seed,
        "expect": config.expect,
        "violation_factor": config.violation_factor,
        "escalate": config.escalate,
        "tol": config.tol,
        "bound_tol": config.bound_tol,
    }


def emit_config(config: ExperimentConfig) -> str:
    """Canonical JSON text for *config* (every field explicit)."""
    return json.dumps(config_to_dict(config), indent=2) + "\n"
