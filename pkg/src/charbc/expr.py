"""
A tiny arithmetic expression language for coefficient and data functions.

Supported: numbers, ``+ - * / ^`` (``**`` is accepted too), unary minus,
parentheses, the functions ``sin cos exp sqrt`` and the variables ``u``,
``u1 .. un``, ``x``, ``t``, plus ``pi`` and any named constants supplied by
the caller. Expressions are validated when compiled and evaluated with numpy,
so they vectorize over grid nodes. Nothing else is evaluated.
"""

from __future__ import annotations

import ast
import math
import operator
import re
from dataclasses import dataclass
from typing import Any, Callable, Mapping

import numpy as np

Array = Any

FUNCTIONS: dict[str, Callable[[Array], Array]] = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
}

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_COMPONENT = re.compile(r"^u([1-9][0-9]*)$")


class ExpressionError(ValueError):
    def __init__(self, source: str, message: str):
        super().__init__(f"invalid expression '{source}': {message}")
        self.source = source


@dataclass(frozen=True)
class Expression:
    """A compiled expression; call it with keyword variables."""

    source: str
    names: frozenset[str]
    _fn: Callable[[Mapping[str, Array]], Array]

    def __call__(self, **variables: Array) -> Array:
        return self._fn(variables)

    @property
    def is_constant(self) -> bool:
        return not (self.names & {"u", "x", "t"}) and not any(_COMPONENT.match(n) for n in self.names)


def _compile_node(node: ast.AST, source: str, constants: Mapping[str, float], n_comp: int, names: set[str]):
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ExpressionError(source, f"unsupported literal {node.value!r}")
        value = float(node.value)
        return lambda env: value

    if isinstance(node, ast.Name):
        name = node.id
        if name in constants:
            value = float(constants[name])
            return lambda env: value
        if name == "pi":
            return lambda env: math.pi
        m = _COMPONENT.match(name)
        if name in ("x", "t", "u") or (m and int(m.group(1)) <= n_comp):
            names.add(name)
            return lambda env: env[name]
        if m:
            raise ExpressionError(source, f"'{name}' exceeds the number of components ({n_comp})")
        raise ExpressionError(source, f"unknown name '{name}'")

    if isinstance(node, ast.BinOp):
        op = _BINOPS.get(type(node.op))
        if op is None:
            raise ExpressionError(source, f"unsupported operator {type(node.op).__name__}")
        left = _compile_node(node.left, source, constants, n_comp, names)
        right = _compile_node(node.right, source, constants, n_comp, names)
        return lambda env: op(left(env), right(env))

    if isinstance(node, ast.UnaryOp):
        op = _UNARY.get(type(node.op))
        if op is None:
            raise ExpressionError(source, f"unsupported operator {type(node.op).__name__}")
        operand = _compile_node(node.operand, source, constants, n_comp, names)
        return lambda env: op(operand(env))

    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
            raise ExpressionError(source, "only sin, cos, exp and sqrt may be called")
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError(source, f"{node.func.id} takes exactly one argument")
        fn = FUNCTIONS[node.func.id]
        arg = _compile_node(node.args[0], source, constants, n_comp, names)
        return lambda env: fn(arg(env))

    raise ExpressionError(source, f"unsupported syntax {type(node).__name__}")


def compile_expression(
    source: str | float | int, *, constants: Mapping[str, float] | None = None, n_comp: int = 1
) -> Expression:
    """Parse and validate *source*; ``^`` means power."""
    if isinstance(source, (int, float)) and not isinstance(source, bool):
        source = repr(float(source))
    if not isinstance(source, str) or not source.strip():
        raise ExpressionError(str(source), "expected a non-empty string")

    constants = dict(constants or {})
    for key in constants:
        if key in FUNCTIONS or key in ("x", "t", "u", "pi") or _COMPONENT.match(key):
            raise ExpressionError(source, f"constant name '{key}' is reserved")

    try:
        tree = ast.parse(source.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(source, f"syntax error at column {exc.offset}") from None

    names: set[str] = set()
    fn = _compile_node(tree.body, source, constants, n_comp, names)
    return Expression(source=source, names=frozenset(names), _fn=fn)
