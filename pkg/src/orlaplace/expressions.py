"""Tiny arithmetic expression language for source and boundary data.

Expressions are functions of ``x`` and ``y`` built from numbers, the
constants ``pi`` and ``e``, the operators ``+ - * / **`` (and unary
minus), and the calls ``abs``, ``pow``, ``sin``, ``cos``, ``exp``,
``log``.  They are parsed with the ``ast`` module and evaluated
vectorised over numpy arrays; anything outside the whitelist is
rejected at parse time.
"""

from __future__ import annotations

import ast
import math

import numpy as np

from .errors import ConfigError

__all__ = ["compile_expression"]

_FUNCS = {
    "abs": np.abs,
    "pow": np.power,
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
}

_CONSTS = {"pi": math.pi, "e": math.e}

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


def _check(node):
    if isinstance(node, ast.Expression):
        _check(node.body)
    elif isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        _check(node.left)
        _check(node.right)
    elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.UAdd, ast.USub)):
        _check(node.operand)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
            raise ConfigError(f"unknown function in expression: {ast.dump(node.func)}")
        if node.keywords:
            raise ConfigError("keyword arguments are not allowed in expressions")
        for arg in node.args:
            _check(arg)
    elif isinstance(node, ast.Name):
        if node.id not in ("x", "y") and node.id not in _CONSTS:
            raise ConfigError(f"unknown name in expression: {node.id!r}")
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)):
            raise ConfigError(f"non-numeric constant in expression: {node.value!r}")
    else:
        raise ConfigError(f"disallowed syntax in expression: {type(node).__name__}")


def _eval(node, x, y):
    if isinstance(node, ast.Expression):
        return _eval(node.body, x, y)
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, x, y), _eval(node.right, x, y))
    if isinstance(node, ast.UnaryOp):
        v = _eval(node.operand, x, y)
        return -v if isinstance(node.op, ast.USub) else +v
    if isinstance(node, ast.Call):
        return _FUNCS[node.func.id](*(_eval(a, x, y) for a in node.args))
    if isinstance(node, ast.Name):
        if node.id == "x":
            return x
        if node.id == "y":
            return y
        return _CONSTS[node.id]
    if isinstance(node, ast.Constant):
        return float(node.value)
    raise AssertionError("unreachable: node survived validation")


def compile_expression(text: str):
    """Compile an expression string into a vectorised fn(x, y) -> array."""
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from exc
    _check(tree)

    def fn(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        # out-of-domain data surfaces as non-finite values and is rejected
        # by the field constructors, not as a warning here
        with np.errstate(all="ignore"):
            return np.broadcast_arrays(np.asarray(_eval(tree, x, y), dtype=float), x)[0]

    return fn
