"""Tiny closed-form profile expressions for initial data.

Grammar: the variable ``u``, numeric literals, ``+ - * / ^`` (and ``**``),
unary minus, ``sin``, ``cos``, ``exp``, and the constants ``pi`` and ``e``.
Parsed through the Python ast with a strict whitelist, evaluated on numpy
arrays, so profiles like ``"1 + u/2"`` or ``"sin(pi*u)^2"`` work on any grid
without shipping data files.
"""

from __future__ import annotations

import ast

import numpy as np

_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_CONSTS = {"pi": np.pi, "e": np.e}

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


class ExpressionError(ValueError):
    pass


def _eval(node, u):
    if isinstance(node, ast.Expression):
        return _eval(node.body, u)
    if isinstance(node, ast.Constant):
        if isinstance(node.value, (int, float)):
            return float(node.value)
        raise ExpressionError(f"bad literal {node.value!r}")
    if isinstance(node, ast.Name):
        if node.id == "u":
            return u
        if node.id in _CONSTS:
            return _CONSTS[node.id]
        raise ExpressionError(f"unknown name {node.id!r}")
    if isinstance(node, ast.BinOp):
        op = _BINOPS.get(type(node.op))
        if op is None:
            raise ExpressionError(f"operator {type(node.op).__name__} not allowed")
        return op(_eval(node.left, u), _eval(node.right, u))
    if isinstance(node, ast.UnaryOp):
        if isinstance(node.op, ast.USub):
            return -_eval(node.operand, u)
        if isinstance(node.op, ast.UAdd):
            return _eval(node.operand, u)
        raise ExpressionError("unary operator not allowed")
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
            raise ExpressionError("only sin/cos/exp calls are allowed")
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError("profile functions take exactly one argument")
        return _FUNCS[node.func.id](_eval(node.args[0], u))
    raise ExpressionError(f"syntax element {type(node).__name__} not allowed")


def compile_profile(text: str):
    """Return a callable u -> values for a profile expression string."""
    # '^' means power in the profile grammar; rewrite before parsing so it
    # binds tighter than +/- (Python's BitXor would not)
    source = text.replace("^", "**")
    try:
        tree = ast.parse(source, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc}") from exc

    def profile(u):
        u = np.asarray(u, dtype=float)
        out = _eval(tree, u)
        return np.broadcast_to(np.asarray(out, dtype=float), u.shape).copy()

    profile.source = text
    return profile
