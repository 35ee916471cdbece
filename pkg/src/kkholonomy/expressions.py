"""Compile component expressions from configuration files into field functions.

Only arithmetic, numeric literals, the chart coordinates, ``pi`` and a fixed
set of elementary functions are accepted; everything else is rejected before
evaluation.
"""
from __future__ import annotations

import ast
import math
import operator

from . import jets

FUNCTIONS = {
    "sin": jets.sin,
    "cos": jets.cos,
    "tan": jets.tan,
    "exp": jets.exp,
    "log": jets.log,
    "sqrt": jets.sqrt,
    "arctan": jets.arctan,
    "sinh": jets.sinh,
    "cosh": jets.cosh,
    "tanh": jets.tanh,
}
CONSTANTS = {"pi": math.pi, "e": math.e}

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}


class ExpressionError(ValueError):
    pass


def _compile_node(node, names):
    if isinstance(node, ast.Expression):
        return _compile_node(node.body, names)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        v = float(node.value)
        return lambda env: v
    if isinstance(node, ast.Name):
        if node.id in names:
            i = names[node.id]
            return lambda env: env[i]
        if node.id in CONSTANTS:
            v = CONSTANTS[node.id]
            return lambda env: v
        raise ExpressionError(f"unknown name {node.id!r}")
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op = _BINOPS[type(node.op)]
        lhs, rhs = _compile_node(node.left, names), _compile_node(node.right, names)
        return lambda env: op(lhs(env), rhs(env))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
        op = _UNOPS[type(node.op)]
        arg = _compile_node(node.operand, names)
        return lambda env: op(arg(env))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
        if node.func.id not in FUNCTIONS or len(node.args) != 1:
            raise ExpressionError(f"unsupported function call {ast.unparse(node)!r}")
        fn = FUNCTIONS[node.func.id]
        arg = _compile_node(node.args[0], names)
        return lambda env: fn(arg(env))
    raise ExpressionError(f"unsupported syntax {ast.unparse(node)!r}")


def compile_expression(text, coordinates):
    """Return ``f(x)`` evaluating ``text`` with ``x[i]`` bound to ``coordinates[i]``."""
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        v = float(text)
        return lambda x: v
    if not isinstance(text, str):
        raise ExpressionError(f"expected an expression string, got {text!r}")
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
    names = {c: i for i, c in enumerate(coordinates)}
    return _compile_node(tree, names)


def compile_components(obj, coordinates):
    """Nested lists of expressions -> function of x returning nested lists."""
    if isinstance(obj, list):
        parts = [compile_components(o, coordinates) for o in obj]
        return lambda x: [p(x) for p in parts]
    return compile_expression(obj, coordinates)
