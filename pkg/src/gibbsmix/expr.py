"""Small arithmetic expression language for user-declared potentials.

Supported syntax: numbers, ``pi``, ``e``, variables ``x1 .. xd``, the
operators ``+ - * / ^`` (``^`` is exponentiation), unary minus, parentheses
and the functions ``abs``, ``cos``, ``exp``, ``log`` and ``norm``.
``norm(x)`` is the Euclidean norm of the whole state; ``norm(a, b, ...)``
is the Euclidean norm of its arguments.

Expressions are parsed with :mod:`ast` and compiled into a closure over
numpy ufuncs, so the resulting potential is vectorised over leading axes.
"""

from __future__ import annotations

import ast
import re
from typing import Callable

import numpy as np

_FUNCS = {"abs": np.abs, "cos": np.cos, "exp": np.exp, "log": np.log}
_CONSTS = {"pi": np.pi, "e": np.e}
_VAR = re.compile(r"^x([1-9][0-9]*)$")


class ExpressionError(ValueError):
    pass


def compile_potential(source: str, dim: int) -> Callable[[np.ndarray], np.ndarray]:
    """Compile ``source`` into ``U(X)`` acting on arrays of shape ``(..., dim)``."""
    if "**" in source:
        raise ExpressionError("use '^' for powers")
    try:
        tree = ast.parse(source.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse potential {source!r}: {exc.msg}") from None
    fn = _build(tree.body, dim)

    def potential(X):
        X = np.asarray(X, dtype=float)
        with np.errstate(all="ignore"):
            out = fn(X)
        return np.broadcast_to(out, X.shape[:-1]).astype(float, copy=True)

    potential.source = source
    return potential


def _build(node, dim):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        value = float(node.value)
        return lambda X: value
    if isinstance(node, ast.Name):
        if node.id in _CONSTS:
            value = _CONSTS[node.id]
            return lambda X: value
        m = _VAR.match(node.id)
        if m:
            i = int(m.group(1)) - 1
            if i >= dim:
                raise ExpressionError(f"variable {node.id} exceeds dimension {dim}")
            return lambda X: X[..., i]
        raise ExpressionError(f"unknown name {node.id!r}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _build(node.operand, dim)
        if isinstance(node.op, ast.USub):
            return lambda X: -inner(X)
        return inner
    if isinstance(node, ast.BinOp):
        lhs, rhs = _build(node.left, dim), _build(node.right, dim)
        ops = {
            ast.Add: np.add,
            ast.Sub: np.subtract,
            ast.Mult: np.multiply,
            ast.Div: np.divide,
            ast.Pow: np.power,
        }
        op = ops.get(type(node.op))
        if op is None:
            raise ExpressionError(f"operator {type(node.op).__name__} not allowed")
        return lambda X: op(lhs(X), rhs(X))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
        name = node.func.id
        if name == "norm":
            return _build_norm(node.args, dim)
        if name in _FUNCS:
            if len(node.args) != 1:
                raise ExpressionError(f"{name} takes exactly one argument")
            f, arg = _FUNCS[name], _build(node.args[0], dim)
            return lambda X: f(arg(X))
        raise ExpressionError(f"unknown function {name!r}")
    raise ExpressionError(f"unsupported syntax: {ast.dump(node)}")


def _build_norm(args, dim):
    if len(args) == 1 and isinstance(args[0], ast.Name) and args[0].id == "x":
        return lambda X: np.sqrt(np.sum(X * X, axis=-1))
    if not args:
        raise ExpressionError("norm needs at least one argument")
    parts = [_build(a, dim) for a in args]

    def norm(X):
        total = 0.0
        for p in parts:
            v = p(X)
            total = total + v * v
        return np.sqrt(total)

    return norm
