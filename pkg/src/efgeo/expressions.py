"""Tiny closed-form expression language for chart/metric/model spec files.

Expressions are strings over the variables ``q1..qd``, the operators
``+ - * / ^``, the functions ``sin cos exp sqrt``, and numeric literals.
They are parsed through Python's ``ast`` module with a strict whitelist and
compiled to vectorized numpy callables.  No symbolic differentiation is done
here; derivatives of metric fields are always taken numerically.
"""

from __future__ import annotations

import ast
import math
from typing import Callable

import numpy as np

from .errors import SpecError

_FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
}

_CONSTANTS = {
    "pi": math.pi,
}

_ALLOWED_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_ALLOWED_UNARY = (ast.UAdd, ast.USub)


def _validate(node: ast.AST, dim: int, source: str) -> None:
    if isinstance(node, ast.Expression):
        _validate(node.body, dim, source)
    elif isinstance(node, ast.BinOp):
        if not isinstance(node.op, _ALLOWED_BINOPS):
            raise SpecError(f"operator not allowed in {source!r}")
        _validate(node.left, dim, source)
        _validate(node.right, dim, source)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, _ALLOWED_UNARY):
            raise SpecError(f"unary operator not allowed in {source!r}")
        _validate(node.operand, dim, source)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCTIONS:
            raise SpecError(f"unknown function in {source!r}")
        if len(node.args) != 1 or node.keywords:
            raise SpecError(f"functions take exactly one argument in {source!r}")
        _validate(node.args[0], dim, source)
    elif isinstance(node, ast.Name):
        name = node.id
        if name in _CONSTANTS:
            return
        if name.startswith("q") and name[1:].isdigit():
            idx = int(name[1:])
            if not 1 <= idx <= dim:
                raise SpecError(f"variable {name} out of range for dim={dim} in {source!r}")
            return
        raise SpecError(f"unknown name {name!r} in {source!r}")
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)):
            raise SpecError(f"non-numeric literal in {source!r}")
    else:
        raise SpecError(f"syntax not allowed in {source!r}: {type(node).__name__}")


def compile_expr(text: str, dim: int) -> Callable[[np.ndarray], np.ndarray]:
    """Compile an expression string to a callable ``f(Q)``.

    ``Q`` has shape ``(..., dim)``; the result broadcasts over the leading axes.
    """
    if not isinstance(text, str):
        # numeric literals are allowed directly in spec files
        value = float(text)

        def const(Q: np.ndarray) -> np.ndarray:
            Q = np.asarray(Q, dtype=float)
            return np.full(Q.shape[:-1], value)

        return const

    source = text.replace("^", "**")
    try:
        tree = ast.parse(source, mode="eval")
    except SyntaxError as exc:
        raise SpecError(f"cannot parse expression {text!r}: {exc}") from exc
    _validate(tree, dim, text)
    code = compile(tree, filename="<efgeo-expr>", mode="eval")

    def func(Q: np.ndarray) -> np.ndarray:
        Q = np.asarray(Q, dtype=float)
        if Q.shape[-1] != dim:
            raise ValueError(f"expected last axis of length {dim}, got {Q.shape}")
        env = {f"q{i + 1}": Q[..., i] for i in range(dim)}
        env.update(_FUNCTIONS)
        env.update(_CONSTANTS)
        out = eval(code, {"__builtins__": {}}, env)  # noqa: S307 - whitelisted AST
        return np.asarray(out, dtype=float) + np.zeros(Q.shape[:-1])

    return func


def compile_matrix(exprs: list[list[str]], dim: int) -> Callable[[np.ndarray], np.ndarray]:
    """Compile a nested list of expressions to ``f(Q) -> (..., r, c)`` arrays."""
    rows = [[compile_expr(e, dim) for e in row] for row in exprs]

    def func(Q: np.ndarray) -> np.ndarray:
        Q = np.asarray(Q, dtype=float)
        return np.stack(
            [np.stack([f(Q) for f in row], axis=-1) for row in rows], axis=-2
        )

    return func


def compile_vector(exprs: list[str], dim: int) -> Callable[[np.ndarray], np.ndarray]:
    funcs = [compile_expr(e, dim) for e in exprs]

    def func(Q: np.ndarray) -> np.ndarray:
        Q = np.asarray(Q, dtype=float)
        return np.stack([f(Q) for f in funcs], axis=-1)

    return func


def compile_rank3(exprs: list[list[list[str]]], dim: int) -> Callable[[np.ndarray], np.ndarray]:
    blocks = [[[compile_expr(e, dim) for e in row] for row in mat] for mat in exprs]

    def func(Q: np.ndarray) -> np.ndarray:
        Q = np.asarray(Q, dtype=float)
        return np.stack(
            [
                np.stack(
                    [np.stack([f(Q) for f in row], axis=-1) for row in mat], axis=-2
                )
                for mat in blocks
            ],
            axis=-3,
        )

    return func
