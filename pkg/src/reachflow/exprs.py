"""Restricted arithmetic expressions for vector fields in model files.

A right-hand side like ``"-x**3 + 0.5*sin(y)"`` is parsed with the ast
module and checked against a whitelist before anything is evaluated:
arithmetic operators, unary sign, calls to sin/cos/exp, state variables
and real constants.  Everything else is rejected with the offending
source position, so a typo in a model file points at itself instead of
failing somewhere inside a flowpipe run.
"""

from __future__ import annotations

import ast
import math
from typing import Callable, Sequence

import numpy as np

FUNCTIONS = {"sin": math.sin, "cos": math.cos, "exp": math.exp}

_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_UNARYOPS = (ast.UAdd, ast.USub)


class ExprError(ValueError):
    """Malformed or out-of-whitelist right-hand-side expression."""


def _fail(msg: str, node: ast.AST) -> None:
    raise ExprError(f"{msg} at column {node.col_offset + 1}")


def _check(node: ast.AST, names: set) -> None:
    if isinstance(node, ast.Expression):
        _check(node.body, names)
    elif isinstance(node, ast.BinOp):
        if not isinstance(node.op, _BINOPS):
            _fail(f"unsupported operator {type(node.op).__name__}", node)
        _check(node.left, names)
        _check(node.right, names)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, _UNARYOPS):
            _fail(f"unsupported operator {type(node.op).__name__}", node)
        _check(node.operand, names)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.keywords:
            _fail("only plain calls to sin, cos and exp are allowed", node)
        if node.func.id not in FUNCTIONS:
            _fail(f"unsupported function {node.func.id!r}", node)
        if len(node.args) != 1:
            _fail(f"{node.func.id} takes exactly one argument", node)
        _check(node.args[0], names)
    elif isinstance(node, ast.Name):
        if node.id not in names:
            _fail(f"unknown variable {node.id!r}", node)
    elif isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            _fail("constants must be real numbers", node)
    else:
        _fail(f"unsupported syntax {type(node).__name__}", node)


def parse_expr(source: str, variables: Sequence[str]) -> Callable:
    """Compile one expression into ``f(env_dict) -> float``."""
    if not isinstance(source, str):
        raise ExprError("expression must be a string")
    try:
        tree = ast.parse(source, mode="eval")
    except SyntaxError as e:
        raise ExprError(f"invalid expression: {e.msg} at column {e.offset}") from None
    _check(tree, set(variables))
    code = compile(tree, "<rhs>", "eval")
    consts = {"__builtins__": {}, **FUNCTIONS}

    def evaluate(env: dict) -> float:
        return float(eval(code, consts, env))

    return evaluate


def parse_field(
    sources: Sequence[str], variables: Sequence[str]
) -> Callable[[np.ndarray], np.ndarray]:
    """Vector field ``f(x) -> dx/dt`` from one expression per coordinate."""
    variables = list(variables)
    if len(sources) != len(variables):
        raise ExprError(
            f"{len(variables)} variables but {len(sources)} expressions"
        )
    if len(set(variables)) != len(variables):
        raise ExprError("variable names must be unique")
    for v in variables:
        if not isinstance(v, str) or not v.isidentifier() or v in FUNCTIONS:
            raise ExprError(f"invalid variable name {v!r}")
    fns = [parse_expr(src, variables) for src in sources]

    def field(x: np.ndarray) -> np.ndarray:
        env = dict(zip(variables, np.asarray(x, dtype=float)))
        return np.array([fn(env) for fn in fns])

    return field
