"""Closed-form initial data written as strings over x.

Only arithmetic, sin, cos, exp and the constants pi and e are accepted.
"""

from tokenize import TokenError
from typing import Callable

import numpy as np
import sympy as sp
from sympy.core.function import AppliedUndef
from sympy.parsing.sympy_parser import convert_xor, parse_expr, standard_transformations

from src.model.errors import ConfigError

x = sp.Symbol("x", real=True)

ALLOWED_NAMES = {
    "x": x,
    "pi": sp.pi,
    "e": sp.E,
    "sin": sp.sin,
    "cos": sp.cos,
    "exp": sp.exp,
}
_GLOBALS = {
    "Integer": sp.Integer,
    "Float": sp.Float,
    "Rational": sp.Rational,
    "Symbol": sp.Symbol,
    "Function": sp.Function,
}
_TRANSFORMATIONS = standard_transformations + (convert_xor,)


def parse_expression(text: str, key: str = "expression") -> sp.Expr:
    """Parse and check an expression string.

    Args:
        text: expression such as "1 + 0.5*sin(2*pi*x)"
        key: configuration key used in error messages

    Returns:
        sp.Expr: the parsed expression in the single variable x

    Raises:
        ConfigError: syntax errors or names outside the mini-language
    """
    if not isinstance(text, str) or not text.strip():
        raise ConfigError(f"{key}: expected a non-empty expression string", code="bad_expression")
    if "__" in text or "lambda" in text:
        raise ConfigError(f"{key}: invalid expression {text!r}", code="bad_expression")
    try:
        expr = parse_expr(text, local_dict=dict(ALLOWED_NAMES), global_dict=dict(_GLOBALS), transformations=_TRANSFORMATIONS)
    except (SyntaxError, TypeError, TokenError, AttributeError) as exc:
        raise ConfigError(f"{key}: cannot parse {text!r} ({exc})", code="bad_expression") from exc
    expr = sp.sympify(expr)
    unknown_functions = sorted(str(f.func) for f in expr.atoms(AppliedUndef))
    if unknown_functions:
        raise ConfigError(f"{key}: unknown function(s) {', '.join(unknown_functions)}", code="bad_expression")
    unknown = sorted(str(s) for s in expr.free_symbols if s != x)
    if unknown:
        raise ConfigError(f"{key}: unknown name(s) {', '.join(unknown)}", code="bad_expression")
    return expr


def compile_expression(text: str, key: str = "expression") -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized callable of x for an expression string."""
    expr = parse_expression(text, key)
    f = sp.lambdify(x, expr, modules="numpy")

    def evaluate(nodes: np.ndarray) -> np.ndarray:
        nodes = np.asarray(nodes, dtype=float)
        return np.broadcast_to(np.asarray(f(nodes), dtype=float), nodes.shape).copy()

    return evaluate
