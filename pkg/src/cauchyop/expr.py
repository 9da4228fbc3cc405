"""A small arithmetic grammar over ``t`` and ``x`` for coefficient entries.

Example: ``"1 + 0.2*sin(x) * exp(-t)"`` or ``"2 + 0.5j*cos(x1 - x2)"``.
"""
import ast
import operator

import numpy as np

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {
    name: getattr(np, name)
    for name in ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "tanh", "cosh", "sinh",
                 "real", "imag", "conj", "minimum", "maximum")
}
_CONSTS = {"pi": np.pi, "e": np.e, "i": 1j, "j": 1j}


class ExpressionError(ValueError):
    pass


def _check(node, names):
    if isinstance(node, ast.Expression):
        return _check(node.body, names)
    if isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float, complex)):
            raise ExpressionError(f"unsupported literal {node.value!r}")
        return
    if isinstance(node, ast.Name):
        if node.id not in names and node.id not in _CONSTS:
            raise ExpressionError(f"unknown name {node.id!r}")
        return
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        _check(node.left, names)
        _check(node.right, names)
        return
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        _check(node.operand, names)
        return
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
        if node.keywords:
            raise ExpressionError("keyword arguments are not allowed")
        for arg in node.args:
            _check(arg, names)
        return
    raise ExpressionError(f"unsupported syntax: {ast.dump(node)}")


def _eval(node, env):
    if isinstance(node, ast.Expression):
        return _eval(node.body, env)
    if isinstance(node, ast.Constant):
        return node.value
    if isinstance(node, ast.Name):
        return env[node.id] if node.id in env else _CONSTS[node.id]
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, env), _eval(node.right, env))
    if isinstance(node, ast.UnaryOp):
        return _UNARY[type(node.op)](_eval(node.operand, env))
    return _FUNCS[node.func.id](*[_eval(a, env) for a in node.args])


def compile_expression(text, n=1):
    """Parse ``text`` and return ``f(t, x)`` evaluating it on arrays.

    ``x`` has trailing axis of length ``n``; names ``x`` (= ``x1``),
    ``x1`` .. ``xn`` and ``t`` are available.
    """
    names = {"t", "x"} | {f"x{k + 1}" for k in range(n)}
    try:
        tree = ast.parse(str(text), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc}") from None
    _check(tree, names)

    def func(t, x):
        env = {"t": t, "x": x[..., 0]}
        for k in range(n):
            env[f"x{k + 1}"] = x[..., k]
        return _eval(tree, env)

    func.depends_on_t = any(isinstance(nd, ast.Name) and nd.id == "t" for nd in ast.walk(tree))
    func.depends_on_x = any(isinstance(nd, ast.Name) and nd.id.startswith("x") for nd in ast.walk(tree))
    return func
