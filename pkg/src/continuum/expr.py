"""Symbolic PDE right-hand sides built from the state, x-derivatives,
one-variable functions, rational·dx^p multipliers and sums.

Every constructor in this module returns expressions in canonical form, so
structural equality (``==``) is semantic equality for the rewrite rules
implemented here:

* sums are flattened, like terms merged, zero terms dropped, and the terms
  sorted by (combined derivative order, function names, text);
* scalar multipliers are merged and distributed over sums;
* derivatives of sums and of scaled terms are expanded, nested derivatives
  are fused, and derivatives of constants vanish;
* functions applied to an exact zero are folded when their value at 0 is known.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

__all__ = [
    "Expr",
    "Rho",
    "One",
    "Deriv",
    "Fn",
    "Scale",
    "Sum",
    "ZERO",
    "RHO",
    "ONE",
    "FunctionSpec",
    "FUNCTIONS",
    "register_function",
    "rho",
    "one",
    "deriv",
    "fn",
    "scale",
    "add",
    "combined_order",
    "truncate_order",
    "depends_on_state",
    "to_sexpr",
    "parse_sexpr",
    "to_unicode",
    "evaluate_periodic",
    "linear_coefficients",
]


class Expr:
    """Base class of expression nodes; use the lower-case constructors."""

    __slots__ = ()

    def __str__(self) -> str:
        return to_sexpr(self)


@dataclass(frozen=True, eq=True)
class Rho(Expr):
    pass


@dataclass(frozen=True, eq=True)
class One(Expr):
    pass


@dataclass(frozen=True, eq=True)
class Deriv(Expr):
    order: int
    arg: Expr


@dataclass(frozen=True, eq=True)
class Fn(Expr):
    name: str
    arg: Expr
    param: Fraction | None = None


@dataclass(frozen=True, eq=True)
class Scale(Expr):
    coef: Fraction
    dx_power: int
    arg: Expr


@dataclass(frozen=True, eq=True)
class Sum(Expr):
    terms: tuple


RHO = Rho()
ONE = One()
ZERO = Sum(())


@dataclass(frozen=True)
class FunctionSpec:
    name: str
    numeric: Callable
    # exact value at 0, or None if it is not rational / not folded
    at_zero: Fraction | None
    takes_param: bool = False


FUNCTIONS: dict[str, FunctionSpec] = {}


def register_function(spec: FunctionSpec) -> None:
    if not spec.name.isidentifier():
        raise ValueError(f"function name {spec.name!r} must be an identifier")
    FUNCTIONS[spec.name] = spec


for _spec in (
    FunctionSpec("sin", np.sin, Fraction(0)),
    FunctionSpec("cos", np.cos, Fraction(1)),
    FunctionSpec("exp", np.exp, Fraction(1)),
    FunctionSpec("tanh", np.tanh, Fraction(0)),
    FunctionSpec("identity", lambda v: v, Fraction(0)),
    FunctionSpec("power", lambda v, p: np.power(v, p), None, takes_param=True),
):
    register_function(_spec)


def _lookup(name: str) -> FunctionSpec:
    try:
        return FUNCTIONS[name]
    except KeyError:
        raise KeyError(f"unknown function {name!r}; registered: {sorted(FUNCTIONS)}") from None


# ---------------------------------------------------------------- constructors

def rho() -> Expr:
    return RHO


def one() -> Expr:
    return ONE


def depends_on_state(e: Expr) -> bool:
    if isinstance(e, Rho):
        return True
    if isinstance(e, One):
        return False
    if isinstance(e, Sum):
        return any(depends_on_state(t) for t in e.terms)
    return depends_on_state(e.arg)


def scale(coef, dx_power: int, e: Expr) -> Expr:
    coef = Fraction(coef)
    if coef == 0 or e == ZERO:
        return ZERO
    if isinstance(e, Sum):
        return add(*(scale(coef, dx_power, t) for t in e.terms))
    if isinstance(e, Scale):
        coef, dx_power, e = coef * e.coef, dx_power + e.dx_power, e.arg
    if coef == 1 and dx_power == 0:
        return e
    return Scale(coef, int(dx_power), e)


def deriv(order: int, e: Expr) -> Expr:
    if order < 0:
        raise ValueError("derivative order must be nonnegative")
    if order == 0:
        return e
    if not depends_on_state(e):
        return ZERO
    if isinstance(e, Sum):
        return add(*(deriv(order, t) for t in e.terms))
    if isinstance(e, Scale):
        return scale(e.coef, e.dx_power, deriv(order, e.arg))
    if isinstance(e, Deriv):
        return Deriv(order + e.order, e.arg)
    return Deriv(order, e)


def fn(name: str, e: Expr, param=None) -> Expr:
    spec = _lookup(name)
    if spec.takes_param and param is None:
        raise ValueError(f"function {name!r} needs a parameter")
    if not spec.takes_param and param is not None:
        raise ValueError(f"function {name!r} takes no parameter")
    if name == "identity":
        return e
    param = None if param is None else Fraction(param)
    if e == ZERO:
        if spec.at_zero is not None:
            return scale(spec.at_zero, 0, ONE)
        if name == "power" and param > 0:
            return ZERO
    return Fn(name, e, param)


def _split_scale(e: Expr) -> tuple[Fraction, int, Expr]:
    if isinstance(e, Scale):
        return e.coef, e.dx_power, e.arg
    return Fraction(1), 0, e


def add(*terms: Expr) -> Expr:
    flat: list[Expr] = []
    stack = list(terms)
    while stack:
        t = stack.pop(0)
        if isinstance(t, Sum):
            stack[:0] = list(t.terms)
        else:
            flat.append(t)
    merged: dict[tuple[int, Expr], Fraction] = {}
    order: list[tuple[int, Expr]] = []
    for t in flat:
        c, p, base = _split_scale(t)
        key = (p, base)
        if key not in merged:
            merged[key] = Fraction(0)
            order.append(key)
        merged[key] += c
    out = [scale(merged[k], k[0], k[1]) for k in order if merged[k] != 0]
    out = [t for t in out if t != ZERO]
    if not out:
        return ZERO
    if len(out) == 1:
        return out[0]
    out.sort(key=_sort_key)
    return Sum(tuple(out))


def _fn_names(e: Expr) -> str:
    if isinstance(e, Fn):
        return e.name + "," + _fn_names(e.arg)
    if isinstance(e, (Deriv, Scale)):
        return _fn_names(e.arg)
    if isinstance(e, Sum):
        return ",".join(_fn_names(t) for t in e.terms)
    return ""


def _sort_key(e: Expr):
    return (combined_order(e), _fn_names(e), to_sexpr(e))


# ------------------------------------------------------------- order handling

def combined_order(e: Expr) -> int:
    """Largest total derivative order along any composition path."""
    if isinstance(e, (Rho, One)):
        return 0
    if isinstance(e, Deriv):
        return e.order + combined_order(e.arg)
    if isinstance(e, Sum):
        return max((combined_order(t) for t in e.terms), default=0)
    return combined_order(e.arg)


def truncate_order(e: Expr, budget: int) -> Expr:
    """Drop every term whose combined derivative order exceeds ``budget``."""
    if budget < 0:
        return ZERO
    if isinstance(e, (Rho, One)):
        return e
    if isinstance(e, Sum):
        return add(*(truncate_order(t, budget) for t in e.terms))
    if isinstance(e, Scale):
        return scale(e.coef, e.dx_power, truncate_order(e.arg, budget))
    if isinstance(e, Deriv):
        if e.order > budget:
            return ZERO
        return deriv(e.order, truncate_order(e.arg, budget - e.order))
    return fn(e.name, truncate_order(e.arg, budget), e.param)


# ------------------------------------------------------------------- printing

def _q(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def to_sexpr(e: Expr) -> str:
    """Canonical one-line s-expression text."""
    if isinstance(e, Rho):
        return "rho"
    if isinstance(e, One):
        return "1"
    if isinstance(e, Sum):
        return "(+" + "".join(" " + to_sexpr(t) for t in e.terms) + ")"
    if isinstance(e, Scale):
        return f"(* {_q(e.coef)} dx^{e.dx_power} {to_sexpr(e.arg)})"
    if isinstance(e, Deriv):
        return f"(d {e.order} {to_sexpr(e.arg)})"
    if e.param is not None:
        return f"({e.name} {_q(e.param)} {to_sexpr(e.arg)})"
    return f"({e.name} {to_sexpr(e.arg)})"


def _tokenize(text: str) -> list[str]:
    return text.replace("(", " ( ").replace(")", " ) ").split()


def parse_sexpr(text: str) -> Expr:
    """Inverse of :func:`to_sexpr`; the result is re-canonicalized."""
    tokens = _tokenize(text)
    pos = 0

    def parse() -> Expr:
        nonlocal pos
        if pos >= len(tokens):
            raise ValueError("unexpected end of expression")
        tok = tokens[pos]
        pos += 1
        if tok == "rho":
            return RHO
        if tok == "1":
            return ONE
        if tok != "(":
            raise ValueError(f"unexpected token {tok!r}")
        head = tokens[pos]
        pos += 1
        if head == "+":
            items = []
            while tokens[pos] != ")":
                items.append(parse())
            pos += 1
            return add(*items)
        if head == "*":
            coef = Fraction(tokens[pos])
            dx_tok = tokens[pos + 1]
            if not dx_tok.startswith("dx^"):
                raise ValueError(f"expected dx^p, got {dx_tok!r}")
            pos += 2
            arg = parse()
            _expect(")")
            return scale(coef, int(dx_tok[3:]), arg)
        if head == "d":
            k = int(tokens[pos])
            pos += 1
            arg = parse()
            _expect(")")
            return deriv(k, arg)
        spec = _lookup(head)
        param = None
        if spec.takes_param:
            param = Fraction(tokens[pos])
            pos += 1
        arg = parse()
        _expect(")")
        return fn(head, arg, param)

    def _expect(tok: str) -> None:
        nonlocal pos
        if pos >= len(tokens) or tokens[pos] != tok:
            raise ValueError(f"expected {tok!r} at token {pos}")
        pos += 1

    out = parse()
    if pos != len(tokens):
        raise ValueError("trailing tokens after expression")
    return out


_SUP = str.maketrans("0123456789-", "⁰¹²³⁴⁵⁶⁷⁸⁹⁻")


def _sup(k: int) -> str:
    return "" if k == 1 else str(k).translate(_SUP)


def to_unicode(e: Expr) -> str:
    """Readable math, e.g. ``Δx·∂/∂x[sin(Δx·∂ρ/∂x)]``."""
    if isinstance(e, Rho):
        return "ρ"
    if isinstance(e, One):
        return "1"
    if isinstance(e, Sum):
        if not e.terms:
            return "0"
        parts = []
        for idx, t in enumerate(e.terms):
            text = to_unicode(t)
            if idx and text.startswith("-"):
                parts.append(" - " + text[1:])
            elif idx:
                parts.append(" + " + text)
            else:
                parts.append(text)
        return "".join(parts)
    if isinstance(e, Scale):
        factors = []
        mag = abs(e.coef)
        if mag != 1 or (e.dx_power == 0 and isinstance(e.arg, One)):
            factors.append(_q(mag))
        if e.dx_power:
            factors.append("Δx" + _sup(e.dx_power))
        if not isinstance(e.arg, One):
            inner = to_unicode(e.arg)
            factors.append(f"({inner})" if isinstance(e.arg, Sum) else inner)
        sign = "-" if e.coef < 0 else ""
        return sign + "·".join(factors)
    if isinstance(e, Deriv):
        s = _sup(e.order)
        if isinstance(e.arg, Rho):
            return f"∂{s}ρ/∂x{s}"
        return f"∂{s}/∂x{s}[{to_unicode(e.arg)}]"
    head = e.name if e.param is None else f"{e.name}[{_q(e.param)}]"
    return f"{head}({to_unicode(e.arg)})"


# ------------------------------------------------------------------ numerics

def _spectral_derivative(values: np.ndarray, order: int, length: float) -> np.ndarray:
    n = values.shape[-1]
    k = np.fft.fftfreq(n, d=length / (2 * math.pi * n))
    mult = (1j * k) ** order
    if order % 2 == 1 and n % 2 == 0:
        mult[n // 2] = 0.0  # drop the unpaired Nyquist mode for odd orders
    return np.real(np.fft.ifft(mult * np.fft.fft(values)))


def evaluate_periodic(e: Expr, rho_values: np.ndarray, length: float, dx: float) -> np.ndarray:
    """Evaluate on a uniform periodic grid using spectral x-derivatives.

    ``length`` is the period of the grid and ``dx`` the value substituted for
    the symbolic spacing in scalar multipliers.
    """
    rho_values = np.asarray(rho_values, dtype=float)

    def ev(node: Expr) -> np.ndarray:
        if isinstance(node, Rho):
            return rho_values
        if isinstance(node, One):
            return np.ones_like(rho_values)
        if isinstance(node, Sum):
            out = np.zeros_like(rho_values)
            for t in node.terms:
                out = out + ev(t)
            return out
        if isinstance(node, Scale):
            return float(node.coef) * dx**node.dx_power * ev(node.arg)
        if isinstance(node, Deriv):
            return _spectral_derivative(ev(node.arg), node.order, length)
        spec = _lookup(node.name)
        inner = ev(node.arg)
        if spec.takes_param:
            return spec.numeric(inner, float(node.param))
        return spec.numeric(inner)

    return ev(e)


def linear_coefficients(e: Expr) -> dict[int, Fraction] | None:
    """For a linear expression sum_k q_k dx^k d^k rho, return {k: q_k * k!}.

    These are the c_k of ``drho/dt = sum_k c_k dx^k/k! d^k rho``.  Returns None
    when the expression is not of that form.
    """
    out: dict[int, Fraction] = {}
    terms = e.terms if isinstance(e, Sum) else (e,)
    for t in terms:
        c, p, base = _split_scale(t)
        if isinstance(base, Rho):
            k = 0
        elif isinstance(base, Deriv) and isinstance(base.arg, Rho):
            k = base.order
        else:
            return None
        if p != k:
            return None
        out[k] = out.get(k, Fraction(0)) + c * math.factorial(k)
    return out
