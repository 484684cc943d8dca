"""Continuation and discretization of linear, spatially invariant 1D systems.

A node obeys ``drho_i/dt = sum_j a_j rho_{i+s_j}``.  Continuing it to order
``d`` produces the PDE

    drho/dt = sum_k c_k dx^k / k! d^k rho / dx^k,   c_k = sum_j a_j s_j^k

and discretizing that PDE back on the same stencil recovers the gains.  All
algebra here is exact (``fractions.Fraction``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

__all__ = [
    "ContinuationValidityError",
    "DegenerateStencilError",
    "InsufficientStencilError",
    "Stencil",
    "LinearOdeSpec",
    "PdeCoefficients",
    "DerivativeRequest",
    "as_fraction",
    "vandermonde",
    "solve_rational",
    "continue_linear",
    "discretize_derivative",
    "discretize_pde",
    "round_trip_check",
    "order_of_accuracy",
    "ring_matrix",
    "ACCURACY_PROBE_CAP",
]

# order_of_accuracy probes at most this many coefficients past the request
ACCURACY_PROBE_CAP = 8


class ContinuationValidityError(ValueError):
    """Raised when a continuation of order d has d + 1 < N."""


class DegenerateStencilError(ValueError):
    """Raised for stencils with repeated shifts."""


class InsufficientStencilError(ValueError):
    """Raised when a stencil cannot resolve the highest nonzero derivative."""


def as_fraction(value) -> Fraction:
    """Convert ints, strings ("p/q", "0.25") or floats to an exact Fraction."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, str):
        return Fraction(value.strip())
    return Fraction(value)


@dataclass(frozen=True)
class Stencil:
    """Sorted, pairwise distinct integer lattice offsets."""

    shifts: tuple[int, ...]

    def __post_init__(self):
        shifts = tuple(int(s) for s in self.shifts)
        if len(shifts) == 0:
            raise DegenerateStencilError("a stencil needs at least one shift")
        if len(set(shifts)) != len(shifts):
            raise DegenerateStencilError(f"repeated shifts in {shifts}")
        object.__setattr__(self, "shifts", tuple(sorted(shifts)))

    def __len__(self) -> int:
        return len(self.shifts)

    def __iter__(self):
        return iter(self.shifts)


@dataclass(frozen=True)
class LinearOdeSpec:
    """Gains aligned with a canonical (ascending) stencil plus the spacing dx.

    Construct through :meth:`from_pairs` when shifts are not already sorted;
    the gains are permuted together with the shifts.
    """

    stencil: Stencil
    gains: tuple[Fraction, ...]
    dx: Fraction = Fraction(1)

    def __post_init__(self):
        gains = tuple(as_fraction(g) for g in self.gains)
        dx = as_fraction(self.dx)
        if len(gains) != len(self.stencil):
            raise ValueError(
                f"{len(gains)} gains for a stencil of {len(self.stencil)} points"
            )
        if dx <= 0:
            raise ValueError("dx must be positive")
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "dx", dx)

    @classmethod
    def from_pairs(cls, shifts: Sequence[int], gains: Sequence, dx=1) -> "LinearOdeSpec":
        if len(shifts) != len(gains):
            raise ValueError("shifts and gains differ in length")
        if len(set(int(s) for s in shifts)) != len(shifts):
            raise DegenerateStencilError(f"repeated shifts in {tuple(shifts)}")
        pairs = sorted(zip((int(s) for s in shifts), gains), key=lambda p: p[0])
        return cls(Stencil(tuple(s for s, _ in pairs)), tuple(g for _, g in pairs), dx)

    @property
    def shifts(self) -> tuple[int, ...]:
        return self.stencil.shifts

    def __len__(self) -> int:
        return len(self.stencil)

    def gain_map(self) -> dict[int, Fraction]:
        return dict(zip(self.stencil.shifts, self.gains))

    def scaled(self, alpha) -> "LinearOdeSpec":
        alpha = as_fraction(alpha)
        return LinearOdeSpec(self.stencil, tuple(alpha * g for g in self.gains), self.dx)


@dataclass(frozen=True)
class PdeCoefficients:
    """Coefficients c_0..c_d of ``drho/dt = sum_k c_k dx^k/k! d^k rho/dx^k``."""

    coeffs: tuple[Fraction, ...]
    dx: Fraction = Fraction(1)
    source_shifts: tuple[int, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        coeffs = tuple(as_fraction(c) for c in self.coeffs)
        if not coeffs:
            raise ValueError("at least c_0 is required")
        dx = as_fraction(self.dx)
        if dx <= 0:
            raise ValueError("dx must be positive")
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "dx", dx)

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    def derivative_weights(self) -> tuple[Fraction, ...]:
        """Weights multiplying d^k rho/dx^k, i.e. c_k dx^k / k!."""
        return tuple(
            c * self.dx**k / math.factorial(k) for k, c in enumerate(self.coeffs)
        )

    def highest_nonzero(self) -> int:
        """Index of the last nonzero coefficient, -1 for the zero PDE."""
        for k in range(len(self.coeffs) - 1, -1, -1):
            if self.coeffs[k] != 0:
                return k
        return -1

    def pretty(self) -> str:
        terms = []
        for k, w in enumerate(self.derivative_weights()):
            if w == 0:
                continue
            if k == 0:
                op = "ρ"
            elif k == 1:
                op = "∂ρ/∂x"
            else:
                sup = _superscript(k)
                op = f"∂{sup}ρ/∂x{sup}"
            terms.append((w, op))
        return "∂ρ/∂t = " + _join_terms(terms)


@dataclass(frozen=True)
class DerivativeRequest:
    m: int
    stencil: Stencil
    dx: Fraction = Fraction(1)

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("derivative order must be nonnegative")
        if self.m >= len(self.stencil):
            raise InsufficientStencilError(
                f"derivative of order {self.m} needs more than {len(self.stencil)} points"
            )
        object.__setattr__(self, "dx", as_fraction(self.dx))


_SUPERSCRIPTS = str.maketrans("0123456789-", "⁰¹²³⁴⁵⁶⁷⁸⁹⁻")


def _superscript(k: int) -> str:
    return str(k).translate(_SUPERSCRIPTS)


def _format_rational(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def _join_terms(terms: list[tuple[Fraction, str]]) -> str:
    if not terms:
        return "0"
    out = []
    for idx, (w, op) in enumerate(terms):
        sign = "-" if w < 0 else "+"
        mag = abs(w)
        body = op if mag == 1 else f"{_format_rational(mag)}·{op}"
        if idx == 0:
            out.append(body if sign == "+" else f"-{body}")
        else:
            out.append(f" {sign} {body}")
    return "".join(out)


def vandermonde(stencil: Stencil | Sequence, rows: int) -> list[list[Fraction]]:
    """Rows x N matrix with entry (k, j) = s_j**k, using 0**0 == 1."""
    if rows < 1:
        raise ValueError("rows must be >= 1")
    shifts = stencil.shifts if isinstance(stencil, Stencil) else tuple(stencil)
    return [[Fraction(s) ** k for s in shifts] for k in range(rows)]


def solve_rational(matrix: Sequence[Sequence], rhs: Sequence) -> list[Fraction]:
    """Solve a square system exactly by Gauss-Jordan elimination."""
    n = len(matrix)
    if any(len(row) != n for row in matrix) or len(rhs) != n:
        raise ValueError("solve_rational needs a square system")
    aug = [[as_fraction(v) for v in row] + [as_fraction(b)] for row, b in zip(matrix, rhs)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if pivot is None:
            raise DegenerateStencilError("singular system")
        aug[col], aug[pivot] = aug[pivot], aug[col]
        inv = 1 / aug[col][col]
        aug[col] = [v * inv for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[col])]
    return [row[n] for row in aug]


def continue_linear(ode: LinearOdeSpec, d: int, *, unchecked: bool = False) -> PdeCoefficients:
    """Continue an ODE spec to a PDE of order d: c_k = sum_j a_j s_j^k."""
    if d < 0:
        raise ValueError("order must be nonnegative")
    if d + 1 < len(ode) and not unchecked:
        raise ContinuationValidityError(
            f"order {d} is invalid for {len(ode)} stencil points (need d + 1 >= N)"
        )
    coeffs = tuple(
        sum((a * Fraction(s) ** k for s, a in zip(ode.shifts, ode.gains)), Fraction(0))
        for k in range(d + 1)
    )
    return PdeCoefficients(coeffs, ode.dx, source_shifts=ode.shifts)


def discretize_derivative(req: DerivativeRequest) -> list[Fraction]:
    """Finite-difference weights for d^m/dx^m on the request's stencil."""
    n = len(req.stencil)
    rhs = [Fraction(0)] * n
    rhs[req.m] = Fraction(math.factorial(req.m)) / req.dx**req.m
    return solve_rational(vandermonde(req.stencil, n), rhs)


def discretize_pde(pde: PdeCoefficients, stencil: Stencil | Sequence[int]) -> LinearOdeSpec:
    """Replace every derivative of the PDE by its finite difference on `stencil`."""
    if not isinstance(stencil, Stencil):
        stencil = Stencil(tuple(stencil))
    n = len(stencil)
    top = pde.highest_nonzero()
    if top + 1 > n:
        raise InsufficientStencilError(
            f"derivative of order {top} needs at least {top + 1} points, got {n}"
        )
    # coefficients past n-1 are zero here, so truncating or zero-padding is exact
    c = list(pde.coeffs[:n]) + [Fraction(0)] * max(0, n - len(pde.coeffs))
    gains = solve_rational(vandermonde(stencil, n), c)
    return LinearOdeSpec(stencil, tuple(gains), pde.dx)


def _default_extras(shifts: Iterable[int], count: int) -> list[int]:
    taken = set(shifts)
    out = []
    k = 0
    while len(out) < count:
        for cand in (k, -k) if k else (0,):
            if cand not in taken and cand not in out and len(out) < count:
                out.append(cand)
        k += 1
    return out


def round_trip_check(
    ode: LinearOdeSpec, d: int, extra_shifts: Sequence[int] | None = None
) -> tuple[bool, LinearOdeSpec]:
    """Continue to order d, discretize on the stencil augmented by extra shifts.

    Returns whether the original gains came back unchanged with exact zeros on
    the extra points, along with the recovered spec.  When ``extra_shifts`` is
    omitted the d + 1 - N points closest to 0 are used.
    """
    n = len(ode)
    if d + 1 < n:
        raise ContinuationValidityError(
            f"order {d} is invalid for {n} stencil points (need d + 1 >= N)"
        )
    if extra_shifts is None:
        extra_shifts = _default_extras(ode.shifts, d + 1 - n)
    extra_shifts = [int(s) for s in extra_shifts]
    if len(extra_shifts) != d + 1 - n:
        raise ValueError(f"need exactly {d + 1 - n} extra shifts, got {len(extra_shifts)}")
    if set(extra_shifts) & set(ode.shifts):
        raise DegenerateStencilError("extra shifts overlap the original stencil")
    pde = continue_linear(ode, d)
    recovered = discretize_pde(pde, Stencil(tuple(ode.shifts) + tuple(extra_shifts)))
    got = recovered.gain_map()
    orig = ode.gain_map()
    ok = all(got[s] == a for s, a in orig.items()) and all(got[s] == 0 for s in extra_shifts)
    return ok, recovered


def order_of_accuracy(ode: LinearOdeSpec, d: int) -> int:
    """d + 1 - N, where d is raised past the request while trailing c_k vanish.

    The probe stops after ACCURACY_PROBE_CAP extra coefficients, so the zero
    system reports ``d + ACCURACY_PROBE_CAP + 1 - N``.
    """
    n = len(ode)
    if d + 1 < n:
        raise ContinuationValidityError(
            f"order {d} is invalid for {n} stencil points (need d + 1 >= N)"
        )
    coeffs = continue_linear(ode, d + ACCURACY_PROBE_CAP).coeffs
    eff = d
    while eff < d + ACCURACY_PROBE_CAP and coeffs[eff + 1] == 0:
        eff += 1
    return eff + 1 - n


def ring_matrix(ode: LinearOdeSpec, n: int) -> list[list[Fraction]]:
    """Dense n x n matrix of the system on the ring Z/nZ (shifts taken mod n)."""
    if n < 1:
        raise ValueError("ring size must be positive")
    mat = [[Fraction(0)] * n for _ in range(n)]
    for i in range(n):
        for s, a in zip(ode.shifts, ode.gains):
            mat[i][(i + s) % n] += a
    return mat
