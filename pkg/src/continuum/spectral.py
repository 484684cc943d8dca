"""Frequency-domain symbols of lattice ODEs and their continuations.

The ODE acts on Fourier modes e^{i w x} as multiplication by

    a(w) = sum_j a_j exp(i s_j dx w)

and an order-d continuation multiplies them by the polynomial

    c(w) = sum_k c_k dx^k / k! (i w)^k,

which is the degree-d Taylor truncation of a(w).  Growth of a mode is governed
by the real part of the symbol, so stability is decided by the even
coefficients only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .stencil import LinearOdeSpec, PdeCoefficients, continue_linear

__all__ = [
    "STABLE",
    "ARTIFICIALLY_UNSTABLE",
    "INHERITS_UNSTABLE",
    "INDETERMINATE",
    "REAL_PART_TOL",
    "MAX_STABLE_ORDER",
    "StabilityVerdict",
    "ErrorTable",
    "default_omega_grid",
    "ode_symbol_eval",
    "pde_symbol_eval",
    "real_part_polynomial",
    "pointwise_error",
    "classify_stability",
    "stable_order_set",
    "max_real_part",
]

STABLE = "Stable"
ARTIFICIALLY_UNSTABLE = "ArtificiallyUnstable"
INHERITS_UNSTABLE = "InheritsUnstable"
INDETERMINATE = "Indeterminate"

REAL_PART_TOL = 1e-9
MAX_STABLE_ORDER = 64


@dataclass(frozen=True)
class StabilityVerdict:
    kind: str
    witness_omega: float | None = None
    witness_real: float | None = None
    # True when every even coefficient vanishes, so Re c(w) == 0 identically
    purely_dispersive: bool = False

    def __post_init__(self):
        has_witness = self.witness_omega is not None
        if has_witness != (self.kind in (ARTIFICIALLY_UNSTABLE, INHERITS_UNSTABLE)):
            raise ValueError(f"witness must be present exactly for unstable verdicts, got {self}")

    @property
    def is_stable(self) -> bool:
        return self.kind == STABLE

    @property
    def non_growing(self) -> bool:
        """Stable, or purely dispersive with an identically zero real part."""
        return self.kind == STABLE or (self.kind == INDETERMINATE and self.purely_dispersive)


@dataclass(frozen=True)
class ErrorTable:
    """|c_d(w) - a(w)| for each order in ``orders`` (rows) and each w (columns)."""

    orders: tuple[int, ...]
    omega: np.ndarray
    error: np.ndarray

    def row(self, d: int) -> np.ndarray:
        return self.error[self.orders.index(d)]


def default_omega_grid(dx=1, points: int = 1001) -> np.ndarray:
    """Uniform grid over one period [-pi/dx, pi/dx] of the ODE symbol."""
    half = math.pi / float(dx)
    return np.linspace(-half, half, points)


def ode_symbol_eval(ode: LinearOdeSpec, omega):
    """sum_j a_j exp(i s_j dx w); scalar in, complex out, arrays broadcast."""
    w = np.asarray(omega, dtype=float)
    dx = float(ode.dx)
    out = np.zeros(w.shape, dtype=complex)
    for s, a in zip(ode.shifts, ode.gains):
        out = out + float(a) * np.exp(1j * s * dx * w)
    return complex(out) if out.ndim == 0 else out


def pde_symbol_eval(pde: PdeCoefficients, omega):
    """sum_k c_k dx^k / k! (i w)^k, evaluated by Horner's rule."""
    w = np.asarray(omega, dtype=float)
    weights = [float(v) for v in pde.derivative_weights()]
    iw = 1j * w
    out = np.zeros(w.shape, dtype=complex)
    for c in reversed(weights):
        out = out * iw + c
    return complex(out) if out.ndim == 0 else out


def real_part_polynomial(pde: PdeCoefficients) -> list[Fraction]:
    """Exact coefficients p_m with Re c(w) = sum_m p_m (w^2)^m."""
    weights = pde.derivative_weights()
    return [(-1) ** (k // 2) * weights[k] for k in range(0, len(weights), 2)]


def pointwise_error(ode: LinearOdeSpec, d_max: int, omega_grid=None) -> ErrorTable:
    """Distance between each truncated symbol (d = 1..d_max) and the exact one."""
    if d_max < 1:
        raise ValueError("d_max must be >= 1")
    w = default_omega_grid(ode.dx) if omega_grid is None else np.asarray(omega_grid, float)
    exact = ode_symbol_eval(ode, w)
    full = continue_linear(ode, d_max, unchecked=True)
    rows = []
    for d in range(1, d_max + 1):
        trunc = PdeCoefficients(full.coeffs[: d + 1], ode.dx)
        rows.append(np.abs(pde_symbol_eval(trunc, w) - exact))
    return ErrorTable(tuple(range(1, d_max + 1)), w, np.vstack(rows))


def _positive_region_probe(poly: Sequence[Fraction]) -> float | None:
    """Return some w with Re c(w) > tol, searching the whole real line.

    Candidate points are 0, the midpoints between consecutive nonnegative real
    roots of the polynomial in t = w^2, and a point past the largest root.
    """
    coeffs = [float(p) for p in poly]
    while len(coeffs) > 1 and coeffs[-1] == 0.0:
        coeffs.pop()
    if len(coeffs) == 1:
        return 0.0 if coeffs[0] > REAL_PART_TOL else None
    roots = np.polynomial.polynomial.polyroots(coeffs)
    real_roots = sorted(
        r.real for r in roots if abs(r.imag) <= 1e-9 * max(1.0, abs(r)) and r.real >= 0
    )
    pts = [0.0] + real_roots
    candidates = [0.0]
    candidates += [0.5 * (a + b) for a, b in zip(pts, pts[1:])]
    candidates.append(2.0 * pts[-1] + 1.0)
    for t in candidates:
        val = np.polynomial.polynomial.polyval(t, coeffs)
        if val > REAL_PART_TOL:
            return math.sqrt(t)
    return None


def max_real_part(symbol_values: np.ndarray, omega: np.ndarray) -> tuple[float, float]:
    """(w, Re) at the sampled frequency maximizing the real part."""
    idx = int(np.argmax(symbol_values.real))
    return float(omega[idx]), float(symbol_values.real[idx])


def classify_stability(
    pde: PdeCoefficients, *, ode: LinearOdeSpec | None = None, omega_grid=None
) -> StabilityVerdict:
    """Classify an order-d continuation by the sign of its real part.

    The highest nonzero even coefficient k* decides the high-frequency
    behaviour: c_k* > 0 with k* = 0 (mod 4), or c_k* < 0 with k* = 2 (mod 4),
    is unstable.  Otherwise the real part is additionally checked on the
    sampled grid and, through the roots of the real-part polynomial, beyond it.
    When ``ode`` is given and its own symbol has a positive real part, a
    mid-band instability is reported as inherited rather than artificial.
    """
    w = default_omega_grid(pde.dx) if omega_grid is None else np.asarray(omega_grid, float)
    poly = real_part_polynomial(pde)
    top = max((m for m, p in enumerate(poly) if p != 0), default=-1)
    if top < 0:
        return StabilityVerdict(INDETERMINATE, purely_dispersive=True)
    k_star = 2 * top
    c_star = pde.coeffs[k_star]
    values = pde_symbol_eval(pde, w)
    if (k_star % 4 == 0 and c_star > 0) or (k_star % 4 == 2 and c_star < 0):
        w0, re0 = max_real_part(values, w)
        if re0 <= REAL_PART_TOL:
            # positivity lives beyond the sampled band; pick a witness there
            w0 = _positive_region_probe(poly)
            re0 = float(pde_symbol_eval(pde, w0).real)
        return StabilityVerdict(ARTIFICIALLY_UNSTABLE, w0, re0)
    w0, re0 = max_real_part(values, w)
    if re0 <= REAL_PART_TOL:
        probe = _positive_region_probe(poly)
        if probe is None:
            return StabilityVerdict(STABLE)
        w0, re0 = probe, float(pde_symbol_eval(pde, probe).real)
    inherited = False
    if ode is not None:
        ode_vals = ode_symbol_eval(ode, w)
        inherited = float(np.max(ode_vals.real)) > REAL_PART_TOL
    return StabilityVerdict(INHERITS_UNSTABLE if inherited else ARTIFICIALLY_UNSTABLE, w0, re0)


def stable_order_set(ode: LinearOdeSpec, d_max: int, omega_grid=None) -> list[int]:
    """Valid orders d <= d_max (d + 1 >= N) whose continuation does not grow.

    Purely dispersive continuations, where Re c(w) vanishes identically, are
    counted as stable alongside the Stable verdict.
    """
    if d_max > MAX_STABLE_ORDER:
        raise ValueError(f"d_max is capped at {MAX_STABLE_ORDER}")
    if d_max < 0:
        return []
    full = continue_linear(ode, d_max, unchecked=True)
    out = []
    for d in range(len(ode) - 1, d_max + 1):
        pde = PdeCoefficients(full.coeffs[: d + 1], ode.dx)
        if classify_stability(pde, ode=ode, omega_grid=omega_grid).non_growing:
            out.append(d)
    return out
