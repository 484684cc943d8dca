"""Continuation beyond the uniform 1D setting.

* multidimensional lattices with multi-index stencils;
* space-dependent gains and unequally spaced nodes, where per-node
  coefficients are fitted by a function of position;
* boundary rows explained by algebraic ghost cells.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Callable, Mapping, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.interpolate import BarycentricInterpolator

from .stencil import ContinuationValidityError, DegenerateStencilError, LinearOdeSpec, as_fraction

__all__ = [
    "FitError",
    "IrreconcilableBoundaryError",
    "MultiIndexStencil",
    "MultiPdeCoefficients",
    "multi_indices",
    "continue_multidim",
    "NodeRow",
    "SpaceDependentOde",
    "FittedCoefficient",
    "CoefficientField",
    "fit_samples",
    "continue_space_dependent",
    "continue_unequally_spaced",
    "GhostCell",
    "BoundarySpec",
    "extract_boundary",
    "DIRICHLET",
    "NEUMANN",
    "ROBIN",
    "UNCLASSIFIED",
    "FLOAT_TOL",
]

FLOAT_TOL = 1e-10
DEFAULT_MAX_DEGREE = 8


class FitError(ValueError):
    """The requested coefficient fit is underdetermined or impossible."""


class IrreconcilableBoundaryError(ValueError):
    """A row differs from the interior template in a way no ghost cell explains."""


# ------------------------------------------------------------ multidimensional

def multi_indices(dim: int, d: int) -> list[tuple[int, ...]]:
    """All h in Z_+^dim with |h| <= d, by total order then lexicographically descending."""
    out = []
    for total in range(d + 1):
        block = [h for h in itertools.product(range(total + 1), repeat=dim) if sum(h) == total]
        out.extend(sorted(block, reverse=True))
    return out


def _mono(s: Sequence[int], h: Sequence[int]) -> Fraction:
    val = Fraction(1)
    for si, hi in zip(s, h):
        val *= Fraction(si) ** hi  # Fraction(0) ** 0 == 1
    return val


@dataclass(frozen=True)
class MultiIndexStencil:
    shifts: tuple[tuple[int, ...], ...]
    gains: tuple[Fraction, ...]
    dx: tuple[Fraction, ...]

    def __post_init__(self):
        shifts = tuple(tuple(int(v) for v in s) for s in self.shifts)
        if not shifts:
            raise DegenerateStencilError("a stencil needs at least one shift")
        dim = len(shifts[0])
        if dim < 1 or any(len(s) != dim for s in shifts):
            raise ValueError("all shifts must have the same positive dimension")
        if len(set(shifts)) != len(shifts):
            raise DegenerateStencilError("repeated shifts")
        gains = tuple(as_fraction(g) for g in self.gains)
        if len(gains) != len(shifts):
            raise ValueError("gains and shifts differ in length")
        dx = tuple(as_fraction(v) for v in self.dx)
        if len(dx) != dim or any(v <= 0 for v in dx):
            raise ValueError("dx must be a positive vector of the stencil dimension")
        order = sorted(range(len(shifts)), key=lambda j: shifts[j])
        object.__setattr__(self, "shifts", tuple(shifts[j] for j in order))
        object.__setattr__(self, "gains", tuple(gains[j] for j in order))
        object.__setattr__(self, "dx", dx)

    @property
    def dim(self) -> int:
        return len(self.dx)


@dataclass(frozen=True)
class MultiPdeCoefficients:
    """c_h for |h| <= d of ``drho/dt = sum_h c_h w_h d^{|h|} rho / dx^h``.

    The factor w_h is the Taylor weight dx^h / h! (``convention="taylor"``,
    default).  ``convention="total"`` uses dx^h / |h|! instead; the two agree
    whenever h has a single nonzero entry.
    """

    coeffs: Mapping[tuple[int, ...], Fraction]
    dx: tuple[Fraction, ...]
    order: int

    def derivative_weights(self, convention: str = "taylor") -> dict[tuple[int, ...], Fraction]:
        out = {}
        for h, c in self.coeffs.items():
            scale = Fraction(1)
            for dxi, hi in zip(self.dx, h):
                scale *= dxi**hi
            if convention == "taylor":
                denom = math.prod(math.factorial(hi) for hi in h)
            elif convention == "total":
                denom = math.factorial(sum(h))
            else:
                raise ValueError(f"unknown convention {convention!r}")
            out[h] = c * scale / denom
        return out

    def pretty(self, convention: str = "taylor") -> str:
        axes = "xyzw" if len(self.dx) <= 4 else None
        terms = []
        for h, w in self.derivative_weights(convention).items():
            if w == 0:
                continue
            total = sum(h)
            if total == 0:
                op = "ρ"
            else:
                names = "".join(
                    "∂" + (axes[a] if axes else f"x{a}") + _sup(hi) for a, hi in enumerate(h) if hi
                )
                op = f"∂{_sup(total)}ρ/{names}"
            mag = abs(w)
            body = op if mag == 1 else f"{mag}·{op}"
            terms.append(("-" if w < 0 else "+", body))
        if not terms:
            return "∂ρ/∂t = 0"
        text = ("-" if terms[0][0] == "-" else "") + terms[0][1]
        for sign, body in terms[1:]:
            text += f" {sign} {body}"
        return "∂ρ/∂t = " + text


_SUP = str.maketrans("0123456789", "⁰¹²³⁴⁵⁶⁷⁸⁹")


def _sup(k: int) -> str:
    return "" if k == 1 else str(k).translate(_SUP)


def continue_multidim(st: MultiIndexStencil, d: int) -> MultiPdeCoefficients:
    """c_h = sum_j a_j s_j^h for every multi-index |h| <= d."""
    if d < 0:
        raise ValueError("order must be nonnegative")
    coeffs = {}
    for h in multi_indices(st.dim, d):
        coeffs[h] = sum((a * _mono(s, h) for s, a in zip(st.shifts, st.gains)), Fraction(0))
    return MultiPdeCoefficients(coeffs, st.dx, d)


# ------------------------------------------------------------ space dependence

@dataclass(frozen=True)
class NodeRow:
    """drho_i/dt = sum_j gains_j rho_{i + shifts_j} + const."""

    index: int
    shifts: tuple[int, ...]
    gains: tuple
    const: object = 0

    def __post_init__(self):
        shifts = tuple(int(s) for s in self.shifts)
        if len(set(shifts)) != len(shifts):
            raise DegenerateStencilError(f"row {self.index}: repeated shifts")
        if len(self.gains) != len(shifts):
            raise ValueError(f"row {self.index}: gains and shifts differ in length")
        object.__setattr__(self, "index", int(self.index))
        object.__setattr__(self, "shifts", shifts)
        object.__setattr__(self, "gains", tuple(_num(g) for g in self.gains))
        object.__setattr__(self, "const", _num(self.const))

    def coefficient_map(self) -> dict[int, object]:
        """Absolute state index -> gain."""
        return {self.index + s: g for s, g in zip(self.shifts, self.gains)}


def _num(v):
    """Exact Fraction for rationals and numeric strings, float otherwise."""
    if isinstance(v, (Fraction, Rational, str)):
        return as_fraction(v)
    if isinstance(v, (float, np.floating)):
        return float(v)
    return as_fraction(v)


def _is_exact(*values) -> bool:
    return all(isinstance(v, Fraction) for v in values)


@dataclass(frozen=True)
class SpaceDependentOde:
    """Rows of a (possibly) space-dependent linear lattice system.

    ``positions`` maps every referenced index to its coordinate; when omitted
    node i sits at ``i * dx``.
    """

    rows: tuple[NodeRow, ...]
    dx: object = 1
    positions: Mapping[int, object] | None = None

    def __post_init__(self):
        rows = tuple(sorted(self.rows, key=lambda r: r.index))
        if len({r.index for r in rows}) != len(rows):
            raise ValueError("duplicate row indices")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "dx", _num(self.dx))
        if self.positions is not None:
            pos = {int(k): _num(v) for k, v in self.positions.items()}
            keys = sorted(pos)
            for a, b in zip(keys, keys[1:]):
                if not pos[b] > pos[a]:
                    if pos[b] == pos[a]:
                        raise DegenerateStencilError(f"nodes {a} and {b} coincide")
                    raise ValueError("positions must increase with the index")
            object.__setattr__(self, "positions", pos)

    @property
    def indices(self) -> list[int]:
        return [r.index for r in self.rows]

    def position(self, index: int):
        if self.positions is None:
            return index * self.dx
        try:
            return self.positions[index]
        except KeyError:
            raise KeyError(f"no position for index {index}") from None

    @classmethod
    def uniform(cls, template: LinearOdeSpec, indices: Sequence[int]) -> "SpaceDependentOde":
        rows = tuple(NodeRow(i, template.shifts, template.gains) for i in indices)
        return cls(rows, template.dx)


@dataclass(frozen=True)
class FittedCoefficient:
    k: int
    mode: str
    basis: str
    degree: int
    residual: float
    nodes: tuple[float, ...]
    samples: tuple
    evaluator: Callable = field(repr=False, compare=False)

    def __call__(self, x):
        return self.evaluator(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class CoefficientField:
    """c_k(x) for k = 0..d.

    ``scaling == "dx"`` reads as sum_k c_k(x) dx^k/k! d^k rho; ``"unit"``
    (unequal spacing, offsets already physical) as sum_k c_k(x)/k! d^k rho.
    """

    coefficients: tuple[FittedCoefficient, ...]
    dx: object
    scaling: str

    @property
    def order(self) -> int:
        return len(self.coefficients) - 1

    def __getitem__(self, k: int) -> FittedCoefficient:
        return self.coefficients[k]


def fit_samples(
    k: int, nodes: Sequence, samples: Sequence, mode: str = "interpolate", degree: int | None = None
) -> FittedCoefficient:
    """Fit c_k(x) through (node, sample) pairs with a polynomial basis."""
    x = np.array([float(v) for v in nodes])
    y = np.array([float(v) for v in samples])
    n = len(x)
    if n == 0:
        raise FitError("no samples to fit")
    if len(np.unique(x)) != n:
        raise FitError("coincident sample positions")
    if mode == "interpolate":
        if degree is not None and degree < n - 1:
            raise FitError(
                f"interpolation through {n} nodes needs degree >= {n - 1}, got {degree}"
            )
        if n == 1:
            value = y[0]
            ev = lambda t, v=value: np.full(np.shape(t), v) if np.ndim(t) else v
        else:
            interp = BarycentricInterpolator(x, y)
            ev = lambda t, f=interp: f(t)
        resid = float(np.max(np.abs(np.atleast_1d(ev(x)) - y))) if n > 1 else 0.0
        return FittedCoefficient(k, mode, "barycentric-lagrange", n - 1, resid, tuple(x), tuple(samples), ev)
    if mode == "lstsq":
        deg = min(n - 1, DEFAULT_MAX_DEGREE) if degree is None else int(degree)
        if deg < 0:
            raise FitError("degree must be nonnegative")
        if deg + 1 > n:
            raise FitError(
                f"least squares with degree {deg} needs {deg + 1} distinct nodes; "
                f"rank is at most {n}"
            )
        poly, (ss, rank, _, _) = Polynomial.fit(x, y, deg, full=True)
        if rank < deg + 1:
            raise FitError(f"rank-deficient least-squares basis: rank {rank} < {deg + 1}")
        resid = float(np.linalg.norm(poly(x) - y))
        return FittedCoefficient(k, mode, "monomial (scaled domain)", deg, resid, tuple(x), tuple(samples), poly)
    raise ValueError(f"unknown fit mode {mode!r}")


def _row_coefficients(row: NodeRow, d: int, offsets) -> list:
    out = []
    for k in range(d + 1):
        total = Fraction(0) if _is_exact(*row.gains, *offsets) else 0.0
        for a, off in zip(row.gains, offsets):
            total += a * off**k
        out.append(total)
    return out


def _check_order(sys: SpaceDependentOde, d: int) -> None:
    if d < 0:
        raise ValueError("order must be nonnegative")
    widest = max(len(r.shifts) for r in sys.rows)
    if d + 1 < widest:
        raise ContinuationValidityError(
            f"order {d} is invalid: some node has {widest} stencil points"
        )


def continue_space_dependent(
    sys: SpaceDependentOde, d: int, fit: str = "interpolate", degree: int | None = None
) -> CoefficientField:
    """Per-node c_ik = sum_j a_ij s_ij^k, then a fit of c_k(x) over node positions."""
    if not sys.rows:
        raise ValueError("system has no rows")
    _check_order(sys, d)
    per_node = [_row_coefficients(r, d, [Fraction(s) for s in r.shifts]) for r in sys.rows]
    xs = [sys.position(r.index) for r in sys.rows]
    coeffs = tuple(
        fit_samples(k, xs, [row[k] for row in per_node], fit, degree) for k in range(d + 1)
    )
    return CoefficientField(coeffs, sys.dx, "dx")


def continue_unequally_spaced(
    sys: SpaceDependentOde, d: int, fit: str = "interpolate", degree: int | None = None
) -> CoefficientField:
    """Per-node c_ik = sum_j a_ij (x_{i+s_ij} - x_i)^k on physical offsets."""
    if not sys.rows:
        raise ValueError("system has no rows")
    _check_order(sys, d)
    per_node = []
    for r in sys.rows:
        xi = sys.position(r.index)
        offsets = [sys.position(r.index + s) - xi for s in r.shifts]
        per_node.append(_row_coefficients(r, d, offsets))
    xs = [sys.position(r.index) for r in sys.rows]
    coeffs = tuple(
        fit_samples(k, xs, [row[k] for row in per_node], fit, degree) for k in range(d + 1)
    )
    return CoefficientField(coeffs, 1, "unit")


# ------------------------------------------------------------------ boundaries

DIRICHLET = "Dirichlet"
NEUMANN = "Neumann"
ROBIN = "Robin"
UNCLASSIFIED = "Unclassified"


@dataclass(frozen=True)
class GhostCell:
    """rho_ghost = sum_k coeffs[k] rho_k + const, over real states k."""

    index: int
    coeffs: Mapping[int, object]
    const: object
    kind: str
    adjacent: int
    # Dirichlet: boundary value; Neumann: outward-normal-free slope a in
    # d rho/dx = a; Robin: (lambda, const); otherwise None
    value: object = None

    def describe(self) -> str:
        rhs = []
        for k in sorted(self.coeffs):
            c = self.coeffs[k]
            rhs.append(f"{c}*rho_{k}" if c != 1 else f"rho_{k}")
        if self.const != 0 or not rhs:
            rhs.append(str(self.const))
        return f"rho_{self.index} = " + " + ".join(rhs)


@dataclass(frozen=True)
class BoundarySpec:
    cells: tuple[GhostCell, ...]

    def __len__(self) -> int:
        return len(self.cells)

    def by_index(self, index: int) -> GhostCell:
        for c in self.cells:
            if c.index == index:
                return c
        raise KeyError(index)


def _is_zero(v) -> bool:
    return v == 0 if isinstance(v, Fraction) else abs(v) <= FLOAT_TOL


def _is_one(v) -> bool:
    return v == 1 if isinstance(v, Fraction) else abs(v - 1) <= FLOAT_TOL


def _classify(ghost: int, coeffs: dict, const, real: set[int], dx) -> GhostCell:
    # the adjacent real state is the nearest existing index to the ghost
    adjacent = min(real, key=lambda k: (abs(k - ghost), k))
    nonzero = {k: v for k, v in coeffs.items() if not _is_zero(v)}
    side = 1 if adjacent > ghost else -1  # +1: ghost left of the domain
    if not nonzero:
        return GhostCell(ghost, {}, const, DIRICHLET, adjacent, const)
    if set(nonzero) == {adjacent}:
        lam = nonzero[adjacent]
        if _is_one(lam):
            # rho_g = rho_adj + const  ->  d rho/dx = -side*const/dx at the wall
            slope = -side * const / dx
            return GhostCell(ghost, nonzero, const, NEUMANN, adjacent, slope)
        return GhostCell(ghost, nonzero, const, ROBIN, adjacent, (lam, const))
    return GhostCell(ghost, nonzero, const, UNCLASSIFIED, adjacent, None)


def extract_boundary(sys: SpaceDependentOde, interior_template: LinearOdeSpec) -> BoundarySpec:
    """Ghost-cell relations that make every row equal the interior template.

    Rows identical to the template contribute nothing.  Ghosts are resolved
    row by row, taking first the rows with a single unknown ghost and
    substituting already-known ghosts into the rest.
    """
    real = set(sys.indices)
    template = list(zip(interior_template.shifts, interior_template.gains))
    known: dict[int, tuple[dict, object]] = {}
    pending = []
    for row in sys.rows:
        want = {row.index + s: a for s, a in template}
        have = row.coefficient_map()
        missing = [k for k in want if k not in real]
        for k in have:
            if k not in real:
                raise IrreconcilableBoundaryError(
                    f"row {row.index} references index {k}, which is not a state"
                )
        same = set(have) == set(want) and all(_eq(have[k], want[k]) for k in want)
        if same and _is_zero(row.const):
            continue
        if not missing:
            raise IrreconcilableBoundaryError(
                f"row {row.index} differs from the template but has no missing neighbours"
            )
        pending.append((row, want, have, missing))

    while pending:
        progress = False
        for item in list(pending):
            row, want, have, missing = item
            unknown = [g for g in missing if g not in known]
            if len(unknown) > 1:
                continue
            pending.remove(item)
            progress = True
            # sum_{real} (have - want) rho + const = sum_{ghost} want_g rho_g
            diff = {k: have.get(k, 0) - want.get(k, 0) for k in (set(have) | set(want)) & real}
            const = row.const
            for g in missing:
                if g in known:
                    g_coeffs, g_const = known[g]
                    for k, v in g_coeffs.items():
                        diff[k] = diff.get(k, 0) - want[g] * v
                    const = const - want[g] * g_const
            if not unknown:
                if any(not _is_zero(v) for v in diff.values()) or not _is_zero(const):
                    raise IrreconcilableBoundaryError(
                        f"row {row.index}: ghosts already fixed by other rows do not reproduce it"
                    )
                continue
            g = unknown[0]
            wg = want[g]
            if _is_zero(wg):
                raise IrreconcilableBoundaryError(f"ghost {g} has zero template weight")
            known[g] = ({k: v / wg for k, v in diff.items()}, const / wg)
        if not progress:
            rows = sorted(item[0].index for item in pending)
            raise IrreconcilableBoundaryError(
                f"rows {rows} need several unknown ghosts at once; relation is not unique"
            )

    cells = tuple(
        _classify(g, dict(known[g][0]), known[g][1], real, sys.dx) for g in sorted(known)
    )
    return BoundarySpec(cells)


def _eq(a, b) -> bool:
    if _is_exact(a, b):
        return a == b
    return abs(float(a) - float(b)) <= FLOAT_TOL
