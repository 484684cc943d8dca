"""Particle lattices with pairwise radial forces and the identities behind
their continuum (compressible Euler) limit.

Particles carry a multi-index i in Z^n, unit mass, and interact through
F(x_i - x_j) = (x_i - x_j) phi(|x_i - x_j|) with phi(s) = f(s)/s.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

__all__ = [
    "ALL_TO_ALL",
    "GRID",
    "CollisionError",
    "DivergentTailError",
    "ForceLaw",
    "ParticleState",
    "BetaEntry",
    "lex_positive",
    "lattice_shells",
    "beta",
    "PressureModel",
    "PressureResult",
    "pressure",
    "tail_bound",
    "accelerations",
    "step_particles",
    "uniform_lattice",
    "total_momentum",
    "RefinementResult",
    "refinement_study",
    "verify_prop1",
    "verify_lemma1",
    "verify_lemma2",
    "random_trig_field",
    "conformal_strip_map",
    "IDENTITY_CHECKS",
    "identity_refinement",
]

ALL_TO_ALL = "AllToAll"
GRID = "Grid"
DEFAULT_BETA_CAP = 400
DEFAULT_RADIUS = 10


class CollisionError(RuntimeError):
    """Two interacting particles came closer than the configured minimum."""


class DivergentTailError(ValueError):
    """The force law decays too slowly for the pressure series to converge."""


# ----------------------------------------------------------------- force laws

@dataclass(frozen=True)
class ForceLaw:
    """Radial magnitude f(s); positive values push particles apart."""

    f: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"

    def phi(self, s):
        return self.f(s) / s

    def decay_integral(self, n: int, eps: float = 1e-3) -> float:
        """int_eps^inf s^(n-1) |f(s)| ds; raises if it does not converge."""
        with np.errstate(all="ignore"), warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, err = integrate.quad(lambda s: s ** (n - 1) * abs(self.f(s)), eps, np.inf, limit=200)
        if not np.isfinite(val) or err > 1e-6 * max(1.0, abs(val)):
            raise DivergentTailError(
                f"force law {self.name!r}: decay integral in dimension {n} does not converge"
            )
        return float(val)

    @classmethod
    def exponential(cls, scale: float = 1.0) -> "ForceLaw":
        return cls(lambda s: np.exp(-np.asarray(s) / scale), f"exp(-s/{scale})")

    @classmethod
    def spring(cls, rest: float = 1.0, stiffness: float = 1.0) -> "ForceLaw":
        return cls(lambda s: stiffness * (rest - np.asarray(s)), f"{stiffness}*({rest}-s)")


# ------------------------------------------------------------- particle state

@dataclass(frozen=True)
class ParticleState:
    """Positions and velocities stored as arrays of shape extent + (n,).

    Element ``x[i1, ..., in]`` belongs to the particle with multi-index i.
    ``box`` gives per-axis periods for a periodic lattice (index i + extent
    is the same particle shifted by the box length); None means a finite block.
    """

    x: np.ndarray
    v: np.ndarray
    box: tuple[float, ...] | None = None
    t: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if x.shape != v.shape or x.ndim < 2 or x.shape[-1] != x.ndim - 1:
            raise ValueError("x and v must both have shape extent + (n,)")
        if not np.all(np.isfinite(x)):
            raise ValueError("positions must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)
        if self.box is not None:
            box = tuple(float(b) for b in self.box)
            if len(box) != self.dim:
                raise ValueError("box needs one period per axis")
            object.__setattr__(self, "box", box)

    @property
    def dim(self) -> int:
        return self.x.shape[-1]

    @property
    def extent(self) -> tuple[int, ...]:
        return self.x.shape[:-1]


def uniform_lattice(extent: Sequence[int], spacing: float = 1.0, periodic: bool = False) -> ParticleState:
    extent = tuple(int(e) for e in extent)
    axes = [np.arange(e) * spacing for e in extent]
    x = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    box = tuple(e * spacing for e in extent) if periodic else None
    return ParticleState(x, np.zeros_like(x), box)


def total_momentum(state: ParticleState) -> np.ndarray:
    return state.v.reshape(-1, state.dim).sum(axis=0)


def lex_positive(q: Sequence[int]) -> bool:
    """First nonzero entry positive."""
    for v in q:
        if v:
            return v > 0
    return False


def _offsets(n: int, radius: float) -> list[tuple[int, ...]]:
    r = int(math.floor(radius))
    out = [
        q
        for q in itertools.product(range(-r, r + 1), repeat=n)
        if lex_positive(q) and sum(v * v for v in q) <= radius * radius
    ]
    return sorted(out, key=lambda q: (sum(v * v for v in q), q))


@lru_cache(maxsize=32)
def _pair_table(extent: tuple[int, ...], topology: str, radius: float, periodic: bool):
    """Flat indices (i, j) and integer wrap counts for every interacting pair.

    j is the particle at multi-index i + q for each lexicographically positive
    offset q; on a periodic lattice ``wraps`` counts how many periods the
    index i + q crossed along each axis.
    """
    n = len(extent)
    if topology == ALL_TO_ALL:
        offsets = _offsets(n, radius)
    elif topology == GRID:
        offsets = [tuple(int(k == a) for k in range(n)) for a in range(n)]
    else:
        raise ValueError(f"unknown topology {topology!r}")
    idx = np.stack(np.meshgrid(*[np.arange(e) for e in extent], indexing="ij"), axis=-1).reshape(-1, n)
    ext = np.array(extent)
    rows_i, rows_j, rows_w, rows_q = [], [], [], []
    for q in offsets:
        target = idx + np.array(q)
        if periodic:
            keep = np.ones(len(idx), dtype=bool)
        else:
            keep = np.all((target >= 0) & (target < ext), axis=1)
        if not keep.any():
            continue
        wraps = np.floor_divide(target[keep], ext)
        j = np.ravel_multi_index(tuple(np.mod(target[keep], ext).T), extent)
        i = np.ravel_multi_index(tuple(idx[keep].T), extent)
        rows_i.append(i)
        rows_j.append(j)
        rows_w.append(wraps)
    if not rows_i:
        empty = np.zeros(0, dtype=int)
        return empty, empty, np.zeros((0, n))
    return np.concatenate(rows_i), np.concatenate(rows_j), np.concatenate(rows_w).astype(float)


def accelerations(
    state: ParticleState,
    law: ForceLaw,
    topology: str = ALL_TO_ALL,
    radius: float = DEFAULT_RADIUS,
    min_distance: float = 1e-9,
) -> np.ndarray:
    """Net force on every particle (unit mass).

    Every pair (i, i + q) with q lexicographically positive is evaluated once;
    the force is added to i and subtracted from i + q, so total momentum is
    conserved up to rounding.  The grid topology couples nearest neighbours
    along each axis only.
    """
    n = state.dim
    periodic = state.box is not None
    pi, pj, wraps = _pair_table(state.extent, topology, float(radius), periodic)
    x = state.x.reshape(-1, n)
    xq = x[pj]
    if periodic:
        xq = xq + wraps * np.array(state.box)
    diff = x[pi] - xq  # x_i - x_{i+q}
    dist = np.linalg.norm(diff, axis=-1)
    if dist.size and dist.min() < min_distance:
        raise CollisionError(f"interacting particles closer than {min_distance}")
    force = diff * law.phi(dist)[:, None]
    total = len(x)
    acc = np.empty_like(x)
    for c in range(n):
        acc[:, c] = np.bincount(pi, force[:, c], total) - np.bincount(pj, force[:, c], total)
    return acc.reshape(state.x.shape)


def step_particles(
    state: ParticleState,
    law: ForceLaw,
    topology: str = ALL_TO_ALL,
    dt: float = 1e-2,
    radius: float = DEFAULT_RADIUS,
    min_distance: float = 1e-9,
) -> ParticleState:
    """Symplectic Euler: v += dt a(x), then x += dt v."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    a = accelerations(state, law, topology, radius, min_distance)
    v = state.v + dt * a
    x = state.x + dt * v
    return ParticleState(x, v, state.box, state.t + dt)


# ---------------------------------------------------------------- beta table

@dataclass(frozen=True)
class BetaEntry:
    r2: int
    n: int
    count: int
    beta: Fraction
    outer: tuple[tuple[int, ...], ...]

    @property
    def is_isotropic(self) -> bool:
        """sum q q^T == beta * I, compared in integers."""
        b = self.beta
        return all(
            self.outer[a][c] == (b if a == c else 0) for a in range(self.n) for c in range(self.n)
        )


@lru_cache(maxsize=16)
def lattice_shells(n: int, cap: int = DEFAULT_BETA_CAP) -> dict[int, tuple[tuple[int, ...], ...]]:
    """Lexicographically positive q with |q|^2 <= cap, grouped by |q|^2."""
    if n < 1:
        raise ValueError("dimension must be positive")
    r = math.isqrt(cap)
    grids = np.meshgrid(*([np.arange(-r, r + 1)] * n), indexing="ij")
    q = np.stack([g.ravel() for g in grids], axis=1)
    norms = (q * q).sum(axis=1)
    first = np.zeros(len(q), dtype=int)
    for col in reversed(range(n)):
        first = np.where(q[:, col] != 0, q[:, col], first)
    keep = (norms <= cap) & (first > 0)
    shells: dict[int, list[tuple[int, ...]]] = {}
    for vec, r2 in zip(q[keep], norms[keep]):
        shells.setdefault(int(r2), []).append(tuple(int(v) for v in vec))
    return {k: tuple(sorted(v, reverse=True)) for k, v in sorted(shells.items())}


def beta(r2: int, n: int, cap: int = DEFAULT_BETA_CAP) -> BetaEntry:
    """beta(r) = r^2 #_r / n and the integer matrix sum over shell of q q^T."""
    if n not in (1, 2, 3):
        raise ValueError("dimension must be 1, 2 or 3")
    if r2 < 1 or r2 > cap:
        raise ValueError(f"r^2 must lie in [1, {cap}]")
    shell = lattice_shells(n, cap).get(int(r2), ())
    outer = [[0] * n for _ in range(n)]
    for q in shell:
        for a in range(n):
            for c in range(n):
                outer[a][c] += q[a] * q[c]
    count = len(shell)
    return BetaEntry(int(r2), n, count, Fraction(r2 * count, n), tuple(tuple(r) for r in outer))


# ------------------------------------------------------------------ pressure

@dataclass(frozen=True)
class PressureModel:
    topology: str
    law: ForceLaw
    radius: float = DEFAULT_RADIUS


@dataclass(frozen=True)
class PressureResult:
    value: float
    tail_bound: float
    terms: int


def tail_bound(law: ForceLaw, l: float, n: int, radius: float) -> float:
    """Upper bound of the pressure terms with r > radius.

    The dropped terms equal l^(1-n)/(2n) * sum_{|q| > R} |q| f(l|q|) over the
    whole lattice.  With g(s) = s f(l s) nonincreasing past R - sqrt(n), every
    lattice term is at most the average of g(|y| - sqrt(n)/2) over the unit
    cell of q, which turns the sum into a radial integral.
    """
    half = math.sqrt(n) / 2
    start = max(radius - half, 0.0)

    def g(s):
        return s * abs(float(law.f(l * s)))

    probe = np.linspace(max(radius - 2 * half, 1e-9), radius + 50.0, 400)
    vals = np.array([g(s) for s in probe])
    if np.any(np.diff(vals) > 1e-12 * max(1.0, vals.max())):
        raise DivergentTailError("s f(l s) is not decreasing beyond the truncation radius")
    sphere = 2 * math.pi ** (n / 2) / math.gamma(n / 2)
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(
            lambda p: g(max(p - half, 0.0)) * p ** (n - 1), start, np.inf, limit=200
        )
    if not np.isfinite(val) or err > 1e-6 * max(1.0, abs(val)):
        raise DivergentTailError("pressure tail integral does not converge")
    return l ** (1 - n) / (2 * n) * sphere * val


def pressure(model: PressureModel, l: float, n: int) -> PressureResult:
    """Pressure at specific distance l.

    Grid: f(l)/l^(n-1).  AllToAll: sum over r <= radius of beta(r)/r l^(1-n) f(l r),
    with a bound on the neglected tail.
    """
    if l <= 0:
        raise ValueError("specific distance must be positive")
    if model.topology == GRID:
        return PressureResult(float(model.law.f(l)) / l ** (n - 1), 0.0, 1)
    if model.topology != ALL_TO_ALL:
        raise ValueError(f"unknown topology {model.topology!r}")
    model.law.decay_integral(n)
    cap = int(math.floor(model.radius**2))
    shells = lattice_shells(n, max(cap, 1))
    total = 0.0
    terms = 0
    for r2, shell in shells.items():
        if r2 > cap:
            break
        r = math.sqrt(r2)
        b = r2 * len(shell) / n
        total += b / r * l ** (1 - n) * float(model.law.f(l * r))
        terms += 1
    return PressureResult(total, tail_bound(model.law, l, n, model.radius), terms)


# -------------------------------------------------- identity residual checks

def _cdiff(a: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Periodic central difference along a grid axis."""
    return (np.roll(a, -1, axis=axis) - np.roll(a, 1, axis=axis)) / (2 * h)


def _grid(n: int, points: int, length: float) -> tuple[np.ndarray, float]:
    h = length / points
    axes = [np.arange(points) * h] * n
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1), h


def _jacobian_periodic(disp: np.ndarray, h: float) -> np.ndarray:
    """d(M + disp)/dM with disp periodic; returns (..., a, m)."""
    n = disp.shape[-1]
    cols = [_cdiff(disp, m, h) for m in range(n)]
    jac = np.stack(cols, axis=-1)
    return jac + np.eye(n)


def _div_rows(field_: np.ndarray, inv_jac: np.ndarray, h: float) -> np.ndarray:
    """x-divergence of a matrix field sampled on an M grid: sum_i dA_ij/dx_i.

    ``inv_jac[..., m, i]`` is dM_m/dx_i; derivatives are taken along M.
    """
    n = field_.shape[-1]
    out = np.zeros(field_.shape[:-1])
    for m in range(n):
        dA = _cdiff(field_, m, h)  # (..., i, j)
        out += np.einsum("...i,...ij->...j", inv_jac[..., m, :], dA)
    return out


def verify_prop1(phi, displacement, q: Sequence[int], points: int, length: float = 2 * math.pi) -> float:
    """Max residual of the index-derivative identity for the force term.

    ``displacement(M)`` returns x(M) - M (periodic); ``phi(x)`` a periodic
    scalar field.  Left side: [d/dM (phi J q) q]^T.  Right side:
    div(phi J q q^T J^T) - phi (div J) q q^T J^T, all with central differences.
    """
    q = np.asarray(q, dtype=float)
    n = len(q)
    M, h = _grid(n, points, length)
    X = M + displacement(M)
    J = _jacobian_periodic(X - M, h)
    Jinv = np.linalg.inv(J)
    ph = phi(X)
    hv = J @ q
    g = ph[..., None] * hv
    lhs = sum(q[m] * _cdiff(g, m, h) for m in range(n))
    qqT = np.outer(q, q)
    B = ph[..., None, None] * (J @ qqT @ np.swapaxes(J, -1, -2))
    divB = _div_rows(B, Jinv, h)
    divJ = _div_rows(J, Jinv, h)
    second = ph[..., None] * np.einsum("...i,...ij->...j", divJ, qqT @ np.swapaxes(J, -1, -2))
    return float(np.max(np.abs(lhs - (divB - second))))


def verify_lemma1(
    index_disp, velocity, n: int, points: int, dt: float | None = None, length: float = 2 * math.pi
) -> float:
    """Max residual of d(det J)/dt + div(det J u) when dJ/dt = -d(J u)/dx.

    J = dM/dx is built from ``index_disp(x) = M(x) - x`` (periodic).  With
    ``dt`` the time derivative of det J is a forward difference over one step
    of the J equation; without it, Jacobi's formula tr(adj J dJ/dt) is used.
    """
    Xg, h = _grid(n, points, length)
    J = _jacobian_periodic(index_disp(Xg), h)  # (..., i, k) = dM_i/dx_k
    u = velocity(Xg)
    Ju = np.einsum("...ij,...j->...i", J, u)
    dJdt = -np.stack([_cdiff(Ju, k, h) for k in range(n)], axis=-1)
    det = np.linalg.det(J)
    if dt is None:
        adj = det[..., None, None] * np.linalg.inv(J)
        ddet = np.einsum("...ij,...ji->...", adj, dJdt)
    else:
        ddet = (np.linalg.det(J + dt * dJdt) - det) / dt
    flux = det[..., None] * u
    div = sum(_cdiff(flux[..., k], k, h) for k in range(n))
    return float(np.max(np.abs(ddet + div)))


def _interior(a: np.ndarray, n: int, width: int) -> np.ndarray:
    sl = tuple(slice(width, a.shape[k] - width) for k in range(n))
    return a[sl]


def verify_lemma2(x_map, n: int, points: int, lower: Sequence[float], upper: Sequence[float]) -> float:
    """Max residual of div(rho dx/dM) (dx/dM)^T over a box of index space.

    ``x_map(M)`` must have an isotropic Jacobian (scalar times rotation).
    Samples are taken on the box plus two guard layers, so only central
    differences are needed; the residual is reported on the box.
    """
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    h = (upper - lower) / (points - 1)
    axes = [lower[k] + h[k] * np.arange(-2, points + 2) for k in range(n)]
    M = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    X = x_map(M)

    def d(a, axis):
        out = np.zeros_like(a)
        idx_hi = [slice(None)] * a.ndim
        idx_lo = [slice(None)] * a.ndim
        idx_mid = [slice(None)] * a.ndim
        idx_hi[axis] = slice(2, None)
        idx_lo[axis] = slice(None, -2)
        idx_mid[axis] = slice(1, -1)
        out[tuple(idx_mid)] = (a[tuple(idx_hi)] - a[tuple(idx_lo)]) / (2 * h[axis])
        return out

    J = np.stack([d(X, m) for m in range(n)], axis=-1)  # (..., a, m) = dx_a/dM_m
    inner1 = tuple(slice(1, -1) for _ in range(n))
    Jc = J[inner1]
    Minv = np.linalg.inv(Jc)  # dM/dx
    rho = 1.0 / np.linalg.det(Jc)
    A = rho[..., None, None] * Jc
    div = np.zeros(A.shape[:-1])
    for m in range(n):
        dA = d(A, m)
        div += np.einsum("...i,...ij->...j", Minv[..., m, :], dA)
    res = np.einsum("...j,...kj->...k", div, Jc)
    res = _interior(res, n, 1)
    return float(np.max(np.abs(res)))


# ---------------------------------------------------------- refinement tools

@dataclass(frozen=True)
class RefinementResult:
    spacings: tuple[float, ...]
    residuals: tuple[float, ...]

    @property
    def slope(self) -> float:
        """Least-squares slope of log residual against log spacing."""
        lh = np.log(self.spacings)
        lr = np.log(self.residuals)
        return float(np.polyfit(lh, lr, 1)[0])

    def as_records(self) -> list[dict]:
        return [{"h": h, "residual": r} for h, r in zip(self.spacings, self.residuals)]


def refinement_study(residual_at: Callable[[int], float], points: Sequence[int], length: float) -> RefinementResult:
    hs = tuple(length / p for p in points)
    return RefinementResult(hs, tuple(residual_at(p) for p in points))


def random_trig_field(rng: np.random.Generator, n: int, components: int, amplitude: float, modes: int = 2):
    """Random smooth 2*pi-periodic field R^n -> R^components."""
    waves = rng.integers(-modes, modes + 1, size=(components, 3, n))
    phases = rng.uniform(0, 2 * np.pi, size=(components, 3))
    amps = rng.uniform(-1, 1, size=(components, 3)) * amplitude / 3

    def field_(x):
        x = np.asarray(x, float)
        out = []
        for c in range(components):
            acc = np.zeros(x.shape[:-1])
            for w, p, a in zip(waves[c], phases[c], amps[c]):
                acc = acc + a * np.sin(x @ w.astype(float) + p)
            out.append(acc)
        return np.stack(out, axis=-1)

    return field_


def conformal_strip_map(rng: np.random.Generator, strength: float = 0.3, modes: int = 2, half_width: float = 0.5):
    """x(M) = Re/Im of w + sum_k c_k exp(i k w), w = M1 + i M2.

    Holomorphic maps have Jacobians equal to |f'| times a rotation, which is
    the isotropic setting; the map is 2*pi-periodic in M1.  Coefficients are
    scaled so that |f' - 1| <= strength on the strip |M2| <= half_width.
    """
    k = np.arange(1, modes + 1)
    c = rng.normal(size=modes) + 1j * rng.normal(size=modes)
    c *= strength / np.sum(k * np.abs(c) * np.exp(k * half_width))

    def x_map(M):
        w = M[..., 0] + 1j * M[..., 1]
        z = w + sum(ck * np.exp(1j * kk * w) for kk, ck in zip(k, c))
        return np.stack([z.real, z.imag], axis=-1)

    return x_map


IDENTITY_CHECKS = ("prop1", "lemma1", "lemma2")


def identity_refinement(what: str, seed: int, points: Sequence[int] = (32, 64, 128)) -> RefinementResult:
    """Residual refinement of one identity on random smooth 2D data from ``seed``.

    prop1 and lemma1 use periodic trigonometric fields on [0, 2 pi)^2 (lemma1
    with a forward time step dt = 0.05 h^2); lemma2 uses a random conformal
    map on the strip [0, 2 pi] x [-1/2, 1/2].
    """
    rng = np.random.default_rng(seed)
    L = 2 * math.pi
    if what == "prop1":
        disp = random_trig_field(rng, 2, 2, 0.15)
        phi0 = random_trig_field(rng, 2, 1, 0.3)
        q = rng.integers(-2, 3, size=2)
        q[0] = max(q[0], 1)
        return refinement_study(
            lambda p: verify_prop1(lambda x: 1 + phi0(x)[..., 0], disp, q, p), points, L
        )
    if what == "lemma1":
        idisp = random_trig_field(rng, 2, 2, 0.15)
        u = random_trig_field(rng, 2, 2, 1.0)
        return refinement_study(
            lambda p: verify_lemma1(idisp, u, 2, p, dt=0.05 * (L / p) ** 2), points, L
        )
    if what == "lemma2":
        xm = conformal_strip_map(rng)
        return refinement_study(lambda p: verify_lemma2(xm, 2, p, (0, -0.5), (L, 0.5)), points, 1.0)
    raise ValueError(f"unknown identity {what!r}; expected one of {IDENTITY_CHECKS}")
