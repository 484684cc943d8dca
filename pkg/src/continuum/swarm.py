"""Density-tracking formation control for a lattice of double-integrator agents.

Agents carry multi-indices i in a box of Z^n.  Each one estimates the local
compression tensor G_i and velocity Jacobian W_i from its lattice neighbours,
missing neighbours being replaced by ghost agents, and applies a control
that drives the formation density 1/det G towards a desired density carried
by a cloud of reference agents moving with a prescribed velocity field.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "SwarmDivergenceError",
    "ControlGains",
    "SwarmState",
    "LocalTensors",
    "WindowVelocity",
    "ReferenceField",
    "AnalyticDensity",
    "desired_field_window",
    "ghost_position",
    "ghost_velocity",
    "pad_positions",
    "pad_velocities",
    "lattice_tensors",
    "local_tensors",
    "node_density",
    "LatticeInterpolator",
    "control_all",
    "control",
    "density_deviation",
    "cube_lattice",
    "SwarmConfig",
    "SimulationResult",
    "initial_states",
    "simulate",
    "equilibrium_spectrum",
    "SINGULAR_FRACTION",
    "DIVERGENCE_LIMIT",
]

SINGULAR_FRACTION = 1e-9
DIVERGENCE_LIMIT = 1e6


class SwarmDivergenceError(RuntimeError):
    """Positions left the sane range or became non-finite.

    ``partial`` holds the run up to the last finite step when available.
    """

    def __init__(self, message: str, partial: "SimulationResult | None" = None):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class ControlGains:
    alpha: float = 3.0
    beta: float = 100.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("alpha and beta must be positive")


@dataclass
class SwarmState:
    """x and v have shape extent + (n,); element [i] belongs to agent i."""

    x: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.x.shape != self.v.shape or self.x.shape[-1] != self.x.ndim - 1:
            raise ValueError("x and v must share the shape extent + (n,)")
        if min(self.extent) < 2:
            raise ValueError("every lattice axis needs at least two agents")

    @property
    def dim(self) -> int:
        return self.x.shape[-1]

    @property
    def extent(self) -> tuple[int, ...]:
        return self.x.shape[:-1]

    def copy(self) -> "SwarmState":
        return SwarmState(self.x.copy(), self.v.copy(), self.t)


# --------------------------------------------------------------- ghost agents

def _axis_slice(ndim: int, axis: int, sl) -> tuple:
    out = [slice(None)] * ndim
    out[axis] = sl
    return tuple(out)


def ghost_position(x_i, x_inward):
    """Ghost beyond agent i, opposite its inward neighbour: 3 x_i - 2 x_in.

    Places the ghost 2l away so that the density estimate falls linearly to
    zero at the ghost.
    """
    return 3 * np.asarray(x_i, float) - 2 * np.asarray(x_inward, float)


def ghost_velocity(v_i, v_inward):
    """Linear extrapolation 2 v_i - v_in."""
    return 2 * np.asarray(v_i, float) - np.asarray(v_inward, float)


def _pad(a: np.ndarray, rule: Callable) -> np.ndarray:
    """Add one ghost layer on every side of each lattice axis.

    Axes are padded one after another, so edge and corner ghosts are the
    per-axis rules composed.
    """
    n = a.ndim - 1
    out = a
    for axis in range(n):
        first = out[_axis_slice(out.ndim, axis, slice(0, 1))]
        second = out[_axis_slice(out.ndim, axis, slice(1, 2))]
        last = out[_axis_slice(out.ndim, axis, slice(-1, None))]
        before = out[_axis_slice(out.ndim, axis, slice(-2, -1))]
        out = np.concatenate([rule(first, second), out, rule(last, before)], axis=axis)
    return out


def pad_positions(x: np.ndarray) -> np.ndarray:
    return _pad(x, ghost_position)


def pad_velocities(v: np.ndarray) -> np.ndarray:
    return _pad(v, ghost_velocity)


# -------------------------------------------------------------- local tensors

@dataclass(frozen=True)
class LocalTensors:
    G: np.ndarray
    W: np.ndarray
    detG: np.ndarray
    grad_detG: np.ndarray  # d(det G)/dM as a row vector per agent


def _shifted(p: np.ndarray, offset: Sequence[int]) -> np.ndarray:
    """Interior block of a padded array moved by ``offset`` lattice steps."""
    n = p.ndim - 1
    sl = tuple(slice(1 + o, p.shape[k] - 1 + o) for k, o in enumerate(offset))
    return p[sl + (slice(None),)]


def _unit(n: int, j: int, sign: int = 1) -> tuple[int, ...]:
    return tuple(sign if k == j else 0 for k in range(n))


def lattice_tensors(x: np.ndarray, v: np.ndarray | None = None) -> LocalTensors:
    """G, W, det G and d(det G)/dM for every agent, ghosts included."""
    n = x.shape[-1]
    P = pad_positions(x)
    cols = []
    for j in range(n):
        cols.append((_shifted(P, _unit(n, j)) - _shifted(P, _unit(n, j, -1))) / 2)
    G = np.stack(cols, axis=-1)  # [..., a, j] = d x_a / d M_j
    if v is not None:
        V = pad_velocities(v)
        W = np.stack(
            [(_shifted(V, _unit(n, j)) - _shifted(V, _unit(n, j, -1))) / 2 for j in range(n)], axis=-1
        )
    else:
        W = np.zeros_like(G)
    centre = _shifted(P, (0,) * n)
    second = {}
    for j in range(n):
        second[j, j] = _shifted(P, _unit(n, j)) - 2 * centre + _shifted(P, _unit(n, j, -1))
        for k in range(j + 1, n):
            pp = tuple(int(m == j) + int(m == k) for m in range(n))
            mm = tuple(-c for c in pp)
            pm = tuple(int(m == j) - int(m == k) for m in range(n))
            mp = tuple(-c for c in pm)
            val = (_shifted(P, pp) + _shifted(P, mm) - _shifted(P, pm) - _shifted(P, mp)) / 4
            second[j, k] = second[k, j] = val
    detG = np.linalg.det(G)
    adj = _adjugate(G)
    grad = np.empty(G.shape[:-1])
    for k in range(n):
        dG = np.stack([second[j, k] for j in range(n)], axis=-1)
        grad[..., k] = np.einsum("...ij,...ji->...", adj, dG)
    return LocalTensors(G, W, detG, grad)


def _adjugate(G: np.ndarray) -> np.ndarray:
    n = G.shape[-1]
    if n == 1:
        return np.ones_like(G)
    if n == 2:
        adj = np.empty_like(G)
        adj[..., 0, 0] = G[..., 1, 1]
        adj[..., 1, 1] = G[..., 0, 0]
        adj[..., 0, 1] = -G[..., 0, 1]
        adj[..., 1, 0] = -G[..., 1, 0]
        return adj
    if n == 3:
        adj = np.empty_like(G)
        for r in range(3):
            r1, r2 = (r + 1) % 3, (r + 2) % 3
            for c in range(3):
                c1, c2 = (c + 1) % 3, (c + 2) % 3
                adj[..., c, r] = G[..., r1, c1] * G[..., r2, c2] - G[..., r1, c2] * G[..., r2, c1]
        return adj
    cof = np.empty_like(G)
    for r in range(n):
        for c in range(n):
            minor = np.delete(np.delete(G, r, axis=-2), c, axis=-1)
            cof[..., r, c] = (-1) ** (r + c) * np.linalg.det(minor)
    return np.swapaxes(cof, -1, -2)


def _newton_step(J: np.ndarray, r: np.ndarray) -> np.ndarray:
    """J^{-1} r for a stack of small matrices; near-singular J is treated as I."""
    adj = _adjugate(J)
    det = (J[:, 0, :] * adj[:, :, 0]).sum(axis=1)
    bad = np.abs(det) < 1e-14
    step = (adj @ r[..., None])[..., 0] / np.where(bad, 1.0, det)[:, None]
    step[bad] = r[bad]
    return step


def local_tensors(state: SwarmState, i: Sequence[int]) -> LocalTensors:
    """Tensors of a single agent with multi-index ``i``."""
    full = lattice_tensors(state.x, state.v)
    idx = tuple(int(k) for k in i)
    return LocalTensors(full.G[idx], full.W[idx], full.detG[idx], full.grad_detG[idx])


def node_density(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """rho = 1/det G and its x-gradient -rho^2 d(det G)/dM G^{-1} at every agent."""
    t = lattice_tensors(x)
    rho = 1.0 / t.detG
    grad = -(rho**2)[..., None] * np.einsum("...k,...kj->...j", t.grad_detG, np.linalg.inv(t.G))
    return rho, grad


# ------------------------------------------------------------ interpolation

def _blend(w: np.ndarray, corners: np.ndarray) -> np.ndarray:
    """sum_c w[p, c] corners[p, c, :]."""
    return np.matmul(w[:, None, :], corners)[:, 0, :]


def _blend_jacobian(dw: np.ndarray, corners: np.ndarray) -> np.ndarray:
    """J[p, a, m] = sum_c dw[p, c, m] corners[p, c, a]."""
    return np.matmul(np.swapaxes(corners, 1, 2), dw)


class LatticeInterpolator:
    """Multilinear map from continuous lattice index to space and its inverse.

    Built on a lattice padded with one ghost layer, so node (0, ..., 0) of the
    padded array is the ghost corner.  Values attached to the padded nodes
    are interpolated multilinearly in index space.
    """

    def __init__(self, padded_positions: np.ndarray):
        self.P = np.asarray(padded_positions, float)
        self.n = self.P.shape[-1]
        self.shape = np.array(self.P.shape[:-1])
        self._flat = self.P.reshape(-1, self.n)
        self._tree = cKDTree(self._flat)
        self._corners = np.array(list(itertools.product((0, 1), repeat=self.n)))
        strides = np.cumprod((list(self.shape[1:]) + [1])[::-1])[::-1]
        self._corner_offsets = self._corners @ strides
        # no point farther than a full cell diagonal from every node can be inside
        edges = [np.diff(self.P, axis=k) for k in range(self.n)]
        self._reach = float(sum(np.linalg.norm(e, axis=-1).max() for e in edges))

    def _weights(self, t: np.ndarray):
        """Corner weights and their derivatives for local coordinates t (P, n)."""
        c = self._corners
        factors = [np.where(c[:, k] == 1, t[:, k : k + 1], 1 - t[:, k : k + 1]) for k in range(self.n)]
        w = factors[0]
        for f in factors[1:]:
            w = w * f
        dw = np.empty(w.shape + (self.n,))
        for m in range(self.n):
            others = np.where(c[:, m] == 1, 1.0, -1.0)[None, :]
            for k, f in enumerate(factors):
                if k != m:
                    others = others * f
            dw[:, :, m] = others
        return w, dw

    def _cell(self, M: np.ndarray):
        base = np.clip(np.floor(M).astype(int), 0, self.shape - 2)
        return base, M - base

    def _gather(self, values: np.ndarray, base: np.ndarray) -> np.ndarray:
        flat = values.reshape((-1,) + values.shape[self.n:])
        lin = np.ravel_multi_index(tuple(base.T), tuple(self.shape))
        return flat[lin[:, None] + self._corner_offsets[None, :]]  # (P, corners, ...)

    def forward(self, M: np.ndarray) -> np.ndarray:
        base, t = self._cell(M)
        w, _ = self._weights(t)
        return _blend(w, self._gather(self.P, base))

    def invert(self, points: np.ndarray, iterations: int = 30, tol: float = 1e-11):
        """Continuous padded index M with forward(M) = point, plus an inside mask.

        Newton iterations start from the nearest node; a point is dropped once
        it converges or once clamping to the index box stops it moving.
        """
        pts = np.asarray(points, float).reshape(-1, self.n)
        dist, nearest = self._tree.query(pts)
        M = np.stack(np.unravel_index(nearest, tuple(self.shape)), axis=-1).astype(float)
        hi = self.shape - 1
        active = np.flatnonzero(dist <= self._reach)
        for _ in range(iterations):
            if active.size == 0:
                break
            Ma, pa = M[active], pts[active]
            base, t = self._cell(Ma)
            corners = self._gather(self.P, base)
            w, dw = self._weights(t)
            r = _blend(w, corners) - pa
            done = np.all(np.abs(r) <= tol * (1 + np.abs(pa)), axis=1)
            J = _blend_jacobian(dw, corners)
            step = _newton_step(J, r)
            new = np.clip(Ma - step, -1.0, hi + 1.0)
            stuck = np.all(np.abs(new - Ma) < 1e-13, axis=1)
            M[active] = np.where(done[:, None], Ma, new)
            active = active[~(done | stuck)]
        resid = np.linalg.norm(self.forward(M) - pts, axis=1)
        scale = 1 + np.linalg.norm(pts, axis=1)
        inside = (
            np.all((M >= -1e-9) & (M <= hi + 1e-9), axis=1)
            & (resid <= 1e-7 * scale)
            & (dist <= self._reach)
        )
        return M, inside

    def interpolate(self, values: np.ndarray, M: np.ndarray) -> np.ndarray:
        base, t = self._cell(np.clip(M, 0, self.shape - 1))
        w, _ = self._weights(t)
        gathered = self._gather(values, base)
        return np.einsum("pc,pc...->p...", w, gathered)


# -------------------------------------------------------- reference systems

@dataclass(frozen=True)
class WindowVelocity:
    """u_x = 1, u_{y|z} = A atan(x - x0) exp(-(x - x0)^2 / width) * (y|z)."""

    x0: float = 20.0
    amplitude: float = 0.05
    width: float = 100.0

    def _profile(self, x):
        s = x - self.x0
        return self.amplitude * np.arctan(s) * np.exp(-(s**2) / self.width)

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, float)
        out = np.zeros_like(pts)
        out[..., 0] = 1.0
        prof = self._profile(pts[..., 0])
        out[..., 1:] = prof[..., None] * pts[..., 1:]
        return out

    def divergence(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, float)
        return (pts.shape[-1] - 1) * self._profile(pts[..., 0])


@dataclass(frozen=True)
class AnalyticDensity:
    """Closed-form desired density and its gradient."""

    rho: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]


class ReferenceField:
    """Desired velocity u_d plus desired density rho_d.

    rho_d comes either from a cloud of reference agents (a lattice moved by
    u_d, with densities 1/det G computed exactly like the real swarm's and
    interpolated multilinearly in index space) or from an AnalyticDensity.

    ``outside`` selects rho_d beyond the ghost hull of the cloud: rho_d is
    always 0 there; with "extend" the gradient is the one at the nearest
    hull point in index space, with "zero" it vanishes.
    """

    def __init__(
        self,
        velocity: Callable,
        divergence: Callable,
        cloud: np.ndarray | None = None,
        density: AnalyticDensity | None = None,
        outside: str = "extend",
        x0: float | None = None,
    ):
        if outside not in ("extend", "zero"):
            raise ValueError("outside must be 'extend' or 'zero'")
        self.velocity = velocity
        self.divergence = divergence
        self.cloud = None if cloud is None else np.array(cloud, float)
        self.analytic = density
        self.outside = outside
        self.x0 = x0
        self._cache = None

    def with_cloud(self, positions: np.ndarray) -> "ReferenceField":
        return ReferenceField(self.velocity, self.divergence, positions, None, self.outside, self.x0)

    def advance(self, dt: float) -> None:
        """Move the reference agents one explicit Euler step along u_d."""
        if self.cloud is not None:
            self.cloud = self.cloud + dt * self.velocity(self.cloud)
            self._cache = None

    def _nodes(self):
        if self._cache is None:
            rho, grad = node_density(self.cloud)
            rho_p = np.pad(rho, 1, mode="constant")
            pad_spec = [(1, 1)] * (grad.ndim - 1) + [(0, 0)]
            grad_p = np.pad(grad, pad_spec, mode="edge")
            self._cache = (LatticeInterpolator(pad_positions(self.cloud)), rho_p, grad_p)
        return self._cache

    def density(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(rho_d, grad rho_d) at the given points."""
        pts = np.asarray(pts, float)
        flat = pts.reshape(-1, pts.shape[-1])
        if self.analytic is not None:
            return self.analytic.rho(flat), self.analytic.grad(flat)
        if self.cloud is None:
            raise ValueError("reference field has neither a cloud nor an analytic density")
        interp, rho_p, grad_p = self._nodes()
        M, inside = interp.invert(flat)
        rho = np.where(inside, interp.interpolate(rho_p, M), 0.0)
        grad = interp.interpolate(grad_p, M)
        if self.outside == "zero":
            grad = np.where(inside[:, None], grad, 0.0)
        return rho, grad


def desired_field_window(
    x0: float = 20.0, amplitude: float = 0.05, width: float = 100.0, outside: str = "extend"
) -> ReferenceField:
    """Window-traversal field; attach reference agents with ``with_cloud``."""
    vel = WindowVelocity(x0, amplitude, width)
    return ReferenceField(vel, vel.divergence, outside=outside, x0=x0)


# ------------------------------------------------------------------ control

def control_all(
    x: np.ndarray,
    v: np.ndarray,
    gains: ControlGains,
    ref: ReferenceField,
    spacing: float = 1.0,
    events: list | None = None,
    t: float = 0.0,
) -> np.ndarray:
    """Control input of every agent.

    tau = [W G^-1 + tr(W G^-1) - alpha] v
          + (beta I - v v^T) G^-T d(det G)/dM^T / det G
          + det G [alpha rho_d u_d + (beta I - u_d u_d^T) grad rho_d^T - rho_d div(u_d) u_d]

    Agents with |det G| < SINGULAR_FRACTION * spacing^n fall back to -alpha v;
    each such event is appended to ``events`` as (t, index).
    """
    n = x.shape[-1]
    lt = lattice_tensors(x, v)
    shape = x.shape[:-1]
    flat = lambda a, tail: a.reshape((-1,) + tail)
    G = flat(lt.G, (n, n))
    W = flat(lt.W, (n, n))
    det = lt.detG.reshape(-1)
    gdet = flat(lt.grad_detG, (n,))
    vv = flat(v, (n,))
    xx = flat(x, (n,))
    singular = np.abs(det) < SINGULAR_FRACTION * spacing**n
    G_safe = np.where(singular[:, None, None], np.eye(n), G)
    det_safe = np.where(singular, 1.0, det)
    Ginv = np.linalg.inv(G_safe)
    WG = W @ Ginv
    tr = np.trace(WG, axis1=1, axis2=2)
    alpha, beta = gains.alpha, gains.beta
    tau = np.einsum("pij,pj->pi", WG, vv) + (tr - alpha)[:, None] * vv
    press = np.einsum("pji,pj->pi", Ginv, gdet) / det_safe[:, None]  # G^-T grad^T / det
    tau += beta * press - vv * np.einsum("pi,pi->p", vv, press)[:, None]
    rho_d, grad_d = ref.density(xx)
    u_d = ref.velocity(xx)
    div_d = ref.divergence(xx)
    desired = (
        alpha * rho_d[:, None] * u_d
        + beta * grad_d
        - u_d * np.einsum("pi,pi->p", u_d, grad_d)[:, None]
        - (rho_d * div_d)[:, None] * u_d
    )
    tau += det_safe[:, None] * desired
    if singular.any():
        tau[singular] = -alpha * vv[singular]
        if events is not None:
            for k in np.flatnonzero(singular):
                events.append((t, tuple(int(c) for c in np.unravel_index(k, shape))))
    return tau.reshape(x.shape)


def control(state: SwarmState, i: Sequence[int], gains: ControlGains, ref: ReferenceField, spacing: float = 1.0):
    """Control of the single agent ``i``."""
    tau = control_all(state.x, state.v, gains, ref, spacing)
    return tau[tuple(int(k) for k in i)]


# ------------------------------------------------------------------- metric

def _density_on_grid(axes: list[np.ndarray], lattice: np.ndarray, iterations: int = 12) -> np.ndarray:
    """Lattice density sampled on a tensor grid, cell by cell.

    For every padded cell the grid points inside its bounding box are mapped
    back to local coordinates by Newton's method; points whose local
    coordinates land in the unit cell take the multilinear density.  Where
    cells overlap (tangled lattices) the first cell in index order wins.
    """
    n = lattice.shape[-1]
    rho, _ = node_density(lattice)
    interp = LatticeInterpolator(pad_positions(lattice))
    rho_p = np.pad(rho, 1, mode="constant")
    cells = np.stack(
        np.meshgrid(*[np.arange(s - 1) for s in interp.shape], indexing="ij"), axis=-1
    ).reshape(-1, n)
    corner_pos = interp._gather(interp.P, cells)  # (cells, C, n)
    lo_c, hi_c = corner_pos.min(axis=1), corner_pos.max(axis=1)
    cand_cell, cand_pt = [], []
    shape = tuple(len(a) for a in axes)
    for c in range(len(cells)):
        ranges = []
        for k in range(n):
            a = np.searchsorted(axes[k], lo_c[c, k], side="left")
            b = np.searchsorted(axes[k], hi_c[c, k], side="right")
            if a >= b:
                break
            ranges.append(np.arange(a, b))
        else:
            idx = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, n)
            cand_pt.append(np.ravel_multi_index(tuple(idx.T), shape))
            cand_cell.append(np.full(len(idx), c))
    out = np.zeros(shape).reshape(-1)
    if not cand_pt:
        return out.reshape(shape)
    cc = np.concatenate(cand_cell)
    pp = np.concatenate(cand_pt)
    grid_idx = np.stack(np.unravel_index(pp, shape), axis=-1)
    target = np.stack([axes[k][grid_idx[:, k]] for k in range(n)], axis=-1)
    corners = corner_pos[cc]
    t = np.full(target.shape, 0.5)
    active = np.arange(len(target))
    for _ in range(iterations):
        if active.size == 0:
            break
        ta, ca = t[active], corners[active]
        w, dw = interp._weights(ta)
        r = _blend(w, ca) - target[active]
        J = _blend_jacobian(dw, ca)
        step = _newton_step(J, r)
        t[active] = np.clip(ta - step, -1.0, 2.0)
        moving = np.any(np.abs(step) > 1e-13, axis=1)
        pinned = np.any((t[active] <= -1.0) | (t[active] >= 2.0), axis=1)
        active = active[moving & ~pinned]
    w, _ = interp._weights(t)
    resid = np.linalg.norm(_blend(w, corners) - target, axis=1)
    ok = np.all((t >= -1e-9) & (t <= 1 + 1e-9), axis=1) & (resid <= 1e-8 * (1 + np.abs(target).max(axis=1)))
    cc, pp, w = cc[ok], pp[ok], w[ok]
    vals = (w * interp._gather(rho_p, cells[cc])).sum(axis=1)
    first = np.unique(pp, return_index=True)[1]
    out[pp[first]] = vals[first]
    return out.reshape(shape)


def density_deviation(real: np.ndarray, reference: np.ndarray, points_per_axis: int = 32) -> float:
    """L2 norm of rho - rho_d on a cell-centred grid over both ghost hulls.

    Each density is 1/det G at the agents, 0 at the ghost agents, multilinear
    in between and 0 outside the hull.
    """
    n = real.shape[-1]
    hulls = np.concatenate(
        [pad_positions(real).reshape(-1, n), pad_positions(reference).reshape(-1, n)]
    )
    lo, hi = hulls.min(axis=0), hulls.max(axis=0)
    step = (hi - lo) / points_per_axis
    axes = [lo[k] + step[k] * (np.arange(points_per_axis) + 0.5) for k in range(n)]
    diff = _density_on_grid(axes, real) - _density_on_grid(axes, reference)
    return float(math.sqrt(np.sum(diff**2) * np.prod(step)))


def equilibrium_spectrum(
    extent: Sequence[int], gains: ControlGains = ControlGains(), spacing: float = 1.0, step: float = 1e-6
) -> np.ndarray:
    """Eigenvalues of the closed loop linearized about the matched formation at rest.

    The swarm sits exactly on a reference lattice with u_d = 0; the position
    Jacobian K of the control is taken by central differences and the
    eigenvalues of [[0, I], [K, -alpha I]] are returned.  A positive real
    part means small perturbations grow.
    """
    ref = cube_lattice(extent, spacing)
    zero = lambda p: np.zeros_like(np.asarray(p, float))
    field_ = ReferenceField(zero, lambda p: np.zeros(np.asarray(p).shape[:-1])).with_cloud(ref)
    N = ref.size
    rest = np.zeros_like(ref)
    K = np.empty((N, N))
    for k in range(N):
        e = np.zeros(N)
        e[k] = step
        plus = control_all(ref + e.reshape(ref.shape), rest, gains, field_, spacing)
        minus = control_all(ref - e.reshape(ref.shape), rest, gains, field_, spacing)
        K[:, k] = (plus - minus).reshape(-1) / (2 * step)
    A = np.block([[np.zeros((N, N)), np.eye(N)], [K, -gains.alpha * np.eye(N)]])
    return np.linalg.eigvals(A)


# --------------------------------------------------------------- simulation

def cube_lattice(extent: Sequence[int], spacing: float = 1.0, centre=None) -> np.ndarray:
    """Axis-aligned lattice with the given spacing, centred on ``centre``."""
    extent = tuple(int(e) for e in extent)
    axes = [(np.arange(e) - (e - 1) / 2) * spacing for e in extent]
    x = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    if centre is not None:
        x = x + np.asarray(centre, float)
    return x


@dataclass(frozen=True)
class SwarmConfig:
    extent: tuple[int, ...] = (8, 8, 8)
    spacing: float = 1.0
    alpha: float = 3.0
    beta: float = 100.0
    scale: float = 2.0
    noise: float = 2.0
    dt: float = 0.01
    t_end: float = 45.0
    x0: float = 20.0
    amplitude: float = 0.05
    width: float = 100.0
    seed: int = 42
    integrator: str = "semi-implicit"
    metric_every: int = 10
    metric_points: int = 32
    record_every: int = 0
    outside: str = "extend"
    desired_velocity: bool = True
    initial_velocity: str = "rest"

    def __post_init__(self):
        if self.dt <= 0 or self.t_end < 0:
            raise ValueError("dt must be positive and t_end nonnegative")
        if self.integrator not in ("semi-implicit", "explicit"):
            raise ValueError("integrator must be 'semi-implicit' or 'explicit'")
        if self.initial_velocity not in ("rest", "desired"):
            raise ValueError("initial_velocity must be 'rest' or 'desired'")
        if self.metric_every < 1:
            raise ValueError("metric_every must be >= 1")
        object.__setattr__(self, "extent", tuple(int(e) for e in self.extent))
        ControlGains(self.alpha, self.beta)


@dataclass
class SimulationResult:
    config: SwarmConfig
    metric_t: np.ndarray
    deviation: np.ndarray
    centroid_x: np.ndarray
    events: list
    final: SwarmState
    reference: np.ndarray
    trajectory: list = field(default_factory=list)  # (t, x, v) snapshots

    def deviation_at(self, t: float) -> float:
        k = int(np.argmin(np.abs(self.metric_t - t)))
        return float(self.deviation[k])


def initial_states(cfg: SwarmConfig) -> tuple[np.ndarray, SwarmState]:
    """Reference lattice at the origin and the scaled, noisy real swarm.

    The swarm starts at rest, or moving with u_d when
    ``initial_velocity="desired"``.
    """
    ref = cube_lattice(cfg.extent, cfg.spacing)
    rng = np.random.default_rng(cfg.seed)
    noise = rng.uniform(-cfg.noise, cfg.noise, size=ref.shape) if cfg.noise > 0 else 0.0
    x = cfg.scale * ref + noise
    v = np.zeros_like(x)
    if cfg.initial_velocity == "desired" and cfg.desired_velocity:
        v = WindowVelocity(cfg.x0, cfg.amplitude, cfg.width)(x)
    return ref, SwarmState(x, v, 0.0)


def simulate(cfg: SwarmConfig, initial: tuple[np.ndarray, SwarmState] | None = None) -> SimulationResult:
    """Co-simulate reference agents and the controlled swarm with Euler steps.

    ``integrator="semi-implicit"`` updates v first and moves x with the new v;
    ``"explicit"`` moves x with the old v.  The deviation metric is sampled
    every ``metric_every`` steps and at the final time.
    """
    ref_pos, state = initial if initial is not None else initial_states(cfg)
    gains = ControlGains(cfg.alpha, cfg.beta)
    if cfg.desired_velocity:
        field_ = desired_field_window(cfg.x0, cfg.amplitude, cfg.width, cfg.outside)
    else:
        zero = lambda p: np.zeros_like(np.asarray(p, float))
        field_ = ReferenceField(zero, lambda p: np.zeros(np.asarray(p).shape[:-1]), outside=cfg.outside)
    ref = field_.with_cloud(ref_pos)
    x, v = state.x.copy(), state.v.copy()
    steps = int(round(cfg.t_end / cfg.dt))
    events: list = []
    mt, dev, cx, traj = [], [], [], []

    def record(k: int) -> None:
        t = k * cfg.dt
        mt.append(t)
        dev.append(density_deviation(x, ref.cloud, cfg.metric_points))
        cx.append(float(x[..., 0].mean()))

    for k in range(steps):
        if k % cfg.metric_every == 0:
            record(k)
        if cfg.record_every and k % cfg.record_every == 0:
            traj.append((k * cfg.dt, x.copy(), v.copy()))
        x_prev, v_prev = x, v
        tau = control_all(x, v, gains, ref, cfg.spacing, events, k * cfg.dt)
        if cfg.integrator == "semi-implicit":
            v = v + cfg.dt * tau
            x = x + cfg.dt * v
        else:
            x, v = x + cfg.dt * v, v + cfg.dt * tau
        ref.advance(cfg.dt)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > DIVERGENCE_LIMIT:
            partial = SimulationResult(
                cfg, np.array(mt), np.array(dev), np.array(cx), events,
                SwarmState(x_prev, v_prev, k * cfg.dt), ref.cloud.copy(), traj,
            )
            raise SwarmDivergenceError(
                f"swarm diverged at t={(k + 1) * cfg.dt:.4f}: max |x| = {np.nanmax(np.abs(x)):.3g}",
                partial,
            )
    record(steps)
    if cfg.record_every:
        traj.append((steps * cfg.dt, x.copy(), v.copy()))
    final = SwarmState(x, v, steps * cfg.dt)
    return SimulationResult(
        cfg, np.array(mt), np.array(dev), np.array(cx), events, final, ref.cloud.copy(), traj
    )
