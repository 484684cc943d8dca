"""Independent reference computations used by the tests.

None of these call into the package; they re-derive the same quantities by
a different route so that agreement is meaningful.
"""
from __future__ import annotations

import math
from fractions import Fraction

import numpy as np


def fornberg_weights(z, shifts, m_max):
    """Fornberg's recurrence for finite-difference weights, in exact arithmetic.

    Returns w[m][j]: weight of f(shifts[j]) in the m-th derivative at z.
    """
    x = [Fraction(s) for s in shifts]
    z = Fraction(z)
    n = len(x) - 1
    c = [[Fraction(0)] * (m_max + 1) for _ in range(n + 1)]
    c1 = Fraction(1)
    c4 = x[0] - z
    c[0][0] = Fraction(1)
    for i in range(1, n + 1):
        mn = min(i, m_max)
        c2 = Fraction(1)
        c5 = c4
        c4 = x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2
            for k in range(mn, 0, -1):
                c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3
            c[j][0] = c4 * c[j][0] / c3
        c1 = c2
    return [[c[j][m] for j in range(n + 1)] for m in range(m_max + 1)]


def taylor_transport_symbol(omega, d):
    """Degree-d Taylor polynomial of exp(i w) - 1."""
    iw = 1j * np.asarray(omega, float)
    return sum(iw**k / math.factorial(k) for k in range(1, d + 1))


def quadrature_profile_1d(n_agents):
    """1D density of a unit-spaced lattice with ghosts, as a piecewise-linear table.

    Interior agents carry density 1, the two end agents 2/3 (their G is the
    mean of a unit and a double spacing), ghosts sit 2 spacings out with
    density 0.  Returns the node positions and densities, left to right.
    """
    xs = [-2.0] + [float(k) for k in range(n_agents)] + [n_agents + 1.0]
    rho = [0.0, 2 / 3] + [1.0] * (n_agents - 2) + [2 / 3, 0.0]
    return np.array(xs), np.array(rho)


def separable_deviation(extent_1d, scale, points):
    """L2 deviation between a cube lattice scaled by ``scale`` and the unit one.

    Both densities are tensor products of the 1D ramp profile, so the squared
    difference expands into three separable sums evaluated axis by axis on
    the same cell-centred grid as the library metric.
    """
    xs, p = quadrature_profile_1d(extent_1d)
    centre = (extent_1d - 1) / 2
    ref_x = xs - centre
    real_x = scale * ref_x
    real_p = p / scale
    lo, hi = min(ref_x[0], real_x[0]), max(ref_x[-1], real_x[-1])
    step = (hi - lo) / points
    axis = lo + step * (np.arange(points) + 0.5)
    a = np.interp(axis, real_x, real_p, left=0.0, right=0.0)
    b = np.interp(axis, ref_x, p, left=0.0, right=0.0)
    aa, ab, bb = (a * a).sum(), (a * b).sum(), (b * b).sum()
    return math.sqrt((aa**3 - 2 * ab**3 + bb**3) * step**3)


# ---------------------------------------------------------------------------
# Continuous formation-control law on smooth synthetic fields.  The lattice
# is x(M) = X(xi0 + l M); velocities, desired velocity and desired density
# are closed-form functions of position.

ALPHA, BETA = 3.0, 100.0


def field_X(xi):
    a, b, c = xi[..., 0], xi[..., 1], xi[..., 2]
    return np.stack(
        [a + 0.2 * np.sin(b + 0.5 * a), b + 0.15 * np.cos(c - a), c + 0.1 * a * b + 0.1 * np.sin(c)], -1
    )


def field_V(x):
    a, b, c = x[..., 0], x[..., 1], x[..., 2]
    return np.stack([0.5 + 0.3 * np.sin(b), 0.2 * np.cos(a + c), 0.1 * a - 0.2 * np.sin(b * c)], -1)


def field_UD(x):
    a, b, c = x[..., 0], x[..., 1], x[..., 2]
    return np.stack([1 + 0.1 * np.cos(b), 0.2 * np.sin(a), 0.1 * b * c], -1)


def field_RD(x):
    """Desired density profile before the l^-3 scaling."""
    a, b, c = x[..., 0], x[..., 1], x[..., 2]
    return 1.0 + 0.3 * np.sin(a) * np.cos(b) + 0.2 * np.cos(c)


def d5(f, p, k, h=1e-3):
    """Five-point central derivative of f along axis k at p."""
    e = np.zeros(3)
    e[k] = h
    return (-f(p + 2 * e) + 8 * f(p + e) - 8 * f(p - e) + f(p - 2 * e)) / (12 * h)


def jacobian(f, p):
    return np.stack([d5(f, p, k) for k in range(3)], -1)  # [..., component, k]


def continuous_control(xi0, l):
    """Acceleration demanded by the continuum law at the material point xi0.

    u_t + (u.grad)u = [div(rho u) u - div(rho_d u_d) u_d
                       + alpha (rho_d u_d - rho u) + beta (grad rho_d - grad rho)] / rho
    with rho = 1 / (l^3 det dX/dxi).
    """
    x0 = field_X(xi0)
    DX = jacobian(field_X, xi0)
    rho_xi = lambda xi: 1.0 / (l**3 * np.linalg.det(jacobian(field_X, xi)))
    rho = rho_xi(xi0)
    grad_rho = np.array([d5(rho_xi, xi0, k) for k in range(3)]) @ np.linalg.inv(DX)
    u = field_V(x0)
    Du = jacobian(field_V, x0)
    rd = field_RD(x0) / l**3
    grad_rd = np.array([d5(field_RD, x0, k) for k in range(3)]) / l**3
    ud = field_UD(x0)
    div_ud = np.trace(jacobian(field_UD, x0))
    div_rho_u = grad_rho @ u + rho * np.trace(Du)
    div_rd_ud = grad_rd @ ud + rd * div_ud
    return Du @ u + (
        div_rho_u * u - div_rd_ud * ud + ALPHA * (rd * ud - rho * u) + BETA * (grad_rd - grad_rho)
    ) / rho
