from fractions import Fraction as F

import numpy as np
import pytest

from continuum.extensions import (
    DIRICHLET,
    NEUMANN,
    ROBIN,
    FitError,
    IrreconcilableBoundaryError,
    MultiIndexStencil,
    NodeRow,
    SpaceDependentOde,
    continue_multidim,
    continue_space_dependent,
    continue_unequally_spaced,
    extract_boundary,
    fit_samples,
    multi_indices,
)
from continuum.stencil import ContinuationValidityError, LinearOdeSpec, continue_linear

DX = F(1, 4)
A = F(3, 2)
HEAT = LinearOdeSpec.from_pairs([-1, 0, 1], [1 / DX**2, -2 / DX**2, 1 / DX**2], DX)


def heat_rows(first_row, n=5):
    interior = [NodeRow(i, (-1, 0, 1), HEAT.gains) for i in range(2, n + 1)]
    last = NodeRow(n + 1, (-1, 0), (1 / DX**2, -2 / DX**2))  # homogeneous Dirichlet on the right
    return SpaceDependentOde((first_row, *interior, last), DX)


def test_dirichlet_row_gives_constant_ghost():
    row = NodeRow(1, (0, 1), (-2 / DX**2, 1 / DX**2), A / DX**2)
    spec = extract_boundary(heat_rows(row), HEAT)
    left = spec.by_index(0)
    assert left.kind == DIRICHLET
    assert left.value == A and dict(left.coeffs) == {} and left.const == A
    right = spec.by_index(7)
    assert right.kind == DIRICHLET and right.value == 0


def test_neumann_row_gives_shifted_copy():
    row = NodeRow(1, (0, 1), (-1 / DX**2, 1 / DX**2), -A / DX)
    cell = extract_boundary(heat_rows(row), HEAT).by_index(0)
    assert cell.kind == NEUMANN
    assert dict(cell.coeffs) == {1: 1}
    assert cell.const == -A * DX  # rho_0 = rho_1 - a dx
    assert cell.value == A  # d rho / dx = a at the wall
    assert cell.describe() == "rho_0 = rho_1 + -3/8"


def test_robin_row():
    # rho_0 = 1/2 rho_1
    row = NodeRow(1, (0, 1), (-2 / DX**2 + F(1, 2) / DX**2, 1 / DX**2))
    cell = extract_boundary(heat_rows(row), HEAT).by_index(0)
    assert cell.kind == ROBIN and cell.value == (F(1, 2), 0)


def test_interior_rows_contribute_no_ghosts():
    row = NodeRow(1, (0, 1), (-2 / DX**2, 1 / DX**2), A / DX**2)
    spec = extract_boundary(heat_rows(row, n=8), HEAT)
    assert [c.index for c in spec.cells] == [0, 10]


def test_rows_referencing_missing_states_are_rejected():
    sys = SpaceDependentOde.uniform(HEAT, range(3))
    with pytest.raises(IrreconcilableBoundaryError):
        extract_boundary(sys, HEAT)


def test_row_without_missing_neighbours_cannot_be_explained():
    rows = [NodeRow(i, (-1, 0, 1), HEAT.gains) for i in range(1, 4)]
    rows[1] = NodeRow(2, (-1, 0, 1), (1, 1, 1))
    sys = SpaceDependentOde(tuple(rows), DX)
    with pytest.raises(IrreconcilableBoundaryError):
        extract_boundary(sys, HEAT)


def test_multi_indices_ordering():
    assert multi_indices(2, 2) == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


def test_five_point_laplacian():
    st = MultiIndexStencil(((1, 0), (-1, 0), (0, 1), (0, -1), (0, 0)), (1, 1, 1, 1, -4), (1, 1))
    pde = continue_multidim(st, 4)
    nonzero = {h: c for h, c in pde.coeffs.items() if c}
    assert nonzero == {(2, 0): 2, (0, 2): 2, (4, 0): 2, (0, 4): 2}
    assert pde.pretty() == "∂ρ/∂t = ∂²ρ/∂x² + ∂²ρ/∂y² + 1/12·∂⁴ρ/∂x⁴ + 1/12·∂⁴ρ/∂y⁴"


def test_mixed_derivative_conventions_differ():
    # rho_{i+1,j+1}: c_(1,1) = 1; Taylor weight 1/(1!1!) vs total 1/2!
    st = MultiIndexStencil(((1, 1),), (1,), (1, 1))
    pde = continue_multidim(st, 2)
    assert pde.derivative_weights("taylor")[(1, 1)] == 1
    assert pde.derivative_weights("total")[(1, 1)] == F(1, 2)
    assert pde.derivative_weights("total")[(2, 0)] == pde.derivative_weights("taylor")[(2, 0)]


def test_one_dimensional_multidim_matches_linear():
    ode = LinearOdeSpec.from_pairs([-2, 0, 3], [F(1, 3), -1, 2], F(1, 2))
    st = MultiIndexStencil(tuple((s,) for s in ode.shifts), ode.gains, (ode.dx,))
    multi = continue_multidim(st, 5)
    assert tuple(multi.coeffs[(k,)] for k in range(6)) == continue_linear(ode, 5).coeffs


def test_space_dependent_gains_fit_exactly():
    # rho_i' = x_i (rho_{i+1} - rho_i) with x_i = i dx: c_1(x) = x, c_k(x) = x
    dx = F(1, 5)
    rows = tuple(NodeRow(i, (0, 1), (-i * dx, i * dx)) for i in range(6))
    field_ = continue_space_dependent(SpaceDependentOde(rows, dx), 2)
    assert field_.scaling == "dx"
    for k in (1, 2):
        fc = field_[k]
        assert fc.samples == tuple(i * dx for i in range(6))
        assert np.allclose(fc(np.array([0.13, 0.77])), [0.13, 0.77])
    assert np.allclose(field_[0](np.linspace(0, 1, 5)), 0)


def test_space_dependent_least_squares():
    dx = F(1, 10)
    rows = tuple(NodeRow(i, (-1, 0, 1), (1, -2 - F(i * i, 100), 1)) for i in range(10))
    field_ = continue_space_dependent(SpaceDependentOde(rows, dx), 2, fit="lstsq", degree=2)
    c0 = field_[0]
    assert c0.degree == 2 and c0.residual < 1e-12
    assert np.isclose(c0(0.5), -0.25)


def test_fit_errors():
    with pytest.raises(FitError):
        fit_samples(0, [0, 1, 2], [1, 2, 3], "lstsq", degree=3)
    with pytest.raises(FitError):
        fit_samples(0, [0, 1, 2], [1, 2, 3], "interpolate", degree=1)
    with pytest.raises(FitError):
        fit_samples(0, [0, 0], [1, 2])


def test_order_checked_against_widest_row():
    rows = (NodeRow(0, (0, 1), (1, 1)), NodeRow(1, (-1, 0, 1), (1, 1, 1)))
    with pytest.raises(ContinuationValidityError):
        continue_space_dependent(SpaceDependentOde(rows), 1)


def test_unequal_spacing_uses_physical_offsets():
    pos = {0: F(0), 1: F(1, 3), 2: F(1), 3: F(3, 2)}
    # forward difference (rho_{i+1} - rho_i) / h_i approximates d rho/dx
    rows = tuple(
        NodeRow(i, (0, 1), (-1 / (pos[i + 1] - pos[i]), 1 / (pos[i + 1] - pos[i]))) for i in range(3)
    )
    field_ = continue_unequally_spaced(SpaceDependentOde(rows, 1, pos), 1)
    assert field_.scaling == "unit"
    assert field_[1].samples == (1, 1, 1)
    assert field_[0].samples == (0, 0, 0)
