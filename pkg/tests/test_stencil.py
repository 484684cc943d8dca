from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from continuum.stencil import (
    ContinuationValidityError,
    DegenerateStencilError,
    DerivativeRequest,
    InsufficientStencilError,
    LinearOdeSpec,
    PdeCoefficients,
    Stencil,
    as_fraction,
    continue_linear,
    discretize_derivative,
    discretize_pde,
    order_of_accuracy,
    ring_matrix,
    round_trip_check,
    solve_rational,
    vandermonde,
)

from oracles import fornberg_weights

TRANSPORT = LinearOdeSpec.from_pairs([1, 0], [1, -1])


def test_transport_coefficients_are_all_one():
    pde = continue_linear(TRANSPORT, 6)
    assert pde.coeffs == tuple(F(v) for v in (0, 1, 1, 1, 1, 1, 1))
    assert pde.pretty().startswith("∂ρ/∂t = ∂ρ/∂x")


def test_transport_with_spacing_keeps_c_k_and_scales_weights():
    ode = LinearOdeSpec.from_pairs([0, 1], [-1, 1], dx=F(1, 4))
    pde = continue_linear(ode, 3)
    assert pde.coeffs == (0, 1, 1, 1)
    assert pde.derivative_weights() == (0, F(1, 4), F(1, 32), F(1, 384))


def test_from_pairs_sorts_gains_with_shifts():
    ode = LinearOdeSpec.from_pairs([2, -1, 0], ["1/2", 3, -1])
    assert ode.shifts == (-1, 0, 2)
    assert ode.gains == (3, -1, F(1, 2))


def test_laplacian_continuation():
    ode = LinearOdeSpec.from_pairs([-1, 0, 1], [1, -2, 1])
    assert continue_linear(ode, 5).coeffs == (0, 0, 2, 0, 2, 0)
    assert continue_linear(ode, 2).pretty() == "∂ρ/∂t = ∂²ρ/∂x²"


def test_order_below_stencil_size_is_rejected():
    ode = LinearOdeSpec.from_pairs([-1, 0, 1], [1, -2, 1])
    with pytest.raises(ContinuationValidityError):
        continue_linear(ode, 1)
    # the unchecked path is used for truncation studies
    assert continue_linear(ode, 1, unchecked=True).coeffs == (0, 0)


def test_repeated_shifts_are_degenerate():
    with pytest.raises(DegenerateStencilError):
        LinearOdeSpec.from_pairs([0, 0], [1, 2])
    with pytest.raises(DegenerateStencilError):
        Stencil((1, 2, 1))
    with pytest.raises(DegenerateStencilError):
        Stencil(())


def test_as_fraction_inputs():
    assert as_fraction("3/6") == F(1, 2)
    assert as_fraction("0.25") == F(1, 4)
    assert as_fraction(0.5) == F(1, 2)
    with pytest.raises(TypeError):
        as_fraction(True)


@pytest.mark.parametrize(
    "shifts,m,dx,expected",
    [
        ((-1, 0, 1), 1, 1, (F(-1, 2), 0, F(1, 2))),
        ((-1, 0, 1), 1, F(1, 10), (-5, 0, 5)),
        ((-1, 0, 1), 2, 1, (1, -2, 1)),
        ((-1, 0, 1), 2, F(1, 2), (4, -8, 4)),
        ((0, 1), 1, 1, (-1, 1)),
        ((-2, -1, 0, 1, 2), 1, 1, (F(1, 12), F(-2, 3), 0, F(2, 3), F(-1, 12))),
    ],
)
def test_classical_weights(shifts, m, dx, expected):
    got = discretize_derivative(DerivativeRequest(m, Stencil(shifts), dx))
    assert tuple(got) == tuple(F(v) for v in expected)


@settings(max_examples=60, deadline=None)
@given(
    shifts=st.lists(st.integers(-6, 6), min_size=1, max_size=6, unique=True),
    data=st.data(),
)
def test_weights_match_fornberg_recurrence(shifts, data):
    m = data.draw(st.integers(0, len(shifts) - 1))
    got = discretize_derivative(DerivativeRequest(m, Stencil(tuple(shifts))))
    oracle = fornberg_weights(0, sorted(shifts), m)[m]
    assert got == oracle


def test_derivative_order_needs_enough_points():
    with pytest.raises(InsufficientStencilError):
        DerivativeRequest(2, Stencil((0, 1)))


rationals = st.fractions(min_value=-5, max_value=5, max_denominator=7)


@st.composite
def odes(draw, max_points=5):
    shifts = draw(st.lists(st.integers(-5, 5), min_size=1, max_size=max_points, unique=True))
    gains = draw(st.lists(rationals, min_size=len(shifts), max_size=len(shifts)))
    dx = draw(st.sampled_from([F(1), F(1, 2), F(3, 7)]))
    return LinearOdeSpec.from_pairs(shifts, gains, dx)


@settings(max_examples=150, deadline=None)
@given(ode=odes())
def test_round_trip_at_minimal_order(ode):
    pde = continue_linear(ode, len(ode) - 1)
    back = discretize_pde(pde, ode.stencil)
    assert back == ode


@settings(max_examples=150, deadline=None)
@given(ode=odes(), extra=st.integers(1, 4), data=st.data())
def test_round_trip_with_extra_shifts_gives_exact_zeros(ode, extra, data):
    pool = [s for s in range(-9, 10) if s not in ode.shifts]
    extras = data.draw(st.lists(st.sampled_from(pool), min_size=extra, max_size=extra, unique=True))
    ok, recovered = round_trip_check(ode, len(ode) - 1 + extra, extras)
    assert ok
    gm = recovered.gain_map()
    assert all(gm[s] == 0 for s in extras)


@settings(max_examples=80, deadline=None)
@given(ode=odes())
def test_continuation_is_linear_in_gains(ode):
    d = len(ode) + 1
    twice = continue_linear(ode.scaled(2), d).coeffs
    assert twice == tuple(2 * c for c in continue_linear(ode, d).coeffs)


def test_discretize_rejects_short_stencil():
    pde = PdeCoefficients((0, 0, 1))
    with pytest.raises(InsufficientStencilError):
        discretize_pde(pde, [0, 1])


def test_discretize_zero_pde_and_trailing_zeros():
    assert discretize_pde(PdeCoefficients((0,)), [0]).gains == (0,)
    # trailing zero coefficients do not need stencil points
    assert discretize_pde(PdeCoefficients((0, 1, 0, 0, 0)), [0, 1]).gains == (-1, 1)


def test_central_difference_discretization():
    ode = discretize_pde(PdeCoefficients((0, 1)), [-1, 0, 1])
    assert ode.gains == (F(-1, 2), 0, F(1, 2))


def test_order_of_accuracy():
    central = LinearOdeSpec.from_pairs([-1, 0, 1], [F(-1, 2), 0, F(1, 2)])
    assert order_of_accuracy(central, 2) == 0  # c_3 = 1
    lap = LinearOdeSpec.from_pairs([-1, 0, 1], [1, -2, 1])
    # c_3 = 0, so the order-2 continuation is already order 3
    assert order_of_accuracy(lap, 2) == 1
    assert order_of_accuracy(TRANSPORT, 1) == 0


def test_vandermonde_and_solver():
    V = vandermonde([-1, 0, 2], 3)
    assert V == [[1, 1, 1], [-1, 0, 2], [1, 0, 4]]
    x = solve_rational(V, [1, 2, 3])
    assert [sum(a * b for a, b in zip(row, x)) for row in V] == [1, 2, 3]
    with pytest.raises(DegenerateStencilError):
        solve_rational([[1, 1], [1, 1]], [0, 0])


def test_ring_matrix_rows_sum_to_gain_total():
    m = ring_matrix(LinearOdeSpec.from_pairs([-1, 0, 1], [1, -2, 1]), 5)
    assert all(sum(row) == 0 for row in m)
    assert m[0][4] == 1 and m[4][0] == 1
