from fractions import Fraction as F

import numpy as np
import pytest

from continuum.spectral import (
    ARTIFICIALLY_UNSTABLE,
    INDETERMINATE,
    INHERITS_UNSTABLE,
    STABLE,
    classify_stability,
    default_omega_grid,
    ode_symbol_eval,
    pde_symbol_eval,
    pointwise_error,
    real_part_polynomial,
    stable_order_set,
)
from continuum.stencil import LinearOdeSpec, PdeCoefficients, continue_linear

from oracles import taylor_transport_symbol

TRANSPORT = LinearOdeSpec.from_pairs([1, 0], [1, -1])
HEAT = LinearOdeSpec.from_pairs([-1, 0, 1], [1, -2, 1])


def test_default_grid_covers_one_period():
    w = default_omega_grid(F(1, 2), 11)
    assert w[0] == pytest.approx(-2 * np.pi) and w[-1] == pytest.approx(2 * np.pi)
    assert len(w) == 11


def test_ode_symbol_closed_form():
    w = np.linspace(-3, 3, 7)
    assert np.allclose(ode_symbol_eval(TRANSPORT, w), np.exp(1j * w) - 1)
    assert np.allclose(ode_symbol_eval(HEAT, w), 2 * np.cos(w) - 2)
    assert ode_symbol_eval(TRANSPORT, 0.0) == 0


@pytest.mark.parametrize("d", range(1, 9))
def test_transport_symbol_is_taylor_truncation(d):
    w = default_omega_grid(1, 1001)
    got = pde_symbol_eval(continue_linear(TRANSPORT, d), w)
    want = taylor_transport_symbol(w, d)
    scale = np.maximum(np.abs(want), 1e-300)
    assert np.max(np.abs(got - want) / scale) <= 1e-12


def test_real_part_polynomial():
    # Re of c1 (iw) + c2/2 (iw)^2 + ... for transport
    poly = real_part_polynomial(continue_linear(TRANSPORT, 4))
    assert poly == [0, F(-1, 2), F(1, 24)]


def test_transport_stable_orders():
    assert stable_order_set(TRANSPORT, 11) == [1, 2, 3, 6, 7, 10, 11]


def test_transport_order_four_unstable_on_grid():
    pde = continue_linear(TRANSPORT, 4)
    v = classify_stability(pde, ode=TRANSPORT)
    assert v.kind == ARTIFICIALLY_UNSTABLE
    assert v.witness_real > 0
    # positivity starts at |w| = sqrt(12): invisible on one period, visible on two
    assert abs(v.witness_omega) > np.sqrt(12) - 1e-9
    assert np.max(pde_symbol_eval(pde, default_omega_grid(1)).real) <= 1e-12
    assert np.max(pde_symbol_eval(pde, 2 * default_omega_grid(1)).real) > 0


def test_first_order_transport_is_purely_dispersive():
    v = classify_stability(continue_linear(TRANSPORT, 1))
    assert v.kind == INDETERMINATE and v.purely_dispersive and v.non_growing


def test_heat_orders():
    assert classify_stability(continue_linear(HEAT, 2)).kind == STABLE
    # c_4 = 2 > 0 with 4 = 0 mod 4
    assert classify_stability(continue_linear(HEAT, 4)).kind == ARTIFICIALLY_UNSTABLE


def test_instability_beyond_sampled_band_is_found():
    # Re = -w^2 + w^4/100 is negative on [-pi, pi] but positive for |w| > 10
    pde = PdeCoefficients((0, 0, 2, 0, F(24, 100)))
    v = classify_stability(pde)
    assert v.kind == ARTIFICIALLY_UNSTABLE
    assert abs(v.witness_omega) > 10 and v.witness_real > 0


def test_mid_band_bump_is_inherited_from_unstable_ode():
    anti = LinearOdeSpec.from_pairs([-1, 0, 1], [-1, 2, -1])  # backward heat
    pde = PdeCoefficients((0, 0, -2, 0, F(-1)))
    assert classify_stability(pde, ode=anti).kind == INHERITS_UNSTABLE


def test_zero_system_all_orders_stable():
    zero = LinearOdeSpec.from_pairs([0], [0])
    assert stable_order_set(zero, 6) == list(range(7))


def test_stable_order_set_cap():
    with pytest.raises(ValueError):
        stable_order_set(TRANSPORT, 10_000)


def test_pointwise_error_falls_with_order_at_low_frequency():
    table = pointwise_error(TRANSPORT, 6)
    w = table.omega
    mid = np.abs(w) < 0.5
    errs = [table.row(d)[mid].max() for d in range(1, 7)]
    assert all(b < a for a, b in zip(errs, errs[1:]))
