import itertools
import math
from fractions import Fraction as F

import numpy as np
import pytest

from continuum.particles import (
    ALL_TO_ALL,
    GRID,
    CollisionError,
    DivergentTailError,
    ForceLaw,
    ParticleState,
    PressureModel,
    accelerations,
    beta,
    identity_refinement,
    lattice_shells,
    lex_positive,
    pressure,
    step_particles,
    total_momentum,
    uniform_lattice,
    verify_lemma1,
    verify_lemma2,
    verify_prop1,
)


def brute_shell(r2, n):
    r = math.isqrt(r2)
    return [q for q in itertools.product(range(-r, r + 1), repeat=n) if sum(v * v for v in q) == r2]


@pytest.mark.parametrize("n", [1, 2, 3])
def test_beta_matches_full_enumeration(n):
    for r2 in range(1, 51):
        full = brute_shell(r2, n)
        entry = beta(r2, n)
        assert entry.count * 2 == len(full)  # lex-positive half
        outer = [[sum(q[a] * q[c] for q in full) for c in range(n)] for a in range(n)]
        # full-shell sum is twice the half-shell sum
        assert [[2 * v for v in row] for row in entry.outer] == outer
        assert entry.beta == F(r2 * len(full), 2 * n)
        assert entry.is_isotropic


def test_beta_examples():
    assert beta(1, 2).beta == 1 and beta(2, 2).beta == 2
    assert beta(3, 2).count == 0 and beta(3, 2).beta == 0
    assert beta(25, 2).count == 6  # (5,0) (4,3) (4,-3) (3,4) (3,-4) (0,5)
    with pytest.raises(ValueError):
        beta(0, 2)
    with pytest.raises(ValueError):
        beta(1, 4)


def test_lex_positive():
    assert lex_positive((0, 1)) and lex_positive((1, -5)) and not lex_positive((0, -1))
    assert not lex_positive((0, 0))
    shells = lattice_shells(2, 4)
    assert all(lex_positive(q) for shell in shells.values() for q in shell)


def test_grid_pressure_closed_form():
    law = ForceLaw.exponential(2.0)
    for n, l in [(1, 0.7), (2, 1.3), (3, 0.5)]:
        res = pressure(PressureModel(GRID, law), l, n)
        assert res.value == pytest.approx(math.exp(-l / 2) / l ** (n - 1), rel=1e-15)


def test_all_to_all_pressure_equals_virial_sum():
    # independent route: x-component virial sum_q q_1^2 f(l|q|)/|q| over lex-positive q
    law = ForceLaw.exponential(1.0)
    n, l, R = 2, 1.1, 6.0
    r = int(R)
    virial = 0.0
    for q in itertools.product(range(-r, r + 1), repeat=n):
        s = math.hypot(*q)
        if lex_positive(q) and s <= R:
            virial += q[0] ** 2 * math.exp(-l * s) / s
    virial *= l ** (1 - n)
    res = pressure(PressureModel(ALL_TO_ALL, law, R), l, n)
    assert res.value == pytest.approx(virial, rel=1e-12)


def test_tail_bound_covers_truncation():
    law = ForceLaw.exponential(1.0)
    for n in (1, 2, 3):
        short = pressure(PressureModel(ALL_TO_ALL, law, 5.0), 1.0, n)
        long = pressure(PressureModel(ALL_TO_ALL, law, 25.0), 1.0, n)
        assert 0 < long.value - short.value <= short.tail_bound


def test_slowly_decaying_force_rejected():
    law = ForceLaw(lambda s: 1.0 / np.asarray(s) ** 2, "inverse-square")
    with pytest.raises(DivergentTailError):
        pressure(PressureModel(ALL_TO_ALL, law), 1.0, 3)


def test_spring_chain_has_lattice_frequency():
    # 1D periodic chain of unit springs at rest length 1 plus a sine wave of
    # mode k oscillates at omega = 2 sin(pi k / N)
    N, k, eps = 32, 3, 1e-6
    st = uniform_lattice((N,), 1.0, periodic=True)
    x = st.x + eps * np.sin(2 * np.pi * k * np.arange(N) / N)[:, None]
    acc = accelerations(ParticleState(x, st.v, st.box), ForceLaw.spring(1.0), GRID)
    disp = x[:, 0] - st.x[:, 0]
    mask = np.abs(disp) > 1e-3 * eps
    omega2 = 4 * math.sin(math.pi * k / N) ** 2
    assert np.allclose(-acc[mask, 0] / disp[mask], omega2, rtol=1e-6)


def test_uniform_periodic_lattice_is_force_free():
    st = uniform_lattice((5, 5), 1.0, periodic=True)
    acc = accelerations(st, ForceLaw.exponential(1.0), ALL_TO_ALL, radius=2.0)
    assert np.max(np.abs(acc)) < 1e-14


def test_collision_detected():
    st = ParticleState(np.zeros((2, 1)), np.zeros((2, 1)))
    with pytest.raises(CollisionError):
        accelerations(st, ForceLaw.exponential(1.0), GRID)


def test_momentum_conserved_short_run():
    rng = np.random.default_rng(3)
    st = uniform_lattice((4, 4, 4))
    st = ParticleState(st.x + rng.uniform(-0.1, 0.1, st.x.shape), rng.normal(size=st.x.shape))
    p0 = total_momentum(st)
    for _ in range(50):
        st = step_particles(st, ForceLaw.exponential(1.0), ALL_TO_ALL, dt=0.01, radius=3.0)
    assert np.linalg.norm(total_momentum(st) - p0) <= 1e-12 * np.linalg.norm(p0)


def test_lemma1_constant_fields_have_zero_residual():
    zero = lambda x: np.zeros(x.shape[:-1] + (2,))
    const = lambda x: np.broadcast_to(np.array([0.3, -1.2]), x.shape[:-1] + (2,))
    assert verify_lemma1(zero, const, 2, 16) == 0.0


def test_prop1_linear_map_is_exact():
    zero = lambda m: np.zeros_like(m)
    one = lambda x: np.ones(x.shape[:-1])
    assert verify_prop1(one, zero, (1, 2), 16) < 1e-12


def test_lemma2_similarity_map_is_exact():
    # x = 2 R M: constant isotropic Jacobian
    c, s = math.cos(0.4), math.sin(0.4)
    R = 2 * np.array([[c, -s], [s, c]])
    assert verify_lemma2(lambda M: M @ R.T, 2, 12, (0, 0), (1, 1)) < 1e-12


@pytest.mark.parametrize("what", ["prop1", "lemma1", "lemma2"])
def test_identity_residuals_shrink_at_second_order(what):
    res = identity_refinement(what, seed=0)
    assert res.residuals[0] > res.residuals[1] > res.residuals[2]
    assert res.slope >= 1.7


def test_identity_refinement_rejects_unknown():
    with pytest.raises(ValueError):
        identity_refinement("nope", 0)
