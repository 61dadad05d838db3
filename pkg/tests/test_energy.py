import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from equiharm.construct import prototype_map
from equiharm.energy import (
    CSV_COLUMNS,
    TOL_DISC_C,
    angular_density,
    cumulative_energy,
    discrete_energy,
    energy_report,
    grad_distance_energy,
    loop_energies,
    loop_energy,
    lower_bound_check,
    modified_energy,
    modified_energy_curve,
    radial_density,
    strip_energies,
    tol_disc,
)
from equiharm.grid import EquivariantGridMap, make_grid
from equiharm.isometries import EuclideanIsometry, MobiusIsometry, TreeTranslation
from equiharm.spaces import Euclidean, HyperbolicPlane, MetricTree, TreeShape


def straight_flat(delta, T=3.0, n_t=12, n_psi=64):
    g = make_grid(T, n_t, n_psi)
    vals = np.zeros((n_t + 1, n_psi, 2))
    vals[..., 0] = delta * g.psi / (2 * math.pi)
    return EquivariantGridMap(g, Euclidean(2), EuclideanIsometry.translation([delta, 0.0]), vals)


def random_map(space, twist, seed, T=2.0, n_t=8, n_psi=6):
    g = make_grid(T, n_t, n_psi)
    vals = space.random_points(np.random.default_rng(seed), (n_t + 1) * n_psi, scale=2.0).reshape(n_t + 1, n_psi, -1)
    return EquivariantGridMap(g, space, twist, vals)


TWISTS = [
    (Euclidean(2), EuclideanIsometry.translation([2.0, 0.0])),
    (HyperbolicPlane(), MobiusIsometry(np.diag([2.0, 0.5]))),
    (MetricTree(TreeShape.comb()), TreeTranslation(MetricTree(TreeShape.comb()), 1.0)),
]


def test_straight_loop_energy_is_exact():
    # chords equal arcs in the flat case: n_psi (delta/n_psi)^2 / h_psi = delta^2 / 2 pi per unit length
    u = straight_flat(2 * math.pi)
    assert loop_energy(u, 3) == pytest.approx(2 * math.pi, rel=1e-14)
    assert discrete_energy(u) == pytest.approx(3.0 * 2 * math.pi, rel=1e-13)
    np.testing.assert_allclose(modified_energy_curve(u), 0.0, atol=1e-12)
    np.testing.assert_allclose(angular_density(u), 1.0, rtol=1e-13)
    np.testing.assert_allclose(radial_density(u), 0.0, atol=0)


def test_tol_disc_formula():
    g = make_grid(4.0, 16, 8)
    assert TOL_DISC_C == 1.0
    assert tol_disc(g, 2.0) == pytest.approx((1 / 64 + 1 / 256) * 2.0)
    assert tol_disc(g, 2.0, c=3.0) == pytest.approx(3 * (1 / 64 + 1 / 256) * 2.0)


@pytest.mark.parametrize("space,twist", TWISTS)
@given(seed=st.integers(0, 2**31 - 1), a=st.integers(0, 8), b=st.integers(0, 8))
def test_strips_add_up(space, twist, seed, a, b):
    u = random_map(space, twist, seed)
    a, b = sorted((a, b))
    h = u.grid.h_t
    whole = discrete_energy(u)
    parts = discrete_energy(u, 0.0, a * h) + discrete_energy(u, a * h, b * h) + discrete_energy(u, b * h, u.grid.T)
    assert parts == pytest.approx(whole, rel=1e-12)
    assert cumulative_energy(u)[-1] == pytest.approx(math.fsum(strip_energies(u)), rel=1e-14)


@pytest.mark.parametrize("space,twist", TWISTS)
@given(seed=st.integers(0, 2**31 - 1))
def test_loop_energy_lower_bound_is_exact(space, twist, seed):
    """Twisted chains satisfy sum d_j >= delta, hence sum d_j^2 / h >= delta^2 / 2 pi."""
    u = random_map(space, twist, seed)
    e = twist.translation_length() ** 2 / (2 * math.pi)
    assert np.all(loop_energies(u) >= e * (1 - 1e-12))
    assert lower_bound_check(u, math.exp(-u.grid.T), 1.0) >= -1e-12


def test_modified_energy_agrees_with_curve():
    I = MobiusIsometry(np.diag([2.0, 0.5]))
    g = make_grid(4.0, 16, 12)
    v = prototype_map(I.profile(), g)
    M = modified_energy_curve(v)
    for i in (1, 5, 16):
        assert modified_energy(v, math.exp(-g.t[i])) == pytest.approx(M[i], abs=1e-12)
    rep = energy_report(v)
    assert rep.modified(math.exp(-g.t[5])) == pytest.approx(M[5], abs=1e-12)
    with pytest.raises(ValueError):
        rep.modified(math.exp(-0.3))


def test_energy_csv_layout():
    u = straight_flat(1.0, n_t=4, n_psi=8)
    lines = energy_report(u).to_csv().splitlines()
    assert tuple(lines[0].split(",")) == CSV_COLUMNS
    assert len(lines) == 1 + 5
    row = [float(x) for x in lines[2].split(",")]
    assert row[0] == pytest.approx(0.75) and row[1] == pytest.approx(math.exp(-0.75))


def test_grad_distance_energy():
    u = straight_flat(1.0)
    assert grad_distance_energy(u, u) == 0.0
    shifted = u.with_values(u.values + np.array([0.0, 0.7]))
    assert grad_distance_energy(u, shifted) == pytest.approx(0.0, abs=1e-24)
