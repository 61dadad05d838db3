import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from equiharm.construct import (
    LOG2,
    TwistedLoop,
    bridge_bound,
    bridge_map,
    gamma_family,
    interpolate_maps,
    prototype_map,
    pull_loop,
    pulled_boundary,
    slice_loop,
    wave_boundary,
)
from equiharm.energy import discrete_energy, map_e_rho, modified_energy_curve
from equiharm.errors import DomainError
from equiharm.grid import make_grid
from equiharm.isometries import EuclideanIsometry, MobiusIsometry, ProductIsometry, TreeTranslation
from equiharm.spaces import MetricTree, TreeShape

COMB = MetricTree(TreeShape.comb())
TWISTS = {
    "flat": EuclideanIsometry.translation([2 * math.pi, 0.0]),
    "hyperbolic": MobiusIsometry(np.diag([2.0, 0.5])),
    "parabolic": MobiusIsometry(np.array([[1.0, 1.0], [0.0, 1.0]])),
    "tree": TreeTranslation(COMB, 1.0),
    "product": ProductIsometry(EuclideanIsometry.translation([1.0]), MobiusIsometry(np.diag([2.0, 0.5]))),
}


def test_flat_family_is_straight_segment():
    fam = gamma_family(TWISTS["flat"].profile())
    psi = np.linspace(0, 2 * math.pi, 9)
    np.testing.assert_allclose(fam(np.zeros_like(psi), psi), np.stack([psi, 0 * psi], axis=-1), atol=1e-14)


@pytest.mark.parametrize("name", list(TWISTS))
def test_family_closes_up_under_twist(name):
    I = TWISTS[name]
    fam = gamma_family(I.profile())
    s = np.array([0.0, 0.7, 3.0])
    start, end = fam(s, np.zeros(3)), fam(s, np.full(3, 2 * math.pi))
    assert np.max(I.space.distance(I.apply(start), end)) < 1e-9


@pytest.mark.parametrize("name", list(TWISTS))
def test_prototype_boundary_and_seam(name):
    I = TWISTS[name]
    pr = I.profile()
    g = make_grid(6.0, 24, 16)
    b = wave_boundary(pr, 0.5)
    v = prototype_map(pr, g, boundary=b)
    assert np.max(I.space.distance(v.values[0], b(g.psi))) < 1e-12
    # modified energy of the prototype stays bounded below by the loop bound
    assert np.min(modified_energy_curve(v)) >= -1e-9


def test_prototype_semisimple_rows_are_gamma_0():
    pr = TWISTS["hyperbolic"].profile()
    g = make_grid(4.0, 16, 8)
    v = prototype_map(pr, g)
    fam = gamma_family(pr)
    deep = g.t >= LOG2
    np.testing.assert_allclose(v.values[deep], np.broadcast_to(fam(np.zeros(8), g.psi), v.values[deep].shape), atol=1e-12)


def test_parabolic_prototype_climbs_ray():
    pr = TWISTS["parabolic"].profile()
    g = make_grid(20.0, 40, 8)
    v = prototype_map(pr, g, exponent=0.5)
    heights = v.values[:, 0, 1]
    assert np.all(np.diff(heights[g.t > LOG2]) > 0)
    assert heights[-1] == pytest.approx(math.exp(math.sqrt(20.0 - LOG2)), rel=1e-9)


def test_prototype_preconditions():
    pr = TWISTS["flat"].profile()
    with pytest.raises(DomainError):
        prototype_map(pr, make_grid(0.5, 4, 4))
    with pytest.raises(DomainError):
        prototype_map(pr, make_grid(2.0, 4, 4), exponent=1.5)
    with pytest.raises(DomainError):
        wave_boundary(pr, 1.0)
    with pytest.raises(DomainError):
        pulled_boundary(pr, [0.0, 0.0], amplitude=2.0)


def test_pulls_vanish_at_seam():
    pr = TWISTS["hyperbolic"].profile()
    loop = pull_loop(pr.isometry.space, wave_boundary(pr, 0.3), [0.5, 2.0], 0.5)
    fam = gamma_family(pr)
    ends = np.array([0.0, 2 * math.pi])
    np.testing.assert_allclose(loop(ends), fam(np.zeros(2), ends), atol=1e-12)


def _random_loop(I, rng, n_psi=12):
    return TwistedLoop(I.space, I, I.space.random_points(rng, n_psi, scale=2.0))


@pytest.mark.parametrize("name", list(TWISTS))
@given(seed=st.integers(0, 2**31 - 1), r1=st.floats(0.01, 0.9))
def test_bridge_estimate(name, seed, r1):
    I = TWISTS[name]
    rng = np.random.default_rng(seed)
    u0, u1 = _random_loop(I, rng), _random_loop(I, rng)
    br = bridge_map(u0, u1, 1.0, r1, 10)
    E = discrete_energy(br)
    bound = bridge_bound(u0, u1, 1.0, r1)
    assert E <= bound + 1e-9 * max(1.0, bound)
    np.testing.assert_array_equal(br.values[0], u0.values)
    np.testing.assert_array_equal(br.values[-1], u1.values)


def test_bridge_equality_for_parallel_flat_loops():
    I = TWISTS["flat"]
    psi = 2 * math.pi * np.arange(16) / 16
    a = np.stack([psi, 0 * psi], axis=-1)
    u0, u1 = TwistedLoop(I.space, I, a), TwistedLoop(I.space, I, a + [0.0, 1.0])
    br = bridge_map(u0, u1, 1.0, 0.2, 8)
    assert discrete_energy(br) == pytest.approx(bridge_bound(u0, u1, 1.0, 0.2), rel=1e-12)


def test_bridge_preconditions():
    I, J = TWISTS["flat"], EuclideanIsometry.translation([1.0, 0.0])
    rng = np.random.default_rng(0)
    u0 = _random_loop(I, rng)
    with pytest.raises(DomainError):
        bridge_map(u0, _random_loop(J, rng), 1.0, 0.5, 4)
    with pytest.raises(DomainError):
        bridge_map(u0, _random_loop(I, rng), 0.5, 1.0, 4)


def test_slice_loop_energy_matches_map():
    pr = TWISTS["tree"].profile()
    g = make_grid(3.0, 6, 10)
    v = prototype_map(pr, g, boundary=wave_boundary(pr, 0.4))
    assert slice_loop(v, 2).energy() >= map_e_rho(v) - 1e-12


def test_interpolate_maps_endpoints_and_checks():
    pr = TWISTS["hyperbolic"].profile()
    g = make_grid(3.0, 6, 8)
    u0 = prototype_map(pr, g)
    u1 = prototype_map(pr, g, boundary=wave_boundary(pr, 0.4))
    np.testing.assert_array_equal(interpolate_maps(u0, u1, 0.0).values, u0.values)
    np.testing.assert_array_equal(interpolate_maps(u0, u1, 1.0).values, u1.values)
    mid = interpolate_maps(u0, u1, 0.5)
    d = u0.space.distance(u0.values, u1.values)
    np.testing.assert_allclose(u0.space.distance(u0.values, mid.values), d / 2, atol=1e-12)
    with pytest.raises(DomainError):
        interpolate_maps(u0, prototype_map(pr, make_grid(3.0, 3, 8)), 0.5)
    with pytest.raises(DomainError):
        interpolate_maps(u0, u1, 1.5)
