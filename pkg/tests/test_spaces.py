import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from equiharm.errors import DomainError
from equiharm.spaces import (
    Euclidean,
    HyperbolicPlane,
    MetricTree,
    Product,
    TreeShape,
    cat0_residual,
    distance,
    interpolate,
    space_from_spec,
    weighted_barycenter,
)

SPACES = {
    "euclidean": Euclidean(2),
    "hyperbolic": HyperbolicPlane(),
    "star": MetricTree(TreeShape.star(3, 1.0)),
    "comb": MetricTree(TreeShape.comb()),
    "product": Product(Euclidean(1), HyperbolicPlane()),
}

seeds = st.integers(min_value=0, max_value=2**31 - 1)
fractions = st.floats(min_value=0.0, max_value=1.0)


def _pts(space, seed, n, scale=1.0):
    return space.random_points(np.random.default_rng(seed), n, scale=scale)


# -- examples --------------------------------------------------------------------------


def test_euclidean_pythagoras():
    assert distance(Euclidean(2), [0, 0], [3, 4]) == pytest.approx(5.0, abs=1e-15)


def test_hyperbolic_vertical_distance_matches_length_integral():
    # length element |dz| / y along the vertical segment
    oracle, _ = quad(lambda y: 1.0 / y, 1.0, 2.0)
    assert distance(HyperbolicPlane(), [0, 1], [0, 2]) == pytest.approx(oracle, abs=1e-12)
    assert oracle == pytest.approx(math.log(2), abs=1e-12)


def test_hyperbolic_midpoint_by_bisection():
    H = HyperbolicPlane()
    m = interpolate(H, [0, 1], [0, 4], 0.5)
    # bisect for the height with equal integrated length to both ends
    lo, hi = 1.0, 4.0
    for _ in range(200):
        y = 0.5 * (lo + hi)
        a = quad(lambda s: 1 / s, 1.0, y)[0]
        b = quad(lambda s: 1 / s, y, 4.0)[0]
        lo, hi = (y, hi) if a < b else (lo, y)
    np.testing.assert_allclose(m, [0.0, 0.5 * (lo + hi)], atol=1e-10)
    np.testing.assert_allclose(m, [0.0, 2.0], atol=1e-10)


def test_star_distance_through_center():
    T = SPACES["star"]
    assert distance(T, T.edge_point(0, 0.5), T.edge_point(1, 0.5)) == pytest.approx(1.0, abs=1e-15)


def test_interpolate_euclidean_midpoint():
    np.testing.assert_array_equal(interpolate(Euclidean(2), [0, 0], [2, 0], 0.5), [1.0, 0.0])


@pytest.mark.parametrize("name", list(SPACES))
def test_interpolate_endpoints(name):
    space = SPACES[name]
    P, Q = _pts(space, 1, 2)
    np.testing.assert_allclose(interpolate(space, P, Q, 0.0), P, atol=1e-12)
    assert distance(space, interpolate(space, P, Q, 1.0), Q) < 1e-10


def test_cat0_residual_examples():
    H = HyperbolicPlane()
    assert cat0_residual(H, [0, 1], [-1, 1], [1, 1], 0.5) > 1e-3
    E = Euclidean(2)
    assert cat0_residual(E, [0, 0], [1, 0], [3, 0], 0.5) == pytest.approx(0.0, abs=1e-12)
    assert cat0_residual(E, [5, 2], [1, 7], [3, 0], 0.0) == 0.0


def test_barycenter_examples():
    assert weighted_barycenter(Euclidean(1), [[0.0], [2.0]])[0] == pytest.approx(1.0)
    T = SPACES["star"]
    tips = np.array([T.vertex_point(f"l{k}") for k in range(3)])
    center = T.vertex_point("c")
    np.testing.assert_allclose(weighted_barycenter(T, tips), center, atol=1e-12)
    P = _pts(HyperbolicPlane(), 2, 1)
    np.testing.assert_allclose(weighted_barycenter(HyperbolicPlane(), P), P[0], atol=1e-9)


def test_euclidean_barycenter_is_weighted_mean():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(7, 3))
    w = rng.uniform(0.1, 2.0, 7)
    np.testing.assert_allclose(weighted_barycenter(Euclidean(3), pts, w), w @ pts / w.sum(), rtol=0, atol=1e-14)


# -- errors -------------------------------------------------------------------------------


def test_domain_errors():
    with pytest.raises(DomainError):
        distance(HyperbolicPlane(), [0, 0], [0, 1])
    with pytest.raises(DomainError):
        interpolate(Euclidean(2), [0, 0], [1, 1], 1.5)
    with pytest.raises(DomainError):
        SPACES["star"].edge_point(0, 2.0)
    with pytest.raises(DomainError):
        weighted_barycenter(Euclidean(2), np.zeros((0, 2)))
    with pytest.raises(DomainError):
        space_from_spec({"kind": "sphere"})


def test_tree_shape_validation():
    with pytest.raises(DomainError):
        TreeShape(("a", "b", "c"), ((0, 1, 1.0), (1, 0, 1.0)))
    with pytest.raises(DomainError):
        TreeShape(("a", "b"), ((0, 1, 0.0),))
    with pytest.raises(DomainError):
        TreeShape.from_text("edge a b 1\nedge b a 1\n")
    with pytest.raises(DomainError):
        TreeShape.from_text("edge a b one\n")


def test_tree_text_round_trip():
    text = "# comb\nedge a m 0.5\nedge m b 0.5\nedge m h 1.0\nline 0 1\n"
    shape = TreeShape.from_text(text)
    assert shape == TreeShape.comb()
    assert TreeShape.from_text(shape.to_text()) == shape
    assert space_from_spec({"kind": "tree", "shape": text}) == MetricTree(shape)


def test_tree_vertex_encoding_is_canonical():
    T = SPACES["comb"]
    m = T.vertex_point("m")
    np.testing.assert_array_equal(T.edge_point(0, 0.5), m)
    np.testing.assert_array_equal(T.edge_point(1, 0.0), m)
    np.testing.assert_array_equal(T.edge_point(2, 0.0), m)
    # b of copy k is a of copy k + 1
    np.testing.assert_array_equal(T.vertex_point("b", 0), T.vertex_point("a", 1))


@pytest.mark.parametrize("name", list(SPACES))
def test_spec_round_trip(name):
    space = SPACES[name]
    assert space_from_spec(space.to_spec()).to_spec() == space.to_spec()


# -- properties -------------------------------------------------------------------------


@pytest.mark.parametrize("name", list(SPACES))
@given(seed=seeds)
def test_metric_axioms(name, seed):
    space = SPACES[name]
    P, Q, R = _pts(space, seed, 3, scale=2.0)
    dPQ = distance(space, P, Q)
    assert dPQ == pytest.approx(distance(space, Q, P), abs=1e-12)
    assert distance(space, P, P) < 1e-12
    assert dPQ <= distance(space, P, R) + distance(space, R, Q) + 1e-10


@pytest.mark.parametrize("name", list(SPACES))
@given(seed=seeds, t=fractions)
def test_interpolation_splits_distance(name, seed, t):
    space = SPACES[name]
    P, Q = _pts(space, seed, 2, scale=2.0)
    M = interpolate(space, P, Q, t)
    d = distance(space, P, Q)
    assert distance(space, P, M) == pytest.approx(t * d, abs=1e-10)
    assert distance(space, M, Q) == pytest.approx((1 - t) * d, abs=1e-10)


@pytest.mark.parametrize("name", list(SPACES))
@given(seed=seeds, t=fractions)
def test_cat0_inequality(name, seed, t):
    space = SPACES[name]
    P, Q, R = _pts(space, seed, 3, scale=2.0)
    assert cat0_residual(space, P, Q, R, t) >= -1e-9


@pytest.mark.parametrize("name", list(SPACES))
@given(seed=seeds, t=st.floats(min_value=1.0, max_value=2.0))
def test_extend_continues_geodesic(name, seed, t):
    # over-relaxation range; far out, half-plane coordinates lose absolute precision
    space = SPACES[name]
    P, Q = _pts(space, seed, 2, scale=2.0)
    X = space.extend(P, Q, t)
    d = distance(space, P, Q)
    tol = 1e-9 * max(1.0, t * d)
    if isinstance(space, MetricTree):
        # may stop short at a branch point or leaf, but stays on a continuation
        assert distance(space, P, X) == pytest.approx(d + distance(space, Q, X), abs=tol)
        assert distance(space, Q, X) <= (t - 1) * d + tol
    else:
        assert distance(space, P, X) == pytest.approx(t * d, abs=tol)
        assert distance(space, Q, X) == pytest.approx((t - 1) * d, abs=tol)


@pytest.mark.parametrize("name", list(SPACES))
@given(seed=seeds, k=st.integers(min_value=1, max_value=6))
def test_barycenter_beats_perturbations(name, seed, k):
    space = SPACES[name]
    rng = np.random.default_rng(seed)
    pts = space.random_points(rng, k, scale=2.0)
    w = rng.uniform(0.1, 2.0, k)
    x = weighted_barycenter(space, pts, w, tol=1e-12)
    f = space.objective(x, pts, w)
    dirs = space.random_points(rng, 100, scale=3.0)
    step = rng.uniform(1e-6, 0.3, 100)
    d = space.distance(np.broadcast_to(x, dirs.shape), dirs)
    frac = np.minimum(step / np.maximum(d, 1e-300), 1.0)
    y = space.interpolate(np.broadcast_to(x, dirs.shape), dirs, frac)
    assert np.all(space.objective(y, pts, w) >= f - 1e-9)


@given(seed=seeds, k=st.integers(min_value=2, max_value=5))
def test_tree_barycenter_against_dense_sampling(seed, k):
    """Dense enumeration of every edge copy near the data bounds the minimum from below."""
    T = SPACES["comb"]
    rng = np.random.default_rng(seed)
    pts = T.random_points(rng, k)
    w = rng.uniform(0.1, 2.0, k)
    x = weighted_barycenter(T, pts, w, tol=1e-12)
    cands = np.array([T.edge_point(e, s * T.shape.edges[e][2], c) for c in range(-3, 4) for e in range(3) for s in np.linspace(0, 1, 401)])
    best = float(np.min(T.objective(cands, pts, w)))
    assert float(T.objective(x, pts, w)) <= best + 1e-12
