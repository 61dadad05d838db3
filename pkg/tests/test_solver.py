import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from equiharm.construct import prototype_map, pulled_boundary, wave_boundary
from equiharm.errors import DomainError, NumericError
from equiharm.grid import make_grid
from equiharm.isometries import EuclideanIsometry, MobiusIsometry, TreeTranslation
from equiharm.oracles import flat_twisted_dirichlet
from equiharm.solver import (
    CONVERGENCE_COLUMNS,
    SolveOptions,
    harmonicity_residual,
    optimal_omega,
    random_init,
    solve_annulus,
    solve_punctured,
    two_start_uniqueness,
)
from equiharm.spaces import HyperbolicPlane, MetricTree, TreeShape


def _flat_problem(delta=2 * math.pi, T=4.0, n_t=16, n_psi=12):
    I = EuclideanIsometry.translation([delta, 0.0])
    pr = I.profile()
    g = make_grid(T, n_t, n_psi)
    v = prototype_map(pr, g, boundary=pulled_boundary(pr, [1.0, 2.0], 0.5))
    return I, g, v


def test_options_validation():
    with pytest.raises(DomainError):
        SolveOptions(tol_move=0.0)
    with pytest.raises(DomainError):
        SolveOptions(exhaustion_schedule=(4.0, 4.0))
    with pytest.raises(DomainError):
        SolveOptions(omega=2.0)
    with pytest.raises(DomainError):
        SolveOptions(max_sweeps=0)


def test_optimal_omega_range():
    w = optimal_omega(make_grid(12.0, 64, 64))
    assert 1.0 < w < 2.0
    assert optimal_omega(make_grid(12.0, 128, 64)) > w


@pytest.mark.parametrize("n_psi", [12, 13])
def test_flat_solve_matches_linear_oracle(n_psi):
    I, g, v = _flat_problem(n_psi=n_psi)
    res = solve_annulus(g, I, v.values[0], v.values[-1], v, SolveOptions(tol_move=1e-10))
    oracle = flat_twisted_dirichlet(np.eye(2), [2 * math.pi, 0.0], v.values[0], v.values[-1], g.T, g.n_t, g.n_psi)
    assert res.converged
    assert np.max(np.linalg.norm(res.map.values - oracle, axis=-1)) < 1e-8


def test_energy_never_increases_and_residual_small():
    I = MobiusIsometry(np.diag([2.0, 0.5]))
    pr = I.profile()
    g = make_grid(4.0, 16, 12)
    v = prototype_map(pr, g, boundary=pulled_boundary(pr, [0.5, 2.0], 0.5))
    res = solve_annulus(g, I, v.values[0], v.values[-1], v)
    e = res.convergence_curve[:, 1]
    assert np.all(np.diff(e) <= 1e-12 * e[0])
    assert res.converged and res.harmonicity_residual <= 1e-8
    assert harmonicity_residual(res.map) <= 1e-8
    assert harmonicity_residual(v) > 1e-3
    np.testing.assert_array_equal(res.map.values[0], v.values[0])
    np.testing.assert_array_equal(res.map.values[-1], v.values[-1])


def test_convergence_csv_and_determinism():
    I, g, v = _flat_problem()
    a = solve_annulus(g, I, v.values[0], v.values[-1], v)
    b = solve_annulus(g, I, v.values[0], v.values[-1], v)
    assert a.convergence_csv() == b.convergence_csv()
    lines = a.convergence_csv().splitlines()
    assert tuple(lines[0].split(",")) == CONVERGENCE_COLUMNS
    assert len(lines) == a.sweeps_used + 2


def test_unconverged_run_is_flagged():
    I, g, v = _flat_problem()
    res = solve_annulus(g, I, v.values[0], v.values[-1], v, SolveOptions(max_sweeps=2))
    assert not res.converged and res.sweeps_used == 2


def test_init_grid_must_match():
    I, g, v = _flat_problem()
    with pytest.raises(DomainError):
        solve_annulus(make_grid(4.0, 8, 12), I, v.values[0], v.values[-1], v)


def test_random_init_keeps_boundary_rows():
    I, g, v = _flat_problem()
    r = random_init(v, np.random.default_rng(0))
    np.testing.assert_array_equal(r.values[[0, -1]], v.values[[0, -1]])
    assert np.max(np.abs(r.values[1:-1] - v.values[1:-1])) > 0


def test_tree_solver_reaches_tolerance():
    T = MetricTree(TreeShape.comb())
    I = TreeTranslation(T, 1.0)
    pr = I.profile()
    g = make_grid(4.0, 16, 12)
    v = prototype_map(pr, g, boundary=wave_boundary(pr, 0.5))
    res = solve_annulus(g, I, v.values[0], v.values[-1], v)
    assert res.converged and res.harmonicity_residual <= 1e-8


def test_punctured_exhaustion_diagnostics():
    I = MobiusIsometry(np.diag([2.0, 0.5]))
    pr = I.profile()
    opts = SolveOptions(exhaustion_schedule=(3.0, 6.0, 9.0), compare_window=1.5)
    out = solve_punctured(pr, wave_boundary(pr, 0.5), opts, n_t=36, n_psi=12)
    assert [s.T for s in out.steps] == [3.0, 6.0, 9.0]
    assert out.bdvr_ok and out.sup_diffs_decreasing and out.cauchy_ok and not out.partial
    assert out.map.grid.T == 9.0
    assert math.isnan(out.steps[0].sup_diff)


def test_two_start_uniqueness_small():
    I = MobiusIsometry(np.diag([2.0, 0.5]))
    pr = I.profile()
    opts = SolveOptions(exhaustion_schedule=(3.0, 6.0), compare_window=1.5)
    uq = two_start_uniqueness(pr, wave_boundary(pr, 0.5), opts, n_t=24, n_psi=12)
    assert uq.passed and uq.tolerance == pytest.approx(5e-8)


def test_barycenter_iteration_cap_raises():
    H = HyperbolicPlane()
    pts = np.array([[[0.0, 1.0], [5.0, 0.1], [-3.0, 7.0]]])
    with pytest.raises(NumericError) as exc:
        H.barycenter(pts, np.ones(3), tol=1e-15, max_iter=2)
    assert "max_gradient" in exc.value.diagnostics


@given(n_t=st.integers(min_value=2, max_value=9), n_psi=st.integers(min_value=3, max_value=11))
def test_colour_classes_have_no_adjacent_nodes(n_t, n_psi):
    from equiharm.solver import _phases

    g = make_grid(3.0, n_t, n_psi)
    seen = set()
    for ii, jj in _phases(g):
        nodes = set(zip(ii.tolist(), jj.tolist()))
        assert not nodes & seen
        seen |= nodes
        for i, j in nodes:
            for nb in ((i + 1, j), (i - 1, j), (i, (j + 1) % n_psi), (i, (j - 1) % n_psi)):
                assert nb not in nodes
    assert len(seen) == (n_t - 1) * n_psi
