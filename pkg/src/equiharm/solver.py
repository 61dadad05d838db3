"""Discrete harmonic maps by nonlinear Gauss-Seidel with over-relaxation.

Each interior node is replaced by the weighted barycenter ``b`` of its four
neighbours (weights ``1/h_t^2`` axially, ``1/h_psi^2`` angularly).  With
``omega > 1`` the node moves further along the geodesic from its old value
through ``b``; the move is kept only if it does not raise the node's local
energy, so the total energy never increases.  Nodes are split into colour
classes with no two neighbours in the same class (four classes when
``n_psi`` is odd, because of the seam), so each class updates at once.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .construct import DEFAULT_EXPONENT, gamma_family, prototype_values
from .energy import discrete_energy, map_e_rho
from .errors import DomainError
from .grid import CylinderGrid, EquivariantGridMap, make_grid
from .isometries import DisplacementProfile, Isometry

log = logging.getLogger(__name__)

# relative roundoff allowance when comparing local objectives
SAFEGUARD_SLACK = 1e-14


@dataclass
class SolveOptions:
    max_sweeps: int = 20000
    tol_move: float = 1e-8
    tol_energy: float = 1e-12
    barycenter_tol: float = 1e-11
    omega: float | None = None  # None picks the SOR optimum of the flat problem
    exhaustion_schedule: tuple = (4.0, 8.0, 12.0)
    compare_window: float = 2.0
    compare_tol: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.max_sweeps < 1:
            raise DomainError("max_sweeps must be positive")
        for name in ("tol_move", "tol_energy", "barycenter_tol", "compare_window", "compare_tol"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        sched = tuple(float(x) for x in self.exhaustion_schedule)
        if not sched or any(b <= a for a, b in zip(sched, sched[1:])):
            raise DomainError("exhaustion schedule must be strictly increasing")
        self.exhaustion_schedule = sched
        if self.omega is not None and not 0 < self.omega < 2:
            raise DomainError("omega must lie in (0, 2)")


CONVERGENCE_COLUMNS = ("sweep", "energy", "max_move", "harmonicity_residual")


@dataclass
class SolveResult:
    map: EquivariantGridMap
    sweeps_used: int
    final_energy: float
    convergence_curve: np.ndarray  # rows (sweep, energy, max_move, update_residual)
    harmonicity_residual: float
    converged: bool
    omega: float = 1.0

    def convergence_csv(self) -> str:
        """Sweep log; the residual column is the largest node-to-barycenter distance seen during the sweep."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CONVERGENCE_COLUMNS)
        for k, e, m, r in self.convergence_curve:
            w.writerow([int(k), repr(float(e)), repr(float(m)), repr(float(r))])
        return buf.getvalue()


def optimal_omega(grid: CylinderGrid) -> float:
    """SOR parameter from the Jacobi radius of the flat problem's slowest mode."""
    wt, wp = 1.0 / grid.h_t**2, 1.0 / grid.h_psi**2
    mu = (wt * math.cos(math.pi / grid.n_t) + wp) / (wt + wp)
    return 2.0 / (1.0 + math.sqrt(max(0.0, 1.0 - mu * mu)))


def _phases(grid: CylinderGrid) -> list[tuple[np.ndarray, np.ndarray]]:
    ii, jj = np.meshgrid(np.arange(1, grid.n_t), np.arange(grid.n_psi), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    phases = []
    if grid.n_psi % 2 == 0:
        for c in (0, 1):
            m = (ii + jj) % 2 == c
            phases.append((ii[m], jj[m]))
    else:
        last = jj == grid.n_psi - 1
        for c in (0, 1):
            m = ((ii + jj) % 2 == c) & ~last
            phases.append((ii[m], jj[m]))
        for c in (0, 1):
            m = last & (ii % 2 == c)
            phases.append((ii[m], jj[m]))
    return phases


def _neighbours(gmap: EquivariantGridMap, values: np.ndarray, ii, jj) -> np.ndarray:
    n = gmap.grid.n_psi
    right = np.empty((ii.size, values.shape[-1]))
    left = np.empty_like(right)
    seam_r = jj == n - 1
    seam_l = jj == 0
    right[~seam_r] = values[ii[~seam_r], jj[~seam_r] + 1]
    left[~seam_l] = values[ii[~seam_l], jj[~seam_l] - 1]
    if seam_r.any():
        right[seam_r] = gmap.twist.apply(values[ii[seam_r], 0])
    if seam_l.any():
        left[seam_l] = gmap.twist_inverse.apply(values[ii[seam_l], n - 1])
    return np.stack([values[ii + 1, jj], values[ii - 1, jj], right, left], axis=1)


def _weights(grid: CylinderGrid) -> np.ndarray:
    wt, wp = 1.0 / grid.h_t**2, 1.0 / grid.h_psi**2
    return np.array([wt, wt, wp, wp])


def harmonicity_residual(gmap: EquivariantGridMap, tol: float = 1e-11) -> float:
    """Max over interior nodes of the distance to the barycenter of the four neighbours."""
    g = gmap.grid
    ii, jj = np.meshgrid(np.arange(1, g.n_t), np.arange(g.n_psi), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    nb = _neighbours(gmap, gmap.values, ii, jj)
    x = gmap.values[ii, jj]
    b = gmap.space.barycenter(nb, _weights(g), tol, init=x)
    return float(np.max(gmap.space.distance(x, b)))


def _sweep(gmap: EquivariantGridMap, phases, w, omega, bary_tol):
    space = gmap.space
    V = gmap.values
    max_move = 0.0
    max_res = 0.0
    for ii, jj in phases:
        nb = _neighbours(gmap, V, ii, jj)
        x = V[ii, jj]
        b = space.barycenter(nb, w, bary_tol, init=x)
        f_x = space.objective(x, nb, w)
        f_b = space.objective(b, nb, w)
        new = np.where((f_b <= f_x)[:, None], b, x)
        if omega != 1.0:
            cand = space.extend(x, b, omega)
            f_c = space.objective(cand, nb, w)
            new = np.where((f_c <= f_x * (1.0 + SAFEGUARD_SLACK))[:, None], cand, new)
        new = space.canonicalize(new)
        V[ii, jj] = new
        max_res = max(max_res, float(np.max(space.distance(x, b))))
        max_move = max(max_move, float(np.max(space.distance(x, new))))
    return max_move, max_res


def solve_annulus(
    grid: CylinderGrid,
    twist: Isometry,
    outer_boundary,
    inner_boundary,
    init: EquivariantGridMap,
    opts: SolveOptions | None = None,
) -> SolveResult:
    """Dirichlet problem on ``[0, T] x S^1`` with fixed end slices.

    Stops when the sweep displacement, its geometric-tail extrapolation and the
    relative energy decrease are all below tolerance, and the harmonicity
    residual is below ``tol_move``.
    """
    opts = opts or SolveOptions()
    if init.grid != grid:
        raise DomainError("initial map lives on a different grid")
    space = init.space
    gmap = EquivariantGridMap(grid, space, twist, init.values.copy())
    gmap.values[0] = space.validate(outer_boundary)
    gmap.values[-1] = space.validate(inner_boundary)
    omega = opts.omega if opts.omega is not None else optimal_omega(grid)
    phases = _phases(grid)
    w = _weights(grid)

    energy = discrete_energy(gmap)
    curve = [(0, energy, 0.0, 0.0)]
    moves: list[float] = []
    converged = False
    residual = float("nan")
    sweep = 0
    for sweep in range(1, opts.max_sweeps + 1):
        move, res = _sweep(gmap, phases, w, omega, opts.barycenter_tol)
        new_energy = discrete_energy(gmap)
        curve.append((sweep, new_energy, move, res))
        d_energy = abs(energy - new_energy)
        energy = new_energy
        moves.append(move)
        if move >= opts.tol_move or d_energy > opts.tol_energy * max(1.0, abs(energy)):
            continue
        recent = [m for m in moves[-6:] if m > 0]
        rate = 0.0
        if len(recent) >= 2:
            ratios = [b / a for a, b in zip(recent, recent[1:])]
            rate = min(max(ratios), 0.999)
        if move == 0.0 or move * rate / (1.0 - rate) < opts.tol_move:
            residual = harmonicity_residual(gmap, opts.barycenter_tol)
            if residual <= opts.tol_move:
                converged = True
                break
    if not converged:
        residual = harmonicity_residual(gmap, opts.barycenter_tol)
        log.warning("solve_annulus stopped after %d sweeps without meeting tolerances", sweep)
    return SolveResult(gmap, sweep, energy, np.array(curve, dtype=float), residual, converged, omega)


# -- exhaustion ----------------------------------------------------------------------


@dataclass
class ExhaustionStep:
    T: float
    n_t: int
    sweeps: int
    converged: bool
    energy: float
    sup_diff: float  # vs previous T on [0, compare_window]; nan for the first
    window_energy_u: float
    window_energy_v: float


@dataclass
class PuncturedResult:
    result: SolveResult
    prototype: EquivariantGridMap
    steps: list[ExhaustionStep]
    C_v: float  # sup over T of E^v[t0, T] - E_rho (T - t0)
    t0: float
    bdvr_ok: bool
    sup_diffs_decreasing: bool
    cauchy_ok: bool
    partial: bool
    diagnostics: dict = field(default_factory=dict)

    @property
    def map(self) -> EquivariantGridMap:
        return self.result.map


def random_init(proto: EquivariantGridMap, rng: np.random.Generator, amplitude: float = 0.3) -> EquivariantGridMap:
    """Prototype with interior nodes pulled toward random points of the target."""
    space = proto.space
    g = proto.grid
    vals = proto.values.copy()
    inner = vals[1:-1]
    shape = inner.shape[:-1]
    targets = space.random_points(rng, int(np.prod(shape))).reshape(inner.shape)
    frac = amplitude * rng.random(shape)
    vals[1:-1] = space.canonicalize(space.interpolate(inner, targets, frac))
    return EquivariantGridMap(g, space, proto.twist, vals)


def solve_punctured(
    profile: DisplacementProfile,
    boundary=None,
    opts: SolveOptions | None = None,
    n_t: int = 96,
    n_psi: int = 32,
    exponent: float = DEFAULT_EXPONENT,
    init: str = "prototype",
) -> PuncturedResult:
    """Exhaust the punctured disk by annuli ``[0, T]`` along the schedule.

    ``n_t`` is the axial resolution of the largest ``T``; smaller ``T`` reuse
    its spacing (each ``T`` is snapped to a whole number of cells).  Inner
    boundary data is the prototype slice at ``T``.
    """
    opts = opts or SolveOptions()
    if init not in ("prototype", "random"):
        raise DomainError("init must be 'prototype' or 'random'")
    fam = gamma_family(profile)
    space, twist = fam.space, profile.isometry
    h_t = opts.exhaustion_schedule[-1] / n_t
    rng = np.random.default_rng(opts.seed)
    t0 = opts.compare_window
    psi = 2.0 * math.pi * np.arange(n_psi) / n_psi

    steps: list[ExhaustionStep] = []
    prev: EquivariantGridMap | None = None
    result = proto = None
    C_v = -math.inf
    k_win = None
    for T in opts.exhaustion_schedule:
        nT = max(2, int(round(T / h_t)))
        grid = make_grid(nT * h_t, nT, n_psi)
        proto = EquivariantGridMap(grid, space, twist, prototype_values(fam, grid.t, psi, boundary, exponent))
        if k_win is None:
            k_win = int(round(t0 / h_t))
            if not 1 <= k_win <= nT:
                raise DomainError("compare_window must fit inside the first annulus")
        if prev is None:
            start = proto if init == "prototype" else random_init(proto, rng)
        else:
            vals = proto.values.copy()
            vals[: prev.grid.n_t] = prev.values[: prev.grid.n_t]
            start = proto.with_values(vals)
        result = solve_annulus(grid, twist, proto.values[0], proto.values[-1], start, opts)
        u = result.map
        t_win = k_win * h_t
        e_u = discrete_energy(u, 0.0, t_win)
        e_v = discrete_energy(proto, 0.0, t_win)
        C_v = max(C_v, discrete_energy(proto, t_win, grid.T) - map_e_rho(proto) * (grid.T - t_win))
        if prev is None:
            sup_diff = float("nan")
        else:
            sup_diff = float(np.max(space.distance(u.values[: k_win + 1], prev.values[: k_win + 1])))
        steps.append(ExhaustionStep(grid.T, nT, result.sweeps_used, result.converged, result.final_energy, sup_diff, e_u, e_v))
        prev = u

    slack = 1e-9 * max(1.0, abs(C_v))
    bdvr_ok = all(s.window_energy_u <= C_v + s.window_energy_v + slack for s in steps)
    diffs = [s.sup_diff for s in steps[1:]]
    # differences at the solver tolerance are noise
    floor = 5.0 * opts.tol_move
    decreasing = all(b <= a + floor for a, b in zip(diffs, diffs[1:]))
    cauchy = bool(diffs) and diffs[-1] <= opts.compare_tol
    partial = not (cauchy and all(s.converged for s in steps))
    return PuncturedResult(
        result=result,
        prototype=proto,
        steps=steps,
        C_v=C_v,
        t0=k_win * h_t,
        bdvr_ok=bdvr_ok,
        sup_diffs_decreasing=decreasing,
        cauchy_ok=cauchy,
        partial=partial,
        diagnostics={"h_t": h_t, "n_psi": n_psi, "exponent": exponent},
    )


@dataclass
class UniquenessResult:
    first: PuncturedResult
    second: PuncturedResult
    sup_curve: np.ndarray  # per slice sup distance
    window_max: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.window_max <= self.tolerance


def two_start_uniqueness(
    profile: DisplacementProfile,
    boundary=None,
    opts: SolveOptions | None = None,
    seeds: tuple[int, int] | None = None,
    **kwargs,
) -> UniquenessResult:
    """Solve twice from independent random starts and compare slice by slice."""
    opts = opts or SolveOptions()
    seeds = seeds or (opts.seed, opts.seed + 1)
    runs = []
    for s in seeds:
        o = SolveOptions(**{**opts.__dict__, "seed": s})
        runs.append(solve_punctured(profile, boundary, o, init="random", **kwargs))
    a, b = runs[0].map, runs[1].map
    curve = np.max(a.space.distance(a.values, b.values), axis=1)
    k = int(round(opts.compare_window / a.grid.h_t))
    return UniquenessResult(runs[0], runs[1], curve, float(np.max(curve[: k + 1])), 5.0 * opts.tol_move)
