"""Explicit competitor maps: geodesic loop families, prototype, bridge, interpolation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError
from .grid import CylinderGrid, EquivariantGridMap, make_grid
from .isometries import DisplacementProfile, Isometry
from .spaces import ModelSpace

LOG2 = math.log(2.0)
DEFAULT_EXPONENT = 1.0 / 3.0


def _same_twist(a: Isometry, b: Isometry) -> bool:
    return a is b or a.to_spec() == b.to_spec()


@dataclass
class SectionFamily:
    """Twisted geodesic loops ``gamma_s``: the geodesic from ``c(s)`` to ``I c(s)``.

    ``mode`` is ``"semisimple"`` (``c(s) = P_*`` for all ``s``) or ``"ray"``.
    """

    isometry: Isometry
    mode: str
    start: Callable[[np.ndarray], np.ndarray]

    @property
    def space(self) -> ModelSpace:
        return self.isometry.space

    def __call__(self, s, psi) -> np.ndarray:
        s, psi = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(psi, dtype=float))
        p = self.start(s)
        return self.space.interpolate(p, self.isometry.apply(p), psi / (2.0 * math.pi))

    def evaluate(self, s, psi) -> np.ndarray:
        return self(s, psi)


def gamma_family(profile: DisplacementProfile) -> SectionFamily:
    I = profile.isometry
    if profile.witness is not None:
        w = np.asarray(profile.witness, dtype=float)
        return SectionFamily(I, "semisimple", lambda s: np.broadcast_to(w, np.shape(s) + w.shape).copy())
    if profile.ray is not None:
        ray = profile.ray
        return SectionFamily(I, "ray", lambda s: ray(np.maximum(s, 0.0)))
    raise DomainError("profile has neither a witness point nor a ray")


def _loop_array(space: ModelSpace, loop, psi: np.ndarray) -> np.ndarray:
    if callable(loop):
        return space.validate(loop(psi))
    arr = space.validate(np.asarray(loop, dtype=float))
    if arr.shape[0] != psi.size:
        raise DomainError("boundary loop has the wrong number of nodes")
    return arr


def prototype_values(family: SectionFamily, t, psi, boundary=None, exponent: float = DEFAULT_EXPONENT) -> np.ndarray:
    """Prototype ``v(t, psi)`` on a tensor grid ``t x psi``.

    ``t >= log 2`` gives ``gamma_{(t - log 2)^p}(psi)``; the collar ``[0, log 2]``
    interpolates affinely in ``t`` from the boundary loop to ``gamma_0``.
    """
    t = np.asarray(t, dtype=float)
    psi = np.asarray(psi, dtype=float)
    space = family.space
    tt, pp = np.meshgrid(t, psi, indexing="ij")
    s = np.maximum(tt - LOG2, 0.0) ** exponent
    out = family(s, pp)
    collar = t < LOG2
    if np.any(collar):
        g0 = family(np.zeros_like(psi), psi)
        k = g0 if boundary is None else _loop_array(space, boundary, psi)
        frac = (t[collar] / LOG2)[:, None] * np.ones_like(psi)
        out[collar] = space.interpolate(np.broadcast_to(k, frac.shape + k.shape[-1:]), g0, frac)
    return out


def prototype_map(
    profile: DisplacementProfile,
    grid: CylinderGrid,
    boundary=None,
    exponent: float = DEFAULT_EXPONENT,
) -> EquivariantGridMap:
    """Prototype section on ``grid`` with outer boundary loop ``boundary`` (default ``gamma_0``)."""
    if grid.t0 + grid.T <= LOG2:
        raise DomainError("prototype needs T > log 2")
    if not 0 < exponent < 1:
        raise DomainError("prototype exponent must lie in (0, 1)")
    fam = gamma_family(profile)
    vals = prototype_values(fam, grid.t, grid.psi, boundary, exponent)
    return EquivariantGridMap(grid, fam.space, profile.isometry, vals)


def pulled_boundary(profile: DisplacementProfile, Q, amplitude: float = 0.5, mode: int = 1):
    """Boundary loop ``psi -> gamma_0(psi)`` pulled toward ``Q`` by ``amplitude sin^2(mode psi / 2)``.

    The pull vanishes at ``psi = 0`` so the loop keeps its twisted closure.
    """
    fam = gamma_family(profile)
    return pull_loop(fam.space, lambda psi: fam(np.zeros_like(psi), psi), Q, amplitude, mode)


def wave_boundary(profile: DisplacementProfile, amplitude: float = 0.5, mode: int = 1):
    """Boundary loop ``psi -> gamma_0(psi + amplitude sin(mode psi) / mode)``.

    A reparametrisation of ``gamma_0`` with zero angular mean, so it excites no
    mode that slides the loop along a flat direction of the target.
    """
    fam = gamma_family(profile)
    if not 0 <= amplitude < 1:
        raise DomainError("wave amplitude must lie in [0, 1)")

    def loop(psi):
        psi = np.asarray(psi, dtype=float)
        phase = np.clip(psi + amplitude * np.sin(mode * psi) / mode, 0.0, 2.0 * math.pi)
        return fam(np.zeros_like(psi), phase)

    return loop


def pull_loop(space: ModelSpace, loop, Q, amplitude: float = 0.5, mode: int = 1):
    """Compose ``loop`` with a pull toward ``Q`` of weight ``amplitude sin^2(mode psi / 2)``."""
    Q = space.validate(Q)
    if not 0 <= amplitude <= 1:
        raise DomainError("amplitude must lie in [0, 1]")

    def pulled(psi):
        psi = np.asarray(psi, dtype=float)
        base = loop(psi)
        w = amplitude * np.sin(0.5 * mode * psi) ** 2
        return space.interpolate(base, np.broadcast_to(Q, base.shape), w)

    return pulled


# -- loops and bridges -------------------------------------------------------------


@dataclass
class TwistedLoop:
    """Values of one slice, ``n_psi`` nodes, closed by ``twist`` across the seam."""

    space: ModelSpace
    twist: Isometry
    values: np.ndarray

    @property
    def n_psi(self) -> int:
        return self.values.shape[0]

    def energy(self) -> float:
        v = self.values
        nxt = np.concatenate([v[1:], self.twist.apply(v[:1])])
        h = 2.0 * math.pi / self.n_psi
        return math.fsum(self.space.distance(v, nxt) ** 2) / h


def slice_loop(gmap: EquivariantGridMap, i: int) -> TwistedLoop:
    return TwistedLoop(gmap.space, gmap.twist, gmap.values[i].copy())


def bridge_map(u0: TwistedLoop, u1: TwistedLoop, r0: float, r1: float, n_t: int) -> EquivariantGridMap:
    """Log-linear geodesic interpolation from ``u0`` at radius ``r0`` to ``u1`` at ``r1 < r0``."""
    if not 0 < r1 < r0:
        raise DomainError("need 0 < r1 < r0")
    if not _same_twist(u0.twist, u1.twist):
        raise DomainError("loops carry different twists")
    if u0.values.shape != u1.values.shape:
        raise DomainError("loops have different sizes")
    t0, t1 = -math.log(r0), -math.log(r1)
    grid = CylinderGrid(t1 - t0, int(n_t), u0.n_psi, t0=t0)
    make_grid(grid.T, grid.n_t, grid.n_psi)  # validation
    frac = np.arange(grid.n_t + 1) / grid.n_t
    frac = np.broadcast_to(frac[:, None], (grid.n_t + 1, grid.n_psi))
    shape = frac.shape + u0.values.shape[-1:]
    vals = u0.space.interpolate(np.broadcast_to(u0.values, shape), np.broadcast_to(u1.values, shape), frac)
    vals[0], vals[-1] = u0.values, u1.values
    return EquivariantGridMap(grid, u0.space, u0.twist, vals)


def bridge_bound(u0: TwistedLoop, u1: TwistedLoop, r0: float, r1: float) -> float:
    """``L (E(u0) + E(u1)) / 2 + (1/L) int d^2(u0, u1) dtheta`` with ``L = log(r0/r1)``."""
    L = math.log(r0 / r1)
    h = 2.0 * math.pi / u0.n_psi
    gap = math.fsum(u0.space.distance(u0.values, u1.values) ** 2) * h
    return 0.5 * L * (u0.energy() + u1.energy()) + gap / L


def interpolate_maps(u0: EquivariantGridMap, u1: EquivariantGridMap, s: float) -> EquivariantGridMap:
    """Nodewise geodesic interpolation ``(1 - s) u0 + s u1``."""
    if u0.grid != u1.grid:
        raise DomainError("maps live on different grids")
    if u0.space.to_spec() != u1.space.to_spec() or not _same_twist(u0.twist, u1.twist):
        raise DomainError("maps have different targets or twists")
    if not 0 <= s <= 1:
        raise DomainError("interpolation parameter must lie in [0, 1]")
    if s == 0:
        return u0.copy()
    if s == 1:
        return u1.copy()
    return u0.with_values(u0.space.interpolate(u0.values, u1.values, np.full(u0.values.shape[:-1], float(s))))
