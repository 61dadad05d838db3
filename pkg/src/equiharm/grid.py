"""Cylinder grids and twisted (equivariant) grid maps.

The half-infinite cylinder ``(t, psi)`` is conformal to the punctured disk via
``r = exp(-t)``, ``theta = psi``.  A grid map stores one fundamental period of
values; crossing the seam ``psi = 2 pi`` applies the twist isometry.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .isometries import Isometry, isometry_from_spec
from .spaces import ModelSpace, space_from_spec

ALIGN_TOL = 1e-9
FORMAT_TAG = "equiharm-gridmap 1"


@dataclass(frozen=True)
class CylinderGrid:
    T: float
    n_t: int
    n_psi: int
    t0: float = 0.0  # axial offset of row 0 (nonzero for sub-annuli)

    @property
    def h_t(self) -> float:
        return self.T / self.n_t

    @property
    def h_psi(self) -> float:
        return 2.0 * math.pi / self.n_psi

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.h_t * np.arange(self.n_t + 1)

    @property
    def psi(self) -> np.ndarray:
        return self.h_psi * np.arange(self.n_psi)

    def index_of(self, t: float) -> int:
        """Row index of an axial coordinate that must be a grid line."""
        x = (t - self.t0) / self.h_t
        i = int(round(x))
        if abs(x - i) > ALIGN_TOL * max(1.0, abs(x)) or not 0 <= i <= self.n_t:
            raise DomainError(f"t = {t} is not aligned with the grid")
        return i

    def disk_radius(self, i: int) -> float:
        if not 0 <= i <= self.n_t:
            raise DomainError("row index out of range")
        return math.exp(-(self.t0 + i * self.h_t))


def make_grid(T: float, n_t: int, n_psi: int) -> CylinderGrid:
    if not (T > 0 and math.isfinite(T)):
        raise DomainError("cylinder length must be positive")
    if int(n_t) != n_t or n_t < 2:
        raise DomainError("need at least two axial cells")
    if int(n_psi) != n_psi or n_psi < 3:
        raise DomainError("need at least three angular cells")
    return CylinderGrid(float(T), int(n_t), int(n_psi))


def disk_radius(grid: CylinderGrid, i: int) -> float:
    return grid.disk_radius(i)


BOUNDARY = None  # value returned by ``neighbor`` when stepping off an end of the cylinder

_DIRECTIONS = ("+t", "-t", "+psi", "-psi")


class EquivariantGridMap:
    """Values on ``(n_t + 1) x n_psi`` nodes of one fundamental period.

    The ``+psi`` neighbour of ``(i, n_psi - 1)`` is ``twist(values[i, 0])`` and
    the ``-psi`` neighbour of ``(i, 0)`` is ``twist^-1(values[i, n_psi - 1])``.
    """

    def __init__(self, grid: CylinderGrid, space: ModelSpace, twist: Isometry, values):
        values = np.asarray(values, dtype=float)
        shape = (grid.n_t + 1, grid.n_psi, space.coord_dim)
        if values.shape != shape:
            raise DomainError(f"values must have shape {shape}, got {values.shape}")
        self.grid = grid
        self.space = space
        self.twist = twist
        self.values = values
        self._twist_inv = twist.inverse()

    def copy(self) -> "EquivariantGridMap":
        return EquivariantGridMap(self.grid, self.space, self.twist, self.values.copy())

    def with_values(self, values) -> "EquivariantGridMap":
        return EquivariantGridMap(self.grid, self.space, self.twist, values)

    @property
    def twist_inverse(self) -> Isometry:
        return self._twist_inv

    def plus_psi(self, values=None) -> np.ndarray:
        """``+psi`` neighbour of every node."""
        v = self.values if values is None else values
        return np.concatenate([v[:, 1:], self.twist.apply(v[:, :1])], axis=1)

    def minus_psi(self, values=None) -> np.ndarray:
        v = self.values if values is None else values
        return np.concatenate([self._twist_inv.apply(v[:, -1:]), v[:, :-1]], axis=1)

    def neighbor(self, i: int, j: int, direction: str):
        n_t, n_psi = self.grid.n_t, self.grid.n_psi
        if not (0 <= i <= n_t and 0 <= j < n_psi):
            raise DomainError("node index out of range")
        if direction == "+t":
            return BOUNDARY if i == n_t else self.values[i + 1, j]
        if direction == "-t":
            return BOUNDARY if i == 0 else self.values[i - 1, j]
        if direction == "+psi":
            return self.twist.apply(self.values[i, 0]) if j == n_psi - 1 else self.values[i, j + 1]
        if direction == "-psi":
            return self._twist_inv.apply(self.values[i, -1]) if j == 0 else self.values[i, j - 1]
        raise DomainError(f"direction must be one of {_DIRECTIONS}")

    def seam_residual(self) -> float:
        """Gap between walking once around each slice and applying the twist.

        Zero by construction; kept as a consistency probe.
        """
        walked = self.plus_psi()[:, -1]
        direct = self.twist.apply(self.values[:, 0])
        return float(np.max(self.space.distance(walked, direct)))

    # -- serialization ------------------------------------------------------------
    def dumps(self) -> str:
        g = self.grid
        header = {
            "space": self.space.to_spec(),
            "twist": self.twist.to_spec(),
            "T": g.T,
            "n_t": g.n_t,
            "n_psi": g.n_psi,
            "t0": g.t0,
        }
        lines = [FORMAT_TAG, json.dumps(header, sort_keys=True)]
        for i in range(g.n_t + 1):
            for j in range(g.n_psi):
                lines.append(f"{i} {j} " + " ".join(repr(float(c)) for c in self.values[i, j]))
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "EquivariantGridMap":
        lines = text.splitlines()
        if not lines or lines[0].strip() != FORMAT_TAG:
            raise DomainError("not a grid map file")
        header = json.loads(lines[1])
        space = space_from_spec(header["space"])
        twist = isometry_from_spec(header["twist"], space)
        grid = CylinderGrid(float(header["T"]), int(header["n_t"]), int(header["n_psi"]), float(header.get("t0", 0.0)))
        values = np.full((grid.n_t + 1, grid.n_psi, space.coord_dim), np.nan)
        for line in lines[2:]:
            if not line.strip():
                continue
            parts = line.split()
            i, j = int(parts[0]), int(parts[1])
            values[i, j] = [float(c) for c in parts[2:]]
        if np.isnan(values).any():
            raise DomainError("grid map file is missing nodes")
        return cls(grid, space, twist, values)

    @classmethod
    def load(cls, path) -> "EquivariantGridMap":
        with open(path) as fh:
            return cls.loads(fh.read())


def neighbor(gmap: EquivariantGridMap, i: int, j: int, direction: str):
    return gmap.neighbor(i, j, direction)
