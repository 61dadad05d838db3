"""Experiment configuration files (YAML, ``schema_version: 1``).

Malformed files raise :class:`ConfigError` naming the field and, where the
field exists in the file, its line number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .construct import DEFAULT_EXPONENT, LOG2, pull_loop, pulled_boundary, wave_boundary
from .errors import DomainError
from .isometries import DisplacementProfile, Isometry, isometry_from_spec
from .solver import SolveOptions
from .spaces import MetricTree, ModelSpace, space_from_spec

SCHEMA_VERSION = 1

TOP_LEVEL = {"schema_version", "name", "seed", "space", "isometry", "boundary", "prototype", "grid", "solver", "checks", "output"}
SOLVER_KEYS = {"max_sweeps", "tol_move", "tol_energy", "barycenter_tol", "omega", "compare_window", "compare_tol"}
CHECK_KEYS = {"epsilon", "stability", "two_start", "base", "harmonicity_tol"}


class ConfigError(ValueError):
    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        where = []
        if field:
            where.append(f"field '{field}'")
        if line:
            where.append(f"line {line}")
        super().__init__(f"{message}" + (f" ({', '.join(where)})" if where else ""))
        self.field = field
        self.line = line


def _key_lines(text: str) -> dict[str, int]:
    """Dotted key path -> 1-based line number."""
    out: dict[str, int] = {}

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                path = f"{prefix}.{k.value}" if prefix else str(k.value)
                out[path] = k.start_mark.line + 1
                walk(v, path)

    try:
        walk(yaml.compose(text), "")
    except yaml.YAMLError:
        pass
    return out


@dataclass
class ExperimentConfig:
    name: str
    seed: int
    space_spec: dict
    isometry_spec: dict
    boundary_spec: dict
    exponent: float
    schedule: tuple
    n_t: int
    n_psi: int
    solver: dict
    checks: dict
    output: str
    source: str = ""
    lines: dict = field(default_factory=dict, repr=False)

    def line(self, key: str) -> int | None:
        return self.lines.get(key)

    def solve_options(self, seed: int | None = None) -> SolveOptions:
        opts = dict(self.solver)
        return SolveOptions(
            exhaustion_schedule=self.schedule,
            seed=self.seed if seed is None else seed,
            **opts,
        )

    def build(self) -> tuple[ModelSpace, Isometry, DisplacementProfile]:
        try:
            space = space_from_spec(self.space_spec)
        except (DomainError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad space: {exc}", "space", self.line("space")) from exc
        try:
            iso = isometry_from_spec(self.isometry_spec, space)
        except (DomainError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad isometry: {exc}", "isometry", self.line("isometry")) from exc
        return space, iso, iso.profile()

    def boundary(self, space: ModelSpace, profile: DisplacementProfile):
        spec = self.boundary_spec
        kind = spec.get("kind", "gamma")
        try:
            if kind == "gamma":
                loop = None
            elif kind == "pulled":
                loop = pulled_boundary(profile, point_from_spec(space, spec["point"]), float(spec.get("amplitude", 0.5)), int(spec.get("mode", 1)))
            elif kind == "wave":
                loop = wave_boundary(profile, float(spec.get("amplitude", 0.5)), int(spec.get("mode", 1)))
                if "pull_point" in spec:
                    loop = pull_loop(
                        space,
                        loop,
                        point_from_spec(space, spec["pull_point"]),
                        float(spec.get("pull_amplitude", 0.5)),
                        int(spec.get("pull_mode", 1)),
                    )
            else:
                raise ConfigError(f"unknown boundary kind {kind!r}", "boundary.kind", self.line("boundary.kind"))
        except (DomainError, KeyError, TypeError) as exc:
            raise ConfigError(f"bad boundary: {exc}", "boundary", self.line("boundary")) from exc
        return loop

    def base_point(self, space: ModelSpace, profile: DisplacementProfile) -> np.ndarray:
        spec = self.checks.get("base")
        if spec is not None:
            return point_from_spec(space, spec)
        if profile.witness is not None:
            return np.asarray(profile.witness, dtype=float)
        return np.asarray(profile.ray(0.0), dtype=float)


def point_from_spec(space: ModelSpace, spec) -> np.ndarray:
    """Raw coordinates, or for trees ``{vertex: NAME, copy: k}`` / ``{edge: i, offset: s}`` / ``{line: x}``."""
    if isinstance(spec, dict):
        if not isinstance(space, MetricTree):
            raise DomainError("named points are only available on trees")
        if "vertex" in spec:
            v = spec["vertex"]
            v = space.shape.vertices.index(v) if isinstance(v, str) else int(v)
            return space.vertex_point(v, int(spec.get("copy", 0)))
        if "edge" in spec:
            return space.edge_point(int(spec["edge"]), float(spec["offset"]), int(spec.get("copy", 0)))
        if "line" in spec:
            return space.line_point(float(spec["line"]))
        raise DomainError(f"cannot read point {spec!r}")
    return space.validate(np.asarray(spec, dtype=float))


def _require(cond, message, key, lines):
    if not cond:
        raise ConfigError(message, key, lines.get(key))


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}", None, mark.line + 1 if mark else None) from exc
    lines = _key_lines(text)
    _require(isinstance(raw, dict), "config must be a mapping", None, lines)
    unknown = set(raw) - TOP_LEVEL
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown field {key!r}", key, lines.get(key))
    _require(raw.get("schema_version") == SCHEMA_VERSION, f"schema_version must be {SCHEMA_VERSION}", "schema_version", lines)
    for key in ("name", "space", "isometry", "grid"):
        _require(key in raw, "missing required field", key, lines)
    _require(isinstance(raw["space"], dict), "must be a mapping", "space", lines)
    _require(isinstance(raw["isometry"], dict), "must be a mapping", "isometry", lines)

    grid = raw["grid"]
    _require(isinstance(grid, dict), "must be a mapping", "grid", lines)
    for key in ("schedule", "n_t", "n_psi"):
        _require(key in grid, "missing required field", f"grid.{key}", lines)
    try:
        schedule = tuple(float(x) for x in grid["schedule"])
    except (TypeError, ValueError):
        raise ConfigError("schedule must be a list of numbers", "grid.schedule", lines.get("grid.schedule"))
    _require(len(schedule) > 0 and all(b > a for a, b in zip(schedule, schedule[1:])), "schedule must be strictly increasing", "grid.schedule", lines)
    _require(schedule[0] > LOG2, "every T must exceed log 2", "grid.schedule", lines)
    _require(all(math.isfinite(x) for x in schedule), "schedule must be finite", "grid.schedule", lines)
    n_t, n_psi = grid["n_t"], grid["n_psi"]
    _require(isinstance(n_t, int) and n_t >= 2, "must be an integer >= 2", "grid.n_t", lines)
    _require(isinstance(n_psi, int) and n_psi >= 3, "must be an integer >= 3", "grid.n_psi", lines)

    solver = dict(raw.get("solver") or {})
    bad = set(solver) - SOLVER_KEYS
    _require(not bad, f"unknown solver option {sorted(bad)[0] if bad else ''!r}", "solver", lines)
    for k in ("tol_move", "tol_energy", "barycenter_tol", "compare_window", "compare_tol"):
        if k in solver:
            solver[k] = float(solver[k])
            _require(solver[k] > 0, "must be positive", f"solver.{k}", lines)
    checks = dict(raw.get("checks") or {})
    bad = set(checks) - CHECK_KEYS
    _require(not bad, f"unknown check option {sorted(bad)[0] if bad else ''!r}", "checks", lines)

    proto = raw.get("prototype") or {}
    exponent = float(proto.get("exponent", DEFAULT_EXPONENT))
    _require(0 < exponent < 1, "exponent must lie in (0, 1)", "prototype.exponent", lines)

    boundary = raw.get("boundary") or {"kind": "gamma"}
    _require(isinstance(boundary, dict), "must be a mapping", "boundary", lines)
    seed = raw.get("seed", 0)
    _require(isinstance(seed, int), "must be an integer", "seed", lines)

    cfg = ExperimentConfig(
        name=str(raw["name"]),
        seed=seed,
        space_spec=raw["space"],
        isometry_spec=raw["isometry"],
        boundary_spec=boundary,
        exponent=exponent,
        schedule=schedule,
        n_t=n_t,
        n_psi=n_psi,
        solver=solver,
        checks=checks,
        output=str(raw.get("output", f"out/{raw['name']}")),
        source=source,
        lines=lines,
    )
    try:
        cfg.solve_options()
    except DomainError as exc:
        raise ConfigError(str(exc), "solver", lines.get("solver")) from exc
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return parse_config(text, str(path))


def bundled_config_names() -> list[str]:
    files = resources.files("equiharm") / "configs"
    return sorted(p.name[: -len(".yaml")] for p in files.iterdir() if p.name.endswith(".yaml"))


def bundled_config_path(name: str) -> Path:
    p = resources.files("equiharm") / "configs" / f"{name}.yaml"
    if not p.is_file():
        raise ConfigError(f"no bundled config named {name!r}")
    return Path(str(p))
