import json
import math

import pytest

from equiharm.cli import _parse_real, main
from equiharm.config import ConfigError, bundled_config_names, bundled_config_path, load_config, parse_config

TINY = """\
schema_version: 1
name: tiny
seed: 0
space: {kind: hyperbolic}
isometry: {kind: mobius, matrix: [[2.0, 0.0], [0.0, 0.5]]}
boundary: {kind: wave, amplitude: 0.5, mode: 1}
grid:
  schedule: [2.0, 4.0]
  n_t: 16
  n_psi: 8
solver:
  tol_move: 1.0e-8
  compare_window: 1.0
  compare_tol: 0.05
checks:
  two_start: true
"""


@pytest.fixture
def tiny(tmp_path):
    p = tmp_path / "tiny.yaml"
    p.write_text(TINY)
    return p


def test_bundled_configs_parse_and_build():
    names = bundled_config_names()
    assert len(names) == 10
    for name in names:
        cfg = load_config(bundled_config_path(name))
        assert cfg.name == name
        space, iso, profile = cfg.build()
        cfg.boundary(space, profile)
        assert iso.space == space


@pytest.mark.parametrize(
    "edit, field, line",
    [
        (("  n_psi: 8", "  n_psi: 2"), "grid.n_psi", 10),
        (("schedule: [2.0, 4.0]", "schedule: [0.5, 4.0]"), "grid.schedule", 8),
        (("schedule: [2.0, 4.0]", "schedule: [4.0, 2.0]"), "grid.schedule", 8),
        (("seed: 0", "seed: zero"), "seed", 3),
        (("schema_version: 1", "schema_version: 2"), "schema_version", 1),
        (("  two_start: true", "  twostart: true"), "checks", 15),
        (("  compare_tol: 0.05", "  compare_tol: -1"), "solver.compare_tol", 14),
        (("name: tiny", "name: tiny\ncolour: red"), "colour", 3),
    ],
)
def test_malformed_config_names_field_and_line(edit, field, line):
    with pytest.raises(ConfigError) as exc:
        parse_config(TINY.replace(*edit))
    assert exc.value.field == field and exc.value.line == line
    assert f"line {line}" in str(exc.value)


def test_yaml_syntax_error_has_line():
    with pytest.raises(ConfigError) as exc:
        parse_config(TINY.replace("n_t: 16", "n_t: [16"))
    assert exc.value.line is not None


def test_parse_real():
    assert _parse_real("2pi") == pytest.approx(2 * math.pi)
    assert _parse_real("0.5*pi") == pytest.approx(math.pi / 2)
    assert _parse_real("-pi") == pytest.approx(-math.pi)
    assert _parse_real("5") == 5.0


def test_oracle_commands(capsys):
    assert main(["oracle", "flat-solve", "--delta", "2pi", "--n-psi", "16", "--n-t", "16", "--T", "4"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["energy_slope"] == pytest.approx(2 * math.pi, abs=1e-9)
    assert main(["oracle", "delta-min", "2", "0", "0", "0.5"]) == 0
    assert json.loads(capsys.readouterr().out)["delta_min"] == pytest.approx(math.log(4), abs=1e-6)
    assert main(["oracle", "delta-min", "--kind", "euclidean", "1", "0", "0", "1", "3", "4"]) == 0
    assert json.loads(capsys.readouterr().out)["delta_min"] == pytest.approx(5.0, abs=1e-6)
    assert main(["oracle", "loop-bound", "--delta", "5", "--n-loops", "50"]) == 0
    assert not json.loads(capsys.readouterr().out)["violated"]
    assert main(["oracle", "delta-min", "1", "2", "3"]) == 1


def test_list(capsys):
    assert main(["list"]) == 0
    assert "hyperbolic_log4" in capsys.readouterr().out.split()


def test_bad_T_exits_with_error(tmp_path, tiny, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(TINY.replace("[2.0, 4.0]", "[0.6, 4.0]"))
    assert main(["run", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert "log 2" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.yaml")]) == 1


def test_run_end_to_end_is_reproducible(tmp_path, tiny, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(tiny), "--out", str(a)]) == 0
    assert main(["run", str(tiny), "--out", str(b)]) == 0
    for f in ("map.txt", "energy.csv", "convergence.csv", "exhaustion.csv", "checks.csv", "report.txt"):
        assert (a / f).is_file()
    for f in ("map.txt", "energy.csv", "convergence.csv", "exhaustion.csv", "checks.csv"):
        assert (a / f).read_bytes() == (b / f).read_bytes()
    assert "PASS" in capsys.readouterr().out

    c = tmp_path / "c"
    assert main(["run", str(tiny), "--check-only", str(a / "map.txt"), "--out", str(c)]) == 0
    assert (c / "checks.csv").is_file()

    assert main(["run", str(tiny), "--seed", "7", "--out", str(tmp_path / "d")]) == 0


def test_check_only_rejects_mismatched_map(tmp_path, tiny):
    a = tmp_path / "a"
    assert main(["run", str(tiny), "--out", str(a)]) == 0
    other = tmp_path / "other.yaml"
    other.write_text(TINY.replace("[[2.0, 0.0], [0.0, 0.5]]", "[[3.0, 0.0], [0.0, 0.333333333333]]"))
    assert main(["run", str(other), "--check-only", str(a / "map.txt")]) == 1


def test_parallel_jobs(tmp_path, tiny):
    second = tmp_path / "tiny2.yaml"
    second.write_text(TINY.replace("name: tiny", "name: tiny2"))
    out = tmp_path / "multi"
    assert main(["run", str(tiny), str(second), "--jobs", "2", "--out", str(out)]) == 0
    assert (out / "tiny" / "map.txt").is_file() and (out / "tiny2" / "map.txt").is_file()
