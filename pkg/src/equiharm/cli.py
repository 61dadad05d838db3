"""Command line entry point.

Exit codes: 0 when every ordinary check passes, 2 when one fails, 1 on a
config or numeric error.  Negative controls are reported but do not change
the exit code.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import oracles
from .config import ConfigError, bundled_config_names, bundled_config_path, load_config
from .errors import DomainError, NumericError

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


def resolve_config(arg: str) -> Path:
    """A path to a YAML file, or the name of a bundled config."""
    p = Path(arg)
    if p.exists() or p.suffix in (".yaml", ".yml"):
        return p
    return bundled_config_path(arg)


def _run_one(arg: str, out: str | None, seed: int | None, check_map: str | None, multi: bool) -> tuple[str, int, str]:
    from .experiment import check_only, run_experiment

    try:
        cfg = load_config(resolve_config(arg))
        out_dir = Path(out) / cfg.name if (out and multi) else (out or cfg.output)
        if check_map:
            if seed is not None:
                cfg.seed = seed
            res = check_only(cfg, check_map, out_dir)
        else:
            res = run_experiment(cfg, out_dir, seed)
    except (ConfigError, DomainError, NumericError, OSError) as exc:
        return arg, EXIT_ERROR, f"error: {exc}"
    failed = [o.name for o in res.outcomes if not o.control and not o.passed]
    loose = [o.name for o in res.outcomes if o.control and o.passed]
    extra = f" [control did not fail: {', '.join(loose)}]" if loose else ""
    if failed:
        return cfg.name, EXIT_FAIL, f"FAIL ({', '.join(failed)}) -> {out_dir}{extra}"
    return cfg.name, EXIT_OK, f"PASS -> {out_dir}{extra}"


def cmd_run(args) -> int:
    multi = len(args.configs) > 1
    jobs = max(1, min(args.jobs, len(args.configs)))
    work = [(c, args.out, args.seed, args.check_only, multi) for c in args.configs]
    if jobs == 1:
        results = [_run_one(*w) for w in work]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, *zip(*work)))
    for name, code, msg in results:
        stream = sys.stderr if code == EXIT_ERROR else sys.stdout
        print(f"{name}: {msg}", file=stream)
    codes = {code for _, code, _ in results}
    if EXIT_ERROR in codes:
        return EXIT_ERROR
    return EXIT_FAIL if EXIT_FAIL in codes else EXIT_OK


def cmd_list(args) -> int:
    for name in bundled_config_names():
        print(name)
    return EXIT_OK


def _parse_real(text: str) -> float:
    """Reals with an optional ``pi`` factor: ``5``, ``pi``, ``2pi``, ``0.5*pi``."""
    s = text.strip().replace("*", "")
    if s.endswith("pi"):
        head = s[:-2]
        factor = {"": 1.0, "+": 1.0, "-": -1.0}.get(head)
        return (float(head) if factor is None else factor) * math.pi
    return float(s)


def cmd_oracle(args) -> int:
    if args.oracle == "flat-solve":
        slope = oracles.flat_energy_slope(_parse_real(args.delta), n_psi=args.n_psi, n_t=args.n_t, T=args.T)
        out = {"delta": _parse_real(args.delta), "energy_slope": slope, "e_rho": _parse_real(args.delta) ** 2 / (2 * math.pi)}
    elif args.oracle == "delta-min":
        vals = [_parse_real(x) for x in args.matrix]
        if args.kind == "mobius":
            if len(vals) != 4:
                raise ConfigError("a Mobius matrix needs 4 entries")
            d = oracles.delta_min_mobius(np.reshape(vals, (2, 2)))
        else:
            n = next((k for k in range(1, 5) if k * k + k == len(vals)), 0)
            if not n:
                raise ConfigError("a Euclidean isometry needs n*n matrix entries followed by n vector entries")
            d = oracles.delta_min_euclidean(np.reshape(vals[: n * n], (n, n)), vals[n * n :])
        out = {"delta_min": d}
    else:
        bound, slack = oracles.loop_bound_brute_force(_parse_real(args.delta), n_loops=args.n_loops, n_psi=args.n_psi, seed=args.seed)
        out = {"bound": bound, "min_slack": slack, "violated": bool(slack < -1e-12)}
    print(json.dumps(out, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="equiharm", description="Equivariant harmonic maps on punctured disks.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run experiments from config files or bundled config names")
    r.add_argument("configs", nargs="+", metavar="CONFIG")
    r.add_argument("--out", help="output directory (one subdirectory per experiment when several are given)")
    r.add_argument("--seed", type=int, help="override the config seed")
    r.add_argument("--check-only", metavar="MAP", help="re-verify a stored map.txt instead of solving")
    r.add_argument("--jobs", type=int, default=1, help="worker processes")
    r.set_defaults(func=cmd_run)

    ls = sub.add_parser("list", help="list bundled configs")
    ls.set_defaults(func=cmd_list)

    o = sub.add_parser("oracle", help="independent reference values")
    osub = o.add_subparsers(dest="oracle", required=True)
    fs = osub.add_parser("flat-solve", help="energy slope of the flat twisted solution")
    fs.add_argument("--delta", default="2pi")
    fs.add_argument("--n-psi", type=int, default=64)
    fs.add_argument("--n-t", type=int, default=64)
    fs.add_argument("--T", type=float, default=12.0)
    dm = osub.add_parser("delta-min", help="translation length by displacement minimisation")
    dm.add_argument("--kind", choices=("mobius", "euclidean"), default="mobius")
    dm.add_argument("matrix", nargs="+", help="matrix entries row by row (Euclidean: then the vector)")
    lb = osub.add_parser("loop-bound", help="random twisted loops against the angular energy bound")
    lb.add_argument("--delta", default="2pi")
    lb.add_argument("--n-loops", type=int, default=1000)
    lb.add_argument("--n-psi", type=int, default=32)
    lb.add_argument("--seed", type=int, default=0)
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DomainError, NumericError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
