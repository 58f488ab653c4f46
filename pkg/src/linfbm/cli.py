"""``linfbm`` command line: generate, solve, classify, verify, invert, bessel, reflect.

Every command writes its outputs into ``--output-dir`` (default: the
``LINFBM_OUTPUT_DIR`` environment variable, else ``./linfbm_out``) together
with a ``manifest.json`` that embeds the run configuration and its hash.
``--config file.json`` supplies values that override the flags.

Exit codes: 0 success, 1 statistical test failure (verify), 2 invalid
input, 3 classification refusal, 4 numerical failure.
"""

import argparse
import json
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from .errors import DomainError, NumericalError, RefusalError, UsageError
from .fbm import hurst, sample_fbm_ensemble
from .grid import SamplePath, TimeGrid
from .rng import derive_seeds

EXIT_OK = 0
EXIT_TEST_FAILED = 1
EXIT_VALIDATION = 2
EXIT_REFUSAL = 3
EXIT_NUMERICAL = 4

OUTPUT_ENV = "LINFBM_OUTPUT_DIR"
DEFAULT_OUTPUT = "linfbm_out"
_NOT_HASHED = {"output_dir", "config", "command_func"}


class _Parser(argparse.ArgumentParser):
    """argparse that reports bad flags with exit code 2 (its default) via ``UsageError``."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _hurst_arg(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    try:
        hurst(value)
    except DomainError as exc:  # keeps the message naming the (1/2, 1) range
        raise argparse.ArgumentTypeError(str(exc))
    return value


def _pairs_arg(text):
    """``"0.25:0.25,0.25:1"`` -> [[0.25, 0.25], [0.25, 1.0]]."""
    try:
        pairs = [[float(x) for x in item.split(":")] for item in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"pairs must look like s:t,s:t, got {text!r}")
    if not pairs or any(len(p) != 2 for p in pairs):
        raise argparse.ArgumentTypeError(f"pairs must look like s:t,s:t, got {text!r}")
    return pairs


def _common(p):
    p.add_argument("--seed", type=int, default=42, help="base seed (default 42)")
    p.add_argument("--output-dir", default=None,
                   help=f"output directory (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="path file format")
    p.add_argument("--config", default=None, help="JSON file whose keys override the flags")


def _grid_flags(p, n=64, t_max=1.0, kind="uniform", epsilon=None):
    p.add_argument("--n", type=int, default=n, help=f"number of grid intervals (default {n})")
    p.add_argument("--t-max", type=float, default=t_max, help=f"grid end (default {t_max:g})")
    p.add_argument("--grid", choices=("uniform", "geometric"), default=kind)
    p.add_argument("--epsilon", type=float, default=epsilon,
                   help="first grid point of geometric grids")


def build_parser():
    parser = _Parser(prog="linfbm", description=__doc__.split("\n\n")[0],
                     formatter_class=argparse.RawDescriptionHelpFormatter,
                     epilog="exit codes: 0 ok, 1 test failed, 2 invalid input, "
                            "3 classification refusal, 4 numerical failure")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="sample fBm paths")
    _common(p)
    p.add_argument("--h", type=_hurst_arg, required=True, help="Hurst parameter in (1/2, 1)")
    _grid_flags(p)
    p.add_argument("--paths", type=int, default=1)
    p.add_argument("--method", choices=("cholesky", "circulant"), default=None,
                   help="default: circulant on uniform grids, cholesky otherwise")
    p.set_defaults(command_func=cmd_generate)

    p = sub.add_parser("solve", help="solve X = B^H + int X dmu for one driver")
    _common(p)
    p.add_argument("--measure", required=True,
                   help="power_law:<lambda>, zero, or a measure JSON file")
    p.add_argument("--kind", choices=("x0", "x1", "direct", "family"), required=True)
    p.add_argument("--h", type=_hurst_arg, default=0.75)
    p.add_argument("--n", type=int, default=1024, help="geometric grid intervals on [epsilon, 1]")
    p.add_argument("--epsilon", type=float, default=2.0**-20)
    p.add_argument("--c", type=float, default=0.0, help="family constant C (kind=family)")
    p.add_argument("--start", type=float, default=0.0,
                   help="direct solver start value: X(eps) = start + B(eps)")
    p.set_defaults(command_func=cmd_solve)

    p = sub.add_parser("classify", help="existence/uniqueness/adaptedness verdict")
    _common(p)
    p.add_argument("--measure", required=True)
    p.add_argument("--h", type=_hurst_arg, default=0.75)
    p.add_argument("--numeric-variance", action="store_true",
                   help="judge X^(1) by quadrature of its variance instead of the closed form")
    p.set_defaults(command_func=cmd_classify)

    p = sub.add_parser("verify", help="run the Monte Carlo verification suite")
    _common(p)
    p.add_argument("--suite", default="default",
                   help="'default' or a suite JSON file {base_seed, tests: [...]}")
    p.add_argument("--test", default=None, help="run a single test of this name instead")
    p.add_argument("--h", type=_hurst_arg, default=0.75)
    p.add_argument("--test-h", type=float, default=None,
                   help="Hurst value to test against (fbm_law); default --h")
    p.add_argument("--paths", type=int, default=None)
    p.add_argument("--pairs", type=_pairs_arg, default=None,
                   help="covariance pairs s:t,s:t for a single --test (default 0.25:1,0.5:1,1:1)")
    p.set_defaults(command_func=cmd_verify)

    p = sub.add_parser("invert", help="time-invert an fBm path and build beta")
    _common(p)
    p.add_argument("--h", type=_hurst_arg, default=0.75)
    p.add_argument("--n", type=int, default=512, help="geometric intervals on [delta, t_max]")
    p.add_argument("--delta", type=float, default=0.25)
    p.add_argument("--t-max", type=float, default=2.0**14)
    p.set_defaults(command_func=cmd_invert)

    p = sub.add_parser("bessel", help="implicit positive scheme for Z = rho + B + int c/Z")
    _common(p)
    p.add_argument("--h", type=_hurst_arg, default=0.75)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--k", type=float, default=0.5)
    p.add_argument("--mode", choices=("plain", "time_weighted"), default="plain")
    p.add_argument("--zero-driver", action="store_true", help="use B = 0 (ODE check)")
    _grid_flags(p, n=1024)
    p.set_defaults(command_func=cmd_bessel)

    p = sub.add_parser("reflect", help="Skorokhod reflection of rho + B at 0")
    _common(p)
    p.add_argument("--h", type=_hurst_arg, default=0.75)
    p.add_argument("--rho", type=float, default=0.0)
    _grid_flags(p, n=1024)
    p.set_defaults(command_func=cmd_reflect)
    return parser


# -- helpers ------------------------------------------------------------------------------

class Run:
    """Resolved configuration plus an output directory and a list of written files."""

    def __init__(self, args):
        cfg = {k: v for k, v in vars(args).items() if k not in _NOT_HASHED}
        self.config = cfg
        from .verify import config_hash

        self.hash = config_hash(cfg)
        out = args.output_dir or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT
        self.dir = Path(out)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files = []
        self.warnings = []

    def write_text(self, name, text):
        (self.dir / name).write_text(text)
        self.files.append(name)

    def write_path(self, name, path):
        if self.config["format"] == "csv":
            self.write_text(f"{name}.csv", path.to_csv(f"config_hash={self.hash}"))
        else:
            d = path.to_dict()
            d["config_hash"] = self.hash
            self.write_text(f"{name}.json", json.dumps(d, sort_keys=True) + "\n")

    def manifest(self, **extra):
        doc = {"command": self.config["command"], "config": self.config, "config_hash": self.hash,
               "files": list(self.files), "warnings": self.warnings, **extra}
        text = json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n"
        (self.dir / "manifest.json").write_text(text)
        return doc


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _make_grid(args, start_default=0.0):
    if args.grid == "uniform":
        return TimeGrid.uniform(start_default, args.t_max, args.n)
    eps = args.epsilon if args.epsilon is not None else args.t_max * 2.0**-10
    return TimeGrid.geometric(eps, args.t_max, args.n)


def _driver(grid, h, seed, method=None):
    method = method or ("circulant" if grid.kind == "uniform" else "cholesky")
    recs = []
    vals = sample_fbm_ensemble(grid, h, [seed], method, warnings_out=recs)[0]
    return SamplePath(grid, vals, seed, "B^H", {"h": h, "method": method}), recs


# -- commands -----------------------------------------------------------------------------

def cmd_generate(args):
    run = Run(args)
    if args.paths < 1:
        raise UsageError("--paths must be at least 1")
    grid = _make_grid(args)
    method = args.method or ("circulant" if grid.kind == "uniform" else "cholesky")
    seeds = derive_seeds(args.seed, args.paths)
    recs = []
    vals = sample_fbm_ensemble(grid, args.h, seeds, method, warnings_out=recs)
    run.warnings.extend(str(r) for r in recs)
    for i, (s, row) in enumerate(zip(seeds, vals)):
        run.write_path(f"path_{i:04d}", SamplePath(grid, row, s, "B^H", {"h": args.h, "method": method}))
    run.manifest(seeds=[int(s) for s in seeds], method=method, grid=grid.to_dict())
    print(f"wrote {args.paths} path(s) to {run.dir}")
    return EXIT_OK


def cmd_classify(args):
    from .measure import classify_solutions, parse_measure

    run = Run(args)
    m = parse_measure(args.measure)
    verdict = classify_solutions(m, args.h, numeric_variance=args.numeric_variance).to_dict()
    doc = {"measure": m.to_dict(), "h": args.h, "verdict": verdict}
    run.write_text("classification.json",
                   json.dumps(_jsonable({**doc, "config_hash": run.hash}), sort_keys=True, indent=2)
                   + "\n")
    run.manifest()
    print(json.dumps(_jsonable(doc), sort_keys=True, indent=2))
    return EXIT_OK


def cmd_solve(args):
    from .measure import classify_solutions, parse_measure
    from . import solver

    run = Run(args)
    m = parse_measure(args.measure)
    verdict = classify_solutions(m, args.h)
    v = verdict.to_dict()
    if args.kind == "x1" and verdict.x1_limit_ok is False:
        raise RefusalError("no solution of kind x1 for this measure", v)
    if args.kind == "family" and verdict.uniqueness == "unique":
        raise RefusalError("the solution is unique; there is no one-parameter family", v)
    if args.kind == "x0" and not verdict.x0_exists:
        msg = ("X^(0) is evaluated from the truncation point epsilon, but M is not in "
               "L^{2/(1+H)} (adaptedness needs lambda*2/(1+H) < 1); the limit epsilon -> 0 "
               "is not expected to exist")
        warnings.warn(msg)
        run.warnings.append(msg)

    grid = TimeGrid.geometric(args.epsilon, 1.0, args.n)
    driver, recs = _driver(grid, args.h, args.seed)
    run.warnings.extend(str(r) for r in recs)
    if args.kind == "x0":
        sol = solver.explicit_x0(m, driver, args.h)
    elif args.kind == "x1":
        sol = solver.explicit_x1(m, driver, args.h)
    elif args.kind == "direct":
        sol = solver.direct_solve(m, driver, args.start)
    else:
        base_kind = "x0" if verdict.x0_exists else "x1"
        base = (solver.explicit_x0 if base_kind == "x0" else solver.explicit_x1)(m, driver, args.h)
        sol = solver.family_member(base, args.c, m)
    report = solver.residual_report(sol, m, driver)
    run.write_path("solution", sol.path)
    run.write_path("driver", driver)
    doc = {"kind": sol.kind, "residual": report, "classification": v,
           "measure": m.to_dict(), "config_hash": run.hash}
    run.write_text("report.json", json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n")
    run.manifest(residual=report)
    print(f"{sol.kind}: residual {report['residual']:.3e}; outputs in {run.dir}")
    return EXIT_OK


def _suite_config(args):
    from .verify import DEFAULT_SUITE

    if args.test is not None:
        test = {"name": args.test, "h": args.h}
        if args.test_h is not None:
            test["test_h"] = args.test_h
        if args.paths is not None:
            test["n_paths"] = args.paths
        if args.pairs is not None:
            test["pairs"] = args.pairs
        return {"base_seed": args.seed, "tests": [test]}
    if args.pairs is not None:
        raise UsageError("--pairs applies to a single --test")
    if args.suite == "default":
        cfg = json.loads(json.dumps(DEFAULT_SUITE))
    else:
        try:
            cfg = json.loads(Path(args.suite).read_text())
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read suite file {args.suite!r}: {exc}")
    cfg.setdefault("base_seed", args.seed)
    if args.paths is not None:
        for t in cfg.get("tests", []):
            t["n_paths"] = args.paths
    return cfg


def cmd_verify(args):
    from .verify import run_suite

    run = Run(args)
    cfg = _suite_config(args)
    report = run_suite(cfg, log=lambda line: print(line, file=sys.stderr))
    run.write_text("report.json", json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n")
    rows = ["test,statistic,estimate,target,stderr,z_score,passed"]
    for res in report["results"]:
        for r in res["reports"]:
            z = "" if r["z_score"] is None else repr(r["z_score"])
            rows.append(",".join([res["name"], r["statistic_name"], repr(r["estimate"]),
                                  repr(r["target"]), repr(r["stderr"]), z, str(r["passed"])]))
    run.write_text("statistics.csv", f"# config_hash={report['config_hash']}\n" + "\n".join(rows) + "\n")
    run.manifest(suite_hash=report["config_hash"], passed=report["passed"])
    print(f"suite {'PASSED' if report['passed'] else 'FAILED'} "
          f"({len(report['results'])} test(s)); report in {run.dir}")
    return EXIT_OK if report["passed"] else EXIT_TEST_FAILED


def cmd_invert(args):
    from .inversion import build_beta, check_inversion_identity, inversion_drift_values, invert_path

    run = Run(args)
    if not 0 < args.delta < args.t_max:
        raise DomainError("need 0 < delta < t_max")
    grid = TimeGrid.geometric(args.delta, args.t_max, args.n)
    driver, recs = _driver(grid, args.h, args.seed)
    run.warnings.extend(str(r) for r in recs)
    inv = invert_path(driver, args.h)
    hat = inv.hat_path
    d = inversion_drift_values(hat.grid.points, hat.values[None, :], args.h)[0]
    beta = build_beta(driver, args.h, hat.grid)
    run.write_path("source", driver)
    run.write_path("hat", hat)
    run.write_path("drift_corrected", hat.with_values(d, label="D"))
    run.write_path("beta", beta["beta"])
    defect = check_inversion_identity(driver, args.h, grid.start, grid.stop, driver=driver)
    run.manifest(tail_stderr=beta["tail_stderr"], identity_defect=defect,
                 involution_exact=bool(np.array_equal(invert_path(inv, args.h).hat_path.values,
                                                      driver.values)))
    print(f"inverted path on [{hat.grid.start:g}, {hat.grid.stop:g}]; "
          f"beta tail stderr {beta['tail_stderr']:.2e}")
    return EXIT_OK


def cmd_bessel(args):
    from .inversion import solve_bessel_implicit

    run = Run(args)
    grid = _make_grid(args)
    if args.zero_driver:
        driver = SamplePath(grid, np.zeros(len(grid)), args.seed, "B=0")
    else:
        driver, recs = _driver(grid, args.h, args.seed)
        run.warnings.extend(str(r) for r in recs)
    z = solve_bessel_implicit(args.rho, args.k, driver, args.mode, args.h)
    interior = z.values[grid.points > 0]
    extra = {"min_value": float(interior.min()), "positive": bool(np.all(interior > 0))}
    if args.zero_driver and args.mode == "plain":
        oracle = np.sqrt(args.rho**2 + 2.0 * args.k * grid.points)
        extra["ode_sup_error"] = float(np.max(np.abs(z.values - oracle)))
    run.write_path("bessel", z)
    run.manifest(**extra)
    print(f"bessel path: min {extra['min_value']:.4g}, positive={extra['positive']}")
    return EXIT_OK


def cmd_reflect(args):
    from .inversion import skorokhod_reflect

    run = Run(args)
    grid = _make_grid(args)
    driver, recs = _driver(grid, args.h, args.seed)
    run.warnings.extend(str(r) for r in recs)
    pair = skorokhod_reflect(args.rho, driver)
    lam_end = float(pair.lam.values[-1])
    defect = float(pair.complementarity)
    run.write_path("z", pair.z)
    run.write_path("lambda", pair.lam)
    run.manifest(complementarity_defect=defect,
                 relative_defect=defect / lam_end if lam_end > 0 else 0.0,
                 z_min=float(pair.z.values.min()),
                 lambda_nondecreasing=bool(np.all(np.diff(pair.lam.values) >= 0)))
    print(f"reflection: lambda(end) {lam_end:.4g}, complementarity defect {defect:.3e}")
    return EXIT_OK


# -- entry point ----------------------------------------------------------------------------

def _apply_config(parser, args, argv):
    if not args.config:
        return args
    try:
        overrides = json.loads(Path(args.config).read_text())
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read config {args.config!r}: {exc}")
    if not isinstance(overrides, dict):
        raise UsageError("config file must hold a JSON object")
    known = vars(args)
    for key, value in overrides.items():
        dest = key.replace("-", "_")
        if dest not in known or dest in ("command", "command_func", "config"):
            raise UsageError(f"unknown config key {key!r} for {args.command}")
        setattr(args, dest, value)
    if getattr(args, "h", None) is not None:
        args.h = _hurst_arg(str(args.h))
    return args


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args = _apply_config(parser, args, argv)
        return args.command_func(args)
    except SystemExit as exc:  # --help
        return exc.code if isinstance(exc.code, int) else EXIT_OK
    except RefusalError as exc:
        msg, *rest = exc.args or ("refused",)
        print(f"linfbm: refused: {msg}", file=sys.stderr)
        if rest:
            print(json.dumps(_jsonable(rest[0]), sort_keys=True, indent=2), file=sys.stderr)
        return EXIT_REFUSAL
    except NumericalError as exc:
        print(f"linfbm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DomainError, UsageError, argparse.ArgumentTypeError) as exc:
        print(f"linfbm: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
