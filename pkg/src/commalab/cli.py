"""Command-line entry point: ``commalab run|sweep|check|approx|surrogate``.

Every output starts with a header block (lines beginning with ``#`` for CSV,
a ``header`` object for JSON) echoing the resolved configuration, the seed and
the package version.  The header holds no timestamps, so identical inputs give
byte-identical files.  Results go to ``--out`` (or ``$COMMALAB_OUT``) when set
and to standard output otherwise.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import CheckerSuiteConfig, ConfigError, ExperimentConfig, KNOWN_CHECKS, load_config
from .reports import to_jsonable

__all__ = ["main", "build_parser", "OUT_ENV"]

OUT_ENV = "COMMALAB_OUT"


def _header_lines(command: str, seed, config: dict) -> list[str]:
    return [
        f"commalab {__version__}",
        f"command: {command}",
        f"seed: {seed}",
        "config: " + json.dumps(to_jsonable(config), sort_keys=True),
    ]


def _emit(args, command: str, seed, config: dict, name: str, rows: list[dict] | None = None,
          columns=None, payload=None, csv_text: str | None = None):
    """Write one artifact in the requested format."""
    fmt = args.format
    header = _header_lines(command, seed, config)
    if fmt == "json":
        data = payload if payload is not None else rows
        if data is None and csv_text is not None:
            data = list(csv.DictReader(io.StringIO(csv_text)))
        text = json.dumps({"header": {"version": __version__, "command": command, "seed": seed,
                                      "config": to_jsonable(config)},
                           "data": to_jsonable(data)}, indent=2) + "\n"
    else:
        buf = io.StringIO()
        for line in header:
            buf.write(f"# {line}\n")
        if csv_text is not None:
            buf.write(csv_text)
        else:
            w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: to_jsonable(v) for k, v in r.items()})
        text = buf.getvalue()
    out_dir = args.out or os.environ.get(OUT_ENV)
    if out_dir:
        path = Path(out_dir)
        path.mkdir(parents=True, exist_ok=True)
        target = path / f"{name}.{fmt}"
        target.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load(args, kind):
    if not args.config:
        raise ConfigError("--config is required for this command")
    cfg = load_config(args.config)
    if not isinstance(cfg, kind):
        want = "experiment" if kind is ExperimentConfig else "checker suite"
        raise ConfigError(f"{args.config} is not a {want} config")
    if args.seed is not None:
        cfg.seed = args.seed
    if args.jobs is not None:
        cfg.jobs = args.jobs
    if cfg.jobs is None:
        cfg.jobs = -1
    if args.format is None:
        args.format = cfg.output_format
    cfg.output_format = args.format
    if args.out is None:
        args.out = cfg.output_dir
    return cfg


# ---------------------------------------------------------------------------
# subcommands


def cmd_run(args) -> int:
    from .core import run_until
    from .rng import RngStream

    cfg = _load(args, ExperimentConfig)
    from joblib import Parallel, delayed

    results = Parallel(n_jobs=cfg.jobs)(delayed(run_until)(cfg, RngStream(cfg.seed, r))
                                        for r in range(cfg.replicates))
    rows = []
    telemetry = []
    for r, res in enumerate(results):
        rows.append({"replicate": r, "success": int(res.success), "generations": res.generations,
                     "evaluations": res.evaluations, "final_f_top": res.final_f_top})
        if res.telemetry is not None:
            telemetry.append(res.telemetry)
    cols = ("replicate", "success", "generations", "evaluations", "final_f_top")
    _emit(args, "run", cfg.seed, cfg.echo(), "runs", rows, cols)
    for r, tel in enumerate(telemetry):
        if args.format == "json":
            _emit(args, "run", cfg.seed, cfg.echo(), f"telemetry_{r}", payload=tel.rows)
        else:
            _emit(args, "run", cfg.seed, cfg.echo(), f"telemetry_{r}", csv_text=tel.to_csv())
    return 0


def cmd_sweep(args) -> int:
    from .levels import run_threshold_sweep

    cfg = _load(args, ExperimentConfig)
    if cfg.sweep is None:
        raise ConfigError("sweep needs a 'sweep' section with 'mu' and 'ratio' lists")
    surface = run_threshold_sweep(cfg.n, cfg.sweep.mu, cfg.sweep.ratio, cfg.budget, cfg.replicates,
                                  cfg.seed, cfg.sweep.rounding, cfg.jobs)
    _emit(args, "sweep", cfg.seed, cfg.echo(), "sweep", csv_text=surface.to_csv())
    return 0


def cmd_check(args) -> int:
    from .checks import run_suite, suite_passed

    if args.suite:
        suite = tuple(s.strip() for s in args.suite.split(",") if s.strip())
        unknown = [s for s in suite if s not in KNOWN_CHECKS]
        if unknown:
            raise ConfigError(f"unknown check(s): {', '.join(unknown)}")
        cfg = CheckerSuiteConfig(suite, seed=args.seed or 0, jobs=-1 if args.jobs is None else args.jobs)
        if args.format is None:
            args.format = "json"
    else:
        cfg = _load(args, CheckerSuiteConfig)
    results = run_suite(cfg)
    ok = suite_passed(results)
    reports = [{"check": name, **r.to_dict()} for name, reps in results.items() for r in reps]
    if args.format == "csv":
        cols = ("check", "hypothesis_ok", "pass", "empirical", "bound", "samples")
        rows = [{"check": d["check"], "hypothesis_ok": d.get("hypothesis_ok"), "pass": d.get("pass"),
                 "empirical": d.get("empirical", d.get("estimate", d.get("mean"))),
                 "bound": d.get("bound"), "samples": d.get("samples")} for d in reports]
        _emit(args, "check", cfg.seed, cfg.echo(), "checks", rows, cols)
    else:
        _emit(args, "check", cfg.seed, cfg.echo(), "checks", payload={"all_pass": ok, "reports": reports})
    return 0 if ok else 1


def cmd_approx(args) -> int:
    from .approx import convergents, e_continued_fraction, gap_bound_scan

    if args.format is None:
        args.format = "csv"
    config = {"mu_max": args.mu_max, "d": args.d, "terms": args.terms}
    if args.what == "convergents":
        terms = e_continued_fraction(args.terms)
        rows = [{"index": c.index, "term": terms[c.index], "p": c.p, "q": c.q,
                 "abs_error": float(c.error())} for c in convergents(terms)]
        _emit(args, "approx", None, config, "convergents", rows, ("index", "term", "p", "q", "abs_error"))
    else:
        scan = gap_bound_scan(args.mu_max, args.d)
        _emit(args, "approx", None, config, "gap_scan", csv_text=scan.to_csv())
    return 0


def cmd_surrogate(args) -> int:
    from .rng import RngStream
    from .surrogate import SurrogateConfig, simulate_chain

    if args.format is None:
        args.format = "csv"
    seed = args.seed or 0
    cfg = SurrogateConfig(args.mu, args.lam, args.influx)
    paths, clamped = simulate_chain(cfg, args.x0, args.steps, args.trials, RngStream(seed))
    config = {"mu": args.mu, "lam": args.lam, "influx": args.influx, "x0": args.x0,
              "steps": args.steps, "trials": args.trials, "clamped_steps": clamped}
    rows = [{"t": t, "mean": float(np.mean(col)), "std": float(np.std(col)),
             "min": int(col.min()), "max": int(col.max()), "extinct": int(np.count_nonzero(col == 0))}
            for t, col in enumerate(paths.T)]
    _emit(args, "surrogate", seed, config, "surrogate", rows, ("t", "mean", "std", "min", "max", "extinct"))
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    common.add_argument("--seed", type=int, help="64-bit seed (overrides the config)")
    common.add_argument("--out", help=f"output directory (default: ${OUT_ENV}, else stdout)")
    common.add_argument("--jobs", type=int, help="worker processes (default: all cores)")
    common.add_argument("--format", choices=("csv", "json"), help="output format")

    p = argparse.ArgumentParser(prog="commalab", description="(mu, lambda) EA laboratory on OneMax")
    p.add_argument("--version", action="version", version=f"commalab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="replicated runs of one configuration").set_defaults(func=cmd_run)
    sub.add_parser("sweep", parents=[common], help="success-rate grid over mu and lambda/(e mu)").set_defaults(func=cmd_sweep)
    c = sub.add_parser("check", parents=[common], help="run a suite of numeric checks")
    c.add_argument("--suite", help="comma-separated check ids (instead of --config)")
    c.set_defaults(func=cmd_check)
    a = sub.add_parser("approx", parents=[common], help="rational approximations of e")
    a.add_argument("what", nargs="?", choices=("scan", "convergents"), default="scan")
    a.add_argument("--mu-max", type=int, default=10_000)
    a.add_argument("--d", type=float, default=2.25)
    a.add_argument("--terms", type=int, default=20)
    a.set_defaults(func=cmd_approx)
    s = sub.add_parser("surrogate", parents=[common], help="simulate the binomial top-level chain")
    s.add_argument("--mu", type=int, required=True)
    s.add_argument("--lam", type=int, required=True)
    s.add_argument("--x0", type=int, required=True)
    s.add_argument("--steps", type=int, default=100)
    s.add_argument("--trials", type=int, default=1000)
    s.add_argument("--influx", type=float, default=None)
    s.set_defaults(func=cmd_surrogate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"commalab: config error: {exc}", file=sys.stderr)
        return 2
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0
    except OSError as exc:
        print(f"commalab: I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
