"""Experiment and checker-suite configuration files (YAML).

Experiment document::

    n: 100
    mu: 25
    lambda: 54                 # or "ratio 0.8 floor", or {ratio: 0.8, rounding: floor}
    seed: 1
    replicates: 10
    budget: 50 nlogn           # or an integer number of generations
    trackers: [g, h]
    epsilon: 0.2
    sweep: {mu: [10, 20], ratio: [0.8, 1.2]}

Checker document::

    suite: [lemma7, lemma8, thm5]
    tolerance_sigma: 3
    samples: {lemma7: 10000}

Errors carry the line of the offending entry.
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import asdict, dataclass, field

import yaml

from .core import default_budget

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "CheckerSuiteConfig",
    "SweepSpec",
    "KNOWN_TRACKERS",
    "KNOWN_CHECKS",
    "parse_config",
    "load_config",
    "resolve_lambda",
    "resolve_budget",
]

KNOWN_TRACKERS = ("g", "h", "levels", "phase_process", "n_events")

KNOWN_CHECKS = (
    "lemma1", "lemma2", "lemma3", "thm5", "thm6", "chernoff",
    "lemma6", "thm12", "lemma13", "lemma14",
    "lemma7", "lemma8", "lemma19", "lemma20", "thm21", "lemma24", "lemma25", "cor23",
    "lemma27", "lemma28", "lemma29", "approx",
)

_ROUNDING = ("floor", "ceil", "nearest")
_EXPERIMENT_KEYS = {"n", "mu", "lambda", "seed", "replicates", "budget", "trackers", "epsilon",
                    "count_on_survival", "jobs", "output", "sweep"}
_CHECK_KEYS = {"suite", "tolerance_sigma", "samples", "seed", "jobs", "output"}


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class SweepSpec:
    mu: tuple
    ratio: tuple
    rounding: str = "floor"


@dataclass
class ExperimentConfig:
    n: int
    mu: int
    lam: int
    seed: int = 0
    replicates: int = 1
    budget: int | None = None
    lambda_rule: str = "explicit"
    budget_rule: str = "default"
    trackers: frozenset = frozenset()
    epsilon: float | None = None
    count_on_survival: bool = False
    jobs: int | None = None
    output_dir: str | None = None
    output_format: str = "csv"
    sweep: SweepSpec | None = None

    def __post_init__(self):
        if self.lam < self.mu:
            raise ConfigError(f"lambda={self.lam} < mu={self.mu}")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if self.budget is None:
            self.budget = default_budget(self.n, self.mu, self.lam)

    def echo(self) -> dict:
        d = asdict(self)
        d["trackers"] = sorted(self.trackers)
        return d


@dataclass
class CheckerSuiteConfig:
    suite: tuple
    tolerance_sigma: float = 3.0
    samples: dict = field(default_factory=dict)
    seed: int = 0
    jobs: int | None = None
    output_dir: str | None = None
    output_format: str = "json"

    def echo(self) -> dict:
        d = asdict(self)
        d["suite"] = list(self.suite)
        return d


# ---------------------------------------------------------------------------
# parsing helpers


def _line_map(source: str) -> dict:
    """Map top-level and nested key paths to 1-based line numbers."""
    lines = {}
    try:
        root = yaml.compose(source, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return lines

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                path = (*prefix, k.value)
                lines[path] = k.start_mark.line + 1
                walk(v, path)

    if root is not None:
        walk(root, ())
    return lines


class _Ctx:
    def __init__(self, lines):
        self.lines = lines

    def fail(self, path, msg):
        path = path if isinstance(path, tuple) else (path,)
        raise ConfigError(f"{'.'.join(path)}: {msg}", self.lines.get(path))

    def integer(self, data, key, lo=None, required=False, default=None):
        if key not in data:
            if required:
                raise ConfigError(f"missing required field '{key}'")
            return default
        v = data[key]
        if isinstance(v, bool) or not isinstance(v, int):
            self.fail(key, f"expected an integer, got {v!r}")
        if lo is not None and v < lo:
            self.fail(key, f"must be >= {lo} (got {v})")
        return v


def resolve_lambda(rule, mu: int) -> tuple[int, str]:
    """Resolve a lambda rule to ``(lambda, rule_text)``.

    Accepts an integer, ``"ratio <r> <floor|ceil|nearest>"`` or a mapping with
    ``ratio`` and ``rounding``.
    """
    from .levels import lambda_from_ratio

    if isinstance(rule, bool):
        raise ValueError("lambda must be an integer or a ratio rule")
    if isinstance(rule, int):
        return rule, "explicit"
    if isinstance(rule, str):
        m = re.fullmatch(r"\s*ratio\s+([0-9.eE+-]+)\s+(floor|ceil|nearest)\s*", rule)
        if not m:
            raise ValueError(f"cannot parse lambda rule {rule!r}; expected 'ratio <r> <floor|ceil|nearest>'")
        ratio, rounding = float(m.group(1)), m.group(2)
    elif isinstance(rule, dict):
        if set(rule) - {"ratio", "rounding"} or "ratio" not in rule or "rounding" not in rule:
            raise ValueError("lambda mapping needs exactly 'ratio' and 'rounding'")
        ratio, rounding = float(rule["ratio"]), rule["rounding"]
        if rounding not in _ROUNDING:
            raise ValueError(f"rounding must be one of {_ROUNDING}")
    else:
        raise ValueError(f"unsupported lambda rule {rule!r}")
    if ratio <= 0:
        raise ValueError("ratio must be positive")
    return lambda_from_ratio(mu, ratio, rounding), f"ratio {ratio!r} {rounding}"


def resolve_budget(rule, n: int, mu: int, lam: int) -> tuple[int, str]:
    """An integer, ``"<k> nlogn"`` (k n ln n generations) or None (default)."""
    if rule is None:
        return default_budget(n, mu, lam), "default"
    if isinstance(rule, bool):
        raise ValueError("budget must be an integer or '<k> nlogn'")
    if isinstance(rule, int):
        if rule < 0:
            raise ValueError("budget must be non-negative")
        return rule, "absolute"
    if isinstance(rule, str):
        m = re.fullmatch(r"\s*([0-9.eE+-]+)\s*nlogn\s*", rule)
        if m:
            k = float(m.group(1))
            if k < 0:
                raise ValueError("budget multiple must be non-negative")
            return int(math.ceil(k * n * math.log(n))), f"{k!r} nlogn"
    raise ValueError(f"cannot parse budget {rule!r}; expected an integer or '<k> nlogn'")


def _output(ctx, data, default_format):
    out = data.get("output", {}) or {}
    if not isinstance(out, dict):
        ctx.fail("output", "expected a mapping with 'dir' and/or 'format'")
    unknown = set(out) - {"dir", "format"}
    if unknown:
        ctx.fail(("output", sorted(unknown)[0]), "unknown key")
    fmt = out.get("format", default_format)
    if fmt not in ("csv", "json"):
        ctx.fail(("output", "format"), f"must be 'csv' or 'json' (got {fmt!r})")
    return out.get("dir", os.environ.get("COMMALAB_OUT")), fmt


def _parse_experiment(data, ctx) -> ExperimentConfig:
    for k in data:
        if k not in _EXPERIMENT_KEYS:
            ctx.fail(k, "unknown key")
    n = ctx.integer(data, "n", lo=1, required=True)
    mu = ctx.integer(data, "mu", lo=1, required=True)
    seed = ctx.integer(data, "seed", lo=0, default=0)
    if seed >= 1 << 64:
        ctx.fail("seed", "must fit in 64 bits")
    replicates = ctx.integer(data, "replicates", lo=1, default=1)
    jobs = ctx.integer(data, "jobs", lo=1, default=None)
    if "lambda" not in data:
        raise ConfigError("missing required field 'lambda'")
    try:
        lam, lam_rule = resolve_lambda(data["lambda"], mu)
    except ValueError as exc:
        ctx.fail("lambda", str(exc))
    if lam < mu:
        ctx.fail("lambda", f"resolves to {lam} < mu={mu}; comma selection needs lambda >= mu")
    try:
        budget, budget_rule = resolve_budget(data.get("budget"), n, mu, lam)
    except ValueError as exc:
        ctx.fail("budget", str(exc))
    trackers = data.get("trackers", []) or []
    if not isinstance(trackers, list):
        ctx.fail("trackers", "expected a list")
    for t in trackers:
        if t not in KNOWN_TRACKERS:
            ctx.fail("trackers", f"unknown tracker {t!r}; known: {', '.join(KNOWN_TRACKERS)}")
    eps = data.get("epsilon")
    if eps is not None and (isinstance(eps, bool) or not isinstance(eps, (int, float)) or not 0 < eps < 1):
        ctx.fail("epsilon", f"must be a number in (0, 1) (got {eps!r})")
    survival = data.get("count_on_survival", False)
    if not isinstance(survival, bool):
        ctx.fail("count_on_survival", "expected true or false")
    sweep = None
    if "sweep" in data:
        sw = data["sweep"]
        if not isinstance(sw, dict):
            ctx.fail("sweep", "expected a mapping")
        for k in sw:
            if k not in ("mu", "ratio", "rounding"):
                ctx.fail(("sweep", k), "unknown key")
        mus, ratios = sw.get("mu", [mu]), sw.get("ratio")
        if not isinstance(mus, list) or not mus or any(isinstance(m, bool) or not isinstance(m, int) or m < 1 for m in mus):
            ctx.fail(("sweep", "mu"), "expected a non-empty list of positive integers")
        if not isinstance(ratios, list) or not ratios or any(not isinstance(r, (int, float)) or r <= 0 for r in ratios):
            ctx.fail(("sweep", "ratio"), "expected a non-empty list of positive numbers")
        rounding = sw.get("rounding", "floor")
        if rounding not in _ROUNDING:
            ctx.fail(("sweep", "rounding"), f"must be one of {_ROUNDING}")
        sweep = SweepSpec(tuple(mus), tuple(float(r) for r in ratios), rounding)
    out_dir, fmt = _output(ctx, data, "csv")
    return ExperimentConfig(n, mu, lam, seed, replicates, budget, lam_rule, budget_rule,
                            frozenset(trackers), None if eps is None else float(eps), survival, jobs,
                            out_dir, fmt, sweep)


def _parse_checks(data, ctx) -> CheckerSuiteConfig:
    for k in data:
        if k not in _CHECK_KEYS:
            ctx.fail(k, "unknown key")
    suite = data["suite"]
    if isinstance(suite, str):
        suite = [s.strip() for s in suite.split(",") if s.strip()]
    if not isinstance(suite, list) or not suite:
        ctx.fail("suite", "expected a non-empty list of check identifiers")
    for s in suite:
        if s not in KNOWN_CHECKS:
            ctx.fail("suite", f"unknown check {s!r}; known: {', '.join(KNOWN_CHECKS)}")
    sigma = data.get("tolerance_sigma", 3.0)
    if isinstance(sigma, bool) or not isinstance(sigma, (int, float)) or sigma < 0:
        ctx.fail("tolerance_sigma", f"must be a non-negative number (got {sigma!r})")
    samples = data.get("samples", {}) or {}
    if not isinstance(samples, dict):
        ctx.fail("samples", "expected a mapping from check id to sample count")
    for k, v in samples.items():
        if k not in KNOWN_CHECKS:
            ctx.fail(("samples", k), "unknown check")
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            ctx.fail(("samples", k), f"must be a positive integer (got {v!r})")
    seed = ctx.integer(data, "seed", lo=0, default=0)
    jobs = ctx.integer(data, "jobs", lo=1, default=None)
    out_dir, fmt = _output(ctx, data, "json")
    return CheckerSuiteConfig(tuple(suite), float(sigma), dict(samples), seed, jobs, out_dir, fmt)


def parse_config(source: str):
    """Parse a YAML document into an :class:`ExperimentConfig` or, when it has
    a ``suite`` key, a :class:`CheckerSuiteConfig`."""
    try:
        data = yaml.safe_load(source)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"malformed document: {getattr(exc, 'problem', exc)}",
                          None if mark is None else mark.line + 1) from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping of keys to values", 1)
    ctx = _Ctx(_line_map(source))
    if "suite" in data:
        return _parse_checks(data, ctx)
    return _parse_experiment(data, ctx)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
