"""Report records shared by the checkers, plus small Monte Carlo helpers."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["BoundReport", "DriftReport", "mean_se", "proportion_se", "dump_json", "to_jsonable", "SIGMA"]

# one-sided slack, in standard errors, for every Monte Carlo bound comparison
SIGMA = 3.0


def mean_se(values) -> tuple[float, float]:
    """Sample mean and its standard error."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return math.nan, math.nan
    if v.size == 1:
        return float(v[0]), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def proportion_se(successes: int, trials: int) -> tuple[float, float]:
    if trials == 0:
        return math.nan, math.nan
    p = successes / trials
    return p, math.sqrt(max(p * (1 - p), 0.0) / trials)


def _clean(value):
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


@dataclass
class BoundReport:
    """Empirical value vs. a stated bound.

    ``kind`` is ``"upper"`` when the empirical value must not exceed the bound
    and ``"lower"`` when it must not fall below it.
    """

    lemma: str
    hypothesis_ok: bool
    parameters: dict
    empirical: float
    standard_error: float
    bound: float
    samples: int
    kind: str = "upper"
    rejection_rate: float | None = None
    notes: str = ""
    sigma: float = SIGMA
    passed: bool = field(init=False)

    def __post_init__(self):
        self.rescore(self.sigma)

    def rescore(self, sigma: float) -> "BoundReport":
        """Recompute ``passed`` with ``sigma`` standard errors of slack."""
        self.sigma = sigma
        slack = sigma * (self.standard_error if math.isfinite(self.standard_error) else 0.0)
        if not math.isfinite(self.empirical):
            self.passed = False
        elif self.kind == "upper":
            self.passed = self.empirical <= self.bound + slack
        else:
            self.passed = self.empirical >= self.bound - slack
        return self

    def to_dict(self) -> dict:
        d = {
            "lemma": self.lemma,
            "hypothesis_ok": self.hypothesis_ok,
            "parameters": self.parameters,
            "empirical": self.empirical,
            "standard_error": self.standard_error,
            "bound": self.bound,
            "pass": self.passed,
            "samples": self.samples,
        }
        if self.rejection_rate is not None:
            d["rejection_rate"] = self.rejection_rate
        if self.notes:
            d["notes"] = self.notes
        return _clean(d)


@dataclass
class DriftReport:
    quantity: str
    estimate: float
    ci_low: float
    ci_high: float
    bound: float
    passed: bool
    hypothesis_ok: bool = True
    samples: int = 0
    parameters: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _clean({
            "quantity": self.quantity,
            "estimate": self.estimate,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "bound": self.bound,
            "pass": self.passed,
            "hypothesis_ok": self.hypothesis_ok,
            "samples": self.samples,
            "parameters": self.parameters,
        })


def to_jsonable(obj):
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(o) for o in obj]
    if isinstance(obj, dict):
        return {k: to_jsonable(v) for k, v in obj.items()}
    return _clean(obj)


def dump_json(obj, indent: int = 2) -> str:
    return json.dumps(to_jsonable(obj), indent=indent, sort_keys=False)
