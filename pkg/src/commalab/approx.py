"""Rational approximation of e: continued fraction, convergents and the gap
``eps(mu, lam) = (mu e - lam) / (mu e)``.

All arithmetic uses mpmath at 60 significant digits.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath

__all__ = [
    "DIGITS",
    "E",
    "Convergent",
    "ScanReport",
    "e_continued_fraction",
    "continued_fraction_expand",
    "convergents",
    "epsilon_gap",
    "min_gap_lambda",
    "gap_bound_scan",
    "SCAN_COLUMNS",
]

DIGITS = 60
_ctx = mpmath.mp.clone()
_ctx.dps = DIGITS
E = _ctx.e

SCAN_COLUMNS = ("mu", "lambda", "gap", "mu_pow_d_times_gap", "is_exception")


def e_continued_fraction(k: int) -> list[int]:
    """First ``k`` partial quotients of e: [2; 1, 2, 1, 1, 4, 1, 1, 6, ...]."""
    if k < 1:
        raise ValueError("k must be >= 1")
    terms = [2]
    j = 1
    while len(terms) < k:
        terms.extend([1, 2 * j, 1])
        j += 1
    return terms[:k]


def continued_fraction_expand(x, k: int) -> list[int]:
    """First ``k`` partial quotients of the high-precision number ``x``."""
    x = _ctx.mpf(x)
    out = []
    for _ in range(k):
        a = int(_ctx.floor(x))
        out.append(a)
        frac = x - a
        if frac == 0:
            break
        x = 1 / frac
    return out


@dataclass(frozen=True)
class Convergent:
    p: int
    q: int
    index: int

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("denominator must be positive")
        if math.gcd(self.p, self.q) != 1:
            raise ValueError("convergent must be in lowest terms")

    @property
    def value(self) -> Fraction:
        return Fraction(self.p, self.q)

    def error(self):
        """|e - p/q| in working precision."""
        return abs(E - _ctx.mpf(self.p) / self.q)


def convergents(terms) -> list[Convergent]:
    """Convergents of a continued fraction via p_k = a_k p_{k-1} + p_{k-2}."""
    out = []
    p_prev, p = 1, terms[0]
    q_prev, q = 0, 1
    out.append(Convergent(p, q, 0))
    for i, a in enumerate(terms[1:], start=1):
        p_prev, p = p, a * p + p_prev
        q_prev, q = q, a * q + q_prev
        out.append(Convergent(p, q, i))
    return out


def epsilon_gap(mu: int, lam: int) -> float:
    """(mu e - lam) / (mu e), for integers with 0 < lam <= mu e."""
    if mu < 1:
        raise ValueError("mu must be >= 1")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    me = mu * E
    if lam > me:
        raise ValueError(f"lambda={lam} exceeds mu*e={float(me):.6f}")
    return float((me - lam) / me)


def min_gap_lambda(mu: int) -> int:
    """The integer ``lam`` minimising |e - lam/mu| (searched over all lam)."""
    best, arg = None, None
    for lam in range(1, 3 * mu + 1):
        gap = abs(E - _ctx.mpf(lam) / mu)
        if best is None or gap < best:
            best, arg = gap, lam
    return arg


@dataclass
class ScanReport:
    d: float
    mu_max: int
    rows: list = field(repr=False)
    minimum: float = math.inf
    argmin: int = 0

    @property
    def exceptions(self) -> list[int]:
        return [r[0] for r in self.rows if r[4]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SCAN_COLUMNS)
        for mu, lam, gap, scaled, exc in self.rows:
            w.writerow([mu, lam, _ctx.nstr(gap, 17), _ctx.nstr(scaled, 17), int(exc)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"d": self.d, "mu_max": self.mu_max, "minimum": self.minimum,
                "argmin": self.argmin, "exceptions": self.exceptions}


def gap_bound_scan(mu_max: int, d: float) -> ScanReport:
    """mu^d |e - lam/mu| with lam = floor(mu e) for every mu <= ``mu_max``.

    Values below 1 are listed as exceptions.
    """
    if not d > 2:
        raise ValueError("d must exceed 2")
    dd = _ctx.mpf(d)
    rows = []
    best, arg = math.inf, 0
    for mu in range(1, mu_max + 1):
        lam = int(_ctx.floor(mu * E))
        gap = E - _ctx.mpf(lam) / mu
        scaled = _ctx.power(mu, dd) * gap
        rows.append((mu, lam, gap, scaled, bool(scaled < 1)))
        if scaled < best:
            best, arg = float(scaled), mu
    return ScanReport(d, mu_max, rows, best, arg)
