"""Admissible function families f_n and checkers for their regularity hypotheses.

Five kinds are built in:

    pure_power      f_n(x) = x^n
    poly_coeff      f_n(x) = g(x) * x^n         (g with positive coefficients)
    poly_scale      f_n(x) = g(n) * x^n
    power_sum       f_n(x) = x^n + ... + x + 1
    log_augmented   f_n(x) = base_n(x) + n*log(x)

Every kind evaluates f_n and its first three derivatives exactly at rational
points (the log-augmented value itself is transcendental and is returned as a
float; its derivatives are rational).  The checkers certify, on a rational
grid over an interval in [1, inf), the three quantitative hypotheses used by
the decay machinery:

  * growth:    |f_n'(x) - f_m'(x)| <= C1 * n^C2 * x^(n-1)   for all m < n,
  * gap:       |f_n''(x) - f_m''(x)| >= C3 * x^(n-2)        for n past a threshold,
  * sign:      f_n''' - f_m''' keeps one sign on the interval, the same for all pairs.

For pure powers the three certificates ((C1, C2) = (2, 1), C3 = 1, sign +1)
follow from closed-form inequalities and are checked exactly; everything else
is grid-checked with an explicit 1% safety margin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import ConfigError

KINDS = ("pure_power", "poly_coeff", "poly_scale", "power_sum", "log_augmented")

Coeffs = tuple[Fraction, ...]


def _poly_eval(coeffs: Sequence[Fraction], x: Fraction) -> Fraction:
    acc = Fraction(0)
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def _poly_diff(coeffs: Coeffs) -> Coeffs:
    return tuple(c * k for k, c in enumerate(coeffs))[1:]


@dataclass(frozen=True)
class SequenceFamily:
    kind: str
    g: Coeffs | None = None
    base: "SequenceFamily | None" = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown family kind {self.kind!r}")
        if self.kind in ("poly_coeff", "poly_scale"):
            if not self.g or all(c == 0 for c in self.g):
                raise ConfigError(f"{self.kind} needs a nonzero coefficient polynomial")
            if any(c < 0 for c in self.g):
                raise ConfigError(f"{self.kind} needs nonnegative coefficients")
            if self.kind == "poly_coeff" and any(c <= 0 for c in self.g):
                raise ConfigError("poly_coeff needs strictly positive coefficients")
        if self.kind == "log_augmented":
            if self.base is None:
                raise ConfigError("log_augmented needs a base family")
            if self.base.kind == "log_augmented":
                raise ConfigError("log-augmented families cannot be nested")

    def g_value(self, x: Fraction) -> Fraction:
        assert self.g is not None
        return _poly_eval(self.g, x)

    def log_weight(self, n: int) -> int:
        return n if self.kind == "log_augmented" else 0

    def poly_coeffs(self, n: int) -> Coeffs:
        """Coefficients (constant first) of the polynomial part of f_n."""
        if self.kind == "pure_power":
            return (Fraction(0),) * n + (Fraction(1),)
        if self.kind == "poly_coeff":
            assert self.g is not None
            return (Fraction(0),) * n + tuple(self.g)
        if self.kind == "poly_scale":
            return (Fraction(0),) * n + (self.g_value(Fraction(n)),)
        if self.kind == "power_sum":
            return (Fraction(1),) * (n + 1)
        assert self.base is not None
        return self.base.poly_coeffs(n)

    def value(self, n: int, x: Fraction) -> Fraction | float:
        poly = _poly_eval(self.poly_coeffs(n), x)
        w = self.log_weight(n)
        if w:
            return float(poly) + w * math.log(float(x))
        return poly

    def derivatives(self, n: int, x: Fraction) -> tuple[Fraction | float, Fraction, Fraction, Fraction]:
        """(f, f', f'', f''') at a rational point; all but a log-augmented f are exact."""
        c0 = self.poly_coeffs(n)
        c1 = _poly_diff(c0)
        c2 = _poly_diff(c1)
        c3 = _poly_diff(c2)
        f = _poly_eval(c0, x)
        d1 = _poly_eval(c1, x)
        d2 = _poly_eval(c2, x)
        d3 = _poly_eval(c3, x)
        w = self.log_weight(n)
        if w:
            return (
                float(f) + w * math.log(float(x)),
                d1 + Fraction(w) / x,
                d2 - Fraction(w) / x**2,
                d3 + Fraction(2 * w) / x**3,
            )
        return f, d1, d2, d3

    def value_float(self, n: int, xs: np.ndarray) -> np.ndarray:
        coeffs = _float_coeffs(self, n, 0)
        acc = np.zeros_like(xs)
        for c in coeffs[::-1]:
            acc = acc * xs + c
        w = self.log_weight(n)
        if w:
            acc = acc + w * np.log(xs)
        return acc

    def derivative_float(self, n: int, xs: np.ndarray, order: int) -> np.ndarray:
        coeffs = _float_coeffs(self, n, order)
        acc = np.zeros_like(xs)
        for c in coeffs[::-1]:
            acc = acc * xs + c
        w = self.log_weight(n)
        if w:
            if order == 1:
                acc = acc + w / xs
            elif order == 2:
                acc = acc - w / xs**2
            elif order == 3:
                acc = acc + 2.0 * w / xs**3
        return acc

    def derivative_sup_log2(self, n: int, x_hi: float) -> float:
        """log2 of an upper bound for sup |f_n'| on [1, x_hi]."""
        c1 = _poly_diff(self.poly_coeffs(n))
        weight = sum(abs(c) for c in c1)
        poly_log2 = (math.log2(weight) if weight else -300.0) + max(0, len(c1) - 1) * math.log2(x_hi)
        w = self.log_weight(n)
        if w:
            return max(poly_log2, math.log2(w)) + 1.0
        return poly_log2

    def extra_bits(self, n_max: int, x_upper: float) -> int:
        """Precision headroom the orbit kernel needs beyond the plain power orbit."""
        if self.kind == "pure_power":
            return 0
        if self.kind == "poly_coeff":
            return math.ceil(math.log2(float(self.g_value(Fraction(2) * max(1, math.ceil(x_upper)))))) + 2
        if self.kind == "poly_scale":
            return math.ceil(math.log2(float(self.g_value(Fraction(n_max))))) + 2
        if self.kind == "power_sum":
            return math.ceil(math.log2(n_max + 1)) + 2
        assert self.base is not None
        return self.base.extra_bits(n_max, x_upper) + math.ceil(math.log2(n_max + 1)) + 4

    def label(self) -> str:
        if self.kind in ("poly_coeff", "poly_scale"):
            return f"{self.kind}[{','.join(str(c) for c in self.g or ())}]"
        if self.kind == "log_augmented":
            assert self.base is not None
            return f"log_augmented({self.base.label()})"
        return self.kind


@lru_cache(maxsize=4096)
def _float_coeffs(family: SequenceFamily, n: int, order: int) -> tuple[float, ...]:
    coeffs = family.poly_coeffs(n)
    for _ in range(order):
        coeffs = _poly_diff(coeffs)
    return tuple(float(c) for c in coeffs)


def rational_grid(interval: tuple[Fraction, Fraction], points: int) -> list[Fraction]:
    lo, hi = Fraction(interval[0]), Fraction(interval[1])
    if points < 2 or hi <= lo:
        raise ConfigError("grid needs at least two points on a nondegenerate interval")
    step = (hi - lo) / (points - 1)
    return [lo + k * step for k in range(points)]


# ---------------------------------------------------------------------------
# Hypothesis checkers
# ---------------------------------------------------------------------------

DEFAULT_MARGIN = 0.01
DEFAULT_C1_CEILING = 1e6


@dataclass(frozen=True)
class GrowthCheck:
    c1: float
    c2: float
    ok: bool
    exact: bool
    worst: tuple[int, int, float, float] | None  # (m, n, x, ratio)


@dataclass(frozen=True)
class GapCheck:
    c3: float
    ok: bool
    exact: bool
    threshold: int
    min_threshold: int | None
    worst: tuple[int, int, float, float] | None


@dataclass(frozen=True)
class SignCheck:
    sign: int
    ok: bool
    witness: tuple[int, int, float] | None


@dataclass(frozen=True)
class HypothesisCertificate:
    """Constants certified for one family on one interval and n-range."""

    c1: float
    c2: float
    c3: float
    d_sign: int
    n_max: int
    interval: tuple[Fraction, Fraction]
    growth_ok: bool
    gap_ok: bool
    sign_ok: bool
    gap_threshold: int

    @property
    def all_ok(self) -> bool:
        return self.growth_ok and self.gap_ok and self.sign_ok


def _first_derivatives(family, ns: range, grid: list[Fraction]) -> dict[int, list[Fraction]]:
    return {n: [family.derivatives(n, x)[1] for x in grid] for n in ns}


def check_derivative_growth(
    family,
    interval: tuple[Fraction, Fraction],
    n_max: int,
    grid_points: int = 33,
    *,
    c1: float | None = None,
    c2: float | None = None,
    margin: float = DEFAULT_MARGIN,
    c1_ceiling: float = DEFAULT_C1_CEILING,
) -> GrowthCheck:
    """Certify |f_n' - f_m'| <= C1 n^C2 x^(n-1) for all m < n <= n_max on a grid.

    With no candidate supplied, C2 defaults to 1 and C1 is fitted as the grid
    supremum of the normalised ratio; the fit fails if it exceeds the ceiling.
    Supplied candidates are verified with a 1% safety margin.  Pure powers
    bypass the grid: n x^(n-1) - m x^(m-1) <= 2 n x^(n-1) holds identically
    on [1, inf), so (2, 1) is returned as an exact certificate.
    """
    if Fraction(interval[0]) < 1:
        raise ConfigError("interval must lie in [1, inf)")
    if n_max < 2:
        raise ConfigError("n_max must be at least 2")
    if getattr(family, "kind", None) == "pure_power" and c1 is None and c2 is None:
        return GrowthCheck(c1=2.0, c2=1.0, ok=True, exact=True, worst=None)

    c2_eff = 1.0 if c2 is None else float(c2)
    grid = rational_grid(interval, grid_points)
    deriv = _first_derivatives(family, range(1, n_max + 1), grid)
    worst = None
    worst_ratio = -math.inf
    for n in range(2, n_max + 1):
        scale_n = [float(n) ** c2_eff * float(x) ** (n - 1) for x in grid]
        for m in range(1, n):
            for j, x in enumerate(grid):
                lhs = abs(float(deriv[n][j] - deriv[m][j]))
                ratio = lhs / scale_n[j]
                if ratio > worst_ratio:
                    worst_ratio = ratio
                    worst = (m, n, float(x), ratio)
    if c1 is None:
        fitted = worst_ratio
        return GrowthCheck(c1=fitted, c2=c2_eff, ok=fitted <= c1_ceiling, exact=False, worst=worst)
    ok = worst_ratio <= float(c1) * (1.0 - margin)
    return GrowthCheck(c1=float(c1), c2=c2_eff, ok=ok, exact=False, worst=worst)


def check_second_derivative_gap(
    family,
    interval: tuple[Fraction, Fraction],
    n_max: int,
    *,
    threshold: int = 2,
    grid_points: int = 33,
    c3: float | None = None,
    margin: float = DEFAULT_MARGIN,
) -> GapCheck:
    """Certify |f_n'' - f_m''| >= C3 x^(n-2) for n >= threshold, m < n on a grid.

    Reports the fitted C3 (grid infimum of the normalised gap) and the
    smallest threshold for which the gap stays positive on the tested range.
    For pure powers n(n-1) - m(m-1) >= 2 for every n >= 2 > m, so C3 = 1 is
    exact from threshold 2 on.
    """
    if Fraction(interval[0]) < 1:
        raise ConfigError("interval must lie in [1, inf)")
    if getattr(family, "kind", None) == "log_augmented" and Fraction(interval[0]) <= 1:
        raise ConfigError("log-augmented families need an interval with min > 1")
    if getattr(family, "kind", None) == "pure_power" and c3 is None:
        return GapCheck(c3=1.0, ok=True, exact=True, threshold=max(2, threshold), min_threshold=2, worst=None)

    grid = rational_grid(interval, grid_points)
    second = {n: [family.derivatives(n, x)[2] for x in grid] for n in range(1, n_max + 1)}
    per_n_min: dict[int, tuple[float, tuple[int, int, float, float]]] = {}
    for n in range(2, n_max + 1):
        best = math.inf
        best_at = None
        for m in range(1, n):
            for j, x in enumerate(grid):
                lhs = abs(float(second[n][j] - second[m][j]))
                ratio = lhs / float(x) ** (n - 2)
                if ratio < best:
                    best = ratio
                    best_at = (m, n, float(x), ratio)
        per_n_min[n] = (best, best_at)

    start = max(2, threshold)
    fitted = min(per_n_min[n][0] for n in range(start, n_max + 1))
    worst = min((per_n_min[n] for n in range(start, n_max + 1)), key=lambda t: t[0])[1]
    min_threshold = None
    for t in range(2, n_max + 1):
        if min(per_n_min[n][0] for n in range(t, n_max + 1)) > 0:
            min_threshold = t
            break
    if c3 is None:
        return GapCheck(c3=fitted, ok=fitted > 0, exact=False, threshold=start, min_threshold=min_threshold, worst=worst)
    ok = fitted >= float(c3) * (1.0 + margin)
    return GapCheck(c3=float(c3), ok=ok, exact=False, threshold=start, min_threshold=min_threshold, worst=worst)


def check_third_derivative_sign(
    family,
    interval: tuple[Fraction, Fraction],
    n_max: int,
    grid_points: int = 33,
) -> SignCheck:
    """Require one common sign for f_n''' - f_m''' over all pairs and grid points."""
    if getattr(family, "kind", None) == "pure_power":
        return SignCheck(sign=1, ok=True, witness=None)
    grid = rational_grid(interval, grid_points)
    third = {n: [family.derivatives(n, x)[3] for x in grid] for n in range(1, n_max + 1)}
    pos = neg = False
    witness = None
    for n in range(2, n_max + 1):
        for m in range(1, n):
            for j, x in enumerate(grid):
                d = third[n][j] - third[m][j]
                if d > 0:
                    pos = True
                elif d < 0:
                    neg = True
                if pos and neg and witness is None:
                    witness = (m, n, float(x))
    if pos and neg:
        return SignCheck(sign=0, ok=False, witness=witness)
    return SignCheck(sign=-1 if neg else 1, ok=True, witness=None)


def certify(
    family,
    interval: tuple[Fraction, Fraction],
    n_max: int = 20,
    grid_points: int = 33,
) -> HypothesisCertificate:
    growth = check_derivative_growth(family, interval, n_max, grid_points)
    gap = check_second_derivative_gap(family, interval, n_max, grid_points=grid_points)
    sign = check_third_derivative_sign(family, interval, n_max, grid_points)
    return HypothesisCertificate(
        c1=growth.c1,
        c2=growth.c2,
        c3=gap.c3,
        d_sign=sign.sign,
        n_max=n_max,
        interval=(Fraction(interval[0]), Fraction(interval[1])),
        growth_ok=growth.ok,
        gap_ok=gap.ok,
        sign_ok=sign.ok,
        gap_threshold=gap.min_threshold if gap.min_threshold is not None else gap.threshold,
    )
