"""Equidistribution statistics: star discrepancy, Weyl sums, and the
series-criterion estimator.

The star discrepancy of y_1..y_N in [0,1) is the sup over v of
|#{y_i < v}/N - v|.  The fast path is the classical sorted-order formula

    D*_N = max_i max(i/N - y_(i), y_(i) - (i-1)/N),

with an O(N^2) counting oracle kept alongside as an independent check.  The
series criterion estimates E|S_N|^2 against a (conditioned) self-similar
measure by Monte Carlo, where S_N(x) = (1/N) sum_{n<=N} e^(2 pi i l f_n(x));
summability of (1/N) E|S_N|^2 over N drives almost-everywhere
equidistribution, so the estimated terms decaying is the observable signature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ConfigError
from .families import SequenceFamily
from .fixedpoint import (
    DEFAULT_TOL,
    STATS_MAX_ERR,
    certified_word_depth,
    family_orbit_mod_one,
    float_up,
    required_bits_family,
)
from .ifs import IfsSpec, Word, cylinder, point_of_word, sample_words, validate_ifs

_BRUTE_GUARD = 1 << 12


@dataclass(frozen=True)
class DiscrepancyReport:
    n: int
    d_star: float
    method: str


def _check_unit_values(arr: np.ndarray) -> None:
    if arr.size == 0:
        raise ConfigError("discrepancy of an empty sample is undefined")
    if np.any(arr < 0.0) or np.any(arr >= 1.0):
        raise ConfigError("values must lie in [0, 1)")


def star_discrepancy(values) -> DiscrepancyReport:
    """Exact sorted-order star discrepancy, O(N log N)."""
    arr = np.asarray(values, dtype=float)
    _check_unit_values(arr)
    ys = np.sort(arr, kind="stable")
    n = len(ys)
    idx = np.arange(1, n + 1, dtype=float)
    d = max(np.max(idx / n - ys), np.max(ys - (idx - 1.0) / n))
    return DiscrepancyReport(n=n, d_star=float(d), method="sorted-formula")


def star_discrepancy_bruteforce(values) -> DiscrepancyReport:
    """Counting oracle: sup over anchored intervals [0, v), O(N^2), guarded."""
    arr = np.asarray(values, dtype=float)
    _check_unit_values(arr)
    n = len(arr)
    if n > _BRUTE_GUARD:
        raise ConfigError(f"brute-force discrepancy is guarded at N <= {_BRUTE_GUARD}")
    best = 0.0
    for v in arr:
        below = float(np.sum(arr < v))
        at_most = float(np.sum(arr <= v))
        best = max(best, abs(below / n - v), abs(at_most / n - v))
    return DiscrepancyReport(n=n, d_star=best, method="brute-force")


@dataclass(frozen=True)
class WeylSumResult:
    l: int
    n: int
    value: complex
    modulus: float


def weyl_sum(values, l: int) -> WeylSumResult:
    """(1/N) sum exp(2 pi i l y_n) with compensated accumulation."""
    if l == 0:
        raise ConfigError("frequency l must be nonzero")
    arr = np.asarray(values, dtype=float)
    _check_unit_values(arr)
    phases = 2.0 * np.pi * l * arr
    n = len(arr)
    value = complex(math.fsum(np.cos(phases)) / n, math.fsum(np.sin(phases)) / n)
    return WeylSumResult(l=l, n=n, value=value, modulus=abs(value))


# ---------------------------------------------------------------------------
# Series-criterion estimator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DelSeriesEstimate:
    """terms[k] estimates E|S_{N_k}|^2; partial_sums accumulate (1/N_k) * terms[k]."""

    schedule: tuple[int, ...]
    terms: tuple[float, ...]
    stderrs: tuple[float, ...]
    partial_sums: tuple[float, ...]
    samples: int
    meta: dict = field(default_factory=dict)


def sampled_orbit_values(
    spec: IfsSpec,
    family: SequenceFamily,
    prefix: Word,
    count: int,
    n_max: int,
    seed: int,
    *,
    stream: int = 0,
    tol: float = DEFAULT_TOL,
):
    """Yield certified orbit value arrays for ``count`` points of the
    (prefix-conditioned) stationary measure.

    The digit depth and the working precision are both sized from n_max and
    the sup of the working cylinder so that each fragment's certificate stays
    below the statistics threshold.
    """
    report = validate_ifs(spec)
    if not (report.separation_ok and report.support_ok):
        raise ConfigError("sampling requires a separated system supported in [1, inf)")
    x_hi = cylinder(spec, prefix).interval[1] if prefix else report.conv_hull[1]
    xu = float_up(x_hi)
    eff_tol = min(tol, STATS_MAX_ERR / 4.0)
    depth = certified_word_depth(
        spec.r, report.hull_len, family.derivative_sup_log2(n_max, xu), eff_tol
    )
    depth = max(depth, len(prefix))
    frac_bits = required_bits_family(family, n_max, xu, eff_tol)
    words = sample_words(spec.probs, count, depth - len(prefix), seed, stream=stream, prefix=prefix)
    for row in words:
        word = tuple(int(d) for d in row)
        x = point_of_word(spec, word, depth, frac_bits)
        frag = family_orbit_mod_one(family, x, n_max, x_upper=x_hi, tol=eff_tol)
        yield frag.certified_values()


def del_series_estimate(
    spec: IfsSpec,
    family: SequenceFamily,
    prefix: Word,
    l: int,
    schedule,
    samples: int,
    seed: int,
    *,
    tol: float = DEFAULT_TOL,
) -> DelSeriesEstimate:
    """Monte Carlo estimates of E|S_N|^2 for each N in the schedule.

    One certified orbit per sample point serves every N through cumulative
    sums.  Standard errors come from the independent sample points.
    """
    if l == 0:
        raise ConfigError("frequency l must be nonzero")
    schedule = tuple(int(n) for n in schedule)
    if not schedule or any(n < 1 for n in schedule):
        raise ConfigError("schedule must contain positive lengths")
    n_max = max(schedule)
    per_point = np.empty((samples, len(schedule)))
    orbit_iter = sampled_orbit_values(spec, family, prefix, samples, n_max, seed, tol=tol)
    for i, vals in enumerate(orbit_iter):
        z = np.exp(2j * np.pi * l * vals)
        csum = np.cumsum(z)
        for j, n in enumerate(schedule):
            per_point[i, j] = abs(csum[n - 1] / n) ** 2
    terms = per_point.mean(axis=0)
    if samples > 1:
        stderrs = per_point.std(axis=0, ddof=1) / math.sqrt(samples)
    else:
        stderrs = np.zeros(len(schedule))
    partial = []
    acc = 0.0
    for n, t in zip(schedule, terms):
        acc += t / n
        partial.append(acc)
    return DelSeriesEstimate(
        schedule=schedule,
        terms=tuple(float(t) for t in terms),
        stderrs=tuple(float(s) for s in stderrs),
        partial_sums=tuple(partial),
        samples=samples,
        meta={"l": l, "prefix": tuple(prefix), "family": family.label(), "seed": seed},
    )
