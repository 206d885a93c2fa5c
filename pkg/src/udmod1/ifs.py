"""Equicontractive iterated function systems over exact rationals.

An IFS here is a finite family of affine contractions x -> r*x + t_i sharing
a single ratio r in (0,1), together with a probability vector.  The attractor
is the unique compact set X fixed by the union of the maps; the associated
stationary measure weights the depth-M cylinder of a digit word a by
p_a = prod_k p_{a_k}.

All geometry (convex hulls, cylinder intervals, gaps) is computed with
`fractions.Fraction`, so disjointness and containment checks are decidable
instead of float-dependent.  Random sampling realises the stationary measure
by drawing IID digits; conditioning on a fixed digit prefix realises the
normalised restriction of the measure to that prefix's cylinder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError
from .fixedpoint import FixedReal, float_up

Word = tuple[int, ...]

# Digits whose float inverse-CDF decision is closer than this to a cell
# boundary are re-resolved with exact rational comparisons.
_BOUNDARY_SLACK = 1e-9

_RNG_DOMAIN = 0x1F5  # fixed tag so streams never collide with other modules


@dataclass(frozen=True)
class IfsSpec:
    """Equicontractive IFS with ratio ``r``, translations ``t_i`` and weights ``p_i``.

    Construction enforces the structural invariants (r in (0,1), at least two
    maps, nonnegative weights summing to one).  Geometric properties such as
    separation are evaluated by :func:`validate_ifs`, not here.
    """

    r: Fraction
    translations: tuple[Fraction, ...]
    probs: tuple[Fraction, ...]

    def __post_init__(self) -> None:
        if not (0 < self.r < 1):
            if self.r < 0:
                raise ConfigError(
                    "negative contraction ratio is not accepted; compose the "
                    "system with itself first (see square_ifs)"
                )
            raise ConfigError(f"contraction ratio must lie in (0,1), got {self.r}")
        if len(self.translations) < 2:
            raise ConfigError("an IFS needs at least two maps")
        if len(self.probs) != len(self.translations):
            raise ConfigError("probability vector length does not match map count")
        if any(p < 0 for p in self.probs):
            raise ConfigError("probabilities must be nonnegative")
        if sum(self.probs) != 1:
            raise ConfigError(f"probabilities must sum to 1 exactly, got {sum(self.probs)}")

    @property
    def alphabet(self) -> range:
        return range(1, len(self.translations) + 1)

    def hull(self) -> tuple[Fraction, Fraction]:
        """Convex hull of the attractor: fixed points of the extreme maps."""
        one_minus_r = 1 - self.r
        return (min(self.translations) / one_minus_r, max(self.translations) / one_minus_r)

    def apply(self, digit: int, x: Fraction) -> Fraction:
        return self.r * x + self.translations[digit - 1]


@dataclass(frozen=True)
class ValidationReport:
    conv_hull: tuple[Fraction, Fraction]
    images: tuple[tuple[Fraction, Fraction], ...]
    gap_min: Fraction  # signed: > 0 iff the level-1 images are strictly disjoint
    separation_ok: bool
    support_ok: bool

    @property
    def hull_len(self) -> Fraction:
        return self.conv_hull[1] - self.conv_hull[0]


def validate_ifs(spec: IfsSpec) -> ValidationReport:
    """Check strict disjointness of the level-1 images of the convex hull.

    Returns the hull, the level-1 image intervals, the (signed) minimal gap
    between them, and flags for separation and for the support lying in
    [1, inf).  The gap is the constant that controls separation at every
    depth: distinct words that first disagree at position k give cylinders
    at distance at least gap_min * r^(k-1).
    """
    lo, hi = spec.hull()
    images = sorted((spec.r * lo + t, spec.r * hi + t) for t in spec.translations)
    gap_min = min(images[i + 1][0] - images[i][1] for i in range(len(images) - 1))
    return ValidationReport(
        conv_hull=(lo, hi),
        images=tuple(images),
        gap_min=gap_min,
        separation_ok=gap_min > 0,
        support_ok=lo >= 1,
    )


def entropy(probs: Iterable[Fraction | float]) -> float:
    """Shannon entropy -sum p log p in nats; zero entries contribute zero."""
    acc = 0.0
    for p in probs:
        pf = float(p)
        if pf > 0.0:
            acc -= pf * math.log(pf)
    return acc


@dataclass(frozen=True)
class EntropyCheck:
    ratio: float
    ok: bool


def entropy_condition(probs: Sequence[Fraction | float], r: Fraction | float) -> EntropyCheck:
    """Ratio h(p) / (-log r); the admissibility condition is ratio > 1/2 strictly."""
    ratio = entropy(probs) / (-math.log(float(r)))
    return EntropyCheck(ratio=ratio, ok=ratio > 0.5)


def word_map(spec: IfsSpec, word: Word) -> tuple[Fraction, Fraction]:
    """Affine map of a composed word: scale r^M and exact rational offset.

    The composition phi_{a_1} o ... o phi_{a_M} sends x to
    r^M x + sum_k t_{a_k} r^(k-1); the empty word gives the identity.
    """
    offset = Fraction(0)
    for digit in reversed(word):
        offset = spec.translations[digit - 1] + spec.r * offset
    return spec.r ** len(word), offset


@dataclass(frozen=True)
class Cylinder:
    word: Word
    interval: tuple[Fraction, Fraction]
    prob: Fraction


def word_prob(spec: IfsSpec, word: Word) -> Fraction:
    prob = Fraction(1)
    for digit in word:
        prob *= spec.probs[digit - 1]
    return prob


def cylinder(spec: IfsSpec, word: Word) -> Cylinder:
    scale, offset = word_map(spec, word)
    lo, hi = spec.hull()
    return Cylinder(
        word=tuple(word),
        interval=(scale * lo + offset, scale * hi + offset),
        prob=word_prob(spec, word),
    )


def wedge_depth(a: Word, b: Word) -> int:
    """1-based index of the first disagreement of two distinct equal-length words."""
    if len(a) != len(b):
        raise ValueError("wedge depth needs words of equal length")
    for k, (da, db) in enumerate(zip(a, b), start=1):
        if da != db:
            return k
    raise ValueError("wedge depth is undefined for identical words")


def square_ifs(spec: IfsSpec) -> IfsSpec:
    """The composed system {phi_i o phi_j} with ratio r^2 and weights p_i p_j."""
    translations = []
    probs = []
    for i, (ti, pi) in enumerate(zip(spec.translations, spec.probs)):
        for tj, pj in zip(spec.translations, spec.probs):
            translations.append(ti + spec.r * tj)
            probs.append(pi * pj)
    return IfsSpec(r=spec.r * spec.r, translations=tuple(translations), probs=tuple(probs))


# ---------------------------------------------------------------------------
# Digit sampling
# ---------------------------------------------------------------------------


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([_RNG_DOMAIN, seed, stream])


def sample_words(
    probs: Sequence[Fraction],
    count: int,
    length: int,
    seed: int,
    *,
    stream: int = 0,
    prefix: Word = (),
) -> np.ndarray:
    """Draw ``count`` digit words of ``len(prefix) + length`` IID digits after the prefix.

    Deterministic in (seed, stream).  Digits follow the exact rational law:
    the float inverse-CDF decision is corrected by exact comparisons whenever
    a uniform draw lands within 1e-9 of a cell boundary, so rounding of the
    cumulative weights cannot bias the law.
    """
    if count < 0 or length < 0:
        raise ConfigError("count and length must be nonnegative")
    cum_exact = []
    acc = Fraction(0)
    for p in probs:
        acc += p
        cum_exact.append(acc)
    if acc != 1:
        raise ConfigError("probabilities must sum to 1 exactly")
    cum = np.array([float(c) for c in cum_exact])
    u = _rng(seed, stream).random((count, length))
    digits = np.searchsorted(cum, u, side="right").astype(np.int64) + 1

    near = np.zeros(u.shape, dtype=bool)
    for c in cum:
        near |= np.abs(u - c) < _BOUNDARY_SLACK
    near |= digits > len(probs)
    for i, j in zip(*np.nonzero(near)):
        exact_u = Fraction(float(u[i, j]))
        digits[i, j] = 1 + sum(1 for c in cum_exact if c <= exact_u)

    if prefix:
        head = np.tile(np.array(prefix, dtype=np.int64), (count, 1))
        digits = np.hstack([head, digits]) if length else head
    return digits


def sample_word(
    probs: Sequence[Fraction],
    length: int,
    seed: int,
    *,
    stream: int = 0,
    prefix: Word = (),
) -> Word:
    return tuple(int(d) for d in sample_words(probs, 1, length, seed, stream=stream, prefix=prefix)[0])


# ---------------------------------------------------------------------------
# Attractor points from digit words
# ---------------------------------------------------------------------------


def point_fraction(spec: IfsSpec, word: Word, depth: int | None = None) -> tuple[Fraction, Fraction]:
    """Exact truncated attractor point and its error bound.

    The depth-K truncation is the left endpoint of the word's depth-K
    cylinder, phi_{a_1..a_K}(min conv hull); the true point lies in that
    cylinder, so the error is at most its length r^K * |hull|.
    """
    if depth is None:
        depth = len(word)
    if depth > len(word):
        raise ConfigError(f"truncation depth {depth} exceeds word length {len(word)}")
    lo, hi = spec.hull()
    scale, offset = word_map(spec, tuple(word[:depth]))
    return offset + scale * lo, scale * (hi - lo)


def point_of_word(spec: IfsSpec, word: Word, depth: int, frac_bits: int) -> FixedReal:
    """Fixed-point value of the depth-``depth`` truncation with a certified error bound.

    Evaluated by a right-to-left affine Horner recursion on integer
    mantissas; each step floors once, and the floor error is contracted by r
    at every later step, so the rounding contribution stays below
    2^(1-frac_bits) / (1 - r) on top of the truncation bound.
    """
    if depth > len(word):
        raise ConfigError(f"truncation depth {depth} exceeds word length {len(word)}")
    lo, hi = spec.hull()
    one = 1 << frac_bits
    p, q = spec.r.numerator, spec.r.denominator
    t_fixed = [(t.numerator << frac_bits) // t.denominator for t in spec.translations]
    acc = (lo.numerator << frac_bits) // lo.denominator
    for digit in reversed(word[:depth]):
        acc = (acc * p) // q + t_fixed[digit - 1]
    trunc = spec.r**depth * (hi - lo)
    rounding = Fraction(2, one) / (1 - spec.r)
    return FixedReal(mantissa=acc, frac_bits=frac_bits, err=float_up(trunc + rounding))


# ---------------------------------------------------------------------------
# Gap location helpers
# ---------------------------------------------------------------------------


def gap_point_depth(spec: IfsSpec, point: Fraction, max_depth: int = 256) -> int:
    """Smallest N >= 1 such that every depth-N cylinder avoids ``point``.

    Walks down the (at most one) cylinder chain containing the point; the
    walk ends when the point falls into a gap.  Raises ConfigError when the
    point stays inside cylinders up to ``max_depth`` (it is then, as far as
    this check can tell, a point of the attractor).
    """
    lo, hi = spec.hull()
    offset = Fraction(0)
    scale = Fraction(1)
    for level in range(max_depth):
        child_scale = scale * spec.r
        containing = None
        for t in spec.translations:
            c_lo = child_scale * lo + offset + scale * t
            c_hi = child_scale * hi + offset + scale * t
            if c_lo <= point <= c_hi:
                containing = t
                break
        if containing is None:
            return level + 1
        offset += scale * containing
        scale = child_scale
    raise ConfigError(
        f"point {point} lies inside attractor cylinders down to depth {max_depth}; "
        "choose a point in a gap"
    )


def suggest_kappa(spec: IfsSpec, depth: int = 1) -> Fraction:
    """Midpoint offset of the widest depth-``depth`` gap lying above 1.

    Returns kappa such that 1 + kappa is the midpoint of that gap (hence
    certifiably outside the attractor).  The choice of depth, and of kappa
    itself, is a free experiment parameter; this is only a convenient default.
    """
    if len(spec.translations) ** depth > 1 << 16:
        raise ConfigError("gap scan at this depth would enumerate too many cylinders")
    intervals = []

    def walk(word: Word) -> None:
        if len(word) == depth:
            intervals.append(cylinder(spec, word).interval)
            return
        for digit in spec.alphabet:
            walk(word + (digit,))

    walk(())
    intervals.sort()
    best: tuple[Fraction, Fraction] | None = None
    for (_, left_hi), (right_lo, _) in zip(intervals, intervals[1:]):
        if left_hi >= right_lo or left_hi < 1:
            continue
        if best is None or right_lo - left_hi > best[1] - best[0]:
            best = (left_hi, right_lo)
    if best is None:
        raise ConfigError("no gap above 1 at this depth")
    return (best[0] + best[1]) / 2 - 1
