"""Certified fixed-point evaluation of orbits f_n(x) mod 1.

Values are big-integer mantissas with a fixed number of binary fractional
digits.  Reducing mod 1 is exact in this representation (drop the integer
bits), and one truncating multiply per step gives the clean error recurrence

    eps_{n+1} <= x_upper * eps_n + 2^-B,

so a precision B of roughly N*log2(x_upper) + log2(1/tol) fractional bits
certifies every value of an orbit of length N to absolute error tol.  Error
bounds are accumulated in exact rational arithmetic and only rounded outward
when reported; statistics downstream refuse fragments whose certificate
exceeds their own threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import TYPE_CHECKING

import numpy as np

from .errors import ConfigError, PrecisionError, ResourceLimitError

if TYPE_CHECKING:  # pragma: no cover
    from .families import SequenceFamily

DEFAULT_TOL = 2.0**-40
STATS_MAX_ERR = 2.0**-30
GUARD_BITS = 8
DEFAULT_BIT_CEILING = 1 << 22

# Allowance for converting a wide mantissa to a double via its top 63 bits.
_FLOAT_CONVERSION_ERR = 2.0**-60


def float_up(x: Fraction | float) -> float:
    """Round a nonnegative bound outward to the nearest representable double."""
    fr = Fraction(x) if not isinstance(x, Fraction) else x
    try:
        f = fr.numerator / fr.denominator
    except OverflowError:
        return math.inf
    if Fraction(f) < fr:
        f = math.nextafter(f, math.inf)
    return f


@dataclass(frozen=True)
class FixedReal:
    """value = mantissa / 2^frac_bits, with a certified absolute error bound."""

    mantissa: int
    frac_bits: int
    err: float = 0.0

    @classmethod
    def from_fraction(cls, value: Fraction, frac_bits: int, err: float = 0.0) -> "FixedReal":
        mantissa = (value.numerator << frac_bits) // value.denominator
        if Fraction(mantissa, 1 << frac_bits) != value:
            err = float_up(Fraction(err) + Fraction(1, 1 << frac_bits))
        return cls(mantissa=mantissa, frac_bits=frac_bits, err=err)

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.mantissa, 1 << self.frac_bits)

    def to_float(self) -> float:
        return _mantissa_to_float(self.mantissa, self.frac_bits)

    def mul(self, other: "FixedReal") -> "FixedReal":
        """Truncating multiply; the error bound is propagated outward."""
        if self.frac_bits != other.frac_bits:
            raise ConfigError("operands must share frac_bits")
        bits = self.frac_bits
        mantissa = (self.mantissa * other.mantissa) >> bits
        err = (
            Fraction(self.err) * (abs(other.fraction) + Fraction(other.err))
            + Fraction(other.err) * abs(self.fraction)
            + Fraction(1, 1 << bits)
        )
        return FixedReal(mantissa=mantissa, frac_bits=bits, err=float_up(err))

    def add(self, other: "FixedReal") -> "FixedReal":
        if self.frac_bits != other.frac_bits:
            raise ConfigError("operands must share frac_bits")
        return FixedReal(
            mantissa=self.mantissa + other.mantissa,
            frac_bits=self.frac_bits,
            err=float_up(Fraction(self.err) + Fraction(other.err)),
        )

    def frac_part(self) -> "FixedReal":
        mask = (1 << self.frac_bits) - 1
        return FixedReal(mantissa=self.mantissa & mask, frac_bits=self.frac_bits, err=self.err)


def _mantissa_to_float(mantissa: int, frac_bits: int) -> float:
    if frac_bits <= 62:
        return mantissa / (1 << frac_bits)
    return (mantissa >> (frac_bits - 62)) / float(1 << 62)


def required_bits(
    n_max: int,
    x_upper: float | Fraction,
    tol: float = DEFAULT_TOL,
    *,
    guard: int = GUARD_BITS,
    ceiling: int = DEFAULT_BIT_CEILING,
) -> int:
    """Fractional bits needed so an orbit of length n_max stays within tol.

    Solves the error recurrence eps_{n+1} <= x_upper*eps_n + 2^-B in closed
    form; the extra term covers the geometric-sum denominator when x_upper is
    close to 1 (never more than log2 n_max bits).
    """
    if n_max < 1:
        raise ConfigError("n_max must be at least 1")
    xu = float(x_upper)
    if xu < 1.0:
        raise ConfigError("x_upper must be at least 1")
    if not (0.0 < tol < 1.0):
        raise ConfigError("tol must lie in (0,1)")
    base = n_max * math.log2(xu) + math.log2(1.0 / tol)
    if xu == 1.0:
        extra = math.ceil(math.log2(n_max)) if n_max > 1 else 0
    else:
        extra = math.ceil(max(0.0, min(math.log2(n_max) if n_max > 1 else 0.0, -math.log2(xu - 1.0))))
    bits = math.ceil(base) + extra + guard
    if bits > ceiling:
        raise ResourceLimitError(
            f"requested precision {bits} bits exceeds ceiling {ceiling}"
        )
    return bits


def required_bits_family(
    family: "SequenceFamily",
    n_max: int,
    x_upper: float | Fraction,
    tol: float = DEFAULT_TOL,
    *,
    guard: int = GUARD_BITS,
    ceiling: int = DEFAULT_BIT_CEILING,
) -> int:
    """Precision for a family orbit: the power-orbit bits plus the family's own headroom."""
    bits = required_bits(n_max, x_upper, tol, guard=guard, ceiling=ceiling)
    bits += family.extra_bits(n_max, float(x_upper))
    if bits > ceiling:
        raise ResourceLimitError(f"requested precision {bits} bits exceeds ceiling {ceiling}")
    return bits


def certified_word_depth(
    r: Fraction | float,
    hull_len: Fraction | float,
    deriv_sup_log2: float,
    tol: float,
) -> int:
    """Truncation depth K so that moving x by r^K*|hull| moves f_n(x) by less than tol/2."""
    rf = float(r)
    need = deriv_sup_log2 + math.log2(max(float(hull_len), 2.0**-300)) + math.log2(2.0 / tol)
    return max(1, math.ceil(need / -math.log2(rf)) + 1)


@dataclass(frozen=True)
class OrbitFragment:
    """Machine-precision fractional parts of f_1(x)..f_N(x) plus one certificate.

    ``max_err`` bounds the mod-1 distance between each reported value and the
    true one.  ``valid`` records whether that bound met the tolerance the
    fragment was produced under; consumers enforce their own limit through
    :meth:`certified_values`.
    """

    values: np.ndarray
    max_err: float
    valid: bool
    meta: dict = field(default_factory=dict)

    @property
    def n_max(self) -> int:
        return len(self.values)

    def certified_values(self, limit: float = STATS_MAX_ERR) -> np.ndarray:
        if not (self.max_err <= limit):
            raise PrecisionError(
                f"fragment certificate {self.max_err:.3e} exceeds the consumer limit {limit:.3e}"
            )
        return self.values


def _check_input(x: FixedReal, n_max: int, x_upper: float, need_bits: int) -> None:
    if x.frac_bits < need_bits:
        raise PrecisionError(
            f"input has {x.frac_bits} fractional bits but {need_bits} are required "
            f"for n_max={n_max}"
        )
    xf = x.to_float()
    if xf < 1.0 - 2.0**-20 or xf > x_upper * (1.0 + 2.0**-20):
        raise ConfigError(f"orbit start {xf!r} outside [1, x_upper={x_upper!r}]")


def _full_powers(x_man: int, frac_bits: int, n_max: int) -> list[int]:
    # Full mantissas of x^1..x^N; one floor per multiply, integer part kept.
    out = [x_man]
    y = x_man
    for _ in range(n_max - 1):
        y = (y * x_man) >> frac_bits
        out.append(y)
    return out


def _iter_error(n: int, xu: Fraction, frac_bits: int, eps1: Fraction) -> Fraction:
    # eps_n from eps_{k+1} <= xu*eps_k + 2^-B, closed form.
    ulp = Fraction(1, 1 << frac_bits)
    if xu == 1:
        return eps1 + n * ulp
    growth = xu ** (n - 1)
    return growth * eps1 + ulp * (growth - 1) / (xu - 1)


def _fracs_to_floats(mantissas: list[int], frac_bits: int) -> np.ndarray:
    mask = (1 << frac_bits) - 1
    return np.array([_mantissa_to_float(m & mask, frac_bits) for m in mantissas])


def powers_mod_one(
    x: FixedReal,
    n_max: int,
    *,
    x_upper: float | Fraction,
    tol: float = DEFAULT_TOL,
) -> OrbitFragment:
    """Fractional parts of x^n for n = 1..n_max with a certified error bound.

    Refuses (raises PrecisionError) if x carries fewer fractional bits than
    the recurrence needs; never degrades silently.
    """
    xu = float(x_upper)
    need = required_bits(n_max, xu, tol)
    _check_input(x, n_max, xu, need)
    fulls = _full_powers(x.mantissa, x.frac_bits, n_max)
    values = _fracs_to_floats(fulls, x.frac_bits)

    xu_frac = Fraction(x_upper) if not isinstance(x_upper, Fraction) else x_upper
    err = _iter_error(n_max, xu_frac, x.frac_bits, Fraction(0))
    if x.err:
        err += n_max * xu_frac ** (n_max - 1) * Fraction(x.err)
    max_err = float_up(err) + _FLOAT_CONVERSION_ERR
    return OrbitFragment(
        values=values,
        max_err=max_err,
        valid=max_err <= tol,
        meta={"kind": "pure_power", "frac_bits": x.frac_bits, "x_err": x.err},
    )


def family_orbit_mod_one(
    family: "SequenceFamily",
    x: FixedReal,
    n_max: int,
    *,
    x_upper: float | Fraction,
    tol: float = DEFAULT_TOL,
) -> OrbitFragment:
    """Fractional parts of f_n(x) for n = 1..n_max for a supported family.

    Polynomial-in-x^n kinds run on exact big-integer recurrences; the
    log-augmented kind adds n*log(x) computed at matching precision.  The
    certificate covers iteration error, the family's own amplification, the
    input's error bound, and the final double conversion.
    """
    from .families import SequenceFamily  # local import to avoid a cycle

    if not isinstance(family, SequenceFamily):
        raise ConfigError("family_orbit_mod_one needs a built-in family description")
    xu = float(x_upper)
    need = required_bits_family(family, n_max, xu, tol)
    _check_input(x, n_max, xu, need)
    bits = x.frac_bits
    one = 1 << bits
    xu_frac = Fraction(x_upper) if not isinstance(x_upper, Fraction) else x_upper
    ulp = Fraction(1, one)

    kind = family.kind
    if kind == "pure_power":
        return powers_mod_one(x, n_max, x_upper=x_upper, tol=tol)

    if x.err:
        log2_amp = math.log2(x.err) + family.derivative_sup_log2(n_max, xu)
        input_term = math.inf if log2_amp > 1000.0 else 2.0**log2_amp
    else:
        input_term = 0.0

    if kind == "poly_coeff":
        g_exact = family.g_value(x.fraction)
        g_man = (g_exact.numerator << bits) // g_exact.denominator
        z = (g_man * x.mantissa) >> bits
        fulls = [z]
        for _ in range(n_max - 1):
            z = (z * x.mantissa) >> bits
            fulls.append(z)
        eps1 = ulp * (1 + xu_frac)
        err = _iter_error(n_max, xu_frac, bits, eps1)
    elif kind == "poly_scale":
        powers = _full_powers(x.mantissa, bits, n_max)
        fulls = []
        for n, y in enumerate(powers, start=1):
            gn = family.g_value(Fraction(n))
            fulls.append((y * gn.numerator) // gn.denominator)
        # g has positive coefficients, so g(n)*eps_n peaks at n_max
        err = family.g_value(Fraction(n_max)) * _iter_error(n_max, xu_frac, bits, Fraction(0)) + ulp
    elif kind == "power_sum":
        powers = _full_powers(x.mantissa, bits, n_max)
        fulls = []
        acc = 0
        for y in powers:
            acc += y  # the trailing +1 is an exact integer and never moves the frac part
            fulls.append(acc)
        err = n_max * _iter_error(n_max, xu_frac, bits, Fraction(0))
    elif kind == "log_augmented":
        base = family.base
        assert base is not None
        base_frag_fulls, base_err = _family_fulls(base, x, n_max, xu_frac, bits)
        log_man, log_err = _fixed_log(x.mantissa, bits)
        fulls = [y + n * log_man for n, y in enumerate(base_frag_fulls, start=1)]
        err = base_err + n_max * (log_err + Fraction(x.err))
    else:  # pragma: no cover - constructor forbids unknown kinds
        raise ConfigError(f"unsupported family kind {kind!r}")

    values = _fracs_to_floats(fulls, bits)
    max_err = float_up(err) + input_term + _FLOAT_CONVERSION_ERR
    return OrbitFragment(
        values=values,
        max_err=max_err,
        valid=max_err <= tol,
        meta={"kind": kind, "frac_bits": bits, "x_err": x.err},
    )


def _family_fulls(
    family: "SequenceFamily",
    x: FixedReal,
    n_max: int,
    xu_frac: Fraction,
    bits: int,
) -> tuple[list[int], Fraction]:
    # Full mantissas + iteration error for the polynomial kinds (used as the
    # base of a log-augmented family; x.err is accounted for by the caller).
    ulp = Fraction(1, 1 << bits)
    kind = family.kind
    if kind == "pure_power":
        return _full_powers(x.mantissa, bits, n_max), _iter_error(n_max, xu_frac, bits, Fraction(0))
    if kind == "poly_coeff":
        g_exact = family.g_value(x.fraction)
        g_man = (g_exact.numerator << bits) // g_exact.denominator
        z = (g_man * x.mantissa) >> bits
        fulls = [z]
        for _ in range(n_max - 1):
            z = (z * x.mantissa) >> bits
            fulls.append(z)
        return fulls, _iter_error(n_max, xu_frac, bits, ulp * (1 + xu_frac))
    if kind == "poly_scale":
        powers = _full_powers(x.mantissa, bits, n_max)
        fulls = []
        for n, y in enumerate(powers, start=1):
            gn = family.g_value(Fraction(n))
            fulls.append((y * gn.numerator) // gn.denominator)
        err = family.g_value(Fraction(n_max)) * _iter_error(n_max, xu_frac, bits, Fraction(0)) + ulp
        return fulls, err
    if kind == "power_sum":
        powers = _full_powers(x.mantissa, bits, n_max)
        fulls = []
        acc = 0
        for y in powers:
            acc += y
            fulls.append(acc)
        return fulls, n_max * _iter_error(n_max, xu_frac, bits, Fraction(0))
    raise ConfigError("log-augmented families cannot be nested")


def _fixed_log(mantissa: int, bits: int) -> tuple[int, Fraction]:
    """ln(mantissa/2^bits) as a fixed-point mantissa with a small error bound."""
    import mpmath

    with mpmath.workprec(bits + 32):
        value = mpmath.log(mpmath.mpf((mantissa, -bits)))
        man = int(mpmath.floor(value * (1 << bits)))
    # floor plus a couple of ulp of working-precision slack
    return man, Fraction(4, 1 << bits)
