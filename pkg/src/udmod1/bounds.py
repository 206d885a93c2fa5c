"""Explicit decay machinery: constants, word filters, filtered exponential
sums, oscillatory-integral checks, and the correlation-decay experiment.

The pipeline certifies, for an admissible system and function family, a
per-step decay rate for integrals of e(l(f_n - f_m)) against the measure
conditioned on a cylinder away from 1.  Its ingredients:

  * a decay envelope: the maximum of four explicit terms in (delta, kappa,
    r, entropy); any delta with envelope < 1 is admissible, and the solver
    returns the largest such delta on a refined geometric grid;
  * a separation depth: the cylinder depth at which every cylinder is
    multiplicatively flat (sup/inf < 1 + delta) and avoids the point
    1 + kappa; both conditions are decided in exact rational arithmetic;
  * a filter depth M(n) balancing the oscillation budget, with a two-sided
    exponent check on the quantity 2 pi C1 |l| |I| n^C2 x1^(n-1) r^(N+2M);
  * heavy-word sets: depth-k words whose probability exceeds
    e^(k(-h+delta)), with exact mass by multinomial digit-type grouping and
    a fitted large-deviation rate eta;
  * the filtered exponential sum W over words none of whose window prefixes
    are heavy, its L2 norm by oscillation-aware Simpson quadrature, and the
    derivative lower bound gamma that feeds the van der Corput inequality
    |integral of e(phi)| <= 1/gamma for monotonic phi'.

Monte Carlo estimates always report the modulus of the complex sample mean,
never the mean of moduli.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from .config import as_fraction
from .errors import ConfigError, FlaggedBoundError
from .families import HypothesisCertificate, SequenceFamily, _poly_eval
from .fixedpoint import DEFAULT_TOL, float_up
from .ifs import (
    IfsSpec,
    Word,
    cylinder,
    entropy,
    entropy_condition,
    gap_point_depth,
    sample_words,
    validate_ifs,
    word_map,
    word_prob,
)
from .montecarlo import complex_mean_stderr
from .stats import sampled_orbit_values

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# Decay envelope and its admissible margin
# ---------------------------------------------------------------------------


def envelope_terms(delta: float, kappa: float, r: float, h: float) -> tuple[float, float, float, float]:
    """The four explicit terms whose maximum must fall below 1.

    With E = log(1+kappa) / (-2 log r):

        r^delta
        r^(-2 delta) * (e^(2(-h+delta)) / r)^E
        (1+delta) * r^(-3 delta) * (e^(2(-h+delta)) / r)^E
        (1+delta) * r^(-3 delta) * (e^(-h+delta) / r^delta)^E
    """
    if not (0 < r < 1) or kappa <= 0 or delta < 0:
        raise ConfigError("envelope needs r in (0,1), kappa > 0, delta >= 0")
    ln_r = math.log(r)
    E = math.log1p(kappa) / (-2.0 * ln_r)
    t1 = math.exp(delta * ln_r)
    core2 = 2.0 * (-h + delta) - ln_r
    t2 = math.exp(-2.0 * delta * ln_r + E * core2)
    t3 = math.exp(math.log1p(delta) - 3.0 * delta * ln_r + E * core2)
    core4 = (-h + delta) - delta * ln_r
    t4 = math.exp(math.log1p(delta) - 3.0 * delta * ln_r + E * core4)
    return (t1, t2, t3, t4)


def envelope_base(delta: float, kappa: float, r: float, h: float) -> float:
    return max(envelope_terms(delta, kappa, r, h))


@dataclass(frozen=True)
class DeltaSolution:
    delta: float | None
    gamma: float | None
    feasible: bool
    min_gamma: float
    min_gamma_delta: float


def solve_delta(
    kappa: float | Fraction,
    r: float,
    h: float,
    *,
    rel_tol: float = 1e-3,
    gamma_cap: float = 1.0 - 1e-6,
) -> DeltaSolution:
    """Largest admissible margin delta on a geometric grid, refined by bisection.

    The feasible set {envelope <= gamma_cap} is an interval because the first
    term decreases in delta while the rest increase; bisection against the
    upper edge is therefore sound.  On failure the solution carries the
    smallest envelope seen and where it occurred.
    """
    kf = float(kappa)
    grid = [2.0**-k for k in range(0, 64)]
    gammas = [envelope_base(d, kf, r, h) for d in grid]
    min_gamma = min(gammas)
    min_gamma_delta = grid[gammas.index(min_gamma)]
    feasible = [d for d, g in zip(grid, gammas) if g <= gamma_cap]
    if not feasible:
        return DeltaSolution(None, None, False, min_gamma, min_gamma_delta)
    lo = max(feasible)
    hi = lo * 2.0
    if hi <= 1.0 and envelope_base(hi, kf, r, h) > gamma_cap:
        while hi - lo > rel_tol * lo:
            mid = 0.5 * (lo + hi)
            if envelope_base(mid, kf, r, h) <= gamma_cap:
                lo = mid
            else:
                hi = mid
    return DeltaSolution(lo, envelope_base(lo, kf, r, h), True, min_gamma, min_gamma_delta)


# ---------------------------------------------------------------------------
# Separation depth and filter depth
# ---------------------------------------------------------------------------


def separation_depth(
    spec: IfsSpec,
    kappa: Fraction | float | str,
    delta: Fraction | float | str,
    max_depth: int = 400,
) -> int:
    """Smallest depth at which cylinders are delta-flat and avoid 1 + kappa.

    Flatness means sup/inf < 1 + delta for every cylinder, which reduces to
    the exact rational inequality r^N |hull| < delta * min(hull).  Avoidance
    is decided by walking the cylinder chain that contains 1 + kappa until it
    falls into a gap.  Both conditions are monotone in the depth.
    """
    kappa = as_fraction(kappa)
    delta = as_fraction(delta)
    if kappa <= 0 or delta <= 0:
        raise ConfigError("kappa and delta must be positive")
    lo, hi = spec.hull()
    n_gap = gap_point_depth(spec, 1 + kappa, max_depth)
    n_flat = 1
    acc = spec.r
    while acc * (hi - lo) >= delta * lo:
        acc *= spec.r
        n_flat += 1
        if n_flat > max_depth:
            raise ConfigError("flatness depth exceeds the search cap")
    return max(n_flat, n_gap)


@dataclass(frozen=True)
class DepthCheck:
    log_middle: float
    log_lower: float
    log_upper: float
    ok: bool
    paper_log_lower: float
    paper_log_upper: float
    paper_lower_ok: bool
    paper_upper_ok: bool


def filter_depth(
    n: int,
    l: int,
    c1: float,
    c2: float,
    hull_len: float,
    x1: float,
    r: float,
    delta: Fraction | float | str,
    sep_depth: int,
    *,
    grouped_log: bool = True,
    check: bool = True,
) -> tuple[int, DepthCheck | None]:
    """Filter depth M(n) and the two-sided exponent check on its defining quantity.

    M = floor(1 + (log(2 pi C1 |l| |I|) + C2 log n + (n-1) log x1) / (-2 log r))
        + ceil(delta * n).

    With that M, log of Q = 2 pi C1 |l| |I| n^C2 x1^(n-1) r^(sep+2M) provably
    lies in [(2 ceil(delta n) + sep + 2) log r, (2 ceil(delta n) + sep) log r];
    the check reports this corrected window, and alongside it the looser
    single-delta window with exponents delta*n + sep (+2), whose lower half
    can fail once ceil(delta n) > delta n.  ``grouped_log`` selects how the
    leading logarithm groups its factors; the alternative reading differs by
    an n-independent constant.
    """
    if n < 1 or l == 0:
        raise ConfigError("filter depth needs n >= 1 and l != 0")
    delta = as_fraction(delta)
    ln_r = math.log(r)
    if grouped_log:
        head = math.log(2.0 * math.pi * c1 * abs(l) * hull_len)
    else:
        head = math.log(2.0 * math.pi) + c1 * abs(l) * hull_len
    num = head + c2 * math.log(n) + (n - 1) * math.log(x1)
    bump = math.ceil(delta * n)
    m = max(1, math.floor(1.0 + num / (-2.0 * ln_r)) + bump)
    if not check:
        return m, None
    log_mid = num + (sep_depth + 2 * m) * ln_r
    log_lower = (2 * bump + sep_depth + 2) * ln_r
    log_upper = (2 * bump + sep_depth) * ln_r
    dn = float(delta * n)
    paper_lower = (dn + sep_depth + 2) * ln_r
    paper_upper = (dn + sep_depth) * ln_r
    slack = 1e-9
    return m, DepthCheck(
        log_middle=log_mid,
        log_lower=log_lower,
        log_upper=log_upper,
        ok=log_lower - slack <= log_mid <= log_upper + slack,
        paper_log_lower=paper_lower,
        paper_log_upper=paper_upper,
        paper_lower_ok=log_mid >= paper_lower - slack,
        paper_upper_ok=log_mid <= paper_upper + slack,
    )


# ---------------------------------------------------------------------------
# Heavy words and the word filter
# ---------------------------------------------------------------------------


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for tail in _compositions(total - head, parts - 1):
            yield (head,) + tail


def heavy_mass(probs: Sequence[Fraction], k: int, delta: float | Fraction) -> Fraction:
    """Exact mass of depth-k words with probability >= e^(k(-h+delta)).

    Word probability depends only on digit counts, so the mass is summed over
    multinomial digit types: cost polynomial in k for a fixed alphabet.
    """
    if k < 1:
        raise ConfigError("k must be at least 1")
    h = entropy(probs)
    thresh = k * (-h + float(delta))
    support = [(i, p) for i, p in enumerate(probs) if p > 0]
    logs = [math.log(float(p)) for _, p in support]
    mass = Fraction(0)
    for counts in _compositions(k, len(support)):
        if sum(c * lg for c, lg in zip(counts, logs)) < thresh:
            continue
        ways = 1
        rest = k
        weight = Fraction(1)
        for c, (_, p) in zip(counts, support):
            ways *= math.comb(rest, c)
            rest -= c
            weight *= p**c
        mass += ways * weight
    return mass


def heavy_members(probs: Sequence[Fraction], k: int, delta: float | Fraction) -> list[Word]:
    """Explicit heavy word list for small depths (enumeration guard 2^20)."""
    if len(probs) ** k > 1 << 20:
        raise ConfigError("heavy-member enumeration is guarded at |A|^k <= 2^20")
    h = entropy(probs)
    thresh = k * (-h + float(delta))
    logs = [math.log(float(p)) if p > 0 else -math.inf for p in probs]
    out = []
    for word in itertools.product(range(1, len(probs) + 1), repeat=k):
        if sum(logs[d - 1] for d in word) >= thresh:
            out.append(word)
    return out


@dataclass(frozen=True)
class EtaFit:
    eta: float
    vacuous: bool
    verified: bool
    ks: tuple[int, ...]
    masses: tuple[float, ...]


def fit_eta(probs: Sequence[Fraction], delta: float | Fraction, ks: Iterable[int]) -> EtaFit:
    """Empirical large-deviation rate: minus the LS slope of log mass against k.

    All-zero masses mean the heavy sets are empty and the tail bound is
    vacuous; the sentinel eta = +inf is returned with a flag.  Verification
    allows a factor-2 slack in the exponent for finite-k effects.
    """
    ks = tuple(int(k) for k in ks)
    masses = [heavy_mass(probs, k, delta) for k in ks]
    floats = tuple(float(m) for m in masses)
    pos = [(k, m) for k, m in zip(ks, floats) if m > 0.0]
    if not pos:
        return EtaFit(eta=math.inf, vacuous=True, verified=True, ks=ks, masses=floats)
    if len(pos) == 1:
        eta = -math.log(pos[0][1]) / pos[0][0]
    else:
        xs = np.array([k for k, _ in pos], dtype=float)
        ys = np.array([math.log(m) for _, m in pos])
        eta = -float(np.polyfit(xs, ys, 1)[0])
    verified = all(m <= math.exp(-eta * k / 2.0) * (1.0 + 1e-12) for k, m in zip(ks, floats))
    return EtaFit(eta=eta, vacuous=False, verified=verified, ks=ks, masses=floats)


@dataclass(frozen=True)
class WordFilter:
    """Depth-M words none of whose window prefixes are heavy.

    The window is max(1, floor(delta*M)) <= k <= M; the lower end is clamped
    to 1 since depth-0 prefixes carry no information.  Exclusion is monotone
    in the prefix: once a window prefix is heavy, no suffix can re-admit the
    word.
    """

    probs: tuple[Fraction, ...]
    m: int
    delta: Fraction
    window: tuple[int, int]
    mode: str
    words: tuple[Word, ...] | None
    kept_mass: Fraction | None
    accept_rate: float
    meta: dict = field(default_factory=dict)

    def admits(self, word: Word) -> bool:
        if len(word) != self.m:
            raise ConfigError(f"filter expects words of length {self.m}")
        h = entropy(self.probs)
        dv = float(self.delta)
        acc = 0.0
        k_lo, k_hi = self.window
        for k, digit in enumerate(word, start=1):
            p = self.probs[digit - 1]
            acc += math.log(float(p)) if p > 0 else -math.inf
            if k_lo <= k <= k_hi and acc >= k * (-h + dv):
                return False
        return True


def build_word_filter(
    probs: Sequence[Fraction],
    m: int,
    delta: Fraction | float | str,
    mode: str = "enumerated",
    *,
    enum_cap: int = 1 << 20,
    samples: int = 4096,
    seed: int = 0,
    min_accept: float = 1e-3,
) -> WordFilter:
    probs = tuple(Fraction(p) for p in probs)
    delta = as_fraction(delta)
    if m < 1 or delta <= 0:
        raise ConfigError("filter needs m >= 1 and delta > 0")
    k_lo = max(1, math.floor(delta * m))
    window = (k_lo, m)
    h = entropy(probs)
    dv = float(delta)
    thresholds = {k: k * (-h + dv) for k in range(k_lo, m + 1)}
    logs = [math.log(float(p)) if p > 0 else -math.inf for p in probs]

    if mode == "enumerated":
        if len(probs) ** m > enum_cap:
            raise ConfigError(f"enumerated filter is guarded at |A|^M <= {enum_cap}")
        words: list[Word] = []
        kept = Fraction(0)

        def walk(word: tuple[int, ...], logp: float, prob: Fraction) -> None:
            nonlocal kept
            k = len(word)
            if k_lo <= k and logp >= thresholds[k]:
                return  # heavy prefix: the whole subtree is excluded
            if k == m:
                words.append(word)
                kept += prob
                return
            for digit, (lg, p) in enumerate(zip(logs, probs), start=1):
                walk(word + (digit,), logp + lg, prob * p)

        walk((), 0.0, Fraction(1))
        rate = float(kept)
        filt = WordFilter(
            probs=probs,
            m=m,
            delta=delta,
            window=window,
            mode=mode,
            words=tuple(words),
            kept_mass=kept,
            accept_rate=rate,
            meta={"rejected_mass": float(1 - kept)},
        )
    elif mode == "sampled":
        draws = sample_words(probs, samples, m, seed, stream=0xF1)
        filt = WordFilter(
            probs=probs,
            m=m,
            delta=delta,
            window=window,
            mode=mode,
            words=None,
            kept_mass=None,
            accept_rate=0.0,
            meta={},
        )
        accepted = sum(1 for row in draws if filt.admits(tuple(int(d) for d in row)))
        rate = accepted / samples
        filt = WordFilter(
            probs=probs,
            m=m,
            delta=delta,
            window=window,
            mode=mode,
            words=None,
            kept_mass=None,
            accept_rate=rate,
            meta={"samples": samples, "seed": seed},
        )
    else:
        raise ConfigError(f"unknown filter mode {mode!r}")

    if filt.accept_rate < min_accept:
        raise FlaggedBoundError(
            f"filter acceptance rate {filt.accept_rate:.3e} below {min_accept:.0e} "
            f"(m={m}, delta={float(delta)}, window={window})"
        )
    return filt


# ---------------------------------------------------------------------------
# Filtered exponential sums
# ---------------------------------------------------------------------------


def _phase_mod1(
    spec: IfsSpec,
    family: SequenceFamily,
    prefix: Word,
    word: Word,
    n: int,
    m: int,
    l: int,
    x: Fraction,
) -> float:
    """l * (f_n - f_m) at the word's image of x, reduced mod 1.

    For the polynomial kinds the phase is an exact rational and the reduction
    is exact; only the final value is rounded to a double.
    """
    scale, offset = word_map(spec, tuple(prefix) + tuple(word))
    y = scale * x + offset
    coeffs_n = family.poly_coeffs(n)
    coeffs_m = family.poly_coeffs(m)
    theta = l * (_poly_eval(coeffs_n, y) - _poly_eval(coeffs_m, y))
    frac = theta - math.floor(theta)
    out = float(frac)
    w = family.log_weight(n) - family.log_weight(m)
    if w:
        out = (out + l * w * math.log(float(y))) % 1.0
    return out


@dataclass(frozen=True)
class ExpSumResult:
    value: complex
    stderr: float | None
    mode: str
    kept_mass: float


def filtered_exp_sum(
    spec: IfsSpec,
    family: SequenceFamily,
    prefix: Word,
    filt: WordFilter,
    n: int,
    m: int,
    l: int,
    x: Fraction | float,
    *,
    samples: int = 4096,
    seed: int = 0,
) -> ExpSumResult:
    """The filtered sum sum_{a} p_a e(l(f_n - f_m)(phi_{prefix+a}(x))).

    Enumerated filters are summed exactly (modulus never exceeds the kept
    mass); sampled filters give an unbiased indicator estimate with a
    standard error.
    """
    if m >= n:
        raise ConfigError("needs m < n")
    if l == 0:
        raise ConfigError("l must be nonzero")
    xf = as_fraction(x)
    if filt.mode == "enumerated":
        assert filt.words is not None
        re_parts: list[float] = []
        im_parts: list[float] = []
        for word in filt.words:
            theta = _phase_mod1(spec, family, prefix, word, n, m, l, xf)
            p = float(word_prob(spec, word))
            re_parts.append(p * math.cos(TWO_PI * theta))
            im_parts.append(p * math.sin(TWO_PI * theta))
        value = complex(math.fsum(re_parts), math.fsum(im_parts))
        return ExpSumResult(value=value, stderr=None, mode="enumerated", kept_mass=filt.accept_rate)
    draws = sample_words(spec.probs, samples, filt.m, seed, stream=0xE5)
    zs = np.zeros(samples, dtype=complex)
    for i, row in enumerate(draws):
        word = tuple(int(d) for d in row)
        if filt.admits(word):
            theta = _phase_mod1(spec, family, prefix, word, n, m, l, xf)
            zs[i] = complex(math.cos(TWO_PI * theta), math.sin(TWO_PI * theta))
    mean, stderr = complex_mean_stderr(zs)
    return ExpSumResult(value=mean, stderr=stderr, mode="sampled", kept_mass=filt.accept_rate)


# ---------------------------------------------------------------------------
# Oscillation-aware quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadResult:
    value: complex
    refine_delta: float
    flagged: bool
    panels: int


def _simpson_values(f: Callable[[np.ndarray], np.ndarray], a: float, b: float, panels: int):
    xs = np.linspace(a, b, panels + 1)
    ys = f(xs)
    w = np.ones(panels + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    h = (b - a) / panels
    return (h / 3.0) * np.sum(w * ys)


def adaptive_simpson(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    *,
    initial_panels: int = 16,
    tol: float = 1e-9,
    panel_cap: int = 1 << 20,
    flag_above: float = 1e-4,
) -> QuadResult:
    """Composite Simpson with panel doubling until the K vs 2K delta is below tol."""
    panels = max(4, initial_panels)
    if panels % 2:
        panels += 1
    prev = _simpson_values(f, a, b, panels)
    delta = math.inf
    while panels < panel_cap:
        panels *= 2
        cur = _simpson_values(f, a, b, panels)
        delta = abs(cur - prev)
        prev = cur
        if delta <= tol:
            break
    return QuadResult(value=complex(prev), refine_delta=float(delta), flagged=delta > flag_above, panels=panels)


def oscillatory_integral(
    phase: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    *,
    dphase_max: float | None = None,
    tol: float = 1e-9,
    panel_cap: int = 1 << 20,
) -> QuadResult:
    """Integral of e(phase(x)) over [a, b], with panels seeded at 8 per phase cycle."""
    if dphase_max is None:
        initial = 64
    else:
        initial = max(16, math.ceil(8.0 * abs(dphase_max) * (b - a)))
    return adaptive_simpson(
        lambda xs: np.exp(2j * np.pi * phase(xs)),
        a,
        b,
        initial_panels=initial,
        tol=tol,
        panel_cap=panel_cap,
    )


@dataclass(frozen=True)
class L2Result:
    value: float
    refine_delta: float
    flagged: bool
    panels: int


def filtered_exp_sum_l2(
    spec: IfsSpec,
    family: SequenceFamily,
    prefix: Word,
    filt: WordFilter,
    n: int,
    m: int,
    l: int,
    *,
    tol: float = 1e-9,
    panel_cap: int = 1 << 16,
) -> L2Result:
    """integral over the hull of |W(x)|^2 dx by oscillation-aware Simpson quadrature."""
    if filt.words is None:
        raise ConfigError("the L2 norm needs an enumerated filter")
    report = validate_ifs(spec)
    lo, hi = (float(report.conv_hull[0]), float(report.conv_hull[1]))
    scale_f = float(spec.r) ** (len(prefix) + filt.m)
    per_word = [
        (float(word_map(spec, tuple(prefix) + w)[1]), float(word_prob(spec, w))) for w in filt.words
    ]

    def w_sq(xs: np.ndarray) -> np.ndarray:
        total = np.zeros(len(xs), dtype=complex)
        for offset_f, p in per_word:
            ys = scale_f * xs + offset_f
            ph = l * (family.value_float(n, ys) - family.value_float(m, ys))
            total += p * np.exp(2j * np.pi * ph)
        return np.abs(total) ** 2

    x1 = float(cylinder(spec, tuple(prefix)).interval[1]) if prefix else hi
    dphase = (
        2.0 * abs(l) * scale_f * 2.0 ** min(600.0, family.derivative_sup_log2(n, x1))
    )
    initial = max(16, min(panel_cap // 2, math.ceil(8.0 * dphase * (hi - lo))))
    result = adaptive_simpson(
        lambda xs: w_sq(xs).astype(complex),
        lo,
        hi,
        initial_panels=initial,
        tol=tol,
        panel_cap=panel_cap,
    )
    return L2Result(
        value=float(result.value.real),
        refine_delta=result.refine_delta,
        flagged=result.flagged,
        panels=result.panels,
    )


# ---------------------------------------------------------------------------
# Derivative lower bound and the van der Corput check
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VdcResult:
    integral_modulus: float
    gamma_lower: float
    bound_ok: bool
    quad_flagged: bool
    refine_delta: float
    wedge: int


def vdc_bound_check(
    phase: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    gamma: float,
    *,
    dphase_max: float | None = None,
    tol: float = 1e-9,
    panel_cap: int = 1 << 20,
) -> tuple[float, bool, QuadResult]:
    """|integral of e(phase)| against the 1/gamma budget; shared by fixtures and the pipeline."""
    quad = oscillatory_integral(phase, a, b, dphase_max=dphase_max, tol=tol, panel_cap=panel_cap)
    modulus = abs(quad.value)
    ok = modulus <= 1.0 / gamma + max(tol, quad.refine_delta) + 1e-12
    return modulus, ok, quad


def van_der_corput_check(
    spec: IfsSpec,
    family: SequenceFamily,
    cert: HypothesisCertificate,
    prefix: Word,
    a: Word,
    b: Word,
    n: int,
    m: int,
    l: int,
    *,
    quad_tol: float = 1e-9,
    panel_cap: int = 1 << 20,
    grid_points: int = 257,
) -> VdcResult:
    """Oscillatory-integral bound for one word pair.

    The phase is l(F(phi_{ca}(x)) - F(phi_{cb}(x))) with F = f_n - f_m; its
    derivative is bounded below by

        gamma = c0 * C3 * |l| * r^(2 sep + M + wedge(a,b)) * x0^(n-2)

    (c0 the level-1 gap, x0 = inf of the prefix cylinder), and property of the
    third derivatives makes the phase derivative monotonic, so the integral
    modulus must not exceed 1/gamma.  A sampled sign change of the second
    phase derivative is a hard failure: it means the certificate upstream is
    wrong.
    """
    if m >= n:
        raise ConfigError("needs m < n")
    if len(a) != len(b) or a == b:
        raise ConfigError("needs distinct words of equal length")
    if not cert.all_ok:
        raise ConfigError("family certificate does not hold; refusing the bound")
    report = validate_ifs(spec)
    if not report.separation_ok:
        raise ConfigError("system is not separated")
    from .ifs import wedge_depth as _wedge

    wedge = _wedge(tuple(a), tuple(b))
    depth_m = len(a)
    sep = len(prefix)
    lo, hi = (float(report.conv_hull[0]), float(report.conv_hull[1]))
    pref_cyl = cylinder(spec, tuple(prefix))
    x0 = float(pref_cyl.interval[0])
    rf = float(spec.r)

    log_gamma = (
        math.log(float(report.gap_min))
        + math.log(cert.c3)
        + math.log(abs(l))
        + (2 * sep + depth_m + wedge) * math.log(rf)
        + (n - 2) * math.log(x0)
    )
    gamma = math.exp(log_gamma)

    _, offset_a = word_map(spec, tuple(prefix) + tuple(a))
    _, offset_b = word_map(spec, tuple(prefix) + tuple(b))
    scale_f = rf ** (sep + depth_m)
    oa, ob = float(offset_a), float(offset_b)

    def phase(xs: np.ndarray) -> np.ndarray:
        ya = scale_f * xs + oa
        yb = scale_f * xs + ob
        fa = family.value_float(n, ya) - family.value_float(m, ya)
        fb = family.value_float(n, yb) - family.value_float(m, yb)
        return l * (fa - fb)

    # Monotonicity witness: the second phase derivative must keep one sign.
    xs = np.linspace(lo, hi, grid_points)
    ya = scale_f * xs + oa
    yb = scale_f * xs + ob
    dd = (
        family.derivative_float(n, ya, 2)
        - family.derivative_float(m, ya, 2)
        - family.derivative_float(n, yb, 2)
        + family.derivative_float(m, yb, 2)
    )
    scale2 = abs(l) * scale_f * scale_f
    tol_dd = 1e-12 * float(np.max(np.abs(dd)) + 1.0)
    if np.any(dd > tol_dd) and np.any(dd < -tol_dd):
        raise FlaggedBoundError(
            f"phase derivative is not monotonic for pair {a} / {b} at n={n}, m={m}: "
            "the third-derivative sign certificate is violated"
        )

    x1 = float(pref_cyl.interval[1])
    dphase = 2.0 * abs(l) * scale_f * 2.0 ** min(600.0, family.derivative_sup_log2(n, x1))
    modulus, ok, quad = vdc_bound_check(
        phase, lo, hi, gamma, dphase_max=dphase, tol=quad_tol, panel_cap=panel_cap
    )
    return VdcResult(
        integral_modulus=modulus,
        gamma_lower=gamma,
        bound_ok=ok,
        quad_flagged=quad.flagged,
        refine_delta=quad.refine_delta,
        wedge=wedge,
    )


# ---------------------------------------------------------------------------
# Constants bundle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantsBundle:
    """Every constant one correlation-decay experiment depends on, with provenance."""

    kappa: Fraction
    delta: Fraction
    envelope: float
    envelope_values: tuple[float, float, float, float]
    sep_depth: int
    eta: float
    eta_vacuous: bool
    decay_rate: float
    entropy: float
    r: Fraction
    provenance: dict = field(default_factory=dict)


def build_constants(
    spec: IfsSpec,
    kappa: Fraction | float | str,
    delta: Fraction | float | str | None = None,
    *,
    eta_ks: Iterable[int] = range(4, 41),
    gamma_cap: float = 1.0 - 1e-6,
    max_depth: int = 400,
) -> ConstantsBundle:
    """Assemble the constants for one (system, kappa) configuration.

    delta is solved for (largest admissible) unless supplied; either way the
    envelope is re-evaluated directly and must come out below 1.  eta is
    fitted empirically from the heavy-word masses; with an empty heavy set it
    is the +inf sentinel and its decay term drops out.
    """
    report = validate_ifs(spec)
    if not report.separation_ok:
        raise ConfigError("system is not separated: images of the hull overlap")
    if not report.support_ok:
        raise ConfigError("support must lie in [1, inf)")
    kappa = as_fraction(kappa)
    if kappa <= 0:
        raise ConfigError("kappa must be positive")
    h = entropy(spec.probs)
    rf = float(spec.r)
    provenance: dict = {}
    if delta is None:
        cond = entropy_condition(spec.probs, spec.r)
        if not cond.ok:
            raise ConfigError(
                f"entropy ratio {cond.ratio:.6f} is not above 1/2; no admissible delta exists"
            )
        sol = solve_delta(kappa, rf, h, gamma_cap=gamma_cap)
        if not sol.feasible:
            raise ConfigError(
                f"no delta with envelope <= {gamma_cap}; smallest envelope seen was "
                f"{sol.min_gamma:.9f} at delta={sol.min_gamma_delta:.3e}"
            )
        delta = as_fraction(sol.delta)
        provenance["delta"] = "solved (largest admissible on a refined geometric grid)"
    else:
        delta = as_fraction(delta)
        if delta <= 0:
            raise ConfigError("delta must be positive")
        provenance["delta"] = "supplied"
    values = envelope_terms(float(delta), float(kappa), rf, h)
    envelope = max(values)
    if envelope >= 1.0:
        raise ConfigError(f"envelope {envelope:.9f} is not below 1 at delta={float(delta)}")
    sep = separation_depth(spec, kappa, delta, max_depth)
    eta = fit_eta(spec.probs, float(delta), eta_ks)
    provenance["eta"] = "vacuous (heavy sets empty)" if eta.vacuous else "fitted from heavy-word masses"
    provenance["sep_depth"] = "exact rational search"
    if eta.vacuous:
        eta_term = 0.0
    else:
        eta_term = math.exp(eta.eta * float(delta) * math.log1p(float(kappa)) / (2.0 * math.log(rf)))
    decay_rate = max(math.sqrt(envelope), eta_term)
    return ConstantsBundle(
        kappa=kappa,
        delta=delta,
        envelope=envelope,
        envelope_values=values,
        sep_depth=sep,
        eta=eta.eta,
        eta_vacuous=eta.vacuous,
        decay_rate=decay_rate,
        entropy=h,
        r=spec.r,
        provenance=provenance,
    )


# ---------------------------------------------------------------------------
# Decay terms diagnostics
# ---------------------------------------------------------------------------


def decay_terms(
    bundle: ConstantsBundle,
    *,
    x0: float,
    m_depth: int,
    n: int,
) -> tuple[float, float, float, float, float]:
    """The five explicit decay terms at one (M, n), evaluated in log space.

    (1) e^(2M(-h+d)) / r^(M+2dn)
    (2) e^(M(-h+d)) / (r^(2M+2dn+floor(dM)) x0^n)
    (3) e^(2M(-h+d)) / (r^(3M+2dn) x0^n)
    (4) r^(dn)
    (5) e^(-eta d M)
    """
    h = bundle.entropy
    d = float(bundle.delta)
    ln_r = math.log(float(bundle.r))
    ln_x0 = math.log(x0)
    a = -h + d
    floor_dm = math.floor(bundle.delta * m_depth)
    logs = (
        2 * m_depth * a - (m_depth + 2 * d * n) * ln_r,
        m_depth * a - (2 * m_depth + 2 * d * n + floor_dm) * ln_r - n * ln_x0,
        2 * m_depth * a - (3 * m_depth + 2 * d * n) * ln_r - n * ln_x0,
        d * n * ln_r,
        -math.inf if math.isinf(bundle.eta) else -bundle.eta * d * m_depth,
    )
    return tuple(math.exp(min(v, 700.0)) for v in logs)


def decay_term_envelope(
    bundle: ConstantsBundle,
    *,
    hull_len: float,
    x0: float,
    x1: float,
    l: int,
    c1: float,
    c2: float,
    n_grid: Sequence[int],
) -> dict:
    """Per-term ratios against decay_rate^n across an n grid (regression tripwire)."""
    rows = []
    for n in n_grid:
        m_depth, _ = filter_depth(
            n, l, c1, c2, hull_len, x1, float(bundle.r), bundle.delta, bundle.sep_depth, check=False
        )
        terms = decay_terms(bundle, x0=x0, m_depth=m_depth, n=n)
        rows.append((n, m_depth, terms))
    fitted = []
    for idx in range(5):
        ratios = [terms[idx] / bundle.decay_rate**n for n, _, terms in rows]
        fitted.append(max(ratios))
    return {"rows": rows, "fitted_constants": tuple(fitted)}


# ---------------------------------------------------------------------------
# Correlation-decay experiment
# ---------------------------------------------------------------------------


def pick_prefix(spec: IfsSpec, kappa: Fraction | float | str, depth: int) -> Word:
    """Lexicographically smallest depth-``depth`` word whose cylinder lies above 1 + kappa."""
    kappa = as_fraction(kappa)
    target = 1 + kappa
    lo, hi = spec.hull()

    def rec(word: Word, scale: Fraction, offset: Fraction) -> Word | None:
        if len(word) == depth:
            return word if scale * lo + offset > target else None
        for digit in spec.alphabet:
            s2 = scale * spec.r
            o2 = offset + scale * spec.translations[digit - 1]
            if s2 * hi + o2 <= target:
                continue  # entire subtree sits at or below the cut
            found = rec(word + (digit,), s2, o2)
            if found is not None:
                return found
        return None

    found = rec((), Fraction(1), Fraction(0))
    if found is None:
        raise ConfigError(f"no depth-{depth} cylinder lies above 1 + kappa = {float(target)}")
    return found


@dataclass(frozen=True)
class DecayReport:
    rows: tuple[tuple[int, float, float], ...]  # (n, modulus, stderr)
    slope: float
    slope_stderr: float
    gamma_hat: float
    r_squared: float
    theoretical_gamma: float | None
    prefix: Word
    meta: dict = field(default_factory=dict)


def _ols(xs: np.ndarray, ys: np.ndarray) -> tuple[float, float, float]:
    n = len(xs)
    xb, yb = xs.mean(), ys.mean()
    sxx = float(np.sum((xs - xb) ** 2))
    slope = float(np.sum((xs - xb) * (ys - yb)) / sxx)
    resid = ys - (yb + slope * (xs - xb))
    rss = float(np.sum(resid**2))
    tss = float(np.sum((ys - yb) ** 2))
    stderr = math.sqrt(rss / (n - 2) / sxx) if n > 2 else math.inf
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    return slope, stderr, r2


def _decay_point(args) -> tuple[int, float, float]:
    spec, family, prefix, l, n, m, samples, seed, tol = args
    zs = np.empty(samples, dtype=complex)
    for i, vals in enumerate(
        sampled_orbit_values(spec, family, prefix, samples, n, seed, stream=n, tol=tol)
    ):
        theta = (l * (vals[n - 1] - vals[m - 1])) % 1.0
        zs[i] = complex(math.cos(TWO_PI * theta), math.sin(TWO_PI * theta))
    mean, stderr = complex_mean_stderr(zs)
    return n, abs(mean), stderr


def decay_experiment(
    spec: IfsSpec,
    family: SequenceFamily,
    kappa: Fraction | float | str,
    l: int,
    schedule: Sequence[int],
    samples: int,
    seed: int,
    *,
    delta: Fraction | float | str | None = None,
    m_gap: int = 1,
    prefix: Word | None = None,
    tol: float = DEFAULT_TOL,
    threads: int = 1,
) -> DecayReport:
    """Monte Carlo decay of |integral of e(l(f_n - f_m))| against the conditioned measure.

    For each n in the schedule (m = n - m_gap), ``samples`` points are drawn
    from the prefix-conditioned measure at certified depth and the modulus of
    the complex sample mean is recorded; the log-moduli are fitted against n.
    When the constants pipeline is infeasible (negative controls), a supplied
    delta keeps the geometry computable and the theoretical rate is omitted.
    """
    if l == 0:
        raise ConfigError("l must be nonzero")
    schedule = [int(n) for n in schedule]
    if any(n - m_gap < 1 for n in schedule):
        raise ConfigError("every scheduled n must exceed m_gap")
    try:
        bundle = build_constants(spec, kappa, delta=delta)
    except ConfigError:
        if delta is None:
            raise
        bundle = None
    delta_eff = bundle.delta if bundle is not None else as_fraction(delta)
    sep = bundle.sep_depth if bundle is not None else separation_depth(spec, kappa, delta_eff)
    if prefix is None:
        prefix = pick_prefix(spec, kappa, sep)

    from .montecarlo import parallel_map

    tasks = [(spec, family, prefix, l, n, n - m_gap, samples, seed, tol) for n in schedule]
    rows = parallel_map(_decay_point, tasks, threads)
    rows = tuple(sorted(rows))

    xs = np.array([r[0] for r in rows], dtype=float)
    ys = np.array([math.log(max(r[1], 1e-300)) for r in rows])
    slope, stderr, r2 = _ols(xs, ys)
    return DecayReport(
        rows=rows,
        slope=slope,
        slope_stderr=stderr,
        gamma_hat=math.exp(slope),
        r_squared=r2,
        theoretical_gamma=bundle.decay_rate if bundle is not None else None,
        prefix=tuple(prefix),
        meta={
            "l": l,
            "samples": samples,
            "seed": seed,
            "m_gap": m_gap,
            "kappa": float(as_fraction(kappa)),
            "delta": float(delta_eff),
            "family": family.label(),
        },
    )
