"""Numerical machinery for equidistribution of (f_n(x)) mod 1 along
self-similar measures: exact IFS geometry, certified fixed-point orbits,
discrepancy and exponential-sum statistics, and the explicit decay-constant
pipeline with its word filters and oscillatory-integral checks."""

from .bounds import (
    ConstantsBundle,
    DecayReport,
    DeltaSolution,
    WordFilter,
    build_constants,
    build_word_filter,
    decay_experiment,
    decay_terms,
    envelope_base,
    envelope_terms,
    filter_depth,
    filtered_exp_sum,
    filtered_exp_sum_l2,
    fit_eta,
    heavy_mass,
    heavy_members,
    oscillatory_integral,
    pick_prefix,
    separation_depth,
    solve_delta,
    van_der_corput_check,
)
from .errors import ConfigError, FlaggedBoundError, PrecisionError, ResourceLimitError, UdError
from .families import (
    HypothesisCertificate,
    SequenceFamily,
    certify,
    check_derivative_growth,
    check_second_derivative_gap,
    check_third_derivative_sign,
)
from .fixedpoint import (
    DEFAULT_TOL,
    STATS_MAX_ERR,
    FixedReal,
    OrbitFragment,
    family_orbit_mod_one,
    powers_mod_one,
    required_bits,
    required_bits_family,
)
from .ifs import (
    Cylinder,
    IfsSpec,
    ValidationReport,
    cylinder,
    entropy,
    entropy_condition,
    point_fraction,
    point_of_word,
    sample_word,
    sample_words,
    square_ifs,
    suggest_kappa,
    validate_ifs,
    wedge_depth,
    word_map,
    word_prob,
)
from .stats import (
    DelSeriesEstimate,
    DiscrepancyReport,
    WeylSumResult,
    del_series_estimate,
    star_discrepancy,
    star_discrepancy_bruteforce,
    weyl_sum,
)

__version__ = "0.1.0"
