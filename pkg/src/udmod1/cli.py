"""Command-line front-end.

Every subcommand maps onto one library operation; outputs are CSV tables
(with '#'-prefixed metadata lines) or JSON, always embedding the resolved
configuration and seed so a run can be reproduced byte for byte.  Exit codes:
0 success, 2 validation/configuration failure, 3 precision refusal, 4 a
checked bound failed.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import bounds, stats
from .config import (
    ExperimentConfig,
    as_fraction,
    family_to_json,
    fraction_str,
    ifs_to_json,
    load_config,
    parse_schedule,
)
from .errors import ConfigError, FlaggedBoundError, PrecisionError
from .families import certify
from .fixedpoint import (
    DEFAULT_TOL,
    certified_word_depth,
    family_orbit_mod_one,
    float_up,
    required_bits_family,
)
from .ifs import (
    cylinder,
    entropy,
    entropy_condition,
    point_of_word,
    sample_words,
    validate_ifs,
)


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, Fraction):
        return fraction_str(value)
    return str(value)


def _word_str(word) -> str:
    return ",".join(str(int(d)) for d in word)


def _json_ready(obj):
    if isinstance(obj, Fraction):
        return fraction_str(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _emit(args, name: str, summary: dict, columns=None, rows=None) -> None:
    payload = json.dumps(_json_ready(summary), sort_keys=True, indent=2)
    print(payload)
    if args.out is None:
        return
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{name}.json").write_text(payload + "\n")
    if rows is None:
        return
    if args.format == "json":
        table = [dict(zip(columns, row)) for row in rows]
        (out / f"{name}_rows.json").write_text(
            json.dumps(_json_ready(table), sort_keys=True, indent=2) + "\n"
        )
    else:
        lines = [f"# {k}: {_fmt(v)}" for k, v in sorted(summary.get("config", {}).items())]
        lines += [f"# {k}: {json.dumps(_json_ready(v), sort_keys=True)}" for k, v in sorted(summary.items()) if k != "config"]
        lines.append(",".join(columns))
        for row in rows:
            lines.append(",".join(_fmt(v) for v in row))
        (out / f"{name}.csv").write_text("\n".join(lines) + "\n")


def _need_seed(args, cfg: ExperimentConfig) -> int:
    seed = args.seed if args.seed is not None else cfg.seed
    if seed is None:
        raise ConfigError("a seed is mandatory for stochastic commands (pass --seed)")
    return int(seed)


def _kappa(args, cfg: ExperimentConfig) -> Fraction:
    if getattr(args, "kappa", None) is not None:
        return as_fraction(args.kappa)
    if cfg.kappa is None:
        raise ConfigError("kappa is required (config key or --kappa)")
    return cfg.kappa


def _config_echo(cfg: ExperimentConfig, args, seed=None) -> dict:
    echo = cfg.echo()
    if seed is not None:
        echo["seed"] = seed
    echo["threads"] = args.threads
    return echo


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    report = validate_ifs(cfg.ifs)
    cond = entropy_condition(cfg.ifs.probs, cfg.ifs.r)
    summary = {
        "config": _config_echo(cfg, args),
        "conv_hull": [report.conv_hull[0], report.conv_hull[1]],
        "images": [[lo, hi] for lo, hi in report.images],
        "gap_min": report.gap_min,
        "separation_ok": report.separation_ok,
        "support_ok": report.support_ok,
        "entropy": entropy(cfg.ifs.probs),
        "entropy_ratio": cond.ratio,
        "entropy_ok": cond.ok,
    }
    _emit(args, "validate", summary)
    return 0 if report.separation_ok and report.support_ok else 2


def cmd_constants(args) -> int:
    cfg = load_config(args.config)
    kappa = _kappa(args, cfg)
    delta = as_fraction(args.delta) if args.delta is not None else cfg.delta
    bundle = bounds.build_constants(cfg.ifs, kappa, delta=delta)
    summary = {
        "config": _config_echo(cfg, args),
        "kappa": bundle.kappa,
        "delta": float(bundle.delta),
        "envelope": bundle.envelope,
        "envelope_terms": list(bundle.envelope_values),
        "sep_depth": bundle.sep_depth,
        "eta": None if math.isinf(bundle.eta) else bundle.eta,
        "eta_vacuous": bundle.eta_vacuous,
        "decay_rate": bundle.decay_rate,
        "entropy": bundle.entropy,
        "provenance": bundle.provenance,
    }
    _emit(args, "constants", summary)
    return 0


def cmd_sample(args) -> int:
    cfg = load_config(args.config)
    seed = _need_seed(args, cfg)
    prefix = cfg.prefix or ()
    depth = args.depth
    words = sample_words(cfg.ifs.probs, args.count, depth - len(prefix), seed, prefix=prefix)
    rows = []
    for i, row in enumerate(words):
        word = tuple(int(d) for d in row)
        x = point_of_word(cfg.ifs, word, depth, args.frac_bits)
        rows.append((i, _word_str(word), x.to_float(), x.err))
    summary = {
        "config": _config_echo(cfg, args, seed),
        "count": args.count,
        "depth": depth,
        "frac_bits": args.frac_bits,
    }
    _emit(args, "sample", summary, columns=["index", "word", "x", "err"], rows=rows)
    return 0


def _orbit_fragment(cfg: ExperimentConfig, args, seed):
    tol = cfg.tol if cfg.tol is not None else DEFAULT_TOL
    report = validate_ifs(cfg.ifs)
    family = cfg.family
    if args.x is not None:
        x_frac = as_fraction(args.x)
        x_hi = max(x_frac, Fraction(1))
        frac_bits = required_bits_family(family, args.N, float_up(x_hi), tol)
        from .fixedpoint import FixedReal

        x = FixedReal.from_fraction(x_frac, frac_bits)
        descriptor = {"x": fraction_str(x_frac)}
    else:
        if seed is None:
            raise ConfigError("orbit needs either --x or --word-seed")
        prefix = cfg.prefix or ()
        x_hi = cylinder(cfg.ifs, prefix).interval[1] if prefix else report.conv_hull[1]
        xu = float_up(x_hi)
        if args.depth == "auto":
            depth = certified_word_depth(
                cfg.ifs.r, report.hull_len, family.derivative_sup_log2(args.N, xu), tol
            )
        else:
            depth = int(args.depth)
        depth = max(depth, len(prefix))
        frac_bits = required_bits_family(family, args.N, xu, tol)
        word = tuple(
            int(d)
            for d in sample_words(
                cfg.ifs.probs, 1, depth - len(prefix), seed, prefix=prefix
            )[0]
        )
        x = point_of_word(cfg.ifs, word, depth, frac_bits)
        descriptor = {"word": _word_str(word), "depth": depth}
    frag = family_orbit_mod_one(family, x, args.N, x_upper=x_hi, tol=tol)
    return frag, descriptor, frac_bits, tol


def cmd_orbit(args) -> int:
    cfg = load_config(args.config)
    seed = args.word_seed if args.word_seed is not None else cfg.seed
    frag, descriptor, frac_bits, tol = _orbit_fragment(cfg, args, seed)
    rows = [(n + 1, v) for n, v in enumerate(frag.values)]
    summary = {
        "config": _config_echo(cfg, args, seed),
        "x": descriptor,
        "family": family_to_json(cfg.family),
        "precision_bits": frac_bits,
        "max_err": frag.max_err,
        "valid": frag.valid,
        "tol": tol,
        "N": args.N,
    }
    _emit(args, "orbit", summary, columns=["n", "frac_value"], rows=rows)
    return 0


def cmd_discrepancy(args) -> int:
    cfg = load_config(args.config)
    seed = args.word_seed if args.word_seed is not None else cfg.seed
    schedule = parse_schedule(args.schedule) if args.schedule else (cfg.schedule or [args.N])
    args.N = max(schedule)
    frag, descriptor, frac_bits, tol = _orbit_fragment(cfg, args, seed)
    values = frag.certified_values()
    rows = [(n, stats.star_discrepancy(values[:n]).d_star) for n in schedule]
    summary = {
        "config": _config_echo(cfg, args, seed),
        "x": descriptor,
        "schedule": list(schedule),
        "max_err": frag.max_err,
    }
    _emit(args, "discrepancy", summary, columns=["N", "d_star"], rows=rows)
    return 0


def cmd_weyl(args) -> int:
    cfg = load_config(args.config)
    seed = args.word_seed if args.word_seed is not None else cfg.seed
    frag, descriptor, frac_bits, tol = _orbit_fragment(cfg, args, seed)
    values = frag.certified_values()
    ls = [int(v) for v in args.l_list.split(",")]
    rows = []
    for l in ls:
        w = stats.weyl_sum(values, l)
        rows.append((l, args.N, w.value.real, w.value.imag, w.modulus))
    summary = {
        "config": _config_echo(cfg, args, seed),
        "x": descriptor,
        "N": args.N,
        "l_list": ls,
    }
    _emit(args, "weyl", summary, columns=["l", "N", "re", "im", "modulus"], rows=rows)
    return 0


def cmd_del_series(args) -> int:
    cfg = load_config(args.config)
    seed = _need_seed(args, cfg)
    schedule = parse_schedule(args.schedule) if args.schedule else (cfg.schedule or [250, 500, 1000, 2000])
    samples = args.samples or cfg.samples or 400
    prefix = cfg.prefix or ()
    est = stats.del_series_estimate(
        cfg.ifs, cfg.family, prefix, cfg.l, schedule, samples, seed,
        tol=cfg.tol if cfg.tol is not None else DEFAULT_TOL,
    )
    rows = list(zip(est.schedule, est.terms, est.stderrs))
    summary = {
        "config": _config_echo(cfg, args, seed),
        "partial_sums": list(est.partial_sums),
        "samples": est.samples,
        "prefix": _word_str(prefix),
    }
    _emit(args, "del_series", summary, columns=["N", "term", "stderr"], rows=rows)
    return 0


def cmd_hoeffding(args) -> int:
    cfg = load_config(args.config)
    delta = as_fraction(args.delta) if args.delta is not None else cfg.delta
    if delta is None:
        raise ConfigError("hoeffding needs delta (config key or --delta)")
    ks = range(args.k_min, args.k_max + 1)
    fit = bounds.fit_eta(cfg.ifs.probs, float(delta), ks)
    rows = [(k, mass) for k, mass in zip(fit.ks, fit.masses)]
    summary = {
        "config": _config_echo(cfg, args),
        "delta": float(delta),
        "eta": None if math.isinf(fit.eta) else fit.eta,
        "vacuous": fit.vacuous,
        "verified": fit.verified,
    }
    _emit(args, "hoeffding", summary, columns=["k", "mass"], rows=rows)
    return 0


def cmd_wm(args) -> int:
    cfg = load_config(args.config)
    delta = as_fraction(args.delta) if args.delta is not None else cfg.delta
    if delta is None:
        raise ConfigError("wm needs delta (config key or --delta)")
    kappa = _kappa(args, cfg)
    report = validate_ifs(cfg.ifs)
    sep = bounds.separation_depth(cfg.ifs, kappa, delta)
    prefix = cfg.prefix or bounds.pick_prefix(cfg.ifs, kappa, sep)
    if args.M is not None:
        m_depth = args.M
        check = None
    else:
        cert = certify(cfg.family, report.conv_hull, n_max=max(args.n, 8))
        x1 = float(cylinder(cfg.ifs, prefix).interval[1])
        m_depth, check = bounds.filter_depth(
            args.n, cfg.l, cert.c1, cert.c2, float(report.hull_len), x1,
            float(cfg.ifs.r), delta, sep,
        )
    filt = bounds.build_word_filter(cfg.ifs.probs, m_depth, delta, mode=cfg.mode,
                                    seed=args.seed or 0)
    x = as_fraction(args.x) if args.x is not None else report.conv_hull[0]
    result = bounds.filtered_exp_sum(
        cfg.ifs, cfg.family, prefix, filt, args.n, args.m, cfg.l, x,
        seed=args.seed or 0,
    )
    summary = {
        "config": _config_echo(cfg, args),
        "prefix": _word_str(prefix),
        "M": m_depth,
        "window": list(filt.window),
        "accept_rate": filt.accept_rate,
        "value": result.value,
        "modulus": abs(result.value),
        "stderr": result.stderr,
        "depth_check_ok": None if check is None else check.ok,
    }
    _emit(args, "wm", summary)
    return 0


def cmd_vdc(args) -> int:
    cfg = load_config(args.config)
    seed = _need_seed(args, cfg)
    kappa = _kappa(args, cfg)
    delta = as_fraction(args.delta) if args.delta is not None else cfg.delta
    bundle = bounds.build_constants(cfg.ifs, kappa, delta=delta)
    prefix = cfg.prefix or bounds.pick_prefix(cfg.ifs, kappa, bundle.sep_depth)
    report = validate_ifs(cfg.ifs)
    cert = certify(cfg.family, report.conv_hull, n_max=max(args.n, 8))
    rng = np.random.default_rng([0xDC, seed])
    alphabet = len(cfg.ifs.probs)
    rows = []
    all_ok = True
    for idx in range(args.pairs):
        while True:
            a = tuple(int(d) for d in rng.integers(1, alphabet + 1, size=args.M))
            b = tuple(int(d) for d in rng.integers(1, alphabet + 1, size=args.M))
            if a != b:
                break
        res = bounds.van_der_corput_check(
            cfg.ifs, cfg.family, cert, prefix, a, b, args.n, args.m, cfg.l
        )
        all_ok &= res.bound_ok and not res.quad_flagged
        rows.append(
            (idx, _word_str(a), _word_str(b), res.wedge, res.integral_modulus,
             res.gamma_lower, res.bound_ok)
        )
    summary = {
        "config": _config_echo(cfg, args, seed),
        "prefix": _word_str(prefix),
        "pairs": args.pairs,
        "M": args.M,
        "n": args.n,
        "m": args.m,
        "all_ok": bool(all_ok),
    }
    _emit(args, "vdc", summary,
          columns=["pair", "a", "b", "wedge", "integral_modulus", "gamma", "bound_ok"],
          rows=rows)
    if not all_ok:
        raise FlaggedBoundError("at least one oscillatory-integral bound failed")
    return 0


def cmd_decay(args) -> int:
    cfg = load_config(args.config)
    seed = _need_seed(args, cfg)
    kappa = _kappa(args, cfg)
    schedule = parse_schedule(args.schedule) if args.schedule else (cfg.schedule or list(range(5, 61, 5)))
    samples = args.samples or cfg.samples or 2000
    report = bounds.decay_experiment(
        cfg.ifs, cfg.family, kappa, cfg.l, schedule, samples, seed,
        delta=cfg.delta, m_gap=cfg.m_gap,
        prefix=cfg.prefix, threads=args.threads,
    )
    summary = {
        "config": _config_echo(cfg, args, seed),
        "slope": report.slope,
        "slope_stderr": report.slope_stderr,
        "gamma_hat": report.gamma_hat,
        "r_squared": report.r_squared,
        "theoretical_gamma": report.theoretical_gamma,
        "prefix": _word_str(report.prefix),
        "samples": samples,
    }
    _emit(args, "decay", summary, columns=["n", "modulus", "stderr"], rows=list(report.rows))
    return 0


def cmd_report(args) -> int:
    cfg = load_config(args.config)
    seed = _need_seed(args, cfg)
    kappa = _kappa(args, cfg)
    reportv = validate_ifs(cfg.ifs)
    cond = entropy_condition(cfg.ifs.probs, cfg.ifs.r)
    if not (reportv.separation_ok and reportv.support_ok):
        raise ConfigError("system failed validation; report aborted")
    bundle = bounds.build_constants(cfg.ifs, kappa, delta=cfg.delta)
    decay_schedule = parse_schedule(args.decay_schedule)
    decay = bounds.decay_experiment(
        cfg.ifs, cfg.family, kappa, cfg.l, decay_schedule, args.decay_samples, seed,
        delta=bundle.delta, prefix=cfg.prefix, threads=args.threads,
    )
    n_schedule = parse_schedule(args.n_schedule)
    n_max = max(n_schedule)
    d_curves = []
    weyl_mods = {1: [], 2: [], 3: []}
    for i, vals in enumerate(
        stats.sampled_orbit_values(cfg.ifs, cfg.family, (), args.points, n_max, seed, stream=0xD15C)
    ):
        d_curves.append([stats.star_discrepancy(vals[:n]).d_star for n in n_schedule])
        for l in weyl_mods:
            weyl_mods[l].append(stats.weyl_sum(vals, l).modulus)
    medians = [float(np.median([c[j] for c in d_curves])) for j in range(len(n_schedule))]
    weyl_medians = {l: float(np.median(v)) for l, v in weyl_mods.items()}
    summary = {
        "config": _config_echo(cfg, args, seed),
        "validation": {
            "conv_hull": [reportv.conv_hull[0], reportv.conv_hull[1]],
            "gap_min": reportv.gap_min,
            "separation_ok": reportv.separation_ok,
            "support_ok": reportv.support_ok,
            "entropy_ratio": cond.ratio,
            "entropy_ok": cond.ok,
        },
        "constants": {
            "kappa": bundle.kappa,
            "delta": float(bundle.delta),
            "envelope": bundle.envelope,
            "sep_depth": bundle.sep_depth,
            "eta": None if math.isinf(bundle.eta) else bundle.eta,
            "decay_rate": bundle.decay_rate,
        },
        "decay": {
            "rows": [list(r) for r in decay.rows],
            "slope": decay.slope,
            "slope_stderr": decay.slope_stderr,
            "gamma_hat": decay.gamma_hat,
            "decaying": decay.slope + 2.0 * decay.slope_stderr < 0.0,
        },
        "equidistribution": {
            "points": args.points,
            "n_schedule": list(n_schedule),
            "median_d_star": medians,
            "median_weyl": weyl_medians,
        },
    }
    _emit(args, "report", summary)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="udmod1",
        description="Numerical experiments on equidistribution along self-similar measures",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("validate", help="geometry and admissibility checks")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("constants", help="decay constants bundle")
    common(p)
    p.add_argument("--kappa", default=None)
    p.add_argument("--delta", default=None)
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("sample", help="sample digit words and points")
    common(p)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--depth", type=int, default=40)
    p.add_argument("--frac-bits", type=int, default=96)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("orbit", help="certified orbit f_n(x) mod 1")
    common(p)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--x", default=None, help="rational start, e.g. 4/3")
    p.add_argument("--word-seed", type=int, default=None)
    p.add_argument("--depth", default="auto")
    p.set_defaults(func=cmd_orbit)

    p = sub.add_parser("discrepancy", help="star discrepancy along an orbit")
    common(p)
    p.add_argument("--N", type=int, default=4000)
    p.add_argument("--x", default=None)
    p.add_argument("--word-seed", type=int, default=None)
    p.add_argument("--depth", default="auto")
    p.add_argument("--schedule", default=None, help="start:stop:step or comma list")
    p.set_defaults(func=cmd_discrepancy)

    p = sub.add_parser("weyl", help="exponential sums along an orbit")
    common(p)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--x", default=None)
    p.add_argument("--word-seed", type=int, default=None)
    p.add_argument("--depth", default="auto")
    p.add_argument("--l-list", default="1,2,3")
    p.set_defaults(func=cmd_weyl)

    p = sub.add_parser("del-series", help="series-criterion estimator")
    common(p)
    p.add_argument("--schedule", default=None)
    p.add_argument("--samples", type=int, default=None)
    p.set_defaults(func=cmd_del_series)

    p = sub.add_parser("hoeffding", help="heavy-word masses and the fitted tail rate")
    common(p)
    p.add_argument("--delta", default=None)
    p.add_argument("--k-min", type=int, default=4)
    p.add_argument("--k-max", type=int, default=40)
    p.set_defaults(func=cmd_hoeffding)

    p = sub.add_parser("wm", help="filtered exponential sum at a point")
    common(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--M", type=int, default=None)
    p.add_argument("--x", default=None)
    p.add_argument("--kappa", default=None)
    p.add_argument("--delta", default=None)
    p.set_defaults(func=cmd_wm)

    p = sub.add_parser("vdc", help="oscillatory-integral bound on word pairs")
    common(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--M", type=int, default=3)
    p.add_argument("--pairs", type=int, default=50)
    p.add_argument("--kappa", default=None)
    p.add_argument("--delta", default=None)
    p.set_defaults(func=cmd_vdc)

    p = sub.add_parser("decay", help="correlation-decay experiment")
    common(p)
    p.add_argument("--schedule", default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--kappa", default=None)
    p.set_defaults(func=cmd_decay)

    p = sub.add_parser("report", help="full pipeline summary")
    common(p)
    p.add_argument("--kappa", default=None)
    p.add_argument("--decay-schedule", default="5:60:5")
    p.add_argument("--decay-samples", type=int, default=20000)
    p.add_argument("--points", type=int, default=20)
    p.add_argument("--n-schedule", default="500,1000,2000,4000")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PrecisionError as exc:
        print(f"precision refusal: {exc}", file=sys.stderr)
        return 3
    except FlaggedBoundError as exc:
        print(f"bound failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
