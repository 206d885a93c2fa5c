"""Serialization of model objects and experiment configurations.

Rationals travel as "num/den" strings (plain integers and decimal strings are
also accepted); floats coming from JSON are interpreted through their decimal
literal, so 0.4 means 2/5 and not the nearest double.  Unknown keys are
rejected: a silently defaulted parameter is a wrong experiment.
"""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError
from .families import SequenceFamily
from .ifs import IfsSpec


def as_fraction(value: Any) -> Fraction:
    """Exact rational from int, Fraction, "num/den" or decimal string, or float literal."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"cannot parse rational {value!r}: {exc}") from exc
    if isinstance(value, float):
        return Fraction(repr(value))
    raise ConfigError(f"cannot interpret {value!r} as a rational")


def fraction_str(value: Fraction) -> str:
    return f"{value.numerator}/{value.denominator}" if value.denominator != 1 else str(value.numerator)


def _require_keys(obj: Mapping[str, Any], required: set[str], optional: set[str], what: str) -> None:
    keys = set(obj)
    missing = required - keys
    unknown = keys - required - optional
    if missing:
        raise ConfigError(f"{what}: missing keys {sorted(missing)}")
    if unknown:
        raise ConfigError(f"{what}: unknown keys {sorted(unknown)}")


def ifs_from_json(obj: Mapping[str, Any]) -> IfsSpec:
    _require_keys(obj, {"r", "t", "p"}, set(), "ifs")
    return IfsSpec(
        r=as_fraction(obj["r"]),
        translations=tuple(as_fraction(t) for t in obj["t"]),
        probs=tuple(as_fraction(p) for p in obj["p"]),
    )


def ifs_to_json(spec: IfsSpec) -> dict:
    return {
        "r": fraction_str(spec.r),
        "t": [fraction_str(t) for t in spec.translations],
        "p": [fraction_str(p) for p in spec.probs],
    }


def family_from_json(obj: Mapping[str, Any]) -> SequenceFamily:
    _require_keys(obj, {"kind"}, {"g", "base"}, "family")
    kind = obj["kind"]
    g = tuple(as_fraction(c) for c in obj["g"]) if "g" in obj else None
    base = family_from_json(obj["base"]) if "base" in obj else None
    return SequenceFamily(kind=kind, g=g, base=base)


def family_to_json(family: SequenceFamily) -> dict:
    out: dict[str, Any] = {"kind": family.kind}
    if family.g is not None:
        out["g"] = [fraction_str(c) for c in family.g]
    if family.base is not None:
        out["base"] = family_to_json(family.base)
    return out


_CONFIG_KEYS_REQUIRED = {"ifs"}
_CONFIG_KEYS_OPTIONAL = {
    "family",
    "kappa",
    "delta",
    "l",
    "schedule",
    "samples",
    "seed",
    "mode",
    "tol",
    "prefix",
    "m_gap",
}


class ExperimentConfig:
    """Parsed experiment configuration with strict key checking."""

    def __init__(self, raw: Mapping[str, Any]):
        _require_keys(raw, _CONFIG_KEYS_REQUIRED, _CONFIG_KEYS_OPTIONAL, "config")
        self.raw = dict(raw)
        self.ifs = ifs_from_json(raw["ifs"])
        self.family = family_from_json(raw["family"]) if "family" in raw else SequenceFamily("pure_power")
        self.kappa = as_fraction(raw["kappa"]) if "kappa" in raw else None
        self.delta = as_fraction(raw["delta"]) if "delta" in raw else None
        self.l = int(raw["l"]) if "l" in raw else 1
        self.schedule = [int(v) for v in raw["schedule"]] if "schedule" in raw else None
        self.samples = int(raw["samples"]) if "samples" in raw else None
        self.seed = int(raw["seed"]) if "seed" in raw else None
        self.mode = str(raw["mode"]) if "mode" in raw else "enumerated"
        self.tol = float(raw["tol"]) if "tol" in raw else None
        self.prefix = tuple(int(d) for d in raw["prefix"]) if "prefix" in raw else None
        self.m_gap = int(raw["m_gap"]) if "m_gap" in raw else 1

    def echo(self) -> dict:
        """Fully resolved configuration for embedding into outputs."""
        out = {
            "ifs": ifs_to_json(self.ifs),
            "family": family_to_json(self.family),
            "l": self.l,
            "mode": self.mode,
            "m_gap": self.m_gap,
        }
        if self.kappa is not None:
            out["kappa"] = fraction_str(self.kappa)
        if self.delta is not None:
            out["delta"] = fraction_str(self.delta)
        if self.schedule is not None:
            out["schedule"] = list(self.schedule)
        if self.samples is not None:
            out["samples"] = self.samples
        if self.seed is not None:
            out["seed"] = self.seed
        if self.tol is not None:
            out["tol"] = self.tol
        if self.prefix is not None:
            out["prefix"] = list(self.prefix)
        return out


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return ExperimentConfig(raw)


def parse_schedule(text: str) -> list[int]:
    """Parse "start:stop:step" (inclusive stop) or a comma-separated list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError("schedule range must be start:stop:step")
        start, stop, step = (int(p) for p in parts)
        if step <= 0 or stop < start:
            raise ConfigError("schedule range must increase")
        return list(range(start, stop + 1, step))
    try:
        return [int(p) for p in text.split(",") if p]
    except ValueError as exc:
        raise ConfigError(f"cannot parse schedule {text!r}") from exc
