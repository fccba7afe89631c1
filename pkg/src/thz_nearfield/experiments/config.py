"""Flat TOML experiment configuration with strict, exhaustive validation.

Angles are given in degrees here and converted to radians by the presets.
"""
from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Any, Callable

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXPERIMENTS = ("fig2_gainmap", "fig4a_se_vs_snr", "fig4b_se_vs_ttd", "fig5a_music", "fig5b_rcrb", "custom")
BASE_EXPERIMENTS = EXPERIMENTS[:-1]
SCHEME_NAMES = ("FD", "P-FDA", "HTS", "FDA", "HB")
ARCHITECTURES = ("fully_connected", "sub_connected")


class ConfigError(Exception):
    """Raised with every problem found in a configuration."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class Param:
    name: str
    kind: str  # int, float, str, bool, int_list, float_list, str_list
    default: Any
    unit: str = ""
    check: Callable[[Any], str | None] | None = None


def _positive(v):
    return None if v > 0 else "must be > 0"


def _nonneg(v):
    return None if v >= 0 else "must be ≥ 0"


def _at_least_one(v):
    return None if v >= 1 else "must be ≥ 1"


def _open_angle(v):
    return None if -90 < v < 90 else "must lie strictly between -90 and 90 degrees"


def _closed_angle(v):
    return None if -90 <= v <= 90 else "must lie within [-90, 90] degrees"


def _nonempty(v):
    return None if len(v) else "must not be empty"


def _all(check):
    def inner(values):
        if not values:
            return "must not be empty"
        for x in values:
            msg = check(x)
            if msg:
                return f"entries {msg} (got {x!r})"
        return None
    return inner


def _choices(options):
    def inner(values):
        if not values:
            return "must not be empty"
        bad = [v for v in values if v not in options]
        if bad:
            return f"must only contain {list(options)} (got {bad})"
        if len(set(values)) != len(values):
            return "entries must be unique"
        return None
    return inner


def _distinct_counts(values):
    if not values:
        return "must not be empty"
    if any(v < 1 for v in values):
        return "entries must be ≥ 1"
    if len(set(values)) != len(values):
        return "entries must be unique"
    return None


_WIDEBAND = [
    Param("antenna_count", "int", 128, "", _at_least_one),
    Param("rf_chain_count", "int", 4, "", _at_least_one),
    Param("stream_count", "int", 4, "", _at_least_one),
    Param("center_frequency_hz", "float", 100e9, "Hz", _positive),
    Param("bandwidth_hz", "float", 10e9, "Hz", _nonneg),
    Param("subcarrier_count", "int", 10, "", _at_least_one),
    Param("user_angle_deg", "float", 30.0, "deg", _open_angle),
    Param("user_distance_m", "float", 15.0, "m", _positive),
    Param("rx_antenna_count", "int", 4, "", _at_least_one),
    Param("rx_spacing_m", "float", 0.25, "m", _positive),
    Param("max_delay_s", "float", -1.0, "s"),  # negative selects 2 * aperture / c
    Param("noise_power", "float", 1.0, "", _positive),
    Param("architectures", "str_list", list(ARCHITECTURES), "", _choices(ARCHITECTURES)),
]

_SENSING = [
    Param("element_count", "int", 256, "", _at_least_one),
    Param("frequency_hz", "float", 100e9, "Hz", _positive),
    Param("spacing_wavelengths", "float", 0.5, "", _positive),
    Param("target_angle_deg", "float", 45.0, "deg", _open_angle),
    Param("snapshot_count", "int", 100, "", _at_least_one),
    Param("snr_db", "float", 10.0, "dB"),
]

PRESET_PARAMS: dict[str, list[Param]] = {
    "fig2_gainmap": [
        Param("frequency_hz", "float", 100e9, "Hz", _positive),
        Param("aperture_m", "float", 0.5, "m", _positive),
        Param("spacing_wavelengths", "float", 0.5, "", _positive),
        Param("focus_angle_deg", "float", 0.0, "deg", _open_angle),
        Param("focus_distance_m", "float", 10.0, "m", _positive),
        Param("angle_min_deg", "float", -90.0, "deg", _closed_angle),
        Param("angle_max_deg", "float", 90.0, "deg", _closed_angle),
        Param("angle_step_deg", "float", 0.25, "deg", _positive),
        Param("distance_min_m", "float", 1.0, "m", _positive),
        Param("distance_max_m", "float", 400.0, "m", _positive),
        Param("distance_count", "int", 400, "", _at_least_one),
    ],
    "fig4a_se_vs_snr": _WIDEBAND + [
        Param("ttd_per_chain", "int", 16, "", _at_least_one),
        Param("snr_db_list", "float_list", [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0], "dB", _nonempty),
        Param("schemes", "str_list", list(SCHEME_NAMES), "", _choices(SCHEME_NAMES)),
    ],
    "fig4b_se_vs_ttd": _WIDEBAND + [
        Param("snr_db", "float", 10.0, "dB"),
        Param("ttd_counts", "int_list", [2, 4, 8, 16, 32], "", _distinct_counts),
        Param("schemes", "str_list", ["P-FDA", "HTS"], "", _choices(SCHEME_NAMES)),
    ],
    "fig5a_music": _SENSING + [
        Param("target_distance_m", "float", 20.0, "m", _positive),
        Param("source_count", "int", 1, "", _at_least_one),
        Param("angle_min_deg", "float", -90.0, "deg", _closed_angle),
        Param("angle_max_deg", "float", 90.0, "deg", _closed_angle),
        Param("angle_step_deg", "float", 0.1, "deg", _positive),
        Param("distance_min_m", "float", 5.0, "m", _positive),
        Param("distance_max_m", "float", 50.0, "m", _positive),
        Param("distance_step_m", "float", 0.1, "m", _positive),
    ],
    "fig5b_rcrb": _SENSING + [
        Param("distances_m", "float_list", [float(d) for d in range(5, 101, 5)], "m", _all(_positive)),
        Param("models", "str_list", ["near_field_joint", "far_field_angle_only"], "",
              _choices(("near_field_joint", "far_field_angle_only"))),
    ],
}

PRESET_KEYS = {k: {p.name for p in v} for k, v in PRESET_PARAMS.items()}

COMMON_PARAMS = [
    Param("seed", "int", 0),
    Param("output_dir", "str", "results"),
]


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated, fully-defaulted experiment description."""

    experiment: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    output_dir: str = "results"
    base_experiment: str | None = None  # set for ``custom`` runs

    @property
    def kind(self) -> str:
        """The preset whose computation runs (the base of a custom run)."""
        return self.base_experiment or self.experiment

    def __getitem__(self, key):
        return self.params[key]

    def to_dict(self) -> dict:
        d = {"experiment": self.experiment, "seed": self.seed, "output_dir": self.output_dir}
        if self.base_experiment:
            d["base_experiment"] = self.base_experiment
        d.update(self.params)
        return d

    def numeric_hash(self) -> str:
        """SHA-256 of every setting that affects the emitted numbers."""
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_(self, **changes) -> "ExperimentConfig":
        top = {k: changes.pop(k) for k in ("seed", "output_dir") if k in changes}
        params = dict(self.params)
        for k, v in changes.items():
            if k not in params:
                raise KeyError(k)
            params[k] = v
        return ExperimentConfig(self.experiment, params, top.get("seed", self.seed),
                                top.get("output_dir", self.output_dir), self.base_experiment)


def _coerce(p: Param, value) -> tuple[Any, str | None]:
    def scalar(kind, v):
        if kind == "int":
            if isinstance(v, bool) or not isinstance(v, int):
                return None, "must be an integer"
            return v, None
        if kind == "float":
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                return None, "must be a number"
            v = float(v)
            if not math.isfinite(v):
                return None, "must be finite"
            return v, None
        if kind == "str":
            return (v, None) if isinstance(v, str) else (None, "must be a string")
        if kind == "bool":
            return (v, None) if isinstance(v, bool) else (None, "must be true or false")
        raise AssertionError(kind)

    if p.kind.endswith("_list"):
        if not isinstance(value, list):
            return None, "must be a list"
        out = []
        for i, v in enumerate(value):
            c, err = scalar(p.kind[:-5], v)
            if err:
                return None, f"entry {i} {err}"
            out.append(c)
        return out, None
    return scalar(p.kind, value)


def _cross_checks(kind: str, v: dict) -> list[str]:
    """Constraints spanning several keys; ``v`` holds only individually valid values."""
    errs = []

    def both(*keys):
        return all(k in v for k in keys)

    if kind in ("fig2_gainmap", "fig5a_music"):
        if both("angle_min_deg", "angle_max_deg") and v["angle_min_deg"] > v["angle_max_deg"]:
            errs.append("angle_min_deg must not exceed angle_max_deg")
        if both("distance_min_m", "distance_max_m") and v["distance_min_m"] > v["distance_max_m"]:
            errs.append("distance_min_m must not exceed distance_max_m")
    if kind == "fig5a_music" and both("source_count", "element_count") \
            and v["source_count"] >= v["element_count"]:
        errs.append("source_count must be smaller than element_count")
    if kind not in ("fig4a_se_vs_snr", "fig4b_se_vs_ttd"):
        return errs
    if both("stream_count", "rf_chain_count") and v["stream_count"] > v["rf_chain_count"]:
        errs.append(f"stream_count={v['stream_count']} must not exceed rf_chain_count={v['rf_chain_count']}")
    if both("stream_count", "rx_antenna_count") and v["stream_count"] > v["rx_antenna_count"]:
        errs.append(f"stream_count={v['stream_count']} must not exceed rx_antenna_count={v['rx_antenna_count']}")
    if not both("antenna_count", "rf_chain_count", "architectures"):
        return errs
    n, l, archs = v["antenna_count"], v["rf_chain_count"], v["architectures"]
    if l > n:
        errs.append(f"rf_chain_count={l} must not exceed antenna_count={n}")
        return errs
    sub = "sub_connected" in archs
    if sub and n % l:
        errs.append(f"rf_chain_count={l} must divide antenna_count={n} for the sub_connected architecture")
        return errs
    key = "ttd_counts" if "ttd_counts" in PRESET_KEYS[kind] else "ttd_per_chain"
    if key not in v:
        return errs
    counts = v[key] if isinstance(v[key], list) else [v[key]]
    span = n // l if sub else n
    bad = [k for k in counts if span % k or n % k]
    if bad:
        shown = bad[0] if len(bad) == 1 else bad
        where = f"antenna_count={n}"
        if sub:
            where += f" and the {span} antennas per RF chain (antenna_count / rf_chain_count)"
        errs.append(f"{key}={shown} must divide {where}")
    return errs


def validate_mapping(raw: dict) -> ExperimentConfig:
    """Validate an already-parsed mapping; raises :class:`ConfigError` listing every problem."""
    errors = []
    raw = dict(raw)
    experiment = raw.pop("experiment", None)
    if experiment is None:
        raise ConfigError([f"experiment must be given; choose one of {list(EXPERIMENTS)}"])
    if experiment not in EXPERIMENTS:
        raise ConfigError([f"experiment {experiment!r} is unknown; choose one of {list(EXPERIMENTS)}"])
    base = None
    if experiment == "custom":
        base = raw.pop("base_experiment", None)
        if base not in BASE_EXPERIMENTS:
            raise ConfigError([f"base_experiment must be one of {list(BASE_EXPERIMENTS)} for custom runs"])
    elif "base_experiment" in raw:
        errors.append('base_experiment is only allowed when experiment = "custom"')
        raw.pop("base_experiment")
    kind = base or experiment
    specs = {p.name: p for p in PRESET_PARAMS[kind] + COMMON_PARAMS}
    values, rejected = {}, set()
    for key in sorted(raw):
        if isinstance(raw[key], dict):
            errors.append(f"{key} is a table; the configuration must be flat")
            continue
        if key not in specs:
            errors.append(f"{key} is not a known key for {kind}")
            continue
        value, err = _coerce(specs[key], raw[key])
        if err is None and specs[key].check is not None:
            err = specs[key].check(value)
        if err:
            errors.append(f"{key} {err}")
            rejected.add(key)
        else:
            values[key] = value
    filled = {p.name: values.get(p.name, p.default) for p in PRESET_PARAMS[kind]}
    errors += _cross_checks(kind, {k: x for k, x in filled.items() if k not in rejected})
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(experiment, filled, values.get("seed", 0), values.get("output_dir", "results"), base)


def validate_config(text: str) -> ExperimentConfig:
    """Parse and validate TOML text; raises :class:`ConfigError` listing every problem."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"configuration is not valid TOML: {exc}"]) from None
    return validate_mapping(raw)


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise ConfigError(["configuration must be UTF-8 text"]) from None
    return validate_config(text)


def default_config(experiment: str, **overrides) -> ExperimentConfig:
    raw = {"experiment": experiment, **overrides}
    return validate_mapping(raw)
