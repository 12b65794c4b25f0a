"""Experiment configuration: schema checks and unit normalization.

Configs are YAML or JSON mappings.  Physical quantities take either a bare
number (default unit) or a string / mapping carrying an explicit unit::

    bs_density: "100 /km2"          # or 1e-4, or {value: 1e-4, unit: /m2}
    tx_power: "46 dBm"              # or "40 W", "16 dBW", "400 mW"
    target_sinr: "0 dB"             # or 1.0 (linear)

Everything is converted to linear SI before it reaches the model.
"""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .model import NetworkSpec, OccupancyModel, TierSpec, derive_ratios
from .sim import Region, SinrMode


class ConfigError(ValueError):
    """Schema violation; ``key`` is the dotted path of the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(.*?)\s*$")

_DENSITY_UNITS = {"": 1.0, "/m2": 1.0, "per_m2": 1.0, "m^-2": 1.0, "/km2": 1e-6, "per_km2": 1e-6,
                  "km^-2": 1e-6}
_POWER_UNITS = {"": ("lin", 1.0), "w": ("lin", 1.0), "mw": ("lin", 1e-3),
                "dbm": ("db", -30.0), "dbw": ("db", 0.0)}
_RATIO_UNITS = {"": ("lin", 1.0), "linear": ("lin", 1.0), "lin": ("lin", 1.0), "db": ("db", 0.0)}
_LENGTH_UNITS = {"": 1.0, "m": 1.0, "km": 1e3}


def _split_quantity(key: str, raw: Any) -> tuple[float, str]:
    if isinstance(raw, bool):
        raise ConfigError(key, "expected a number")
    if isinstance(raw, (int, float)):
        return float(raw), ""
    if isinstance(raw, dict):
        if "value" not in raw:
            raise ConfigError(f"{key}.value", "missing")
        extra = set(raw) - {"value", "unit"}
        if extra:
            raise ConfigError(f"{key}.{sorted(extra)[0]}", "unknown key")
        value, unit = _split_quantity(f"{key}.value", raw["value"])
        return value, str(raw.get("unit", unit)).strip().lower()
    if isinstance(raw, str):
        m = _QUANTITY.match(raw)
        if not m:
            raise ConfigError(key, f"cannot parse quantity {raw!r}")
        return float(m.group(1)), m.group(2).strip().lower().replace(" ", "")
    raise ConfigError(key, f"expected a number or quantity, got {type(raw).__name__}")


def parse_density(key: str, raw: Any) -> float:
    value, unit = _split_quantity(key, raw)
    if unit not in _DENSITY_UNITS:
        raise ConfigError(key, f"unknown density unit {unit!r} (use /m2 or /km2)")
    value *= _DENSITY_UNITS[unit]
    if not value > 0:
        raise ConfigError(key, "must be positive")
    return value


def _log_or_linear(key: str, raw: Any, table: dict, kind: str) -> float:
    value, unit = _split_quantity(key, raw)
    if unit not in table:
        raise ConfigError(key, f"unknown {kind} unit {unit!r}")
    mode, factor = table[unit]
    if mode == "db":
        return 10.0 ** ((value + factor) / 10.0)
    value *= factor
    return value


def parse_power(key: str, raw: Any, allow_zero: bool = False) -> float:
    value = _log_or_linear(key, raw, _POWER_UNITS, "power")
    if value < 0 or (value == 0 and not allow_zero):
        raise ConfigError(key, "must be positive")
    return value


def parse_ratio(key: str, raw: Any) -> float:
    value = _log_or_linear(key, raw, _RATIO_UNITS, "ratio")
    if not value > 0:
        raise ConfigError(key, "must be positive")
    return value


def parse_length(key: str, raw: Any) -> float:
    value, unit = _split_quantity(key, raw)
    if unit not in _LENGTH_UNITS:
        raise ConfigError(key, f"unknown length unit {unit!r}")
    return value * _LENGTH_UNITS[unit]


def _int(key: str, raw: Any, minimum: int = 0) -> int:
    if isinstance(raw, bool) or not isinstance(raw, (int, float)) or int(raw) != raw:
        raise ConfigError(key, "expected an integer")
    if raw < minimum:
        raise ConfigError(key, f"must be >= {minimum}")
    return int(raw)


def _int_range(key: str, raw: Any) -> list[int]:
    """``[a, b, ...]`` explicit list, or ``{start, stop, step}`` inclusive of stop."""
    if isinstance(raw, list):
        values = [_int(f"{key}[{i}]", v) for i, v in enumerate(raw)]
    elif isinstance(raw, dict):
        extra = set(raw) - {"start", "stop", "step"}
        if extra:
            raise ConfigError(f"{key}.{sorted(extra)[0]}", "unknown key")
        if "stop" not in raw:
            raise ConfigError(f"{key}.stop", "missing")
        start = _int(f"{key}.start", raw.get("start", 0))
        stop = _int(f"{key}.stop", raw["stop"])
        step = _int(f"{key}.step", raw.get("step", 1), minimum=1)
        values = list(range(start, stop + 1, step))
    else:
        raise ConfigError(key, "expected a list or {start, stop, step}")
    if not values:
        raise ConfigError(key, "sweep range is empty")
    return sorted(set(values))


def _take(raw: dict, key: str, prefix: str, required: bool = True, default: Any = None) -> Any:
    if key in raw:
        return raw[key]
    if required:
        raise ConfigError(f"{prefix}{key}", "missing")
    return default


def _check_keys(raw: Any, allowed: set[str], prefix: str) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError(prefix.rstrip(".") or "<root>", "expected a mapping")
    for k in raw:
        if k not in allowed:
            raise ConfigError(f"{prefix}{k}", "unknown key")
    return raw


SWEEP_KINDS = ("threshold", "random_vs_threshold", "threshold_grid")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    spec: NetworkSpec
    region: Region
    sweep: str
    thresholds: tuple[tuple[int, ...], ...]
    trials: int | None
    master_seed: int
    occupancy: OccupancyModel
    sinr: SinrMode | None
    theta_max: int = 30
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def resolved(self) -> dict:
        """JSON-ready view of every normalized value, for the run manifest."""
        ratios = derive_ratios(self.spec)
        return {
            "name": self.name,
            "network": {
                "tiers": [asdict(t) for t in self.spec.tiers],
                "user_density_per_m2": self.spec.user_density,
                "pathloss_exponent": self.spec.pathloss_exponent,
                "target_sinr_linear": self.spec.target_sinr,
                "noise_power_w": None if self.sinr is None else self.sinr.noise_power,
                "base_powers_w": None if self.sinr is None else list(self.sinr.resolve_base_powers(self.spec)),
                "power_control": None if self.sinr is None else self.sinr.power_control,
                "tier_probs": list(ratios.tier_probs),
                "weighted_gammas": list(ratios.weighted_gammas),
            },
            "region": asdict(self.region),
            "sweep": self.sweep,
            "thresholds": [list(t) for t in self.thresholds],
            "trials": self.trials,
            "seed": self.master_seed,
            "occupancy": self.occupancy.value,
            "theta_max": self.theta_max,
        }


def _tiers(raw: Any) -> list[tuple[float, float]]:
    if not isinstance(raw, list) or not raw:
        raise ConfigError("network.tiers", "expected a nonempty list")
    out = []
    for i, tier in enumerate(raw):
        prefix = f"network.tiers[{i}]."
        _check_keys(tier, {"bs_density", "tx_power"}, prefix)
        density = parse_density(prefix + "bs_density", _take(tier, "bs_density", prefix))
        power = parse_power(prefix + "tx_power", tier.get("tx_power", 1.0))
        out.append((density, power))
    return out


def _user_density(net: dict, tiers: list[tuple[float, float]], alpha: float) -> float:
    has_density = "user_density" in net
    has_target = "weighted_gamma" in net
    if has_density == has_target:
        raise ConfigError("network.user_density", "give exactly one of user_density or weighted_gamma")
    if has_density:
        return parse_density("network.user_density", net["user_density"])
    # users per BS seen by one tier; solve lambda_u = gamma_i * lambda_i / q_i
    wg = _check_keys(net["weighted_gamma"], {"tier", "value"}, "network.weighted_gamma.")
    tier = _int("network.weighted_gamma.tier", _take(wg, "tier", "network.weighted_gamma."))
    if tier >= len(tiers):
        raise ConfigError("network.weighted_gamma.tier", "no such tier")
    value = _take(wg, "value", "network.weighted_gamma.")
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
        raise ConfigError("network.weighted_gamma.value", "must be a positive number")
    probe = NetworkSpec(tuple(TierSpec(d, p) for d, p in tiers), 1.0, alpha)
    ratios = derive_ratios(probe)
    return float(value) * ratios.weighted_densities[tier]


def parse_config(raw: Any, seed_override: int | None = None,
                 trials_override: int | None = None) -> ExperimentConfig:
    """Validate a loaded config tree and normalize it."""
    root = _check_keys(raw, {"name", "seed", "trials", "occupancy", "network", "region", "sweep",
                             "theta_max"}, "")
    warnings: list[str] = []

    net = _check_keys(_take(root, "network", ""), {"tiers", "user_density", "weighted_gamma",
                                                    "pathloss_exponent", "target_sinr", "noise_power",
                                                    "base_powers", "power_control"}, "network.")
    alpha = net.get("pathloss_exponent", 4.0)
    if isinstance(alpha, bool) or not isinstance(alpha, (int, float)) or not alpha > 2:
        raise ConfigError("network.pathloss_exponent", "must be a number > 2")
    alpha = float(alpha)
    tiers = _tiers(_take(net, "tiers", "network."))
    user_density = _user_density(net, tiers, alpha)
    target = parse_ratio("network.target_sinr", net.get("target_sinr", 1.0))

    sinr = None
    if net.get("noise_power") is not None:
        noise = parse_power("network.noise_power", net["noise_power"])
        base = None
        if net.get("base_powers") is not None:
            if not isinstance(net["base_powers"], list) or len(net["base_powers"]) != len(tiers):
                raise ConfigError("network.base_powers", "expected one power per tier")
            base = tuple(parse_power(f"network.base_powers[{i}]", p) for i, p in enumerate(net["base_powers"]))
        pc = net.get("power_control", True)
        if not isinstance(pc, bool):
            raise ConfigError("network.power_control", "expected true or false")
        sinr = (noise, base, pc)
    elif "base_powers" in net or "power_control" in net:
        key = "base_powers" if "base_powers" in net else "power_control"
        warnings.append(f"network.{key} ignored without network.noise_power (SIR mode)")

    try:
        occupancy = OccupancyModel.parse(root.get("occupancy", "exact_gamma"))
    except ValueError:
        raise ConfigError("occupancy", f"unknown model {root.get('occupancy')!r}") from None
    if occupancy is OccupancyModel.NORMAL:
        raise ConfigError("occupancy", "normal model has no PMF; use exact_gamma or poisson")

    spec = NetworkSpec(tuple(TierSpec(d, p) for d, p in tiers), user_density, alpha,
                       0.0 if sinr is None else sinr[0], target)
    sinr_mode = None if sinr is None else SinrMode(sinr[0], sinr[1], occupancy, sinr[2])

    reg = _check_keys(root.get("region", {}), {"width", "height", "boundary", "margin"}, "region.")
    try:
        region = Region(parse_length("region.width", reg.get("width", 3000.0)),
                        parse_length("region.height", reg.get("height", 3000.0)),
                        str(reg.get("boundary", "torus")),
                        parse_length("region.margin", reg.get("margin", 500.0)))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("region", str(exc)) from None

    sw = _check_keys(_take(root, "sweep", ""), {"kind", "thresholds"}, "sweep.")
    kind = sw.get("kind", "threshold" if len(tiers) == 1 else "threshold_grid")
    if kind not in SWEEP_KINDS:
        raise ConfigError("sweep.kind", f"expected one of {', '.join(SWEEP_KINDS)}")
    th_raw = _take(sw, "thresholds", "sweep.")
    if kind == "threshold_grid":
        if not isinstance(th_raw, list) or len(th_raw) != len(tiers):
            raise ConfigError("sweep.thresholds", "expected one range per tier")
        axes = [_int_range(f"sweep.thresholds[{i}]", r) for i, r in enumerate(th_raw)]
        grid: list[tuple[int, ...]] = [()]
        for axis in axes:
            grid = [g + (v,) for g in grid for v in axis]
        thresholds = tuple(grid)
    else:
        if len(tiers) != 1:
            raise ConfigError("sweep.kind", f"{kind!r} needs a single-tier network; use threshold_grid")
        thresholds = tuple((v,) for v in _int_range("sweep.thresholds", th_raw))

    if "seed" not in root and seed_override is None:
        raise ConfigError("seed", "missing (no default seed is used)")
    seed = seed_override if seed_override is not None else _int("seed", root["seed"])
    trials = trials_override if trials_override is not None else (
        _int("trials", root["trials"], minimum=1) if "trials" in root else None)
    theta_max = _int("theta_max", root.get("theta_max", 30))
    name = str(root.get("name", "experiment"))

    return ExperimentConfig(name, spec, region, kind, thresholds, trials, seed, occupancy,
                            sinr_mode, theta_max, tuple(warnings))


def load_config(path: str | Path, seed_override: int | None = None,
                trials_override: int | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError("<file>", f"parse error: {exc}") from None
    return parse_config(raw, seed_override, trials_override)
