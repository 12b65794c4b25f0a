"""Scenario description shared by the analytic and Monte Carlo paths.

All quantities are linear SI: densities in BSs (or users) per m^2, powers in
watts, target SINR as a linear ratio.  dB handling lives in the config layer.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Sequence

# Shape parameter of the gamma fit to the Voronoi cell-area distribution.
CELL_SHAPE_K = 3.575

# Fraction of users beyond the cell-edge distance.
CELL_EDGE_OUTAGE = 0.05
# Cell-edge SNR sits this many dB above the target SINR.
CELL_EDGE_MARGIN_DB = 10.0


class OccupancyModel(str, enum.Enum):
    """Distribution of the number of users attached to a typical BS."""

    EXACT_GAMMA = "exact_gamma"
    POISSON = "poisson"
    NORMAL = "normal"

    @classmethod
    def parse(cls, value: "OccupancyModel | str") -> "OccupancyModel":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"gamma": "exact_gamma", "exact": "exact_gamma", "poisson_approx": "poisson",
                   "normal_approx": "normal"}
        return cls(aliases.get(key, key))


@dataclass(frozen=True)
class TierSpec:
    bs_density: float
    tx_power: float = 1.0
    threshold: int = 0

    def __post_init__(self):
        if not self.bs_density > 0:
            raise ValueError(f"bs_density must be positive, got {self.bs_density!r}")
        if not self.tx_power > 0:
            raise ValueError(f"tx_power must be positive, got {self.tx_power!r}")
        if int(self.threshold) != self.threshold or self.threshold < 0:
            raise ValueError(f"threshold must be a nonnegative integer, got {self.threshold!r}")
        object.__setattr__(self, "threshold", int(self.threshold))


@dataclass(frozen=True)
class NetworkSpec:
    tiers: tuple[TierSpec, ...]
    user_density: float
    pathloss_exponent: float = 4.0
    noise_power: float = 0.0
    target_sinr: float = 1.0

    def __post_init__(self):
        tiers = tuple(self.tiers)
        object.__setattr__(self, "tiers", tiers)
        if len(tiers) < 1:
            raise ValueError("at least one tier is required")
        if not self.pathloss_exponent > 2:
            raise ValueError(f"pathloss_exponent must exceed 2, got {self.pathloss_exponent!r}")
        if not self.user_density > 0:
            raise ValueError(f"user_density must be positive, got {self.user_density!r}")
        if not self.target_sinr > 0:
            raise ValueError(f"target_sinr must be positive, got {self.target_sinr!r}")
        if self.noise_power < 0:
            raise ValueError(f"noise_power must be nonnegative, got {self.noise_power!r}")

    @classmethod
    def homnet(cls, bs_density: float, user_density: float, threshold: int = 0,
               tx_power: float = 1.0, **kwargs) -> "NetworkSpec":
        return cls((TierSpec(bs_density, tx_power, threshold),), user_density, **kwargs)

    @property
    def num_tiers(self) -> int:
        return len(self.tiers)

    @property
    def is_sir(self) -> bool:
        return self.noise_power == 0

    @property
    def thresholds(self) -> tuple[int, ...]:
        return tuple(t.threshold for t in self.tiers)

    def with_thresholds(self, thresholds: Sequence[int]) -> "NetworkSpec":
        if len(thresholds) != self.num_tiers:
            raise ValueError(f"expected {self.num_tiers} thresholds, got {len(thresholds)}")
        tiers = tuple(replace(t, threshold=int(th)) for t, th in zip(self.tiers, thresholds))
        return replace(self, tiers=tiers)


@dataclass(frozen=True)
class DerivedRatios:
    gamma: float
    weights: tuple[float, ...]
    tier_probs: tuple[float, ...]
    weighted_densities: tuple[float, ...]
    weighted_gammas: tuple[float, ...]


def derive_ratios(spec: NetworkSpec) -> DerivedRatios:
    """Association weights, per-tier association probabilities and the
    HomNet-equivalent densities seen from each tier.

    ``gamma`` is users per BS over all tiers, ``lambda_u / sum(lambda_i)``.
    """
    alpha = spec.pathloss_exponent
    weights = tuple(t.tx_power ** (1.0 / alpha) for t in spec.tiers)
    mass = [t.bs_density * w * w for t, w in zip(spec.tiers, weights)]
    total = math.fsum(mass)
    q = tuple(m / total for m in mass)
    if spec.num_tiers == 1:
        q = (1.0,)
    lam_bar = tuple(t.bs_density / qi for t, qi in zip(spec.tiers, q))
    gam_bar = tuple(spec.user_density * qi / t.bs_density for t, qi in zip(spec.tiers, q))
    gamma = spec.user_density / math.fsum(t.bs_density for t in spec.tiers)
    return DerivedRatios(gamma, weights, q, lam_bar, gam_bar)


@dataclass(frozen=True)
class PowerControl:
    """Pre-control powers per tier and the common boost applied after on/off.

    ``beta = p_active ** (-alpha / 2)`` keeps the cell-edge SNR constant when
    the active BS density is thinned by ``p_active``.
    """

    base_powers: tuple[float, ...]
    beta: float = 1.0

    def __post_init__(self):
        if self.beta < 1.0 - 1e-12:
            raise ValueError(f"beta must be >= 1, got {self.beta!r}")

    @classmethod
    def from_activity(cls, base_powers: Sequence[float], p_active: float, alpha: float) -> "PowerControl":
        if not 0 < p_active <= 1:
            raise ValueError(f"active probability must be in (0, 1], got {p_active!r}")
        return cls(tuple(base_powers), p_active ** (-alpha / 2.0))

    @property
    def tx_powers(self) -> tuple[float, ...]:
        return tuple(self.beta * p for p in self.base_powers)


def cell_edge_distance(bs_density: float) -> float:
    """Distance exceeded by the nearest BS with probability ``CELL_EDGE_OUTAGE``."""
    if not bs_density > 0:
        raise ValueError("bs_density must be positive")
    return math.sqrt(-math.log(CELL_EDGE_OUTAGE) / (math.pi * bs_density))


def cell_edge_base_power(bs_density: float, alpha: float, noise_power: float,
                         target_sinr: float) -> float:
    """Transmit power putting the cell-edge SNR 10 dB above the target SINR."""
    snr_edge = 10.0 ** (CELL_EDGE_MARGIN_DB / 10.0) * target_sinr
    return snr_edge * cell_edge_distance(bs_density) ** alpha * noise_power


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x)
