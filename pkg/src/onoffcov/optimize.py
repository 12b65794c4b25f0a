"""Coverage-maximizing user-number thresholds."""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

from .analytic import activity_probs, coverage_hetnet_sir, coverage_homnet_sir, rho
from .model import NetworkSpec, OccupancyModel, derive_ratios

# Below this many users per BS the normal/Poisson shortcuts stop being trustworthy.
LARGE_GAMMA = 5.0


class SmallGammaWarning(UserWarning):
    """The closed-form threshold rule is used outside its large-gamma regime."""


@dataclass(frozen=True)
class ThresholdResult:
    theta_opt: tuple[int, ...]
    achieved_coverage: float
    method: str
    derivative_trace: tuple[tuple[float, float], ...] | None = None
    small_gamma: bool = False
    evaluations: int = 0

    def __post_init__(self):
        if self.method not in ("closed_form", "exhaustive"):
            raise ValueError(f"unknown method {self.method!r}")

    def as_dict(self) -> dict:
        out = {
            "theta_opt": list(self.theta_opt),
            "achieved_coverage": self.achieved_coverage,
            "method": self.method,
            "small_gamma": self.small_gamma,
        }
        if self.derivative_trace is not None:
            out["derivative_trace"] = [list(p) for p in self.derivative_trace]
        return out


def optimal_threshold_closed(gamma: float) -> int:
    """Nearest integer to ``gamma``, halves rounded up."""
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma!r}")
    return int(math.floor(gamma + 0.5))


def coverage_derivative_approx(T: float, gamma: float, theta: float, alpha: float = 4.0,
                               warn: bool = True) -> float:
    """d(coverage)/d(theta) with activity probabilities from the
    continuity-corrected normal approximation.

    Written out from the derivative of
    ``(1 + p_1 rho) / ((1 + rho)(1 + p_a rho))`` with
    ``p_a' = -phi(theta + 1/2)`` and ``p_1' = -phi(theta - 1/2)``.
    """
    if warn and gamma < LARGE_GAMMA:
        warnings.warn(f"gamma={gamma} is below {LARGE_GAMMA}; the normal approximation is rough",
                      SmallGammaWarning, stacklevel=2)
    r = rho(T, alpha)
    probs = activity_probs(theta, gamma, OccupancyModel.NORMAL)
    x = (theta - gamma) / (2.0 * gamma)
    envelope = math.exp(-((theta - gamma) ** 2 + 0.25) / (2.0 * gamma)) / math.sqrt(2.0 * math.pi * gamma)
    bracket = math.exp(x) * (1.0 + probs.p_a * r) - math.exp(-x) * (1.0 + probs.p_1 * r)
    return -envelope / (1.0 + probs.p_a * r) ** 2 * r / (1.0 + r) * bracket


def derivative_trace(T: float, gamma: float, thetas: Iterable[float], alpha: float = 4.0
                     ) -> tuple[tuple[float, float], ...]:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SmallGammaWarning)
        return tuple((float(th), coverage_derivative_approx(T, gamma, th, alpha)) for th in thetas)


def _argmax(values: Sequence[float]) -> int:
    # first maximum wins, i.e. ties go to the smaller threshold
    best = 0
    for i, v in enumerate(values):
        if v > values[best]:
            best = i
    return best


def optimal_threshold_search(T: float, gamma: float, alpha: float = 4.0, theta_max: int = 30,
                             model: OccupancyModel | str = OccupancyModel.EXACT_GAMMA,
                             with_trace: bool = False) -> ThresholdResult:
    """Exhaustive argmax of the SIR coverage over ``theta`` in ``0..theta_max``."""
    if theta_max < 0:
        raise ValueError("theta_max must be >= 0")
    values = [coverage_homnet_sir(T, gamma, th, alpha, model) for th in range(theta_max + 1)]
    best = _argmax(values)
    trace = derivative_trace(T, gamma, range(theta_max + 1), alpha) if with_trace else None
    return ThresholdResult((best,), values[best], "exhaustive", trace,
                           small_gamma=gamma < LARGE_GAMMA, evaluations=len(values))


def optimal_threshold_homnet(T: float, gamma: float, alpha: float = 4.0,
                             model: OccupancyModel | str = OccupancyModel.EXACT_GAMMA,
                             with_trace: bool = False) -> ThresholdResult:
    """Closed-form threshold with its coverage evaluated under ``model``."""
    theta = optimal_threshold_closed(gamma)
    cov = coverage_homnet_sir(T, gamma, theta, alpha, model)
    trace = None
    if with_trace:
        trace = derivative_trace(T, gamma, range(0, 2 * theta + 3), alpha)
    return ThresholdResult((theta,), cov, "closed_form", trace, small_gamma=gamma < LARGE_GAMMA,
                           evaluations=1)


def optimal_thresholds_hetnet(spec: NetworkSpec,
                              model: OccupancyModel | str = OccupancyModel.EXACT_GAMMA,
                              method: str = "closed_form", theta_max: int | None = None,
                              start: Sequence[int] | None = None) -> ThresholdResult:
    """Per-tier thresholds for a K-tier network.

    ``closed_form`` rounds each tier's weighted gamma.  ``exhaustive`` runs
    coordinate ascent on the SIR coverage from ``start`` (all zeros by
    default): each sweep line-searches one tier at a time over
    ``0..theta_max`` and stops once a full sweep changes nothing.
    """
    ratios = derive_ratios(spec)
    small = any(g < LARGE_GAMMA for g in ratios.weighted_gammas)
    if method == "closed_form":
        thetas = tuple(optimal_threshold_closed(g) for g in ratios.weighted_gammas)
        cov = coverage_hetnet_sir(spec.with_thresholds(thetas), model)
        return ThresholdResult(thetas, cov, "closed_form", small_gamma=small, evaluations=1)
    if method != "exhaustive":
        raise ValueError(f"unknown method {method!r}")

    if theta_max is None:
        theta_max = max(2 * optimal_threshold_closed(g) + 5 for g in ratios.weighted_gammas)
    current = list(start) if start is not None else [0] * spec.num_tiers
    cache: dict[tuple[int, ...], float] = {}

    def cov_at(thetas: Sequence[int]) -> float:
        key = tuple(thetas)
        if key not in cache:
            cache[key] = coverage_hetnet_sir(spec.with_thresholds(key), model)
        return cache[key]

    best = cov_at(current)
    for _ in range(100 * spec.num_tiers):
        changed = False
        for i in range(spec.num_tiers):
            line = []
            for th in range(theta_max + 1):
                trial = list(current)
                trial[i] = th
                line.append(cov_at(trial))
            j = _argmax(line)
            if line[j] > best:
                current[i] = j
                best = line[j]
                changed = True
        if not changed:
            break
    return ThresholdResult(tuple(current), best, "exhaustive", small_gamma=small,
                           evaluations=len(cache))


def grid_search_hetnet(spec: NetworkSpec, theta_max: int,
                       model: OccupancyModel | str = OccupancyModel.EXACT_GAMMA) -> ThresholdResult:
    """Full-grid argmax over every threshold combination (small K only)."""
    best_key: tuple[int, ...] | None = None
    best = -math.inf
    count = 0
    for key in itertools.product(range(theta_max + 1), repeat=spec.num_tiers):
        value = coverage_hetnet_sir(spec.with_thresholds(key), model)
        count += 1
        if value > best:
            best, best_key = value, key
    ratios = derive_ratios(spec)
    return ThresholdResult(best_key, best, "exhaustive",
                           small_gamma=any(g < LARGE_GAMMA for g in ratios.weighted_gammas),
                           evaluations=count)
