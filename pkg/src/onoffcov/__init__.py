"""Coverage analysis and simulation of cellular networks in which base
stations switch off when they serve too few users."""

from .analytic import (
    ActivityProbs,
    activity_probs,
    coverage_cond_n,
    coverage_cond_n_alpha4,
    coverage_hetnet_cond_n,
    coverage_hetnet_sir,
    coverage_homnet_sir,
    coverage_random,
    hetnet_activity,
    nth_distance_pdf,
    occupancy_pmf,
    order_pmf,
    rho,
)
from .model import NetworkSpec, OccupancyModel, PowerControl, TierSpec, derive_ratios
from .optimize import (
    ThresholdResult,
    optimal_threshold_closed,
    optimal_threshold_search,
    optimal_thresholds_hetnet,
)
from .sim import CoverageEstimate, RandomPolicy, Region, SinrMode, ThresholdPolicy, estimate, estimate_sweep

__version__ = "0.1.0"
