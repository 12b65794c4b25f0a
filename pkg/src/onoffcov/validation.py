"""Distributional checks of the simulator against the analytic building blocks.

Each check returns a :class:`Check` carrying the measured statistic, the
limit it is held to and whether it passed, so callers can print a report or
assert on it.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .analytic import hetnet_activity, nth_distance_ccdf, occupancy_pmf
from .model import NetworkSpec, derive_ratios
from .sim import Region, ThresholdPolicy, empirical_nth_distance, estimate_sweep, occupancy_histogram


OCCUPANCY_CELLS = 20_000


@dataclass(frozen=True)
class Check:
    name: str
    statistic: float
    limit: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.detail})" if self.detail else ""
        return f"{verdict}  {self.name}: {self.statistic:.4g} vs limit {self.limit:g}{extra}"


def activity_checks(spec: NetworkSpec, region: Region, thetas: Sequence[Sequence[int]], trials: int,
                    master_seed: int, tolerance: float = 0.02, workers: int = 1) -> list[Check]:
    """Simulated fraction of BSs left on and of users served by their
    nearest BS, against the analytic active / nearest probabilities."""
    policies = [ThresholdPolicy(tuple(t)) for t in thetas]
    ests = estimate_sweep(spec, region, policies, trials, master_seed, workers=workers)
    lam = [t.bs_density for t in spec.tiers]
    act_err, near_err = [], []
    for th, est in zip(thetas, ests):
        het = hetnet_activity(spec.with_thresholds(th))
        # fraction of BSs that are on weights tiers by density, not by q
        active = math.fsum(l * a.p_active for l, a in zip(lam, het.per_tier)) / math.fsum(lam)
        act_err.append(abs(est.active_fraction - active))
        near_err.append(abs(est.nearest_fraction - het.average.p_nearest))
    worst_a = int(np.argmax(act_err))
    worst_n = int(np.argmax(near_err))
    return [
        Check("active-fraction max |sim - analytic|", act_err[worst_a], tolerance,
              act_err[worst_a] <= tolerance, f"worst at theta={list(thetas[worst_a])}"),
        Check("served-by-nearest max |sim - analytic|", near_err[worst_n], tolerance,
              near_err[worst_n] <= tolerance, f"worst at theta={list(thetas[worst_n])}"),
    ]


def occupancy_check(spec: NetworkSpec, region: Region, trials: int, master_seed: int,
                    tolerance: float = 0.03, max_count: int = 80) -> Check:
    """Total variation between the simulated users-per-BS histogram and the
    gamma-cell occupancy PMF (single tier)."""
    if spec.num_tiers != 1:
        raise ValueError("occupancy check is defined for a single tier")
    emp = occupancy_histogram(spec, region, trials, master_seed, max_count)
    gamma = derive_ratios(spec).gamma
    pmf = np.array([occupancy_pmf(m, gamma) for m in range(max_count)])
    pmf = np.append(pmf, max(0.0, 1.0 - pmf.sum()))
    tv = 0.5 * float(np.abs(emp - pmf).sum())
    return Check("occupancy total variation", tv, tolerance, tv <= tolerance, f"gamma={gamma:.4g}")


def nth_distance_checks(spec: NetworkSpec, n: int, samples: int, master_seed: int,
                        ks_limit: float = 0.03, p_min: float = 0.01) -> list[Check]:
    """KS test of the n-th weighted-nearest BS distance per tier against the
    PPP n-th distance law at the weighted density, and a chi-square test of
    the tier make-up of the n - 1 closer BSs against the multinomial law."""
    sample = empirical_nth_distance(spec, n, samples, master_seed)
    ratios = derive_ratios(spec)
    checks = []
    for i, dens in enumerate(ratios.weighted_densities):
        data = sample.for_tier(i)
        if len(data) < 50:
            continue
        ks = stats.kstest(data, lambda r, d=dens: 1.0 - np.vectorize(nth_distance_ccdf)(r, n, d)).statistic
        checks.append(Check(f"n={n} distance KS, tier {i}", ks, ks_limit, ks <= ks_limit,
                            f"{len(data)} samples"))
    if spec.num_tiers > 1 and n > 1:
        K = spec.num_tiers
        outcomes = [c for c in itertools.product(range(n), repeat=K) if sum(c) == n - 1]
        index = {c: j for j, c in enumerate(outcomes)}
        observed = np.zeros(len(outcomes))
        for row in sample.prior_tier_counts:
            observed[index[tuple(int(v) for v in row)]] += 1
        probs = np.array([stats.multinomial.pmf(c, n - 1, ratios.tier_probs) for c in outcomes])
        expected = probs / probs.sum() * observed.sum()
        p = float(stats.chisquare(observed, expected).pvalue)
        checks.append(Check(f"n={n} closer-BS tier counts chi-square p", p, p_min, p > p_min,
                            f"{len(outcomes)} cells"))
    return checks


def run_suite(spec: NetworkSpec, region: Region, thetas: Sequence[Sequence[int]], trials: int,
              master_seed: int, samples: int = 10_000, workers: int = 1) -> list[Check]:
    checks = activity_checks(spec, region, thetas, trials, master_seed, workers=workers)
    if spec.num_tiers == 1:
        # enough snapshots for ~20k cells so sampling noise stays well below the limit
        per_trial = spec.tiers[0].bs_density * region.area
        checks.append(occupancy_check(spec, region, max(trials, math.ceil(OCCUPANCY_CELLS / per_trial)),
                                      master_seed))
    checks += nth_distance_checks(spec, 1, samples, master_seed)
    checks += nth_distance_checks(spec, 3, samples, master_seed + 1)
    return checks
