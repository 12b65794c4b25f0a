"""Seeded Monte Carlo estimation of coverage under BS on/off control.

Each trial drops Poisson BSs (per tier) and users in a rectangle, associates
every user with its weighted-nearest BS (distance divided by
``P_t ** (1/alpha)``), switches BSs off according to a policy, reattaches the
orphaned users to their weighted-nearest *active* BS and draws Rayleigh fading
for every user-BS link.

Every random stream is keyed by ``(master_seed, trial, stream)`` through a
counter-based Philox generator, so a trial's output does not depend on which
worker ran it or in what order.  All policies of a sweep share the trial's
snapshot and fading draws; an estimate for one policy is therefore identical
to the matching entry of any sweep containing it.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy.spatial import cKDTree

from .analytic import activity_probs, hetnet_activity
from .model import (
    NetworkSpec,
    OccupancyModel,
    PowerControl,
    cell_edge_base_power,
    derive_ratios,
)

log = logging.getLogger(__name__)

__all__ = [
    "Region",
    "ThresholdPolicy",
    "RandomPolicy",
    "SinrMode",
    "Snapshot",
    "Association",
    "CoverageEstimate",
    "SimulationAborted",
    "EmptyTrial",
    "trial_rng",
    "sample_snapshot",
    "associate",
    "apply_onoff",
    "evaluate_coverage",
    "estimate",
    "estimate_sweep",
    "empirical_nth_distance",
    "empirical_interference_laplace",
    "occupancy_histogram",
]

# random streams within a trial
STREAM_LAYOUT = 0
STREAM_POLICY = 1
STREAM_FADING = 2

# users per block when forming user x BS matrices; fixed so fading draws are
# consumed identically no matter how the work is scheduled
USER_BLOCK = 1024
# candidates kept per user when searching for the nearest active BS
CANDIDATES = 96
# abort when more than this fraction of trials has to be discarded
MAX_DISCARD_FRACTION = 0.10


class EmptyTrial(RuntimeError):
    """A trial has no BS in some tier, or no BS left on after on/off."""


class SimulationAborted(RuntimeError):
    """Too many trials were discarded for the estimate to be trusted."""


@dataclass(frozen=True)
class Region:
    """Simulation window.

    ``torus`` wraps distances around the edges.  ``inner_window`` uses plain
    Euclidean distances and only scores users farther than ``margin`` from
    every edge.
    """

    width: float = 3000.0
    height: float = 3000.0
    boundary: str = "torus"
    margin: float = 500.0

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError("region dimensions must be positive")
        if self.boundary not in ("torus", "inner_window"):
            raise ValueError(f"unknown boundary mode {self.boundary!r}")
        if self.boundary == "inner_window" and not 0 <= self.margin < min(self.width, self.height) / 2:
            raise ValueError("margin must be below half the smaller side")

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def torus(self) -> bool:
        return self.boundary == "torus"

    def measured(self, xy: np.ndarray) -> np.ndarray:
        if self.torus:
            return np.ones(len(xy), dtype=bool)
        m = self.margin
        return ((xy[:, 0] > m) & (xy[:, 0] < self.width - m)
                & (xy[:, 1] > m) & (xy[:, 1] < self.height - m))

    def squared_distances(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Pairwise squared distances, shape ``(len(a), len(b))``."""
        dx = np.abs(a[:, None, 0] - b[None, :, 0])
        dy = np.abs(a[:, None, 1] - b[None, :, 1])
        if self.torus:
            np.minimum(dx, self.width - dx, out=dx)
            np.minimum(dy, self.height - dy, out=dy)
        dx *= dx
        dy *= dy
        dx += dy
        return dx

    def distances(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Pairwise distances, shape ``(len(a), len(b))``."""
        return np.sqrt(self.squared_distances(a, b))


@dataclass(frozen=True)
class ThresholdPolicy:
    """Switch a BS off when it serves ``thresholds[tier]`` users or fewer."""

    thresholds: tuple[int, ...]

    def label(self) -> str:
        return "theta=" + ",".join(str(t) for t in self.thresholds)


@dataclass(frozen=True)
class RandomPolicy:
    """Keep each BS on independently with probability ``q``; BSs left
    without users afterwards also switch off."""

    q: float

    def __post_init__(self):
        if not 0 < self.q <= 1:
            raise ValueError(f"q must be in (0, 1], got {self.q!r}")

    def label(self) -> str:
        return f"q={self.q:.6g}"


Policy = Union[ThresholdPolicy, RandomPolicy]


@dataclass(frozen=True)
class SinrMode:
    """Noise-aware evaluation with power control.

    ``base_powers`` are the per-tier powers before on/off; when omitted the
    first tier is calibrated to the cell-edge SNR rule and the other tiers
    keep their ``tx_power`` ratios.  Active BSs transmit ``beta * base`` with
    ``beta`` from the analytic active probability of the policy.
    """

    noise_power: float = 1.0
    base_powers: tuple[float, ...] | None = None
    occupancy: OccupancyModel = OccupancyModel.EXACT_GAMMA
    power_control: bool = True

    def resolve_base_powers(self, spec: NetworkSpec) -> tuple[float, ...]:
        if self.base_powers is not None:
            if len(self.base_powers) != spec.num_tiers:
                raise ValueError("one base power per tier is required")
            return tuple(self.base_powers)
        lam = math.fsum(t.bs_density for t in spec.tiers)
        p1 = cell_edge_base_power(lam, spec.pathloss_exponent, self.noise_power, spec.target_sinr)
        ref = spec.tiers[0].tx_power
        return tuple(p1 * t.tx_power / ref for t in spec.tiers)

    def power_control_for(self, spec: NetworkSpec, policy: Policy) -> PowerControl:
        base = self.resolve_base_powers(spec)
        if not self.power_control:
            return PowerControl(base, 1.0)
        return PowerControl.from_activity(base, analytic_active_fraction(spec, policy, self.occupancy),
                                          spec.pathloss_exponent)


def analytic_active_fraction(spec: NetworkSpec, policy: Policy,
                             model: OccupancyModel | str = OccupancyModel.EXACT_GAMMA) -> float:
    """Association-weighted probability that a BS stays on under ``policy``."""
    if isinstance(policy, ThresholdPolicy):
        return hetnet_activity(spec.with_thresholds(policy.thresholds), model).average.p_active
    ratios = derive_ratios(spec)
    return math.fsum(qi * policy.q * activity_probs(0, g / policy.q, model).p_active
                     for qi, g in zip(ratios.tier_probs, ratios.weighted_gammas))


# ---------------------------------------------------------------------------
# Snapshots
# ---------------------------------------------------------------------------

def trial_rng(master_seed: int, trial: int, stream: int) -> np.random.Generator:
    """Counter-based generator for one (trial, stream) pair."""
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(trial), int(stream)))
    return np.random.Generator(np.random.Philox(seq))


@dataclass
class Snapshot:
    bs_xy: np.ndarray
    bs_tier: np.ndarray
    user_xy: np.ndarray
    master_seed: int
    trial: int

    @property
    def bs_points(self) -> list[tuple[float, float, int]]:
        return [(float(x), float(y), int(t)) for (x, y), t in zip(self.bs_xy, self.bs_tier)]

    @property
    def user_points(self) -> list[tuple[float, float]]:
        return [(float(x), float(y)) for x, y in self.user_xy]

    def shifted(self, dx: float, dy: float, region: Region) -> "Snapshot":
        """Translate every point, wrapping around the region."""
        shift = np.array([dx, dy])
        size = np.array([region.width, region.height])
        return Snapshot(np.mod(self.bs_xy + shift, size), self.bs_tier.copy(),
                        np.mod(self.user_xy + shift, size), self.master_seed, self.trial)


def sample_snapshot(spec: NetworkSpec, region: Region, master_seed: int, trial: int) -> Snapshot:
    """Independent PPPs per tier plus a user PPP, uniform in the region.

    Raises :class:`EmptyTrial` when some tier draws no BS.
    """
    rng = trial_rng(master_seed, trial, STREAM_LAYOUT)
    size = np.array([region.width, region.height])
    xy, tiers = [], []
    for i, tier in enumerate(spec.tiers):
        count = rng.poisson(tier.bs_density * region.area)
        xy.append(rng.random((count, 2)) * size)
        tiers.append(np.full(count, i, dtype=np.int64))
    users = rng.random((rng.poisson(spec.user_density * region.area), 2)) * size
    snap = Snapshot(np.concatenate(xy), np.concatenate(tiers), users, master_seed, trial)
    empty = [i for i, block in enumerate(xy) if len(block) == 0]
    if empty:
        raise EmptyTrial(f"trial {trial}: tier(s) {empty} drew no BS")
    return snap


# ---------------------------------------------------------------------------
# Association
# ---------------------------------------------------------------------------

@dataclass
class Association:
    serving: np.ndarray
    bs_user_count: np.ndarray
    active: np.ndarray
    order: np.ndarray


class _Geometry:
    """Per-trial candidate lists: each user's BSs sorted by weighted distance.

    Only the ``CANDIDATES`` closest (per tier, then merged) are kept; a user
    whose candidates are all off falls back to a full scan.
    """

    def __init__(self, snap: Snapshot, spec: NetworkSpec, region: Region):
        self.snap, self.spec, self.region = snap, spec, region
        ratios = derive_ratios(spec)
        self.bs_weight = np.asarray(ratios.weights)[snap.bs_tier]
        self.n_bs = len(snap.bs_xy)
        self.n_users = len(snap.user_xy)
        idx_parts, dist_parts = [], []
        boxsize = (region.width, region.height) if region.torus else None
        for i in range(spec.num_tiers):
            members = np.flatnonzero(snap.bs_tier == i)
            k = min(CANDIDATES, len(members))
            # cKDTree rejects points sitting exactly on the periodic boundary
            pts = np.mod(snap.bs_xy[members], (region.width, region.height)) if boxsize else snap.bs_xy[members]
            tree = cKDTree(pts, boxsize=boxsize)
            d, j = tree.query(np.mod(snap.user_xy, (region.width, region.height)) if boxsize else snap.user_xy, k=k)
            d = np.asarray(d, dtype=float).reshape(self.n_users, k)
            j = np.asarray(j).reshape(self.n_users, k)
            idx_parts.append(members[j])
            dist_parts.append(d / ratios.weights[i])
        idx = np.concatenate(idx_parts, axis=1)
        wd = np.concatenate(dist_parts, axis=1)
        order = np.argsort(wd, axis=1, kind="stable")
        self.cand = np.take_along_axis(idx, order, axis=1)
        self.cand_wd = np.take_along_axis(wd, order, axis=1)
        # candidates beyond the smallest per-tier cutoff may skip closer BSs
        # of a truncated tier; only the prefix below every tier's horizon is exact
        horizon = np.full(self.n_users, np.inf)
        for i, part in enumerate(dist_parts):
            if part.shape[1] < int(np.sum(snap.bs_tier == i)):
                horizon = np.minimum(horizon, part[:, -1])
        self.valid = self.cand_wd <= horizon[:, None]

    @property
    def nearest(self) -> np.ndarray:
        return self.cand[:, 0]

    def weighted_rows(self, users: np.ndarray) -> np.ndarray:
        d = self.region.distances(self.snap.user_xy[users], self.snap.bs_xy)
        return d / self.bs_weight[None, :]

    def serve(self, active: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Weighted-nearest active BS per user and its rank among all BSs."""
        ok = active[self.cand] & self.valid
        hit = ok.any(axis=1)
        first = ok.argmax(axis=1)
        rows = np.arange(self.n_users)
        serving = self.cand[rows, first]
        rank = first + 1
        missing = np.flatnonzero(~hit)
        if len(missing):
            if not active.any():
                raise EmptyTrial("no active BS")
            for start in range(0, len(missing), USER_BLOCK):
                users = missing[start:start + USER_BLOCK]
                wd = self.weighted_rows(users)
                masked = np.where(active[None, :], wd, np.inf)
                best = masked.argmin(axis=1)
                serving[users] = best
                best_wd = wd[np.arange(len(users)), best]
                rank[users] = (wd < best_wd[:, None]).sum(axis=1) + 1
        return serving, rank


def _association(geo: _Geometry, serving: np.ndarray, rank: np.ndarray, active: np.ndarray,
                 counts: np.ndarray) -> Association:
    return Association(serving, counts, active, rank)


def associate(snapshot: Snapshot, spec: NetworkSpec, region: Region,
              _geo: _Geometry | None = None) -> Association:
    """Weighted-nearest association before any BS is switched off."""
    if len(snapshot.bs_xy) == 0:
        raise EmptyTrial("snapshot has no BS")
    geo = _geo or _Geometry(snapshot, spec, region)
    serving = geo.nearest.copy()
    counts = np.bincount(serving, minlength=geo.n_bs)
    return Association(serving, counts, np.ones(geo.n_bs, dtype=bool), np.ones(geo.n_users, dtype=np.int64))


def _policy_active(geo: _Geometry, base: Association, policy: Policy, master_seed: int,
                   trial: int) -> np.ndarray:
    if isinstance(policy, ThresholdPolicy):
        th = np.asarray(policy.thresholds, dtype=np.int64)
        if len(th) != geo.spec.num_tiers:
            raise ValueError("one threshold per tier is required")
        return base.bs_user_count > th[geo.snap.bs_tier]
    u = trial_rng(master_seed, trial, STREAM_POLICY).random(geo.n_bs)
    on = u < policy.q
    if not on.any():
        raise EmptyTrial("random thinning left no BS on")
    serving, _ = geo.serve(on)
    loaded = np.bincount(serving, minlength=geo.n_bs) > 0
    return on & loaded


def apply_onoff(assoc: Association, snapshot: Snapshot, spec: NetworkSpec, region: Region,
                policy: Policy, master_seed: int | None = None, trial: int | None = None,
                _geo: _Geometry | None = None) -> Association:
    """Switch BSs off in one pass and reattach their users.

    Threshold policies read the pre-on/off user counts; the counts are not
    re-evaluated after users move (no cascade).  ``bs_user_count`` of the
    result holds the post-reassociation load.
    """
    geo = _geo or _Geometry(snapshot, spec, region)
    seed = snapshot.master_seed if master_seed is None else master_seed
    tr = snapshot.trial if trial is None else trial
    active = _policy_active(geo, assoc, policy, seed, tr)
    if not active.any():
        raise EmptyTrial("no BS left on")
    serving, rank = geo.serve(active)
    counts = np.bincount(serving, minlength=geo.n_bs)
    return Association(serving, counts, active, rank)


# ---------------------------------------------------------------------------
# Coverage evaluation
# ---------------------------------------------------------------------------

def _link_powers(geo: _Geometry, sinr: SinrMode | None) -> np.ndarray:
    spec = geo.spec
    if sinr is None:
        per_tier = np.array([t.tx_power for t in spec.tiers])
    else:
        per_tier = np.array(sinr.resolve_base_powers(spec))
    return per_tier[geo.snap.bs_tier]


def _covered_counts(geo: _Geometry, servings: np.ndarray, actives: np.ndarray,
                    betas: np.ndarray, noise: float, master_seed: int, trial: int,
                    sinr: SinrMode | None, return_indicators: bool = False):
    """Covered users per policy.

    ``servings`` is (users, policies), ``actives`` is (BSs, policies).  One
    fading draw per measured user-BS link is shared by every policy.  With
    base powers ``P`` and boost ``beta`` the test ``beta S > T (beta I + N)``
    is evaluated as ``S > T (I + N / beta)``.
    """
    spec, region = geo.spec, geo.region
    T, alpha = spec.target_sinr, spec.pathloss_exponent
    measured = np.flatnonzero(region.measured(geo.snap.user_xy))
    power = _link_powers(geo, sinr)
    rng = trial_rng(master_seed, trial, STREAM_FADING)
    act = actives.astype(float)
    covered = np.zeros(actives.shape[1], dtype=np.int64)
    indicators = [] if return_indicators else None
    noise_term = noise / betas
    for start in range(0, len(measured), USER_BLOCK):
        users = measured[start:start + USER_BLOCK]
        d2 = region.squared_distances(geo.snap.user_xy[users], geo.snap.bs_xy)
        gain = rng.standard_exponential((len(users), geo.n_bs))
        gain *= power[None, :]
        if alpha == 4.0:
            d2 *= d2
            gain /= d2
        else:
            gain *= d2 ** (-0.5 * alpha)
        total = gain @ act
        rows = np.arange(len(users))[:, None]
        signal = gain[rows, servings[users]]
        interference = total - signal
        hit = signal > T * (interference + noise_term[None, :])
        covered += hit.sum(axis=0)
        if indicators is not None:
            indicators.append(hit)
    if indicators is not None:
        return covered, len(measured), (np.concatenate(indicators) if indicators else
                                        np.zeros((0, actives.shape[1]), dtype=bool))
    return covered, len(measured)


def evaluate_coverage(snapshot: Snapshot, assoc: Association, spec: NetworkSpec, region: Region,
                      sinr: SinrMode | None = None, beta: float = 1.0,
                      master_seed: int | None = None, trial: int | None = None,
                      _geo: _Geometry | None = None) -> np.ndarray:
    """Per measured user: does its SINR exceed the target?

    SIR mode (``sinr=None``) ignores noise and absolute power.  In SINR mode
    active BSs transmit ``beta`` times their base power.
    """
    geo = _geo or _Geometry(snapshot, spec, region)
    seed = snapshot.master_seed if master_seed is None else master_seed
    tr = snapshot.trial if trial is None else trial
    noise = 0.0 if sinr is None else sinr.noise_power
    _, _, ind = _covered_counts(geo, assoc.serving[:, None], assoc.active[:, None],
                                np.array([beta]), noise, seed, tr, sinr, return_indicators=True)
    return ind[:, 0]


# ---------------------------------------------------------------------------
# Estimation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoverageEstimate:
    """Pooled coverage over trials.

    ``mean`` is covered users over measured users.  ``std_error`` is the
    standard deviation of the per-trial coverage fractions over
    ``sqrt(trials)``: users in one snapshot are correlated, so trials are
    the independent samples.
    """

    mean: float
    std_error: float
    trials: int
    per_user_samples: int
    discarded: int = 0
    active_fraction: float = float("nan")
    nearest_fraction: float = float("nan")
    policy: str = ""

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class _TrialResult:
    covered: np.ndarray
    measured: int
    active: np.ndarray
    nearest: np.ndarray
    n_bs: int
    n_users: int
    ok: np.ndarray


def run_trial(spec: NetworkSpec, region: Region, policies: Sequence[Policy], master_seed: int,
              trial: int, sinr: SinrMode | None = None) -> _TrialResult:
    """One snapshot evaluated under every policy."""
    P = len(policies)
    try:
        snap = sample_snapshot(spec, region, master_seed, trial)
    except EmptyTrial as exc:
        log.warning("discarding trial %d: %s", trial, exc)
        z = np.zeros(P, dtype=np.int64)
        return _TrialResult(z, 0, z, z, 0, 0, np.zeros(P, dtype=bool))
    geo = _Geometry(snap, spec, region)
    base = associate(snap, spec, region, _geo=geo)
    servings = np.zeros((geo.n_users, P), dtype=np.int64)
    actives = np.zeros((geo.n_bs, P), dtype=bool)
    ok = np.ones(P, dtype=bool)
    nearest = np.zeros(P, dtype=np.int64)
    measured_mask = region.measured(snap.user_xy)
    for p, policy in enumerate(policies):
        try:
            post = apply_onoff(base, snap, spec, region, policy, master_seed, trial, _geo=geo)
        except EmptyTrial as exc:
            log.warning("discarding trial %d for %s: %s", trial, policy.label(), exc)
            ok[p] = False
            servings[:, p] = base.serving
            continue
        servings[:, p] = post.serving
        actives[:, p] = post.active
        nearest[p] = int(np.sum((post.order == 1) & measured_mask))
    betas = np.ones(P)
    noise = 0.0
    if sinr is not None:
        noise = sinr.noise_power
        betas = np.array([sinr.power_control_for(spec, pol).beta for pol in policies])
    covered, measured = _covered_counts(geo, servings, actives, betas, noise, master_seed, trial, sinr)
    covered = np.where(ok, covered, 0)
    return _TrialResult(covered, measured, actives.sum(axis=0), nearest, geo.n_bs, geo.n_users, ok)


def estimate_sweep(spec: NetworkSpec, region: Region, policies: Sequence[Policy], trials: int,
                   master_seed: int, sinr: SinrMode | None = None, workers: int = 1,
                   max_discard: float = MAX_DISCARD_FRACTION) -> list[CoverageEstimate]:
    """Coverage estimates for several policies on shared snapshots.

    ``workers`` only changes scheduling; results are bit-identical for any
    value because each trial owns its random streams and aggregation happens
    in trial order.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not policies:
        raise ValueError("at least one policy is required")

    def job(t: int) -> _TrialResult:
        return run_trial(spec, region, policies, master_seed, t, sinr)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, range(trials)))
    else:
        results = [job(t) for t in range(trials)]

    out = []
    for p, policy in enumerate(policies):
        good = [r for r in results if r.ok[p] and r.measured > 0]
        discarded = trials - len(good)
        if discarded > max_discard * trials:
            raise SimulationAborted(
                f"{policy.label()}: {discarded} of {trials} trials discarded (limit {max_discard:.0%})")
        if not good:
            raise SimulationAborted(f"{policy.label()}: no usable trial")
        covered = sum(int(r.covered[p]) for r in good)
        measured = sum(r.measured for r in good)
        fractions = np.array([r.covered[p] / r.measured for r in good])
        se = float(fractions.std(ddof=1) / math.sqrt(len(good))) if len(good) > 1 else float("nan")
        active = sum(int(r.active[p]) for r in good) / sum(r.n_bs for r in good)
        nearest = sum(int(r.nearest[p]) for r in good) / measured
        out.append(CoverageEstimate(covered / measured, se, len(good), measured, discarded,
                                    active, nearest, policy.label()))
    return out


def estimate(spec: NetworkSpec, region: Region, policy: Policy, trials: int, master_seed: int,
             sinr: SinrMode | None = None, workers: int = 1) -> CoverageEstimate:
    return estimate_sweep(spec, region, [policy], trials, master_seed, sinr, workers)[0]


# ---------------------------------------------------------------------------
# Distributional checks
# ---------------------------------------------------------------------------

def occupancy_histogram(spec: NetworkSpec, region: Region, trials: int, master_seed: int,
                        max_count: int = 60) -> np.ndarray:
    """Empirical PMF of users per BS under weighted-nearest association
    (last bin collects everything above ``max_count``)."""
    hist = np.zeros(max_count + 1, dtype=np.int64)
    for t in range(trials):
        try:
            snap = sample_snapshot(spec, region, master_seed, t)
        except EmptyTrial:
            continue
        counts = associate(snap, spec, region).bs_user_count
        hist += np.bincount(np.minimum(counts, max_count), minlength=max_count + 1)
    return hist / hist.sum()


@dataclass
class NthDistanceSample:
    """Distances to the n-th weighted-nearest BS seen from the origin."""

    n: int
    distance: np.ndarray
    tier: np.ndarray
    prior_tier_counts: np.ndarray = field(repr=False)

    def for_tier(self, tier: int) -> np.ndarray:
        return self.distance[self.tier == tier]

    def histogram(self, tier: int | None = None, bins: int | np.ndarray = 50):
        data = self.distance if tier is None else self.for_tier(tier)
        return np.histogram(data, bins=bins, density=True)


def empirical_nth_distance(spec: NetworkSpec, n: int, samples: int, master_seed: int
                           ) -> NthDistanceSample:
    """Drop independent per-tier PPPs around the origin and record the
    actual distance and tier of the ``n``-th BS by weighted distance, plus
    how many of the ``n - 1`` weighted-closer BSs belong to each tier.

    Each tier is drawn in a disc of radius ``R * w_i`` so every BS with
    weighted distance below ``R`` is present; ``R`` is doubled for the rare
    draw with fewer than ``n`` such BSs.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    ratios = derive_ratios(spec)
    w = np.asarray(ratios.weights)
    lam = np.array([t.bs_density for t in spec.tiers])
    weighted_mass = float(np.sum(lam * w * w))
    # mean count n + 8 sqrt(n) + 10 keeps the shortfall probability negligible
    radius = math.sqrt((n + 8.0 * math.sqrt(n) + 10.0) / (math.pi * weighted_mass))
    rng = trial_rng(master_seed, 0, STREAM_LAYOUT)
    K = spec.num_tiers
    dist = np.empty(samples)
    tier = np.empty(samples, dtype=np.int64)
    prior = np.zeros((samples, K), dtype=np.int64)
    for s in range(samples):
        R = radius
        while True:
            wd_parts, d_parts, t_parts = [], [], []
            for i in range(K):
                r_i = R * w[i]
                count = rng.poisson(lam[i] * math.pi * r_i * r_i)
                d = r_i * np.sqrt(rng.random(count))
                d_parts.append(d)
                wd_parts.append(d / w[i])
                t_parts.append(np.full(count, i))
            wd = np.concatenate(wd_parts)
            inside = wd < R
            if inside.sum() >= n:
                break
            R *= 2.0
        d_all = np.concatenate(d_parts)
        t_all = np.concatenate(t_parts)
        order = np.argsort(wd, kind="stable")[:n]
        dist[s] = d_all[order[-1]]
        tier[s] = t_all[order[-1]]
        prior[s] = np.bincount(t_all[order[:-1]], minlength=K)
    return NthDistanceSample(n, dist, tier, prior)


def empirical_interference_laplace(spec: NetworkSpec, serving_tier: int, r: float,
                                   p_active: Sequence[float], samples: int, master_seed: int,
                                   horizon_factor: float = 60.0) -> float:
    """Monte Carlo ``E[exp(-T r^alpha I / P_serving)]`` for a user served by
    a ``serving_tier`` BS at distance ``r``.

    Interferers of tier ``j`` are an independent PPP thinned by
    ``p_active[j]`` outside the disc ``r * w_j / w_serving`` (nothing there
    would beat the serving BS) and inside ``horizon_factor`` times that radius.
    """
    ratios = derive_ratios(spec)
    w = ratios.weights
    alpha, T = spec.pathloss_exponent, spec.target_sinr
    p_serv = spec.tiers[serving_tier].tx_power
    rng = trial_rng(master_seed, 0, STREAM_FADING)
    acc = np.empty(samples)
    for s in range(samples):
        interference = 0.0
        for j, tier in enumerate(spec.tiers):
            inner = r * w[j] / w[serving_tier]
            outer = inner * horizon_factor
            mean = p_active[j] * tier.bs_density * math.pi * (outer ** 2 - inner ** 2)
            count = rng.poisson(mean)
            d = np.sqrt(inner ** 2 + rng.random(count) * (outer ** 2 - inner ** 2))
            h = rng.standard_exponential(count)
            interference += float(np.sum(tier.tx_power * h * d ** (-alpha)))
        acc[s] = math.exp(-T * r ** alpha * interference / p_serv)
    return float(acc.mean())
