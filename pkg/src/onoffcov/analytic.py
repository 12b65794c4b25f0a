"""Closed-form and integral coverage probabilities under threshold on/off control.

A BS switches off when it serves ``theta`` users or fewer; its users move on
to the next-nearest active BS.  The quantities below describe a typical user
in a Poisson network: how likely a BS is to stay on, how likely the user is
to be served by its ``n``-th nearest BS, and the coverage probability
conditioned on that order and averaged over it.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Sequence

from .model import CELL_SHAPE_K, NetworkSpec, OccupancyModel, derive_ratios
from .specialfn import (
    DEFAULT_QUADRATURE,
    QuadratureSpec,
    integrate,
    normal_cdf,
    regularized_upper_gamma,
    scaled_parabolic_cylinder_D,
)

__all__ = [
    "ActivityProbs",
    "HetActivity",
    "occupancy_pmf",
    "activity_probs",
    "hetnet_activity",
    "order_pmf",
    "rho",
    "rho_alpha4",
    "coverage_cond_n",
    "coverage_cond_n_alpha4",
    "coverage_from_probs",
    "coverage_homnet_sir",
    "coverage_random",
    "coverage_hetnet_sir",
    "coverage_hetnet_cond_n",
    "nth_distance_pdf",
    "nth_distance_ccdf",
]


# ---------------------------------------------------------------------------
# Occupancy and activity
# ---------------------------------------------------------------------------

def occupancy_pmf(m: int, gamma: float, model: OccupancyModel | str = OccupancyModel.EXACT_GAMMA,
                  shape: float = CELL_SHAPE_K) -> float:
    """P(a typical BS serves exactly ``m`` users) with ``gamma`` users per BS.

    The exact model mixes a Poisson user count over a gamma-distributed cell
    area (a negative binomial); the Poisson model treats every cell as having
    the mean area.  The normal model only exists as a CDF and is rejected here.
    """
    model = OccupancyModel.parse(model)
    if m < 0 or int(m) != m:
        raise ValueError(f"m must be a nonnegative integer, got {m!r}")
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma!r}")
    m = int(m)
    if model is OccupancyModel.EXACT_GAMMA:
        log_p = (math.lgamma(m + shape) - math.lgamma(shape) - math.lgamma(m + 1)
                 - m * math.log1p(shape / gamma) - shape * math.log1p(gamma / shape))
        return math.exp(log_p)
    if model is OccupancyModel.POISSON:
        return math.exp(m * math.log(gamma) - gamma - math.lgamma(m + 1))
    raise ValueError("the normal occupancy model has no PMF; use activity_probs")


@dataclass(frozen=True)
class ActivityProbs:
    """``p_active``: a BS stays on.  ``p_not_nearest``: a user's nearest BS
    is off so it is served by a farther one."""

    p_active: float
    p_not_nearest: float

    @property
    def p_nearest(self) -> float:
        return 1.0 - self.p_not_nearest

    # short aliases used throughout the formulas
    @property
    def p_a(self) -> float:
        return self.p_active

    @property
    def p_1(self) -> float:
        return 1.0 - self.p_not_nearest

    @property
    def p_1c(self) -> float:
        return self.p_not_nearest


def activity_probs(theta: float, gamma: float,
                   model: OccupancyModel | str = OccupancyModel.EXACT_GAMMA,
                   shape: float = CELL_SHAPE_K) -> ActivityProbs:
    """Activity probabilities for threshold ``theta`` at ``gamma`` users per BS.

    For the discrete models ``theta`` must be an integer.  The normal model
    uses continuity-corrected CDFs and accepts any real ``theta``, which is
    what the threshold-derivative analysis differentiates.
    """
    model = OccupancyModel.parse(model)
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma!r}")
    if model is OccupancyModel.NORMAL:
        sd = math.sqrt(gamma)
        p_a = 1.0 - normal_cdf(theta + 0.5, gamma, sd)
        p_1 = 1.0 - normal_cdf(theta - 0.5, gamma, sd)
        return ActivityProbs(p_a, 1.0 - p_1)

    if theta < 0 or int(theta) != theta:
        raise ValueError(f"theta must be a nonnegative integer, got {theta!r}")
    pmf = [occupancy_pmf(m, gamma, model, shape) for m in range(int(theta) + 1)]
    p_a = 1.0 - math.fsum(pmf)
    p_1c = math.fsum(m * p for m, p in enumerate(pmf)) / gamma
    if p_1c > 1.0 + 1e-12:
        raise ArithmeticError(f"p_not_nearest={p_1c!r} exceeds 1 (theta={theta}, gamma={gamma})")
    return ActivityProbs(max(p_a, 0.0), min(p_1c, 1.0))


@dataclass(frozen=True)
class HetActivity:
    per_tier: tuple[ActivityProbs, ...]
    tier_probs: tuple[float, ...]

    @property
    def average(self) -> ActivityProbs:
        """Association-weighted averages over tiers."""
        p_a = math.fsum(q * a.p_active for q, a in zip(self.tier_probs, self.per_tier))
        p_1c = math.fsum(q * a.p_not_nearest for q, a in zip(self.tier_probs, self.per_tier))
        return ActivityProbs(p_a, p_1c)


def hetnet_activity(spec: NetworkSpec, model: OccupancyModel | str = OccupancyModel.EXACT_GAMMA,
                    thresholds: Sequence[float] | None = None) -> HetActivity:
    """Per-tier activity on (theta_i, weighted gamma_i) plus the tier weights.

    A single-tier spec reproduces the HomNet quantities exactly since its
    weighted gamma equals ``lambda_u / lambda_b``.
    """
    ratios = derive_ratios(spec)
    if thresholds is None:
        thresholds = spec.thresholds
    per_tier = tuple(activity_probs(th, g, model) for th, g in zip(thresholds, ratios.weighted_gammas))
    return HetActivity(per_tier, ratios.tier_probs)


def order_pmf(n: int, probs: ActivityProbs) -> float:
    """P(the user is served by its ``n``-th nearest BS)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n == 1:
        return probs.p_nearest
    return probs.p_not_nearest * (1.0 - probs.p_active) ** (n - 2) * probs.p_active


# ---------------------------------------------------------------------------
# Interference integral
# ---------------------------------------------------------------------------

_rho_cache: dict[tuple[float, float], float] = {}
_rho_lock = threading.Lock()


def rho_alpha4(T: float) -> float:
    """Closed form of ``rho(T, 4)``: sqrt(T) (pi/2 - arctan(1/sqrt(T)))."""
    s = math.sqrt(T)
    return s * (0.5 * math.pi - math.atan(1.0 / s))


def _rho_quadrature(T: float, alpha: float, spec: QuadratureSpec) -> float:
    half = alpha / 2.0
    lower = T ** (-2.0 / alpha)

    def f(u: float) -> float:
        return 1.0 / (1.0 + u ** half)

    # beyond mid, 1/(1+u^h) = sum_k (-1)^k u^(-h(k+1)) integrates term by term;
    # mid^-h <= 4^-1 keeps the alternating series short even as alpha -> 2
    mid = max(lower, 1.0) * 4.0
    return T ** (2.0 / alpha) * (integrate(f, lower, mid, spec) + _power_tail(mid, half))


def _power_tail(m: float, h: float) -> float:
    """int_m^inf du / (1 + u^h) for m > 1, h > 1."""
    x = m ** (-h)
    terms = []
    k = 0
    while True:
        e = h * (k + 1) - 1.0
        t = (-1) ** k * m * x ** (k + 1) / e
        terms.append(t)
        if abs(t) < 1e-18 * abs(terms[0]):
            break
        k += 1
    return math.fsum(terms)


def rho(T: float, alpha: float, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """rho(T, alpha) = T^(2/alpha) * int_{T^(-2/alpha)}^inf du / (1 + u^(alpha/2)).

    Memoized on ``(T, alpha)``; computed by quadrature for every ``alpha``.
    """
    if not T > 0:
        raise ValueError(f"T must be positive, got {T!r}")
    if not alpha > 2:
        raise ValueError(f"alpha must exceed 2, got {alpha!r}")
    key = (float(T), float(alpha))
    cached = _rho_cache.get(key)
    if cached is not None and spec is DEFAULT_QUADRATURE:
        return cached
    value = _rho_quadrature(float(T), float(alpha), spec)
    if spec is DEFAULT_QUADRATURE:
        with _rho_lock:
            _rho_cache.setdefault(key, value)
    return value


# ---------------------------------------------------------------------------
# Coverage conditioned on the association order
# ---------------------------------------------------------------------------

def coverage_cond_n(T: float, alpha: float, density: float, p_active: float, snr: float, n: int,
                    spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Coverage of a user served by its ``n``-th nearest BS.

    Evaluates ``((pi lam)^n / Gamma(n)) int_0^inf exp(-pi lam v kappa - T v^(alpha/2) / snr) v^(n-1) dv``
    with ``kappa = 1 + p_active * rho(T, alpha)``, after substituting
    ``s = pi lam v`` so the integrand is dimensionless.  ``snr = inf`` gives
    the interference-limited value ``kappa^-n`` directly.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    kappa = 1.0 + p_active * rho(T, alpha)
    if math.isinf(snr):
        return kappa ** (-n)
    if not snr > 0:
        raise ValueError(f"snr must be positive, got {snr!r}")
    pl = math.pi * density
    noise_coef = T / snr / pl ** (alpha / 2.0)
    half = alpha / 2.0
    log_gamma_n = math.lgamma(n)

    def f(s: float) -> float:
        if s <= 0.0:
            return 1.0 if n == 1 else 0.0
        return math.exp((n - 1) * math.log(s) - s * kappa - noise_coef * s ** half - log_gamma_n)

    # mass sits below the gamma-shape cutoff and below the noise cutoff where
    # noise_coef * s^(alpha/2) reaches ~50; breakpoints keep narrow peaks visible
    cut = (n + 10.0 * math.sqrt(n) + 30.0) / kappa
    noise_scale = noise_coef ** (-1.0 / half)
    cut = min(cut, noise_scale * 50.0 ** (1.0 / half))
    knee = min(noise_scale, cut)
    return math.fsum((integrate(f, 0.0, knee, spec), integrate(f, knee, cut, spec),
                      integrate(f, cut, math.inf, spec)))


def coverage_cond_n_alpha4(T: float, density: float, p_active: float, snr: float, n: int) -> float:
    """Closed form of :func:`coverage_cond_n` for ``alpha = 4``.

    With ``a = sqrt(2 T / snr)`` and ``z = pi lam kappa / a`` the integral is
    ``(pi lam / a)^n exp(z^2/4) D_{-n}(z)``; the scaled parabolic cylinder
    function absorbs the exponential so large ``z`` does not overflow.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    kappa = 1.0 + p_active * rho_alpha4(T)
    if math.isinf(snr):
        return kappa ** (-n)
    if not snr > 0:
        raise ValueError(f"snr must be positive, got {snr!r}")
    a = math.sqrt(2.0 * T / snr)
    z = math.pi * density * kappa / a
    # (pi lam / a)^n = (z / kappa)^n
    return math.exp(n * math.log(z / kappa)) * scaled_parabolic_cylinder_D(-n, z)


# ---------------------------------------------------------------------------
# Overall coverage, interference-limited
# ---------------------------------------------------------------------------

def coverage_from_probs(probs: ActivityProbs, rho_value: float) -> float:
    """Order-averaged SIR coverage ``(1 + p_1 rho) / ((1 + rho)(1 + p_a rho))``."""
    return (1.0 + probs.p_nearest * rho_value) / (
        (1.0 + rho_value) * (1.0 + probs.p_active * rho_value))


def coverage_homnet_sir(T: float, gamma: float, theta: float, alpha: float = 4.0,
                        model: OccupancyModel | str = OccupancyModel.EXACT_GAMMA) -> float:
    """Interference-limited coverage of a single-tier network at threshold ``theta``.

    Depends on the BS and user densities only through ``gamma``.
    """
    return coverage_from_probs(activity_probs(theta, gamma, model), rho(T, alpha))


def coverage_random(T: float, gamma: float, q: float, alpha: float = 4.0,
                    model: OccupancyModel | str = OccupancyModel.EXACT_GAMMA) -> float:
    """SIR coverage when each BS stays on independently with probability ``q``.

    Thinned BSs left without users also switch off, hence the
    ``p_active(0, gamma / q)`` factor.
    """
    if not 0 < q <= 1:
        raise ValueError(f"q must be in (0, 1], got {q!r}")
    p_a = activity_probs(0, gamma / q, model).p_active
    return 1.0 / (1.0 + p_a * rho(T, alpha))


def coverage_hetnet_sir(spec: NetworkSpec,
                        model: OccupancyModel | str = OccupancyModel.EXACT_GAMMA) -> float:
    """Interference-limited coverage of a K-tier network with per-tier thresholds."""
    activity = hetnet_activity(spec, model)
    return coverage_from_probs(activity.average, rho(spec.target_sinr, spec.pathloss_exponent))


def coverage_hetnet_cond_n(spec: NetworkSpec, n: int,
                           model: OccupancyModel | str = OccupancyModel.EXACT_GAMMA,
                           snr: float | Sequence[float] | None = None,
                           closed_form: bool | None = None) -> float:
    """Coverage given service by the ``n``-th nearest BS, as a q-weighted sum
    of single-tier results at the weighted densities.

    ``snr`` defaults to ``P_t,i / sigma^2`` per tier (``inf`` when the spec has
    no noise).  ``closed_form`` selects the parabolic-cylinder evaluation; by
    default it is used whenever ``alpha == 4``.
    """
    ratios = derive_ratios(spec)
    p_avg = hetnet_activity(spec, model).average.p_active
    alpha, T = spec.pathloss_exponent, spec.target_sinr
    if snr is None:
        snrs = [math.inf if spec.is_sir else t.tx_power / spec.noise_power for t in spec.tiers]
    elif isinstance(snr, (int, float)):
        snrs = [float(snr)] * spec.num_tiers
    else:
        snrs = list(snr)
    if closed_form is None:
        closed_form = alpha == 4.0
    terms = []
    for qi, lam_bar, s in zip(ratios.tier_probs, ratios.weighted_densities, snrs):
        if closed_form:
            value = coverage_cond_n_alpha4(T, lam_bar, p_avg, s, n)
        else:
            value = coverage_cond_n(T, alpha, lam_bar, p_avg, s, n)
        terms.append(qi * value)
    return math.fsum(terms)


# ---------------------------------------------------------------------------
# Distance to the n-th nearest point
# ---------------------------------------------------------------------------

def nth_distance_pdf(r: float, n: int, density: float) -> float:
    """PDF of the distance to the ``n``-th nearest point of a PPP of ``density``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if r <= 0:
        return 0.0
    x = density * math.pi * r * r
    return math.exp(-x + n * math.log(x) - math.lgamma(n)) * 2.0 / r


def nth_distance_ccdf(r: float, n: int, density: float) -> float:
    """P(R_n > r): fewer than ``n`` points inside the disc of radius ``r``."""
    return regularized_upper_gamma(n, density * math.pi * r * r)
