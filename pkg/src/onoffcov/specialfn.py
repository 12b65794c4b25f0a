"""Numerical kernels used by the coverage formulas.

Regularized upper incomplete gamma for integer order, parabolic cylinder
functions of non-positive integer order, the standard normal CDF and an
adaptive Gauss-Kronrod integrator that also handles ``b = inf``.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable

__all__ = [
    "QuadratureSpec",
    "QuadratureError",
    "PrecisionLossError",
    "regularized_upper_gamma",
    "parabolic_cylinder_D",
    "scaled_parabolic_cylinder_D",
    "normal_cdf",
    "integrate",
]


class QuadratureError(RuntimeError):
    """Adaptive integration ran out of subdivisions before converging."""


class PrecisionLossError(ArithmeticError):
    """Recurrence output failed its residual check."""


@dataclass(frozen=True)
class QuadratureSpec:
    absolute_tolerance: float = 1e-10
    relative_tolerance: float = 1e-8
    max_subdivisions: int = 200

    def __post_init__(self):
        if not (self.absolute_tolerance > 0 and self.relative_tolerance > 0):
            raise ValueError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")


DEFAULT_QUADRATURE = QuadratureSpec()


def regularized_upper_gamma(n: int, x: float) -> float:
    """Q(n, x) = Gamma(n, x) / Gamma(n) for integer n >= 1.

    Uses the finite Poisson sum ``sum_{k<n} e^-x x^k / k!``, accumulated in
    log space so large ``x`` does not underflow before the terms are summed.
    Below the mean (``x < n``) the complementary tail ``sum_{k>=n}`` is small
    and is summed instead, so values near 1 keep full precision.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"order must be a positive integer, got {n!r}")
    if x < 0:
        raise ValueError(f"x must be nonnegative, got {x!r}")
    n = int(n)
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    log_x = math.log(x)
    if x < n:
        # terms k >= n decrease geometrically with ratio x / (k + 1) < 1
        term = n * log_x - x - math.lgamma(n + 1)
        tail = 0.0
        k = n
        while True:
            t = math.exp(term)
            tail += t
            if t <= 1e-17 * tail or t == 0.0:
                break
            k += 1
            term += log_x - math.log(k)
        return max(1.0 - tail, 0.0)
    term = -x  # log of the k = 0 term
    total = math.exp(term)
    for k in range(1, n):
        term += log_x - math.log(k)
        total += math.exp(term)
    return min(total, 1.0)


def normal_cdf(x: float, mu: float = 0.0, sigma: float = 1.0) -> float:
    """Normal CDF evaluated through ``erfc`` (no cancellation in either tail)."""
    return 0.5 * math.erfc(-(x - mu) / (sigma * math.sqrt(2.0)))


# ---------------------------------------------------------------------------
# Parabolic cylinder functions D_{-n}(z)
# ---------------------------------------------------------------------------

_MAX_ORDER = 200
_SQRT_HALF_PI = math.sqrt(math.pi / 2.0)
# upward recurrence keeps ~1e-9 relative accuracy up to order 200 below this z
_FORWARD_LIMIT = 0.6


def _erfcx(x: float) -> float:
    """Scaled complementary error function exp(x^2) erfc(x)."""
    if x < 25.0:
        return math.exp(x * x) * math.erfc(x)
    # asymptotic series; relative error < 1e-16 for x >= 25
    inv2 = 1.0 / (2.0 * x * x)
    s, term = 1.0, 1.0
    for k in range(1, 8):
        term *= -(2 * k - 1) * inv2
        s += term
    return s / (x * math.sqrt(math.pi))


def _scaled_minus_one(z: float) -> float:
    # exp(z^2/4) D_{-1}(z) = exp(z^2/2) sqrt(2 pi) Q(z) = sqrt(pi/2) erfcx(z/sqrt 2)
    return _SQRT_HALF_PI * _erfcx(z / math.sqrt(2.0))


def _scaled_sequence(n: int, z: float) -> list[float]:
    """[U_0, U_1, ..., U_n] with U_k = exp(z^2/4) D_{-k}(z).

    The three-term recurrence reads ``U_{k+1} = (U_{k-1} - z U_k) / k``.
    Running it upward loses about a digit per few orders once z exceeds ~0.6,
    where the wanted solution becomes the minimal one; there the sequence is
    generated downward from a far starting order (Miller's algorithm) and
    normalized against the closed-form U_1.
    """
    u0 = 1.0
    u1 = _scaled_minus_one(z)
    if n == 0:
        return [u0]
    if z <= _FORWARD_LIMIT:
        seq = [u0, u1]
        for k in range(1, n):
            seq.append((seq[k - 1] - z * seq[k]) / k)
        return seq

    def miller(start: int) -> list[float]:
        # downward: U_{k-1} = z U_k + k U_{k+1}
        nxt, cur = 0.0, 1e-300
        out = [0.0] * (start + 1)
        out[start] = cur
        for k in range(start, 0, -1):
            prev = z * cur + k * nxt
            nxt, cur = cur, prev
            out[k - 1] = cur
            if cur > 1e250:  # rescale to keep the tail finite
                for j in range(k - 1, start + 1):
                    out[j] *= 1e-250
                nxt *= 1e-250
                cur *= 1e-250
        scale = u1 / out[1]
        return [v * scale for v in out[: n + 1]]

    start = 2 * n + 100
    seq = miller(start)
    for _ in range(6):
        start *= 2
        finer = miller(start)
        if all(abs(a - b) <= 1e-14 * abs(b) for a, b in zip(seq, finer)):
            return finer
        seq = finer
    raise PrecisionLossError(f"backward recurrence for D_-{n}({z}) did not settle")


def _residual_ok(seq: list[float], z: float, tol: float = 1e-8) -> bool:
    for k in range(1, len(seq) - 1):
        # D_{v+1} - z D_v + v D_{v-1} = 0 with v = -k
        lhs = seq[k - 1] - z * seq[k] - k * seq[k + 1]
        scale = abs(seq[k - 1]) + abs(z * seq[k]) + abs(k * seq[k + 1])
        # subnormal tails carry no relative precision to check
        if scale > 1e-290 and abs(lhs) > tol * scale:
            return False
    return True


def _integral_representation(n: int, z: float, spec: QuadratureSpec) -> tuple[float, float]:
    """exp(z^2/4) D_{-n}(z) = 1/Gamma(n) int_0^inf t^(n-1) exp(-t^2/2 - z t) dt.

    Returned as ``(log_scale, integral)`` with the integrand divided by its
    peak value, so the product ``exp(log_scale) * integral`` never has to be
    formed for orders where it underflows.
    """
    # the integrand peaks at the positive root of t^2 + z t - (n-1) = 0
    peak = 0.5 * (-z + math.sqrt(z * z + 4.0 * (n - 1)))

    def log_f(t: float) -> float:
        return (n - 1) * math.log(t) - 0.5 * t * t - z * t

    log_scale = (log_f(peak) if peak > 0 else 0.0) - math.lgamma(n)
    log_peak = log_scale + math.lgamma(n)

    def f(t: float) -> float:
        if t <= 0.0:
            return 1.0 if n == 1 else 0.0
        return math.exp(log_f(t) - log_peak)

    width = 10.0 + 2.0 * peak
    total = integrate(f, 0.0, peak + width, spec) + integrate(f, peak + width, math.inf, spec)
    return log_scale, total


def scaled_parabolic_cylinder_D(order: int, z: float) -> float:
    """``exp(z^2/4) * D_order(z)`` for order in {0, -1, ..., -200}.

    The scaled form stays finite for large ``z`` where ``D`` itself underflows.
    """
    if int(order) != order or order > 0:
        raise ValueError(f"order must be a nonpositive integer, got {order!r}")
    n = -int(order)
    if n > _MAX_ORDER:
        raise ValueError(f"|order| must be <= {_MAX_ORDER}, got {n}")
    seq = _scaled_sequence(n, float(z))
    if not _residual_ok(seq, float(z)):
        raise PrecisionLossError(f"recurrence residual check failed for D_{order}({z})")
    value = seq[n]
    if n > 50:
        log_scale, ref = _integral_representation(n, float(z), QuadratureSpec(1e-14, 1e-11, 400))
        if value == 0.0:
            consistent = log_scale + math.log(ref) < -700.0
        else:
            consistent = abs(math.log(value) - log_scale - math.log(ref)) <= 1e-7
        if not consistent:
            raise PrecisionLossError(
                f"D_{order}({z}): recurrence {value!r} disagrees with quadrature"
            )
    return value


def parabolic_cylinder_D(order: int, z: float) -> float:
    """Parabolic cylinder function D_order(z) for nonpositive integer order."""
    scaled = scaled_parabolic_cylinder_D(order, z)
    return scaled * math.exp(-0.25 * z * z)


# ---------------------------------------------------------------------------
# Adaptive quadrature
# ---------------------------------------------------------------------------

# 21-point Kronrod extension of the 10-point Gauss rule on [-1, 1]
_XK = (
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.000000000000000000000000000000000,
)
_WK = (
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077600525543271,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
)
_WG = (
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
)


def _gk21(f: Callable[[float], float], a: float, b: float) -> tuple[float, float]:
    center = 0.5 * (a + b)
    half = 0.5 * (b - a)
    fc = f(center)
    kron = fc * _WK[10]
    gauss = 0.0
    for j in range(10):
        dx = half * _XK[j]
        fsum = f(center - dx) + f(center + dx)
        kron += _WK[j] * fsum
        if j % 2 == 1:
            gauss += _WG[j // 2] * fsum
    kron *= half
    gauss *= half
    return kron, abs(kron - gauss)


def integrate(
    f: Callable[[float], float],
    a: float,
    b: float,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """Adaptive Gauss-Kronrod (G10/K21) integral of ``f`` over ``[a, b]``.

    An infinite upper limit is mapped onto ``[0, 1)`` with ``x = a + t/(1-t)``,
    so ``dx = dt/(1-t)^2``; nodes never touch ``t = 1``.  Raises
    ``QuadratureError`` when ``spec.max_subdivisions`` bisections are not
    enough to meet ``max(abs_tol, rel_tol * |I|)``.
    """
    if math.isinf(a):
        raise ValueError("lower limit must be finite")
    if b == a:
        return 0.0
    if math.isinf(b):
        if b < 0:
            raise ValueError("upper limit -inf is not supported")

        def g(t: float) -> float:
            s = 1.0 - t
            if s <= 0.0:  # only reachable after extreme bisection; integrable limit
                return 0.0
            return f(a + t / s) / (s * s)

        return integrate(g, 0.0, 1.0, spec)
    if b < a:
        return -integrate(f, b, a, spec)

    value, err = _gk21(f, a, b)
    heap = [(-err, a, b, value, err)]
    total, total_err = value, err
    splits = 0
    while total_err > max(spec.absolute_tolerance, spec.relative_tolerance * abs(total)):
        if splits >= spec.max_subdivisions:
            raise QuadratureError(
                f"no convergence after {splits} subdivisions "
                f"(estimate {total!r}, error {total_err!r})"
            )
        _, lo, hi, v, e = heapq.heappop(heap)
        mid = 0.5 * (lo + hi)
        v1, e1 = _gk21(f, lo, mid)
        v2, e2 = _gk21(f, mid, hi)
        heapq.heappush(heap, (-e1, lo, mid, v1, e1))
        heapq.heappush(heap, (-e2, mid, hi, v2, e2))
        total += v1 + v2 - v
        total_err += e1 + e2 - e
        splits += 1
    # re-sum to shed the drift of the running update
    return math.fsum(item[3] for item in heap)
