import math

import pytest
from hypothesis import assume, given, settings, strategies as st

from onoffcov.analytic import (
    ActivityProbs,
    activity_probs,
    coverage_cond_n,
    coverage_cond_n_alpha4,
    coverage_from_probs,
    coverage_hetnet_cond_n,
    coverage_hetnet_sir,
    coverage_homnet_sir,
    coverage_random,
    hetnet_activity,
    nth_distance_ccdf,
    nth_distance_pdf,
    occupancy_pmf,
    order_pmf,
    rho,
    rho_alpha4,
)
from onoffcov.model import NetworkSpec, OccupancyModel, TierSpec
from onoffcov.specialfn import integrate

EXACT, POISSON, NORMAL = OccupancyModel.EXACT_GAMMA, OccupancyModel.POISSON, OccupancyModel.NORMAL
gammas = st.floats(0.2, 40.0)
thetas = st.integers(0, 40)


# --- occupancy -------------------------------------------------------------

def test_occupancy_examples():
    assert occupancy_pmf(0, 10.0, EXACT) == pytest.approx((1 + 10 / 3.575) ** -3.575, rel=1e-13)
    assert occupancy_pmf(0, 10.0, EXACT) == pytest.approx(8.48e-3, rel=1e-3)
    assert occupancy_pmf(0, 10.0, POISSON) == pytest.approx(math.exp(-10.0), rel=1e-13)
    with pytest.raises(ValueError):
        occupancy_pmf(0, 10.0, NORMAL)


@pytest.mark.parametrize("model", [EXACT, POISSON])
@pytest.mark.parametrize("gamma", [0.5, 3.0, 10.0, 25.0])
def test_occupancy_normalized(model, gamma):
    total = math.fsum(occupancy_pmf(m, gamma, model) for m in range(2000))
    assert total == pytest.approx(1.0, abs=1e-12)
    mean = math.fsum(m * occupancy_pmf(m, gamma, model) for m in range(2000))
    assert mean == pytest.approx(gamma, rel=1e-10)


# --- activity --------------------------------------------------------------

def test_activity_examples():
    p = activity_probs(0, 10.0, EXACT)
    assert p.p_1c == 0.0 and p.p_1 == 1.0
    assert p.p_a == pytest.approx(0.99152, abs=1e-5)
    with pytest.raises(ValueError):
        activity_probs(1.5, 10.0, EXACT)
    with pytest.raises(ValueError):
        activity_probs(-1, 10.0, POISSON)


@given(thetas, gammas)
def test_poisson_identity(theta, gamma):
    p = activity_probs(theta, gamma, POISSON)
    assert p.p_1 == pytest.approx(p.p_a + occupancy_pmf(theta, gamma, POISSON), abs=1e-12)


@given(thetas, gammas, st.sampled_from([EXACT, POISSON]))
def test_activity_ordering(theta, gamma, model):
    p = activity_probs(theta, gamma, model)
    assert 0.0 <= p.p_a <= p.p_1 + 1e-12 <= 1.0 + 1e-12
    assert p.p_1 == 1.0 - p.p_1c


def test_normal_model_continuity_correction():
    p = activity_probs(10, 10.0, NORMAL)
    from onoffcov.specialfn import normal_cdf
    assert p.p_a == pytest.approx(1 - normal_cdf(10.5, 10, math.sqrt(10)), rel=1e-14)
    assert p.p_1 == pytest.approx(1 - normal_cdf(9.5, 10, math.sqrt(10)), rel=1e-14)
    # real-valued thresholds are accepted by the normal model
    assert activity_probs(10.25, 10.0, NORMAL).p_a < p.p_a


def test_order_pmf():
    p = ActivityProbs(0.5, 0.2)
    assert order_pmf(3, p) == pytest.approx(0.05)
    assert order_pmf(1, p) == pytest.approx(0.8)
    full = ActivityProbs(1.0, 0.3)
    assert order_pmf(2, full) == pytest.approx(0.3)
    assert order_pmf(3, full) == 0.0
    with pytest.raises(ValueError):
        order_pmf(0, p)


@given(st.floats(0.01, 1.0), st.floats(0.0, 1.0))
def test_order_pmf_sums_to_one(p_a, p_1c):
    p = ActivityProbs(p_a, p_1c)
    total = math.fsum(order_pmf(n, p) for n in range(1, 20000))
    assert total == pytest.approx(1.0, abs=1e-9)


# --- rho -------------------------------------------------------------------

@pytest.mark.parametrize("T", [1e-3, 0.1, 0.5, 1.0, 2.0, 10.0, 100.0, 1e4])
def test_rho_matches_closed_form(T):
    assert abs(rho(T, 4.0) - rho_alpha4(T)) <= 1e-10 * max(1.0, rho_alpha4(T))


def test_rho_examples():
    assert rho(1.0, 4.0) == pytest.approx(math.pi / 4, abs=1e-12)
    assert rho(10.0, 4.0) == pytest.approx(math.sqrt(10) * (math.pi / 2 - math.atan(1 / math.sqrt(10))), rel=1e-12)
    assert rho(1e-8, 4.0) < 1e-7
    with pytest.raises(ValueError):
        rho(0.0, 4.0)
    with pytest.raises(ValueError):
        rho(1.0, 2.0)


@settings(deadline=None)
@given(st.floats(0.01, 50.0), st.floats(2.2, 6.0))
def test_rho_increasing_in_T(T, alpha):
    assert rho(T * 1.1, alpha) > rho(T, alpha) >= 0.0


# --- conditional coverage --------------------------------------------------

def test_cond_n_examples():
    assert coverage_cond_n(1.0, 4.0, 1e-4, 1.0, math.inf, 1) == pytest.approx(1 / (1 + math.pi / 4), rel=1e-12)
    assert coverage_cond_n(1.0, 4.0, 1e-4, 0.6, math.inf, 3) == pytest.approx((1 + 0.6 * math.pi / 4) ** -3)
    # very high SNR approaches the interference-limited value
    assert coverage_cond_n(1.0, 4.0, 1e-4, 1.0, 1e18, 2) == pytest.approx((1 + math.pi / 4) ** -2, rel=1e-6)


@pytest.mark.parametrize("T", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
@pytest.mark.parametrize("snr", [0.1, 10.0, 1e4, 1e9])
@pytest.mark.parametrize("p_a", [0.0, 0.4, 1.0])
def test_closed_form_matches_quadrature(T, n, snr, p_a):
    lam = 1e-4
    # SNR here is the raw power-to-noise ratio, so scale it to the network's length scale
    snr = snr / lam ** 2
    q = coverage_cond_n(T, 4.0, lam, p_a, snr, n)
    c = coverage_cond_n_alpha4(T, lam, p_a, snr, n)
    assert abs(q - c) <= 1e-6


def test_closed_form_first_order_is_q_function():
    T, lam, snr = 1.0, 1e-4, 1e8
    kappa = 1 + rho_alpha4(T)
    a = math.sqrt(2 * T / snr)
    z = math.pi * lam * kappa / a
    # Mills-ratio form: (pi lam / a) sqrt(2 pi) exp(z^2/2) Q(z)
    expected = (math.pi * lam / a) * math.sqrt(2 * math.pi) * math.exp(z * z / 2) * 0.5 * math.erfc(z / math.sqrt(2))
    assert coverage_cond_n_alpha4(T, lam, 1.0, snr, 1) == pytest.approx(expected, rel=1e-10)


def test_closed_form_no_interference():
    # kappa = 1 when p_a = 0: the integral is a pure noise term
    T, lam, snr = 1.0, 1e-4, 1e8
    got = coverage_cond_n_alpha4(T, lam, 0.0, snr, 1)
    direct = integrate(lambda v: math.pi * lam * math.exp(-math.pi * lam * v - T * v * v / snr), 0.0, math.inf)
    assert got == pytest.approx(direct, rel=1e-8)


# --- overall coverage --------------------------------------------------------

def test_homnet_examples():
    r = math.pi / 4
    assert coverage_homnet_sir(1.0, 10.0, 0, 4.0, EXACT) == pytest.approx(1 / (1 + 0.991519588 * r), rel=1e-8)
    assert coverage_homnet_sir(1.0, 10.0, 0, 4.0, EXACT) == pytest.approx(0.5622, abs=1e-4)
    assert coverage_from_probs(ActivityProbs(1.0, 0.0), r) == pytest.approx(1 / (1 + r))


@pytest.mark.parametrize("theta", [0, 3, 10, 19])
@pytest.mark.parametrize("T", [0.3, 1.0, 5.0])
def test_overall_coverage_equals_partial_sum(theta, T):
    p = activity_probs(theta, 10.0, EXACT)
    r = rho(T, 4.0)
    series = math.fsum(order_pmf(n, p) * coverage_cond_n(T, 4.0, 1e-4, p.p_a, math.inf, n) for n in range(1, 501))
    assert abs(coverage_homnet_sir(T, 10.0, theta) - series) <= 1e-9
    assert coverage_from_probs(p, r) == coverage_homnet_sir(T, 10.0, theta)


@given(st.floats(1e-6, 1e-3), st.floats(1e-5, 1e-1), thetas)
def test_homnet_depends_only_on_gamma(lam_b, lam_u, theta):
    a = coverage_hetnet_sir(NetworkSpec.homnet(lam_b, lam_u, theta))
    b = coverage_hetnet_sir(NetworkSpec.homnet(2 * lam_b, 2 * lam_u, theta))
    assert a == b


@given(st.floats(0.05, 5.0), gammas, st.integers(0, 25))
def test_homnet_decreasing_in_T(T, gamma, theta):
    assert coverage_homnet_sir(T * 1.2, gamma, theta) < coverage_homnet_sir(T, gamma, theta)


def test_random_baseline():
    assert coverage_random(1.0, 10.0, 1.0) == coverage_homnet_sir(1.0, 10.0, 0)
    assert coverage_random(1.0, 10.0, 1e-4) == pytest.approx(1 / (1 + math.pi / 4), rel=1e-9)
    values = [coverage_random(1.0, 10.0, q / 100) for q in range(30, 101)]
    assert max(values) - min(values) < 0.01
    with pytest.raises(ValueError):
        coverage_random(1.0, 10.0, 0.0)


@given(st.floats(1e-5, 1e-3), st.floats(1e-4, 1e-1), thetas, st.sampled_from([0.5, 1.0, 3.0]))
def test_single_tier_hetnet_bit_identical(lam_b, lam_u, theta, T):
    spec = NetworkSpec.homnet(lam_b, lam_u, theta, target_sinr=T)
    gamma = lam_u / lam_b
    assert coverage_hetnet_sir(spec) == coverage_homnet_sir(T, gamma, theta)
    assert hetnet_activity(spec).average == activity_probs(theta, gamma)


def test_two_identical_tiers_equal_double_density():
    lam, lam_u = 1e-4, 2e-3
    two = NetworkSpec((TierSpec(lam, 1.0, 7), TierSpec(lam, 1.0, 7)), lam_u)
    one = NetworkSpec.homnet(2 * lam, lam_u, 7)
    assert coverage_hetnet_sir(two) == pytest.approx(coverage_hetnet_sir(one), rel=1e-14)


@given(st.floats(1e-5, 1e-3), st.floats(1e-5, 1e-2), st.floats(0.1, 100.0), st.integers(0, 20),
       st.integers(0, 20), st.floats(1e-4, 1e-1))
def test_averages_in_convex_hull(l1, l2, p_ratio, t1, t2, lam_u):
    spec = NetworkSpec((TierSpec(l1, p_ratio, t1), TierSpec(l2, 1.0, t2)), lam_u)
    het = hetnet_activity(spec)
    avg = het.average
    pa = [a.p_active for a in het.per_tier]
    pc = [a.p_not_nearest for a in het.per_tier]
    assert min(pa) - 1e-12 <= avg.p_active <= max(pa) + 1e-12
    assert min(pc) - 1e-12 <= avg.p_not_nearest <= max(pc) + 1e-12


def test_all_zero_thresholds_hetnet():
    spec = NetworkSpec((TierSpec(1e-4, 10.0), TierSpec(1e-3, 1.0)), 4e-3)
    avg = hetnet_activity(spec).average
    assert avg.p_nearest == 1.0
    assert coverage_hetnet_sir(spec) == pytest.approx(1 / (1 + avg.p_active * math.pi / 4), rel=1e-14)


def test_hetnet_cond_n():
    spec = NetworkSpec((TierSpec(1e-4, 10.0, 8), TierSpec(1e-3, 1.0, 2)), 4e-3)
    p_avg = hetnet_activity(spec).average.p_active
    for n in (1, 2, 4):
        assert coverage_hetnet_cond_n(spec, n) == pytest.approx((1 + p_avg * math.pi / 4) ** -n, rel=1e-12)
    noisy = NetworkSpec(spec.tiers, spec.user_density, noise_power=1e-8)
    per_tier = [coverage_hetnet_cond_n(NetworkSpec((t,), 1.0), 2, snr=t.tx_power / 1e-8) for t in spec.tiers]
    value = coverage_hetnet_cond_n(noisy, 2)
    assert 0 < value < (1 + p_avg * math.pi / 4) ** -2
    quad = coverage_hetnet_cond_n(noisy, 2, closed_form=False)
    assert quad == pytest.approx(value, abs=1e-6)
    single = NetworkSpec.homnet(1e-4, 1e-3, 5, noise_power=1e-8)
    p = activity_probs(5, 10.0)
    assert coverage_hetnet_cond_n(single, 3) == pytest.approx(
        coverage_cond_n_alpha4(1.0, 1e-4, p.p_a, 1e8, 3), rel=1e-14)
    assert all(0 <= v <= 1 for v in per_tier)


# --- distances -------------------------------------------------------------

@pytest.mark.parametrize("n", range(1, 7))
def test_nth_distance_pdf_normalized(n):
    lam = 1e-4
    total = integrate(lambda r: nth_distance_pdf(r, n, lam), 0.0, math.inf)
    assert abs(total - 1.0) <= 1e-8


def test_nth_distance_examples():
    lam, r = 1e-4, 50.0
    assert nth_distance_pdf(r, 1, lam) == pytest.approx(2 * math.pi * lam * r * math.exp(-lam * math.pi * r * r), rel=1e-13)
    assert nth_distance_pdf(r, 1, lam) == pytest.approx(0.01432, abs=1e-5)
    assert nth_distance_pdf(0.0, 2, lam) == 0.0


@given(st.floats(1.0, 500.0), st.integers(1, 8))
def test_ccdf_is_poisson_sum(r, n):
    lam = 1e-4
    x = lam * math.pi * r * r
    direct = math.fsum(math.exp(-x) * x ** k / math.factorial(k) for k in range(n))
    assert nth_distance_ccdf(r, n, lam) == pytest.approx(direct, rel=1e-12, abs=1e-300)
    # the CCDF is the tail integral of the PDF
    assume(nth_distance_ccdf(r, n, lam) > 1e-6)
    tail = integrate(lambda s: nth_distance_pdf(s, n, lam), r, math.inf)
    assert tail == pytest.approx(nth_distance_ccdf(r, n, lam), rel=1e-7)


@pytest.mark.parametrize("alpha", [2.1, 2.5, 3.0, 3.7, 5.0, 6.0])
@pytest.mark.parametrize("T", [0.1, 1.0, 10.0])
def test_rho_general_alpha_matches_mpmath(T, alpha):
    import mpmath

    # int_0^inf du / (1 + u^h) = (pi/h) / sin(pi/h); subtract the finite head
    mpmath.mp.dps = 30
    h = mpmath.mpf(alpha) / 2
    lower = mpmath.mpf(T) ** (-2 / mpmath.mpf(alpha))
    whole = (mpmath.pi / h) / mpmath.sin(mpmath.pi / h)
    head = mpmath.quad(lambda u: 1 / (1 + u ** h), [0, lower])
    ref = mpmath.mpf(T) ** (2 / mpmath.mpf(alpha)) * (whole - head)
    assert rho(T, alpha) == pytest.approx(float(ref), rel=1e-9)
