import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from bmlab.asymptotics import (
    benhariz_check,
    classify_regime,
    kd_closed_form_fbm,
    kd_covariance,
    log_constants_report,
    normalization,
    power_integral,
    sigma2_central,
    sigma2_length,
    sigma2_log,
    sigma2_log_first_principles,
)
from bmlab.errors import IntegrabilityError, RegimeError
from bmlab.hermite import POINTWISE, HermiteExpansion, abs_expansion
from bmlab.mcstats import discretized_variance
from bmlab.models import SelfSimilarModel, StationaryModel, a_alpha

H2 = HermiteExpansion.from_coeffs([0, 0, 1])


def test_sigma2_analytic_cases():
    assert sigma2_central(H2, StationaryModel.fgn(0.5), 2).value == pytest.approx(4 / 3, abs=1e-6)
    e1 = HermiteExpansion.from_coeffs([0, 1])
    assert sigma2_central(e1, StationaryModel.exponential(1.0), 1).value == pytest.approx(2, abs=1e-8)


def test_integrability_guard():
    with pytest.raises(IntegrabilityError):
        sigma2_central(H2, 1.5, 2)
    with pytest.raises(IntegrabilityError):
        sigma2_central(HermiteExpansion.from_coeffs([0, 1]), 1.2, 1)


@pytest.mark.parametrize("alpha,q", [(1.2, 2), (0.5, 2), (0.8, 3), (1.3, 4)])
def test_power_integral_against_brute_force(alpha, q):
    # quad over a long window plus the leading power-law tail as oracle
    L = 5000.0
    body, _ = integrate.quad(lambda h: a_alpha(alpha, h) ** q, 0, L, points=[1, 10, 100, 1000],
                             limit=2000, epsabs=1e-13)
    c = 0.5 * alpha * (alpha - 1)
    p = (alpha - 2) * q + 1
    tail = c**q * L**p / (-p)
    ref = 2 * (body + tail)
    assert power_integral(alpha, q).value == pytest.approx(ref, rel=1e-6, abs=1e-10)


@pytest.mark.parametrize("alpha,d", [(1.0, 2), (1.2, 2), (0.8, 3)])
def test_sigma2_is_limit_of_discretized_variance(alpha, d):
    e = HermiteExpansion.from_coeffs([0.0] * d + [1.0])
    s = sigma2_central(e, alpha, d)
    dv = discretized_variance(e, StationaryModel.a(alpha), 2.0**-12, 2.0**-6, 1.0)
    assert dv == pytest.approx(s.value, rel=0.01 + s.tail_bound / s.value)


def test_sigma2_log_formula():
    assert sigma2_log(1.0, 2, 1.5, 0.75) == pytest.approx(9 / 32)
    assert sigma2_log(0.0, 2, 1.5, 0.75) == 0.0
    with pytest.raises(RegimeError):
        sigma2_log(1.0, 2, 1.4, 0.7)


def test_log_constant_from_discretized_growth():
    # Var[F_eps(1)] grows like k |log eps|; the slope k is the first-principles constant
    e = H2
    m = SelfSimilarModel.fbm(0.75)
    v1 = discretized_variance(e, m, 2.0**-16, 0.25, 1.0)
    v2 = discretized_variance(e, m, 2.0**-18, 0.25, 1.0)
    slope = (v2 - v1) / (2 * math.log(2))
    assert slope == pytest.approx(sigma2_log_first_principles(1.0, 2, 1.5), rel=0.01)
    rep = log_constants_report(m, e)
    assert rep["first_principles"] == pytest.approx(2 * rep["formula_69"])


def test_kd_examples():
    m = SelfSimilarModel.fbm(0.9)
    assert kd_covariance(m, 2, 1.0, 1.0) == pytest.approx(2.16, rel=1e-6)
    assert kd_covariance(m, 2, 0.0, 1.0) == 0.0
    b = SelfSimilarModel.bifbm(0.9, 0.9)
    assert kd_covariance(b, 2, 0.7, 1.9) == kd_covariance(b, 2, 1.9, 0.7)
    with pytest.raises(RegimeError):
        kd_covariance(SelfSimilarModel.fbm(0.7), 2, 1.0, 1.0)


@pytest.mark.parametrize("H", [0.8, 0.9, 0.95])
@pytest.mark.parametrize("s,t", [(1.0, 1.0), (1.0, 2.0), (0.5, 2.0)])
def test_kd_matches_closed_form(H, s, t):
    got = kd_covariance(SelfSimilarModel.fbm(H), 2, s, t)
    assert got == pytest.approx(kd_closed_form_fbm(H, 2, s, t), rel=1e-3)


def test_kd_order_three():
    got = kd_covariance(SelfSimilarModel.fbm(0.9), 3, 1.0, 1.5)
    assert got == pytest.approx(kd_closed_form_fbm(0.9, 3, 1.0, 1.5), rel=1e-3)


def test_kd_self_similarity_bifbm():
    # K_d(a s, a t) = a^{2 - 2d(1 - alpha/2)} K_d(s, t)
    b = SelfSimilarModel.bifbm(0.95, 0.9)
    d = 2
    a = 2.0
    expo = 2 - 2 * d * (1 - b.alpha / 2)
    assert kd_covariance(b, d, a * 0.5, a * 1.0) == pytest.approx(
        a**expo * kd_covariance(b, d, 0.5, 1.0), rel=1e-4)


def test_classify_regime():
    assert classify_regime(1.2, 2).regime == "central"
    assert classify_regime(1.5, 2).regime == "log_central"
    r = classify_regime(1.8, 2)
    assert r.regime == "noncentral" and r.normalization_exponent == pytest.approx(0.3)
    # boundary alpha = 2H at H = 3/4 for d = 2
    assert classify_regime(2 * 0.75, 2).regime == "log_central"


@given(st.floats(0.05, 2.0), st.integers(1, 6))
def test_regime_partition(alpha, d):
    r = classify_regime(alpha, d)
    crit = 2 - 1 / d
    if abs(alpha - crit) <= 1e-9:
        assert r.regime == "log_central"
    elif alpha < crit:
        assert r.regime == "central"
    else:
        assert r.regime == "noncentral" and r.normalization_exponent > 0


def test_normalization():
    assert normalization(1.2, 2, 0.01) == 1.0
    assert normalization(1.5, 2, math.exp(-4)) == pytest.approx(0.5)
    assert normalization(1.8, 2, 0.01) == pytest.approx(0.01**0.3)
    assert normalization(1.8, 2, 0.005) < normalization(1.8, 2, 0.01)
    with pytest.raises(RegimeError):
        normalization(1.2, 2, 1.0)


def test_benhariz():
    e = abs_expansion(16, centered=True)
    f, bp = POINTWISE["abs_centered"]
    rep = benhariz_check(e, StationaryModel.fgn(0.5), 2.0, f=f, breakpoints=bp)
    assert rep.bh1_verdict == "convergent"
    # the true chaos coefficients of |x| alternate in sign
    assert not rep.bh2_positive
    c = math.sqrt(2 / math.pi)
    # E(|N| - c)^4 from E N^4 = 3, E|N|^3 = 2c, E N^2 = 1, E|N| = c
    assert rep.bh2_l4 == pytest.approx((3 - 2 * c**2 - 3 * c**4) ** 0.25, rel=1e-10)
    printed = abs_expansion(16, centered=True, convention="printed")
    assert benhariz_check(printed, StationaryModel.fgn(0.5), 2.0).bh2_positive
    assert benhariz_check(H2, StationaryModel.fgn(0.5), 2.0).bh1_verdict == "finite"
    geo = HermiteExpansion.from_coeffs(
        [0, 0] + [2.0**q * math.sqrt(math.factorial(q)) for q in range(2, 17)])
    assert benhariz_check(geo, StationaryModel.exponential(1.0), 1.5).bh1_verdict == "divergent"


def test_sigma2_length():
    L = sigma2_length(0.5, 16)
    # leading term with the exact c_2 = sqrt(2/pi)/2: c_2^2 2! int a_1^2 = 2/(3 pi)
    assert L.terms[2] == pytest.approx(2 / (3 * math.pi), rel=1e-9)
    assert L.terms[2] <= L.value <= L.terms[2] + 0.1
    partial = np.cumsum([L.terms[q] for q in sorted(L.terms)])
    assert np.all(np.diff(partial) >= 0)
    with pytest.raises(RegimeError):
        sigma2_length(0.75)
