import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geodr import (
    CoefficientTarget,
    DomainError,
    GeometricTypeLaw,
    InsufficientLengthError,
    ModelConfig,
    Regime,
    RegimeConstants,
    classify,
    compare,
    corollary_values,
    estimate_coefficients,
    expand_critical,
    expand_subcritical,
    expand_supercritical,
    iterate,
)


def test_supercritical_leading_term_at_zero():
    e = expand_supercritical(0, 3.0, 1.0, 1.0, 2, order=1)
    assert e.r == pytest.approx(1 / 3)


def test_supercritical_p_ratio_uses_coefficient_m():
    e = expand_supercritical(400, 3.0, 1.0, 1.0, 2, order=1)
    assert e.p / (400 * e.r) == pytest.approx(2.0)


def test_supercritical_survives_tiny_scales():
    e = expand_supercritical(2000, 3.0, 1.0, 1.0, 2)
    assert e.r_terms[0] == 0.0 or e.r_terms[0] > 0
    assert all(math.isfinite(t) for t in e.r_terms + e.p_terms)


def test_subcritical_first_order_ratio_and_degenerate_k():
    e = expand_subcritical(7, 0.8, 0.3, 2, order=1)
    g = 2 * (1 - 0.8)
    assert (e.r - 0.8) / g**7 == pytest.approx(0.3 * 0.64 / (1 - g), rel=1e-12)
    z = expand_subcritical(7, 0.8, 0.0, 2)
    assert z.r == 0.8 and z.p == 1.0


def test_subcritical_rejects_bad_gamma():
    with pytest.raises(DomainError):
        expand_subcritical(3, 0.4, 0.1, 2)


def test_critical_expansion():
    with pytest.raises(DomainError):
        expand_critical(1, 2)
    e = expand_critical(10**6, 2, order=1)
    assert 10**6 * (e.r - 0.5) == pytest.approx(1.0)
    assert e.one_minus_p == pytest.approx(2 / 10**12)
    assert expand_critical(10**9, 2).r == pytest.approx(0.5, abs=1e-8)


def test_corollary_pgf_normalization():
    sub = RegimeConstants(Regime.SUBCRITICAL, 2, r_star=0.8, K=0.3)
    assert corollary_values(5, sub, s=1.0).pgf_pred == 1.0
    crit = RegimeConstants(Regime.NEAR_CRITICAL, 2)
    assert corollary_values(5, crit, s=1.0).pgf_pred == 1.0
    with pytest.raises(DomainError):
        corollary_values(5, crit, s=2.5)
    with pytest.raises(DomainError):
        corollary_values(5, sub, s=6.0)
    sup = RegimeConstants(Regime.SUPERCRITICAL, 2, F_inf=3.0, Q=1.0, p0_over_r0=1.0)
    with pytest.raises(DomainError):
        corollary_values(5, sup, s=1.0)


def test_corollary_leading_terms():
    n = 10**5
    crit = corollary_values(n, RegimeConstants(Regime.NEAR_CRITICAL, 3))
    assert crit.mean_pred * 8 * n**2 / 6 == pytest.approx(1, rel=1e-3)
    sub = corollary_values(200, RegimeConstants(Regime.SUBCRITICAL, 2, r_star=0.8, K=0.3))
    g = 0.4
    assert sub.mean_pred / (0.3 * g**200) == pytest.approx(1, rel=1e-6)


def test_supercritical_pgf_at_zero_matches_p_expansion():
    sup = RegimeConstants(Regime.SUPERCRITICAL, 2, F_inf=3.0, Q=1.2, p0_over_r0=1.0)
    cv = corollary_values(12, sup, s=0.0)
    e = expand_supercritical(12, 3.0, 1.2, 1.0, 2)
    assert cv.pgf_pred == pytest.approx(e.p, rel=1e-14)
    assert cv.survival_pred == pytest.approx(1 - e.p, rel=1e-14)


def test_subcritical_residuals_shrink():
    cfg = ModelConfig.extended(2, 120)
    law = GeometricTypeLaw(0.9, 0.9)
    rep = classify(law, cfg)
    traj = iterate(law, cfg, 120)
    rows = compare(traj, lambda n: expand_subcritical(n, rep.r_star, rep.K, 2), "r", [40, 80, 120])
    assert rows[1].normalized_residual < rows[0].normalized_residual / 10
    assert rows[2].normalized_residual < rows[1].normalized_residual / 10


def test_estimators_need_length(m2, half):
    with pytest.raises(InsufficientLengthError):
        estimate_coefficients(iterate(half, m2, 2), CoefficientTarget.SUPERCRITICAL_P)
    with pytest.raises(DomainError):
        estimate_coefficients(iterate(half, m2, 20), CoefficientTarget.SUBCRITICAL_R)


def test_supercritical_p_estimator_converges_to_one(m2, half):
    est = estimate_coefficients(iterate(half, m2, 400), CoefficientTarget.SUPERCRITICAL_P)
    assert abs(est.extrapolated - 1) < 1e-6
    assert abs(est.last_raw - 1) < 1e-2


def test_aitken_on_subcritical_target(m2):
    law = GeometricTypeLaw(0.9, 0.9)
    rep = classify(law, m2)
    est = estimate_coefficients(iterate(law, m2, 25), "subcritical_r_deviation", r_star=rep.r_star)
    lim = rep.K * rep.r_star**2 / (1 - rep.gamma_star)
    assert est.extrapolated == pytest.approx(lim, rel=1e-4)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 10**6), st.floats(1.1, 6))
def test_critical_survival_matches_pgf_derivation(n, m):
    cv = corollary_values(n, RegimeConstants(Regime.NEAR_CRITICAL, m), s=0.0)
    # E(0^Y) = P(Y = 0) = 1 - survival
    assert cv.pgf_pred == pytest.approx(1 - cv.survival_pred, abs=1e-15)
