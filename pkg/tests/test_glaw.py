from fractions import Fraction

import gmpy2
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geodr import (
    DomainError,
    GeometricTypeLaw,
    InsufficientLengthError,
    ModelConfig,
    ResourceLimitError,
    identity_residuals,
    iterate,
    mean,
    pgf,
    step,
    survival,
    telescoped_p_over_r,
)


def exact_step(r, p, m):
    """Rational oracle for one generation."""
    a = m - (m - 1) * p
    r1 = r / a
    q1 = p / a
    return r1, r1 + q1 * (1 - r1)


def test_one_step_matches_rational_oracle(m2, half):
    law = step(half, m2)
    r1, p1 = exact_step(Fraction(1, 2), Fraction(1, 2), 2)
    assert r1 == Fraction(1, 3) and p1 == Fraction(5, 9)
    assert law.r == pytest.approx(float(r1), rel=1e-15)
    assert law.p == pytest.approx(float(p1), rel=1e-15)


def test_extended_precision_reproduces_rationals():
    cfg = ModelConfig.extended(2, 60)
    traj = iterate(GeometricTypeLaw(0.5, 0.5), cfg, 3)
    r, p = Fraction(1, 2), Fraction(1, 2)
    with cfg.arith.context():
        for rec in traj.records:
            assert abs(rec.law.r - gmpy2.mpfr(r.numerator) / r.denominator) < gmpy2.mpfr(10) ** -58
            assert abs(rec.law.p - gmpy2.mpfr(p.numerator) / p.denominator) < gmpy2.mpfr(10) ** -58
            r, p = exact_step(r, p, 2)


def test_law_validation():
    for r, p in [(0, 0.5), (1, 0.5), (0.5, 0), (0.5, 1), (-0.1, 0.5)]:
        with pytest.raises(DomainError):
            GeometricTypeLaw(r, p)


def test_config_validation():
    with pytest.raises(DomainError):
        ModelConfig(1.0)
    with pytest.raises(ValueError):
        ModelConfig.extended(2, 10)


def test_iterate_bounds(m2, half):
    assert len(iterate(half, m2, 0)) == 1
    with pytest.raises(DomainError):
        iterate(half, m2, -1)
    with pytest.raises(ResourceLimitError):
        iterate(half, ModelConfig(2, max_steps=10), 11)


def test_moments_and_pgf(half):
    assert mean(half) == pytest.approx(1.0)
    assert pgf(half, 1.5) == pytest.approx(2.0)
    assert pgf(half, 1.0) == pytest.approx(1.0)
    assert survival(half) == pytest.approx(0.5)
    with pytest.raises(DomainError):
        pgf(half, 2.0)


def test_pmf_and_tail_sum_to_one():
    law = GeometricTypeLaw(0.3, 0.2)
    total = sum(law.pmf(k) for k in range(200)) + law.tail(199)
    assert total == pytest.approx(1.0, abs=1e-14)
    assert law.conditional_pmf(3) == pytest.approx(0.3 * 0.7**2)


def test_uncorrected_residual_at_origin(m2, half):
    rows = identity_residuals(iterate(half, m2, 3))
    assert rows[0].r3_uncorrected == pytest.approx(-1 / 3, abs=1e-15)


def test_residuals_need_three_records(m2, half):
    with pytest.raises(InsufficientLengthError):
        identity_residuals(iterate(half, m2, 1))


def test_extend_continues_trajectory(m2, half):
    a = iterate(half, m2, 10)
    b = iterate(half, m2, 4).extend(6)
    assert [rec.n for rec in b] == list(range(11))
    assert a.r == b.r and a.p == b.p


def test_underflow_keeps_logs():
    cfg = ModelConfig(5)
    traj = iterate(GeometricTypeLaw(0.5, 0.5), cfg, 600)
    law = traj.records[-1].law
    assert law.r == 0.0 or law.r < 1e-300
    assert law.log_r < -700
    prev = traj.records[-2].law
    assert law.log_r < prev.log_r


laws = st.tuples(
    st.floats(0.01, 0.99),
    st.floats(0.01, 0.99),
    st.floats(1.05, 8.0),
)


@settings(max_examples=150, deadline=None)
@given(laws)
def test_step_monotone_and_valid(args):
    r, p, m = args
    cfg = ModelConfig(m)
    law = step(GeometricTypeLaw(r, p), cfg)
    assert 0 < law.r < r
    assert 0 < law.p < 1
    assert law.one_minus_p == pytest.approx(1 - law.p, abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(laws, st.integers(3, 40))
def test_identities_hold_at_roundoff(args, n):
    r, p, m = args
    rows = identity_residuals(iterate(GeometricTypeLaw(r, p), ModelConfig(m), n))
    for row in rows:
        assert row.norm_r1 < 1e-12
        if row.norm_r2 is not None:
            assert row.norm_r2 < 1e-12
        if row.norm_r3_corrected is not None:
            assert row.norm_r3_corrected < 1e-12


@settings(max_examples=60, deadline=None)
@given(laws, st.integers(1, 60))
def test_telescoping_matches_ratio(args, n):
    r, p, m = args
    traj = iterate(GeometricTypeLaw(r, p), ModelConfig(m), n)
    tel = telescoped_p_over_r(traj)
    for k, rec in enumerate(traj.records):
        if rec.law.r > 1e-250:
            assert tel[k] == pytest.approx(rec.law.p / rec.law.r, rel=1e-12)
