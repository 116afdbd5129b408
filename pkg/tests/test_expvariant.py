import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geodr import DomainError, ExponentialTypeLaw, ExpVariantConfig, exp_iterate, exp_step


def test_worked_example():
    law = exp_step(ExponentialTypeLaw(1.0, 0.5), ExpVariantConfig(2))
    assert law.lam == pytest.approx(2 / 3, rel=1e-15)
    assert law.p == pytest.approx(1 - (2 / 3) * math.exp(-2 / 3), rel=1e-15)


def test_alpha_defaults_to_log_m():
    assert ExpVariantConfig(3).alpha == pytest.approx(math.log(3))
    with pytest.raises(DomainError):
        ExpVariantConfig(2, alpha=-1.0)


def test_small_p_limit():
    law = exp_step(ExponentialTypeLaw(2.0, 1e-12), ExpVariantConfig(2, alpha=0.7))
    assert law.lam == pytest.approx(math.exp(-0.7) * 2.0, rel=1e-10)


def test_iterate_shapes():
    cfg = ExpVariantConfig(2)
    law = ExponentialTypeLaw(1.0, 0.3)
    assert exp_iterate(law, cfg, 0) == [law]
    with pytest.raises(DomainError):
        exp_iterate(law, cfg, -1)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 50), st.floats(0.01, 0.99), st.floats(0.05, 3))
def test_rate_ratio_and_contraction(lam, p, alpha):
    cfg = ExpVariantConfig(2, alpha=alpha)
    law = ExponentialTypeLaw(lam, p)
    nxt = exp_step(law, cfg)
    c = math.exp(-alpha)
    assert nxt.lam / lam == pytest.approx(c / (1 - (1 - c) * p), rel=1e-12)
    assert nxt.lam < lam
    ratio = nxt.lam * p / lam
    assert 0 < ratio < 1
    assert ratio == pytest.approx(p / (math.exp(alpha) - (math.exp(alpha) - 1) * p), rel=1e-12)
    assert nxt.mean == pytest.approx(nxt.one_minus_p / nxt.lam)
    assert nxt.one_minus_p == pytest.approx(1 - nxt.p, abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 5), st.floats(0.05, 0.95), st.floats(1.2, 5))
def test_lambda_strictly_decreasing(lam, p, m):
    laws = exp_iterate(ExponentialTypeLaw(lam, p), ExpVariantConfig(m), 30)
    for a, b in zip(laws, laws[1:]):
        # strict in exact arithmetic; float ties only once 1 - p is below roundoff
        assert b.lam < a.lam or a.one_minus_p < 1e-15
        assert b.one_minus_p > 0
