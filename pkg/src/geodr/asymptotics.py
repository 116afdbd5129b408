"""Large-n expansions of ``(r_n, p_n)`` and finite-n estimators of their constants.

Each ``expand_*`` function returns an :class:`Expansion` that keeps the
individual correction terms, so callers can normalize residuals by the last
retained term. Estimators in :func:`estimate_coefficients` only ever read exact
trajectory values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

from ._arith import STANDARD, Arithmetic, arithmetic_for
from .exceptions import DomainError, InsufficientLengthError
from .glaw import Trajectory
from .regime import Regime, RegimeReport


@dataclass(frozen=True)
class Expansion:
    """``r_n`` and ``p_n`` predictions as base value plus correction terms."""

    n: int
    r_base: object
    r_terms: tuple
    p_base: object
    p_terms: tuple

    @property
    def r(self):
        return self.r_base + sum(self.r_terms)

    @property
    def p(self):
        return self.p_base + sum(self.p_terms)

    @property
    def one_minus_p(self):
        return (1 - self.p_base) - sum(self.p_terms)


@dataclass(frozen=True)
class ExpansionValue:
    n: int
    predicted: object
    exact: object
    abs_residual: object
    normalized_residual: object


def _ops(*values) -> Arithmetic:
    for v in values:
        ops = arithmetic_for(v)
        if ops.extended:
            return ops
    return STANDARD


def _check_order(order: int):
    if order not in (1, 2):
        raise DomainError(f"order must be 1 or 2, got {order}")


def expand_supercritical(n: int, F_inf, Q, p0_over_r0, m, order: int = 2) -> Expansion:
    """Supercritical expansion in powers of ``1/(F m^n)``, evaluated in log space."""
    _check_order(order)
    ops = _ops(F_inf, Q, p0_over_r0)
    with ops.context():
        m = ops.num(m)
        log_m = ops.log(m)
        log_lead = -ops.log(ops.num(F_inf)) - n * log_m
        lead = ops.exp(log_lead)
        r_terms = [lead]
        p_terms = [n * m * lead] if n > 0 else [ops.num(0)]
        if order == 2:
            if n > 0:
                r_terms.append(-ops.exp(ops.log(ops.num(n)) + log_m + 2 * log_lead))
            else:
                r_terms.append(ops.num(0))
            p_terms.append((ops.num(p0_over_r0) - m * ops.num(Q)) * lead)
            if n > 0:
                p_terms.append(-ops.exp(2 * (ops.log(ops.num(n)) + log_m + log_lead)))
        zero = ops.num(0)
        return Expansion(n, zero, tuple(r_terms), zero, tuple(p_terms))


def expand_subcritical(n: int, r_star, K, m, order: int = 2) -> Expansion:
    _check_order(order)
    ops = _ops(r_star, K)
    with ops.context():
        m, r_star, K = ops.num(m), ops.num(r_star), ops.num(K)
        g = m * (1 - r_star)
        if not 0 < g < 1:
            raise DomainError(f"gamma_* = {g} is outside (0, 1)")
        gn = g**n
        r_terms = [K * r_star**2 * gn / (1 - g)]
        p_terms = [-K * r_star * gn / (m - 1)]
        if order == 2:
            g2n = gn * gn
            r_terms.append((1 + m * r_star / (1 - g * g)) * K**2 * r_star**3 * g2n / (1 - g) ** 2)
            p_terms.append(-(1 + m * r_star / (1 - g)) * K**2 * r_star**2 * g2n / ((m - 1) * (1 - g)))
        return Expansion(n, r_star, tuple(r_terms), ops.num(1), tuple(p_terms))


def expand_critical(n: int, m, order: int = 2, ops: Arithmetic = STANDARD) -> Expansion:
    if n <= 1:
        raise DomainError(f"the critical expansion needs n >= 2, got {n}")
    _check_order(order)
    with ops.context():
        m = ops.num(m)
        nn = ops.num(n)
        log_n = ops.log(nn)
        r_terms = [2 / (m * nn)]
        p_terms = [-2 / ((m - 1) ** 2 * nn**2)]
        if order == 2:
            r_terms.append(-4 * (m + 1) * log_n / (3 * m * (m - 1) * nn**2))
            p_terms.append(-8 * (m + 1) * log_n / (3 * (m - 1) ** 3 * nn**3))
        return Expansion(n, 1 - 1 / m, tuple(r_terms), ops.num(1), tuple(p_terms))


def compare(traj: Trajectory, predict, which: str = "r", ns: Optional[Sequence[int]] = None) -> list[ExpansionValue]:
    """Expansion-vs-exact table for ``which`` in {'r', 'p'}.

    ``predict`` maps ``n`` to an :class:`Expansion`. Deviations from the base
    value are compared directly, so ``1 - p_n`` keeps its full relative accuracy.
    The normalized residual divides by the magnitude of the last retained term.
    """
    if which not in ("r", "p"):
        raise DomainError("which must be 'r' or 'p'")
    ops = traj.config.arith
    ns = range(len(traj)) if ns is None else ns
    out = []
    with ops.context():
        for n in ns:
            rec = traj.records[n]
            e = predict(n)
            if which == "r":
                dev_exact = rec.law.r - e.r_base
                terms, exact, predicted = e.r_terms, rec.law.r, e.r
            else:
                if e.p_base == 1:
                    dev_exact = -rec.law.one_minus_p
                else:
                    dev_exact = rec.law.p - e.p_base
                terms, exact, predicted = e.p_terms, rec.law.p, e.p
            resid = abs(dev_exact - sum(terms))
            last = abs(terms[-1])
            norm = resid / last if last else math.inf
            out.append(ExpansionValue(n, predicted, exact, resid, norm))
    return out


@dataclass(frozen=True)
class RegimeConstants:
    """Limit constants consumed by the expansions of one regime."""

    regime: Regime
    m: object
    F_inf: object = None
    Q: object = None
    p0_over_r0: object = None
    r_star: object = None
    K: object = None

    @classmethod
    def from_report(cls, report: RegimeReport, m, p0_over_r0=None) -> "RegimeConstants":
        if report.regime is Regime.SUPERCRITICAL:
            return cls(report.regime, m, F_inf=report.free_energy.value, Q=report.Q, p0_over_r0=p0_over_r0)
        if report.regime is Regime.SUBCRITICAL:
            return cls(report.regime, m, r_star=report.r_star, K=report.K)
        return cls(report.regime, m)


@dataclass(frozen=True)
class CorollaryValues:
    n: int
    survival_pred: object
    mean_pred: object
    pgf_pred: object = None
    pgf_at_m_pred: object = None
    # subcritical only: survival with a minus sign on the second-order bracket;
    # survival_pred uses the plus sign implied by the 1 - p_n expansion
    survival_pred_alt: object = None


def corollary_values(n: int, constants: RegimeConstants, s=None) -> CorollaryValues:
    """Survival probability, mean and generating-function expansions at ``n``."""
    c = constants
    regime = c.regime
    if regime is Regime.SUPERCRITICAL:
        ops = _ops(c.F_inf, c.Q)
        with ops.context():
            m, F = ops.num(c.m), ops.num(c.F_inf)
            a = ops.num(c.p0_over_r0) - m * ops.num(c.Q)
            lead = ops.exp(-ops.log(F) - n * ops.log(m))
            t1 = n * m * lead
            t3 = (n * m * lead) ** 2
            surv = 1 - t1 - a * lead + t3
            mean = F * ops.exp(n * ops.log(m))
            pgf_val = None
            if s is not None:
                s = ops.num(s)
                if not abs(s) < 1:
                    raise DomainError(f"|s| = {abs(s)} must be < 1 in the supercritical case")
                pgf_val = t1 + (a + s / (1 - s)) * lead - t3
            return CorollaryValues(n, surv, mean, pgf_val, None)
    if regime is Regime.SUBCRITICAL:
        ops = _ops(c.r_star, c.K)
        with ops.context():
            m, rs, K = ops.num(c.m), ops.num(c.r_star), ops.num(c.K)
            g = m * (1 - rs)
            gn = g**n
            first = K * rs * gn / (m - 1)
            second = K**2 * rs**2 * gn * gn / ((m - 1) * (1 - g))
            surv = first + (1 + m * rs / (1 - g)) * second
            surv_alt = first + (1 - m * rs / (1 - g)) * second
            mean = K * gn / (m - 1) + m * K**2 * rs * gn * gn / ((m - 1) * (1 - g) ** 2)
            radius = 1 / (1 - rs)

            def gen(s):
                d = 1 - (1 - rs) * s
                return 1 + (s - 1) / d * (first + second * (1 + m * rs / (1 - g) - s * rs / d))

            pgf_val = None
            if s is not None:
                s = ops.num(s)
                if not abs(s) < radius:
                    raise DomainError(f"|s| = {abs(s)} must be < 1/(1 - r_*) = {radius}")
                pgf_val = gen(s)
            return CorollaryValues(n, surv, mean, pgf_val, gen(m), surv_alt)
    if regime is Regime.NEAR_CRITICAL:
        if n <= 1:
            raise DomainError(f"critical expansions need n >= 2, got {n}")
        ops = _ops(c.m)
        with ops.context():
            m = ops.num(c.m)
            nn = ops.num(n)
            log_n = ops.log(nn)
            surv = 2 / ((m - 1) ** 2 * nn**2) + 8 * (m + 1) * log_n / (3 * (m - 1) ** 3 * nn**3)
            mean = 2 * m / ((m - 1) ** 3 * nn**2) + 8 * m * (m + 1) * log_n / (3 * (m - 1) ** 4 * nn**3)
            at_m = 1 + 1 / ((m - 1) * nn) + 2 * (m + 1) * log_n / ((m - 1) ** 2 * nn**2)
            pgf_val = None
            if s is not None:
                s = ops.num(s)
                if not abs(s) < m:
                    raise DomainError(f"|s| = {abs(s)} must be < m = {m} in the critical case")
                pgf_val = 1 + (s - 1) / (1 - s / m) * surv
            return CorollaryValues(n, surv, mean, pgf_val, at_m)
    raise DomainError(f"unknown regime {regime!r}")


class CoefficientTarget(str, Enum):
    CRITICAL_NV = "critical_n_v"
    CRITICAL_SECOND_DIFFERENCE = "critical_second_difference"
    CRITICAL_SURVIVAL = "critical_survival"
    CRITICAL_PGF_AT_M = "critical_pgf_at_m"
    SUBCRITICAL_R = "subcritical_r_deviation"
    SUPERCRITICAL_P = "supercritical_p_over_n_r"


# minimum trajectory length (records) per target
MIN_LENGTH = {
    CoefficientTarget.CRITICAL_NV: 6,
    CoefficientTarget.CRITICAL_SECOND_DIFFERENCE: 7,
    CoefficientTarget.CRITICAL_SURVIVAL: 6,
    CoefficientTarget.CRITICAL_PGF_AT_M: 6,
    CoefficientTarget.SUBCRITICAL_R: 6,
    CoefficientTarget.SUPERCRITICAL_P: 6,
}

# targets whose finite-n error decays like 1/n rather than geometrically
_ALGEBRAIC = {
    CoefficientTarget.CRITICAL_NV,
    CoefficientTarget.CRITICAL_SECOND_DIFFERENCE,
    CoefficientTarget.CRITICAL_SURVIVAL,
    CoefficientTarget.CRITICAL_PGF_AT_M,
    CoefficientTarget.SUPERCRITICAL_P,
}


@dataclass(frozen=True)
class CoefficientEstimate:
    target: CoefficientTarget
    n: tuple
    raw: tuple
    accelerated: tuple
    extrapolated: object
    rate: object  # last ratio of successive raw differences

    @property
    def last_raw(self):
        return self.raw[-1]


def _aitken(x: Sequence) -> list:
    out = []
    for a, b, c in zip(x, x[1:], x[2:]):
        d2 = c - 2 * b + a
        if d2 == 0:
            out.append(c)
            continue
        est = c - (c - b) ** 2 / d2
        # divergence guard: keep the raw value when the correction is not small
        out.append(est if abs(est - c) <= 10 * abs(c - b) + abs(c) * 1e-300 else c)
    return out


def _richardson(ns: Sequence[int], x: Sequence) -> list:
    # removes a c/n error term: ((n+h) x_{n+h} - n x_n) / h
    out = []
    for (n0, a), (n1, b) in zip(zip(ns, x), zip(ns[1:], x[1:])):
        out.append((n1 * b - n0 * a) / (n1 - n0))
    return out


def _raw_sequence(traj: Trajectory, target: CoefficientTarget, r_star, start: int, stride: int):
    ops = traj.config.arith
    m = traj.config.m_num
    recs = traj.records
    last = len(recs) - 1
    if target is CoefficientTarget.CRITICAL_SECOND_DIFFERENCE:
        last -= 1
    ns, xs = [], []
    crit = 1 - 1 / m
    for n in range(max(start, 1), last + 1, stride):
        law = recs[n].law
        if target is CoefficientTarget.CRITICAL_NV:
            x = n * (law.r - crit)
        elif target is CoefficientTarget.CRITICAL_SECOND_DIFFERENCE:
            v0, v1 = law.r - crit, recs[n + 1].law.r - crit
            x = n**3 * (v0 - v1 - m / 2 * v0 * v1)
        elif target is CoefficientTarget.CRITICAL_SURVIVAL:
            x = law.one_minus_p * (m - 1) ** 2 * n**2 / 2
        elif target is CoefficientTarget.CRITICAL_PGF_AT_M:
            if not abs(m) < 1 / (1 - law.r):
                raise DomainError(f"s = m lies outside the pgf radius at n = {n}")
            x = law.one_minus_p * (m - 1) / (1 - (1 - law.r) * m) * (m - 1) * n
        elif target is CoefficientTarget.SUBCRITICAL_R:
            g = m * (1 - r_star)
            x = (law.r - r_star) / g**n
        else:
            x = law.p / (n * law.r)
        ns.append(n)
        xs.append(x)
    return ns, xs


def estimate_coefficients(
    traj: Trajectory,
    target: CoefficientTarget,
    r_star=None,
    start: int = 1,
    stride: int = 1,
) -> CoefficientEstimate:
    """Finite-n estimator sequence for ``target`` plus an accelerated limit.

    Algebraic targets use a Richardson step that removes a ``c/n`` error; the
    geometric subcritical target uses Aitken's delta-squared.
    """
    target = CoefficientTarget(target)
    need = MIN_LENGTH[target]
    if len(traj) < need:
        raise InsufficientLengthError(f"{target.value} needs at least {need} records, got {len(traj)}")
    if target is CoefficientTarget.SUBCRITICAL_R and r_star is None:
        raise DomainError("the subcritical target needs r_star")
    ops = traj.config.arith
    with ops.context():
        if r_star is not None:
            r_star = ops.num(r_star)
        ns, xs = _raw_sequence(traj, target, r_star, start, stride)
        if len(xs) < 3:
            raise InsufficientLengthError(f"{target.value}: only {len(xs)} estimator values in range")
        if target in _ALGEBRAIC:
            acc = _richardson(ns, xs)
        else:
            acc = _aitken(xs)
        d1, d0 = xs[-1] - xs[-2], xs[-2] - xs[-3]
        rate = d1 / d0 if d0 != 0 else None
        return CoefficientEstimate(target, tuple(ns), tuple(xs), tuple(acc), acc[-1] if acc else xs[-1], rate)
