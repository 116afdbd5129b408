"""Geometric-type marginal laws and their exact parameter recursion.

A law ``G(r, p)`` puts mass ``p`` at zero and ``(1 - p) r (1 - r)**(k - 1)`` at
every integer ``k >= 1``. Under the max-type recursion with geometric offspring
of mean ``m`` the family is closed, and one generation maps ``(r, p)`` to

    r' = r / (m - (m - 1) p)
    p' = 1 - (1 - r') (1 - r' p / r)

Each law also carries ``1 - p`` and the logarithms of ``r`` and ``1 - p``. The
step updates all of them with product forms only, so no cancellation occurs
when ``p`` is close to 0 or 1 and nothing is lost when ``r`` underflows.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

from ._arith import (
    DEFAULT_EXTENDED_DIGITS,
    MIN_EXTENDED_DIGITS,
    STANDARD,
    Arithmetic,
    PrecisionMode,
    arithmetic_for,
    extended,
)
from .exceptions import DomainError, InsufficientLengthError, ResourceLimitError

DEFAULT_MAX_STEPS = 10**7


@dataclass(frozen=True)
class GeometricTypeLaw:
    """The law ``G(r, p)`` together with its log-domain companions.

    Build user-facing laws as ``GeometricTypeLaw(r, p)``; both must lie strictly
    inside (0, 1). Laws produced by :func:`step` arrive with all companions
    filled in and may hold an underflowed ``r`` (or ``p``) whose logarithm is
    still exact.
    """

    r: object
    p: object
    one_minus_p: object = None
    log_r: object = None
    log_one_minus_p: object = None

    def __post_init__(self):
        derived = self.log_r is not None
        if not derived:
            if not (0 < self.r < 1):
                raise DomainError(f"r must lie in (0, 1), got {self.r!r}")
            if not (0 < self.p < 1):
                raise DomainError(f"p must lie in (0, 1), got {self.p!r}")
        ops = arithmetic_for(self.r)
        with ops.context():
            if self.one_minus_p is None:
                object.__setattr__(self, "one_minus_p", 1 - self.p)
            if self.log_r is None:
                object.__setattr__(self, "log_r", ops.log(self.r))
            if self.log_one_minus_p is None:
                object.__setattr__(self, "log_one_minus_p", ops.log(self.one_minus_p))
        if derived and not (self.log_r < 0 and self.log_one_minus_p <= 0):
            raise DomainError("log companions must satisfy log r < 0 and log(1 - p) <= 0")

    @classmethod
    def from_logs(cls, log_r, log_one_minus_p, ops: Arithmetic = STANDARD) -> "GeometricTypeLaw":
        """Law given by ``log r`` and ``log(1 - p)``; keeps full relative accuracy
        for ``1 - p`` far below the float spacing near 1."""
        with ops.context():
            log_r = ops.num(log_r)
            log_w = ops.num(log_one_minus_p)
            if not (log_r < 0 and log_w < 0):
                raise DomainError("log r and log(1 - p) must both be negative")
            w = ops.exp(log_w)
            p = -ops.expm1(log_w)
            return cls(ops.exp(log_r), p, w, log_r, log_w)

    def convert(self, ops: Arithmetic) -> "GeometricTypeLaw":
        """Same law re-expressed in the number type of ``ops``."""
        source = arithmetic_for(self.r)
        if source == ops:
            return self
        with ops.context():
            if ops.extended and not source.extended and self.r > 0 and 0 < self.p < 1:
                # rebuild companions from the decimal inputs, not from float roundoff
                return GeometricTypeLaw(ops.num(self.r), ops.num(self.p))
            return GeometricTypeLaw(
                ops.num(self.r),
                ops.num(self.p),
                ops.num(self.one_minus_p),
                ops.num(self.log_r),
                ops.num(self.log_one_minus_p),
            )

    def pmf(self, k: int):
        if k < 0:
            return 0 * self.p
        if k == 0:
            return self.p
        ops = arithmetic_for(self.r)
        with ops.context():
            return self.one_minus_p * self.r * (1 - self.r) ** (k - 1)

    def conditional_pmf(self, k: int):
        """``P(Y = k | Y >= 1)``, the geometric law on {1, 2, ...} with parameter r."""
        if k < 1:
            return 0 * self.r
        ops = arithmetic_for(self.r)
        with ops.context():
            return self.r * (1 - self.r) ** (k - 1)

    def tail(self, k: int):
        """``P(Y > k)`` for ``k >= 0``."""
        ops = arithmetic_for(self.r)
        with ops.context():
            return self.one_minus_p * (1 - self.r) ** k


@dataclass(frozen=True)
class ModelConfig:
    """Offspring mean plus arithmetic settings for a run."""

    m: object
    precision_mode: PrecisionMode = PrecisionMode.STANDARD
    digits: int = DEFAULT_EXTENDED_DIGITS
    identity_tol: float = 1e-12
    max_steps: int = DEFAULT_MAX_STEPS

    def __post_init__(self):
        object.__setattr__(self, "precision_mode", PrecisionMode(self.precision_mode))
        if self.precision_mode is PrecisionMode.EXTENDED and self.digits < MIN_EXTENDED_DIGITS:
            raise DomainError(f"extended precision needs >= {MIN_EXTENDED_DIGITS} digits, got {self.digits}")
        if not float(self.m) > 1:
            raise DomainError(f"offspring mean m must exceed 1, got {self.m!r}")
        if self.identity_tol <= 0:
            raise DomainError("identity_tol must be positive")

    @classmethod
    def extended(cls, m, digits: int = DEFAULT_EXTENDED_DIGITS, **kwargs) -> "ModelConfig":
        return cls(m, PrecisionMode.EXTENDED, digits, **kwargs)

    @property
    def arith(self) -> Arithmetic:
        if self.precision_mode is PrecisionMode.EXTENDED:
            return extended(self.digits)
        return STANDARD

    @property
    def m_num(self):
        return self.arith.num(self.m)

    @property
    def critical_r(self):
        """``1 - 1/m``, the boundary value of ``r`` between the two regimes."""
        ops = self.arith
        with ops.context():
            return 1 - 1 / self.m_num

    def offspring_pmf(self, j: int):
        """``P(eta = j) = (1/m)(1 - 1/m)**(j - 1)`` on j = 1, 2, ..."""
        if j < 1:
            return 0.0
        ops = self.arith
        with ops.context():
            m = self.m_num
            return (1 / m) * (1 - 1 / m) ** (j - 1)

    def offspring_tail(self, j: int):
        """``P(eta > j)``."""
        ops = self.arith
        with ops.context():
            return (1 - 1 / self.m_num) ** max(j, 0)


@dataclass(frozen=True)
class StepRecord:
    """One generation of a trajectory.

    ``q`` is ``q_n = r_n p_{n-1} / r_{n-1}``, the zero-mass of the offspring sum
    that produced this generation; it is ``None`` on the initial record.
    ``a`` is ``A_n = m - (m - 1) p_n = r_n / r_{n+1}``.
    """

    n: int
    law: GeometricTypeLaw
    a: object
    q: object = None

    @property
    def r(self):
        return self.law.r

    @property
    def p(self):
        return self.law.p

    @property
    def log_r(self):
        return self.law.log_r

    @property
    def log_one_minus_p(self):
        return self.law.log_one_minus_p


@dataclass(frozen=True)
class Trajectory:
    config: ModelConfig
    records: tuple = field(default_factory=tuple)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def __iter__(self) -> Iterator[StepRecord]:
        return iter(self.records)

    @property
    def laws(self) -> list:
        return [rec.law for rec in self.records]

    @property
    def r(self) -> list:
        return [rec.law.r for rec in self.records]

    @property
    def p(self) -> list:
        return [rec.law.p for rec in self.records]

    @property
    def one_minus_p(self) -> list:
        return [rec.law.one_minus_p for rec in self.records]

    def extend(self, steps: int) -> "Trajectory":
        """A longer trajectory continuing from the last record."""
        if steps <= 0:
            return self
        more = iterate(self.records[-1].law, self.config, steps)
        offset = len(self.records) - 1
        tail = tuple(
            StepRecord(rec.n + offset, rec.law, rec.a, rec.q) for rec in more.records[1:]
        )
        # the old last record gets no new information; its q is already set
        return Trajectory(self.config, self.records + tail)


def _a_value(law: GeometricTypeLaw, m):
    # m - (m-1) p written through 1 - p so it stays accurate when p is near 1
    return 1 + (m - 1) * law.one_minus_p


def _step_raw(law: GeometricTypeLaw, m, log_m, ops: Arithmetic):
    """One generation; returns (new law, A_n, q_{n+1}). Caller holds the context."""
    r, p, w = law.r, law.p, law.one_minus_p
    a = 1 + (m - 1) * w
    log_a = ops.log(a)
    r1 = r / a
    q1 = p / a
    one_minus_q1 = m * w / a
    p1 = r1 + q1 * (1 - r1)
    w1 = (1 - r1) * one_minus_q1
    if r1 > ops.tiny:
        log_r1 = ops.log(r1)
    else:
        log_r1 = law.log_r - log_a
    if p1 < 0.5:
        # p1 carries full relative accuracy here while w1 has rounded towards 1
        log_w1 = ops.log1p(-p1)
    elif w1 > ops.tiny:
        log_w1 = ops.log(w1)
    else:
        log_w1 = ops.log1p(-r1) + log_m + law.log_one_minus_p - log_a
    # strictly decreasing in exact arithmetic; rounding may stall it once A rounds to 1
    assert r1 <= r
    new = GeometricTypeLaw(r1, p1, w1, log_r1, log_w1)
    return new, a, q1


def step(law: GeometricTypeLaw, config: ModelConfig) -> GeometricTypeLaw:
    """Apply one generation of the parameter recursion."""
    ops = config.arith
    with ops.context():
        law = law.convert(ops)
        m = config.m_num
        new, _, _ = _step_raw(law, m, ops.log(m), ops)
    return new


def iterate(law0: GeometricTypeLaw, config: ModelConfig, steps: int) -> Trajectory:
    """Trajectory of ``steps + 1`` records starting with ``law0``."""
    if steps < 0:
        raise DomainError(f"steps must be non-negative, got {steps}")
    if steps > config.max_steps:
        raise ResourceLimitError(f"{steps} steps exceeds the configured maximum of {config.max_steps}")
    ops = config.arith
    with ops.context():
        law = law0.convert(ops)
        m = config.m_num
        log_m = ops.log(m)
        records = []
        q = None
        for n in range(steps + 1):
            if n < steps:
                new, a, q_next = _step_raw(law, m, log_m, ops)
            else:
                a = _a_value(law, m)
            records.append(StepRecord(n, law, a, q))
            if n < steps:
                law, q = new, q_next
    return Trajectory(config, tuple(records))


def mean(law: GeometricTypeLaw):
    """``E(Y) = (1 - p) / r``."""
    ops = arithmetic_for(law.r)
    with ops.context():
        if law.r > ops.tiny:
            return law.one_minus_p / law.r
        return ops.exp(law.log_one_minus_p - law.log_r)


def log_mean(law: GeometricTypeLaw):
    ops = arithmetic_for(law.r)
    with ops.context():
        return law.log_one_minus_p - law.log_r


def pgf_radius(law: GeometricTypeLaw):
    ops = arithmetic_for(law.r)
    with ops.context():
        return 1 / (1 - law.r)


def pgf(law: GeometricTypeLaw, s):
    """``E(s**Y) = (p + (r - p) s) / (1 - (1 - r) s)`` for ``|s| < 1/(1 - r)``."""
    ops = arithmetic_for(law.r)
    with ops.context():
        s = ops.num(s) if ops.extended else s
        radius = 1 / (1 - law.r)
        if abs(s) >= radius:
            raise DomainError(f"|s| = {abs(s)} is outside the convergence radius {radius}")
        denom = 1 - (1 - law.r) * s
        if law.p > 0.5:
            # 1 + (1-p)(s-1)/(1-(1-r)s): no cancellation when p is close to 1
            return 1 + law.one_minus_p * (s - 1) / denom
        return (law.p + (law.r - law.p) * s) / denom


def survival(law: GeometricTypeLaw):
    """``P(Y >= 1) = 1 - p``, taken from the log companion when p is near 1."""
    ops = arithmetic_for(law.r)
    with ops.context():
        if law.p > 0.5:
            return ops.exp(law.log_one_minus_p)
        return law.one_minus_p


@dataclass(frozen=True)
class ResidualRow:
    """Identity residuals at generation ``n``.

    Each ``norm_*`` entry is the raw residual divided by the largest elementary
    term entering it. ``None`` marks an identity that needs records beyond the
    end of the trajectory.
    """

    n: int
    r1: object
    r2: object = None
    r3_corrected: object = None
    r3_uncorrected: object = None
    norm_r1: object = None
    norm_r2: object = None
    norm_r3_corrected: object = None


def _norm(residual, *terms):
    scale = max(abs(t) for t in terms)
    return abs(residual) / scale if scale else abs(residual)


def identity_residuals(traj: Trajectory) -> list[ResidualRow]:
    """Residuals of the exact identities satisfied along every trajectory.

    * ``r1``: ``m**-n E(Y_n) - (1 - p_0)/r_0 * prod_{i=1..n} (1 - r_i)``
    * ``r2``: ``(1/r_{n+2} - 1/r_{n+1}) - m (1 - r_{n+1}) (1/r_{n+1} - 1/r_n)``
    * ``r3_corrected``: ``(p_{n+1}/r_{n+1} - p_n/r_n) - (1 - q_{n+1})``
    * ``r3_uncorrected``: ``(p_{n+1}/r_{n+1} - p_n/r_n) - m (1 - p_n)``, kept as a
      diagnostic; it is not an identity of the recursion.
    """
    if len(traj) < 3:
        raise InsufficientLengthError("identity residuals need a trajectory of at least 3 records")
    ops = traj.config.arith
    rows = []
    with ops.context():
        m = traj.config.m_num
        log_m = ops.log(m)
        recs = traj.records
        law0 = recs[0].law
        log_rhs = law0.log_one_minus_p - law0.log_r
        for n, rec in enumerate(recs):
            law = rec.law
            if n > 0:
                log_rhs += ops.log1p(-law.r)
            log_lhs = log_mean(law) - n * log_m
            lhs = ops.exp(log_lhs)
            rhs = ops.exp(log_rhs)
            r1 = lhs - rhs
            norm_r1 = abs(ops.expm1(log_lhs - log_rhs))
            r2 = norm_r2 = r3c = r3p = norm_r3 = None
            if n + 2 < len(recs):
                ra, rb, rc = law.r, recs[n + 1].law.r, recs[n + 2].law.r
                if rc > ops.tiny:
                    t1, t2 = 1 / rc, 1 / rb
                    t3 = m * (1 - rb) / rb
                    t4 = m * (1 - rb) / ra
                    r2 = (t1 - t2) - (t3 - t4)
                    norm_r2 = _norm(r2, t1, t2, t3, t4)
            if n + 1 < len(recs):
                nxt = recs[n + 1]
                if nxt.law.r > ops.tiny:
                    u1 = nxt.law.p / nxt.law.r
                    u0 = law.p / law.r
                    q = nxt.q
                    r3c = (u1 - u0) - (1 - q)
                    norm_r3 = _norm(r3c, u1, u0, 1, q)
                    r3p = (u1 - u0) - m * law.one_minus_p
            rows.append(ResidualRow(n, r1, r2, r3c, r3p, norm_r1, norm_r2, norm_r3))
    return rows


def telescoped_p_over_r(traj: Trajectory) -> list:
    """``p_0/r_0 + sum_{i<n} (1 - q_{i+1})`` for every n, accumulated exactly."""
    ops = traj.config.arith
    out = []
    with ops.context():
        law0 = traj.records[0].law
        acc = law0.p / law0.r
        out.append(acc)
        for rec in traj.records[1:]:
            acc = acc + (1 - rec.q)
            out.append(acc)
    return out
