"""Regime classification, limit constants and the critical manifold.

The sequence ``r_n`` strictly decreases and its limit is either 0 or at least
``1 - 1/m``. The classifier therefore looks for two finite-time certificates:

* crossing: some ``r_n <= 1 - 1/m - delta``, which forces ``r_n -> 0``
  (supercritical);
* tail bound: once ``r_n > 1 - 1/m + delta`` and
  ``4 (m - 1) r_n (1 - p_n) <= m (r_n - (1 - 1/m))**2``, every later decrement
  is dominated by a geometric series that cannot carry ``r`` below the midpoint
  of ``r_n`` and ``1 - 1/m`` (subcritical).

Starting points that produce neither certificate within the step budget are
reported as ``NearCriticalUndetermined``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Optional, Sequence

from ._arith import Arithmetic
from .exceptions import (
    BracketNotFoundError,
    DomainError,
    IdentityViolation,
    PrecisionInsufficientError,
    RegimeMismatchError,
    ResourceLimitError,
)
from .glaw import GeometricTypeLaw, ModelConfig, Trajectory, _step_raw

logger = logging.getLogger(__name__)

DEFAULT_DELTA = 1e-9
DEFAULT_BUDGET = 10**6
MAX_SCAN_CELLS = 10**6


class Regime(str, Enum):
    SUPERCRITICAL = "Supercritical"
    SUBCRITICAL = "Subcritical"
    NEAR_CRITICAL = "NearCriticalUndetermined"

    @property
    def code(self) -> str:
        return {"Supercritical": "S", "Subcritical": "U", "NearCriticalUndetermined": "C?"}[self.value]


@dataclass(frozen=True)
class FreeEnergy:
    value: object
    log_value: object
    first_form: object = None
    forms_rel_diff: object = None
    tail_bound: object = None
    terms: int = 0


@dataclass(frozen=True)
class SeriesConstant:
    """A truncated series or product together with its truncation diagnostics."""

    value: object
    tail_bound: object
    terms: int


@dataclass
class RegimeReport:
    regime: Regime
    r_star: object = None
    p_star: object = None
    gamma_star: object = None
    free_energy: Optional[FreeEnergy] = None
    K: object = None
    Q: object = None
    iterations_used: int = 0
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CriticalLocateResult:
    r0: object
    p0_critical: object
    lower: object
    upper: object
    bracket_width: object
    monotonicity_violations: int
    resolved: bool
    probes: tuple = ()

    @property
    def flagged(self) -> bool:
        return self.monotonicity_violations > 0


def _tails(ops: Arithmetic):
    """Truncation thresholds for series constants in the active precision."""
    if ops.extended:
        return ops.num(10) ** (-ops.digits - 2)
    return 1e-17


def _stationarity(ops: Arithmetic):
    """(relative step, 1 - p) thresholds that define a converged subcritical run."""
    if ops.extended:
        t = ops.num(10) ** (-ops.digits + 3)
        return t, t
    return 1e-15, 1e-12


def law_stream(law: GeometricTypeLaw, config: ModelConfig) -> Iterator[tuple]:
    """Endless ``(law_n, A_n, q_n)`` stream starting at ``law`` (with ``q`` None).

    Must be consumed inside ``config.arith.context()``.
    """
    ops = config.arith
    law = law.convert(ops)
    m = config.m_num
    log_m = ops.log(m)
    q = None
    while True:
        new, a, q_next = _step_raw(law, m, log_m, ops)
        yield law, a, q
        law, q = new, q_next


def _continue(traj: Trajectory) -> Iterator[GeometricTypeLaw]:
    """Laws of ``traj`` followed by the recursion continued past its end."""
    for rec in traj.records:
        yield rec.law
    stream = law_stream(traj.records[-1].law, traj.config)
    next(stream)
    for law, _, _ in stream:
        yield law


def _decide(law0: GeometricTypeLaw, config: ModelConfig, budget: int, delta):
    """Run the recursion until a certificate fires. Returns (regime, n, r_n, w_n)."""
    ops = config.arith
    with ops.context():
        law0 = law0.convert(ops)
        m = config.m_num
        crit = 1 - 1 / m
        delta = ops.num(delta)
        lo, hi = crit - delta, crit + delta
        r, w = law0.r, law0.one_minus_p
        four_m1 = 4 * (m - 1)
        slack = 1 + ops.num(1e-6)
        for n in range(budget + 1):
            if r <= lo:
                return Regime.SUPERCRITICAL, n, r, w
            if r > hi:
                gap = r - crit
                if four_m1 * r * w * slack <= m * gap * gap:
                    return Regime.SUBCRITICAL, n, r, w
            if n == budget:
                break
            a = 1 + (m - 1) * w
            r1 = r / a
            w = (1 - r1) * m * w / a
            r = r1
    return Regime.NEAR_CRITICAL, budget, r, w


def _supercritical_constants(laws: Iterator[GeometricTypeLaw], config: ModelConfig, cap: int):
    """Free energy (both product forms) and Q from one pass over a law stream."""
    ops = config.arith
    with ops.context():
        m = config.m_num
        crit = 1 - 1 / m
        c = (m - 1) / m
        tail_tol = _tails(ops)
        first = None
        log_first = log_second = None
        q_sum = 0
        n = 0
        for n, law in enumerate(laws):
            if n == 0:
                log_first = -law.log_r
                log_second = law.log_one_minus_p - law.log_r
            else:
                log_second += ops.log1p(-law.r)
            log_first += ops.log1p(-c * law.p)
            q_sum += law.p
            r_tail = law.r / crit
            p_tail = law.p / (m - 1)
            if n > 0 and law.p < 0.5 and r_tail < tail_tol and p_tail < tail_tol * crit:
                break
            if n >= cap:
                raise ResourceLimitError(f"series constants did not reach their truncation threshold in {cap} terms")
        rel = abs(ops.expm1(log_first - log_second))
        if rel > 1e-10:
            raise IdentityViolation(f"free-energy product forms disagree by {rel} (relative)")
        fe = FreeEnergy(
            value=ops.exp(log_second),
            log_value=log_second,
            first_form=ops.exp(log_first),
            forms_rel_diff=rel,
            tail_bound=r_tail,
            terms=n + 1,
        )
        q = SeriesConstant(q_sum, p_tail, n + 1)
    return fe, q


def _require_supercritical(traj: Trajectory, budget: int = DEFAULT_BUDGET):
    regime, _, _, _ = _decide(traj.records[0].law, traj.config, budget, DEFAULT_DELTA)
    if regime is not Regime.SUPERCRITICAL:
        raise RegimeMismatchError(f"trajectory is {regime.value}, not Supercritical")


def free_energy(traj: Trajectory) -> FreeEnergy:
    """``F = (1 - p_0)/r_0 * prod_{i>=1} (1 - r_i)``, cross-checked against
    ``(1/r_0) prod_{i>=0} (1 - (m - 1) p_i / m)``.

    The trajectory is continued past its end until both products are converged.
    """
    _require_supercritical(traj)
    fe, _ = _supercritical_constants(_continue(traj), traj.config, traj.config.max_steps)
    return fe


def constant_Q(traj: Trajectory) -> SeriesConstant:
    """``Q = sum_i p_i`` with the geometric tail estimate ``p_n/(m - 1)``."""
    _require_supercritical(traj)
    _, q = _supercritical_constants(_continue(traj), traj.config, traj.config.max_steps)
    return q


def _converge_r(law0: GeometricTypeLaw, config: ModelConfig, cap: int):
    """Iterate until the subcritical stationarity criteria hold; returns an
    extrapolated ``r_*`` and the number of steps used."""
    ops = config.arith
    rel_tol, w_tol = _stationarity(ops)
    with ops.context():
        m = config.m_num
        law0 = law0.convert(ops)
        r, w = law0.r, law0.one_minus_p
        prev_dr = None
        for n in range(cap):
            a = 1 + (m - 1) * w
            r1 = r / a
            w = (1 - r1) * m * w / a
            dr = r - r1
            r = r1
            if dr <= rel_tol * r and w < w_tol:
                extra = 0
                if prev_dr and dr > 0:
                    g = dr / prev_dr
                    if 0 < g < 1:
                        # remaining decrease of a geometric tail with ratio g
                        extra = dr * g / (1 - g)
                return r - extra, n + 1, dr / r, w, True
            prev_dr = dr
    return r, cap, dr / r, w, False


def _k_constant(laws: Iterator[GeometricTypeLaw], config: ModelConfig, r_star, cap: int) -> SeriesConstant:
    ops = config.arith
    with ops.context():
        stop = (1 - r_star) * (_tails(ops) * 10 if not ops.extended else _tails(ops))
        log_base = ops.log1p(-r_star)
        it = iter(laws)
        r0 = next(it).r
        r1 = prev = None
        acc = 0
        n = 0
        for n, law in enumerate(it, start=1):
            if r1 is None:
                r1 = law.r
            acc += ops.log1p(-law.r) - log_base
            # a stalled r means A_n has rounded to 1: later factors are all equal
            if abs(law.r - r_star) < stop or law.r == prev:
                break
            prev = law.r
            if n >= cap:
                raise ResourceLimitError(f"K product did not converge within {cap} factors")
        value = (r0 - r1) / (r0 * r1) * ops.exp(acc)
        return SeriesConstant(value, abs(law.r - r_star) / (1 - r_star), n)


def constant_K(traj: Trajectory, r_star) -> SeriesConstant:
    """``K = (r_0 - r_1)/(r_0 r_1) * prod_{i>=1} (1 - r_i)/(1 - r_*)``."""
    config = traj.config
    ops = config.arith
    with ops.context():
        r_star = ops.num(r_star)
        if not r_star > config.critical_r:
            raise RegimeMismatchError("K is defined only for subcritical limits r_* > 1 - 1/m")
    return _k_constant(_continue(traj), config, r_star, config.max_steps)


def k_partial_products(traj: Trajectory, r_star) -> list:
    """``K_n = (r_0 - r_1)/(r_0 r_1) * prod_{i=1..n} (1 - r_i)/(1 - r_*)`` for n >= 1."""
    ops = traj.config.arith
    out = []
    with ops.context():
        r_star = ops.num(r_star)
        r0, r1 = traj.records[0].law.r, traj.records[1].law.r
        base = (r0 - r1) / (r0 * r1)
        log_base = ops.log1p(-r_star)
        acc = 0
        for rec in traj.records[1:]:
            acc += ops.log1p(-rec.law.r) - log_base
            out.append(base * ops.exp(acc))
    return out


def classify(
    law0: GeometricTypeLaw,
    config: ModelConfig,
    budget: int = DEFAULT_BUDGET,
    delta=DEFAULT_DELTA,
    constants: bool = True,
) -> RegimeReport:
    """Classify the trajectory started at ``law0`` and compute its limit constants."""
    if budget < 1:
        raise DomainError("budget must be at least 1")
    crit = 1 - 1 / float(config.m)
    if not (0 < float(delta) < crit / 10):
        raise DomainError(f"delta must lie in (0, (1 - 1/m)/10), got {delta}")
    regime, n_dec, r_dec, w_dec = _decide(law0, config, budget, delta)
    ops = config.arith
    diag = {"decided_at": n_dec, "r_at_decision": r_dec, "one_minus_p_at_decision": w_dec}
    report = RegimeReport(regime, iterations_used=n_dec, diagnostics=diag)
    if regime is Regime.SUPERCRITICAL:
        diag["certificate"] = "crossing"
        report.r_star = ops.num(0)
        report.p_star = ops.num(0)
        if constants:
            with ops.context():
                stream = (law for law, _, _ in law_stream(law0, config))
                fe, q = _supercritical_constants(stream, config, config.max_steps)
            report.free_energy = fe
            report.Q = q.value
            report.iterations_used = max(n_dec, fe.terms - 1)
            diag["Q_tail_bound"] = q.tail_bound
            diag["free_energy_forms_rel_diff"] = fe.forms_rel_diff
    elif regime is Regime.SUBCRITICAL:
        diag["certificate"] = "tail_bound"
        r_star, used, rel_step, w_end, converged = _converge_r(law0, config, config.max_steps)
        diag.update(stationarity_rel_step=rel_step, final_one_minus_p=w_end, r_star_converged=converged)
        report.iterations_used = max(n_dec, used)
        with ops.context():
            m = config.m_num
            report.r_star = r_star
            report.p_star = ops.num(1)
            report.gamma_star = m * (1 - r_star)
            report.free_energy = FreeEnergy(ops.num(0), None)
            if constants and converged:
                stream = (law for law, _, _ in law_stream(law0, config))
                k = _k_constant(stream, config, r_star, config.max_steps)
                report.K = k.value
                diag["K_tail_bound"] = k.tail_bound
    else:
        diag["certificate"] = None
        logger.info("no regime certificate after %d steps (r = %s)", budget, r_dec)
    return report


def _bisect_mid(lo, hi, ops: Arithmetic):
    with ops.context():
        return lo + (hi - lo) / 2


def critical_locate(
    r0,
    m,
    tol=1e-40,
    config: Optional[ModelConfig] = None,
    budget: int = DEFAULT_BUDGET,
    delta=None,
    verify_probes: int = 4,
) -> CriticalLocateResult:
    """Bisect ``p0`` on the classifier outcome for fixed ``r0 > 1 - 1/m``.

    Small ``p0`` is assumed supercritical and large ``p0`` subcritical; extra
    probes outside the final bracket check that assumption. When a probe hits
    the step budget without a certificate the bisection stops early and the
    result carries ``resolved=False`` with the tightest certified bracket.
    """
    if config is None:
        config = ModelConfig.extended(m, 50)
    ops = config.arith
    digits = ops.digits
    if float(tol) < 10.0 ** (-digits + 2):
        raise PrecisionInsufficientError(
            f"tolerance {tol} is below the resolution 1e-{digits - 2} of {digits}-digit arithmetic"
        )
    crit = 1 - 1 / float(m)
    if not float(r0) > crit:
        raise DomainError(f"r0 = {r0} <= 1 - 1/m: every p0 is supercritical")
    if delta is None:
        delta = 10.0 ** (-digits + 3)

    probes = []

    def probe(p0):
        law = GeometricTypeLaw(ops.num(r0), p0) if ops.extended else GeometricTypeLaw(float(r0), float(p0))
        regime, n, _, _ = _decide(law, config, budget, delta)
        probes.append((p0, regime, n))
        return regime

    with ops.context():
        edge = ops.num(1e-9)
        lo, hi = edge, 1 - edge
        tol_n = ops.num(tol)
    at_lo, at_hi = probe(lo), probe(hi)
    if at_lo is not Regime.SUPERCRITICAL or at_hi is not Regime.SUBCRITICAL:
        raise BracketNotFoundError(
            f"p0 endpoints classify as {at_lo.value} / {at_hi.value}; no regime change to bisect"
        )
    resolved = True
    while True:
        with ops.context():
            width = hi - lo
        if width <= tol_n:
            break
        mid = _bisect_mid(lo, hi, ops)
        if mid <= lo or mid >= hi:
            raise PrecisionInsufficientError("bracket can no longer be split in the active precision")
        regime = probe(mid)
        if regime is Regime.SUPERCRITICAL:
            lo = mid
        elif regime is Regime.SUBCRITICAL:
            hi = mid
        else:
            resolved = False
            logger.warning("critical_locate stopped: probe p0=%s undetermined after %d steps", mid, budget)
            break

    violations = 0
    with ops.context():
        width = hi - lo
        for j in range(verify_probes):
            step = width * 2**j
            below, above = lo - step, hi + step
            if below > 0 and probe(below) is Regime.SUBCRITICAL:
                violations += 1
            if above < 1 and probe(above) is Regime.SUPERCRITICAL:
                violations += 1
        s_max = max((p for p, reg, _ in probes if reg is Regime.SUPERCRITICAL), default=None)
        u_min = min((p for p, reg, _ in probes if reg is Regime.SUBCRITICAL), default=None)
        if s_max is not None and u_min is not None and s_max > u_min:
            violations += sum(
                1 for p, reg, _ in probes if reg is Regime.SUPERCRITICAL and p > u_min
            )
        mid = lo + (hi - lo) / 2
    if violations:
        logger.warning("classification is not monotone in p0 near r0=%s (%d violations)", r0, violations)
    return CriticalLocateResult(
        r0=r0,
        p0_critical=mid,
        lower=lo,
        upper=hi,
        bracket_width=width,
        monotonicity_violations=violations,
        resolved=resolved,
        probes=tuple(probes),
    )


def centered_grid(num: int, lo: float = 0.0, hi: float = 1.0) -> list[float]:
    """``num`` cell centres of a uniform partition of ``(lo, hi)``."""
    step = (hi - lo) / num
    return [lo + (i + 0.5) * step for i in range(num)]


@dataclass(frozen=True)
class PhaseDiagram:
    m: object
    r0_values: tuple
    p0_values: tuple
    reports: tuple  # reports[i][j] belongs to (r0_values[i], p0_values[j])

    def codes(self) -> list[list[str]]:
        return [[rep.regime.code for rep in row] for row in self.reports]

    def cells(self):
        """Row-major ``(r0, p0, report)`` triples."""
        for r0, row in zip(self.r0_values, self.reports):
            for p0, rep in zip(self.p0_values, row):
                yield r0, p0, rep


def _scan_row(r0, p0_values, config, budget, delta, constants):
    return tuple(
        classify(GeometricTypeLaw(r0, p0), config, budget, delta, constants=constants) for p0 in p0_values
    )


def phase_scan(
    m,
    r0_grid: Sequence[float],
    p0_grid: Sequence[float],
    config: Optional[ModelConfig] = None,
    budget: int = 10**5,
    delta=DEFAULT_DELTA,
    constants: bool = False,
    n_jobs: int = 1,
    max_cells: int = MAX_SCAN_CELLS,
) -> PhaseDiagram:
    """Classify every cell of an ``r0 x p0`` grid; output order is row-major in r0."""
    if config is None:
        config = ModelConfig(m)
    r0_grid, p0_grid = tuple(r0_grid), tuple(p0_grid)
    if len(r0_grid) * len(p0_grid) > max_cells:
        raise ResourceLimitError(f"{len(r0_grid) * len(p0_grid)} cells exceeds the limit of {max_cells}")
    for v in r0_grid + p0_grid:
        if not 0 < v < 1:
            raise DomainError(f"grid value {v} is outside (0, 1)")
    if n_jobs == 1:
        rows = [_scan_row(r0, p0_grid, config, budget, delta, constants) for r0 in r0_grid]
    else:
        from joblib import Parallel, delayed

        rows = Parallel(n_jobs=n_jobs)(
            delayed(_scan_row)(r0, p0_grid, config, budget, delta, constants) for r0 in r0_grid
        )
    return PhaseDiagram(m, r0_grid, p0_grid, tuple(rows))
