"""End-to-end acceptance checks, one test per criterion (split where a
criterion bundles independent claims). Each test prints a PASS/FAIL line and
the session summary lists them all."""
import math
import time

import numpy as np
import pytest

from geodr import (
    CoefficientTarget,
    GeometricTypeLaw,
    McConfig,
    ModelConfig,
    Regime,
    centered_grid,
    classify,
    compare,
    conditional_chisquare,
    critical_locate,
    estimate_coefficients,
    expand_subcritical,
    free_energy,
    geometric_type_pmf,
    identity_residuals,
    iterate,
    mc_sample,
    pgf,
    pgf_radius,
    phase_scan,
    propagate_pmf,
    step,
    telescoped_p_over_r,
    tv_distance,
)
from tests_support import record


def test_c01_marginal_preservation():
    rng = np.random.default_rng(20240601)
    worst, t0 = 0.0, time.time()
    for _ in range(20):
        m = rng.uniform(1.5, 5.0)
        law = GeometricTypeLaw(rng.uniform(0.3, 0.95), rng.uniform(0.05, 0.95))
        cfg = ModelConfig(m)
        pmf = geometric_type_pmf(law, 1e-12)
        for _ in range(5):
            pmf = propagate_pmf(pmf, m, 1e-12)
            law = step(law, cfg)
            worst = max(worst, tv_distance(pmf, geometric_type_pmf(law, 1e-12)))
    record("1", worst <= 1e-9, f"max TV over 20 configs x 5 steps = {worst:.3e} (bound 1e-9), {time.time() - t0:.1f}s")


def test_c02_identity_suite():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        m = rng.uniform(1.1, 6.0)
        law = GeometricTypeLaw(rng.uniform(0.01, 0.99), rng.uniform(0.01, 0.99))
        for row in identity_residuals(iterate(law, ModelConfig(m), 50)):
            for v in (row.norm_r1, row.norm_r2, row.norm_r3_corrected):
                if v is not None:
                    worst = max(worst, float(v))
    cfg = ModelConfig.extended(2, 50)
    r3 = identity_residuals(iterate(GeometricTypeLaw(0.5, 0.5), cfg, 2))[0].r3_uncorrected
    with cfg.arith.context():
        third = abs(r3 + cfg.arith.num(1) / 3)
    ok = worst <= 1e-12 and third < 1e-45
    record("2", ok, f"max normalized R1/R2/R3 = {worst:.3e}; R3_paper(0) + 1/3 = {float(third):.1e}")


def test_c03_supercritical_leading_order():
    cfg = ModelConfig(2)
    traj = iterate(GeometricTypeLaw(0.5, 0.5), cfg, 100)
    fe = free_energy(traj)
    dev = abs(math.expm1(traj.records[100].law.log_r + fe.log_value + 100 * math.log(2)))
    ok = dev <= 1e-8 and fe.forms_rel_diff <= 1e-10
    record("3", ok, f"|r_100 F 2^100 - 1| = {dev:.2e}; product forms differ by {fe.forms_rel_diff:.1e}")


def test_c04_supercritical_p_coefficient():
    cfg = ModelConfig(2)
    traj = iterate(GeometricTypeLaw(0.5, 0.5), cfg, 200)
    tel = telescoped_p_over_r(traj)
    worst = max(abs(tel[n] - rec.law.p / rec.law.r) / tel[n] for n, rec in enumerate(traj.records))
    est = estimate_coefficients(traj, CoefficientTarget.SUPERCRITICAL_P)
    x = est.extrapolated
    supported = 1.0 if abs(x - 1) < abs(x - 2) else 2.0
    converged = est.rate is not None and abs(est.raw[-1] - est.raw[-2]) < 1e-4
    ok = worst <= 1e-12 and converged
    record(
        "4",
        ok,
        f"telescoping max rel err {worst:.1e}; p_n/(n r_n): raw {est.raw[-1]:.6f}, extrapolated {x:.9f}; "
        f"candidates m=2 and 1; data supports {supported:g}",
    )


@pytest.fixture(scope="module")
def subcritical_run():
    cfg = ModelConfig.extended(2, 200)
    law = GeometricTypeLaw(0.9, 0.9)
    rep = classify(law, cfg)
    return cfg, rep, iterate(law, cfg, 200)


def test_c05_subcritical_expansions(subcritical_run):
    cfg, rep, traj = subcritical_run
    assert rep.regime is Regime.SUBCRITICAL
    with cfg.arith.context():
        rs, K, g = rep.r_star, rep.K, rep.gamma_star
        r_dev = max(abs((traj.r[n] - rs) / (g**n * K * rs**2 / (1 - g)) - 1) for n in range(80, 201))
        p_dev = max(abs(traj.one_minus_p[n] * (2 - 1) / (K * rs * g**n) - 1) for n in range(80, 201))
    rows = compare(traj, lambda n: expand_subcritical(n, rs, K, 2), "r", [80, 120, 160, 200])
    prow = compare(traj, lambda n: expand_subcritical(n, rs, K, 2), "p", [80, 120, 160, 200])
    norms = [float(r.normalized_residual) for r in rows]
    pnorms = [float(r.normalized_residual) for r in prow]
    drops = all(b <= a / 10 for a, b in zip(norms, norms[1:])) and all(b <= a / 10 for a, b in zip(pnorms, pnorms[1:]))
    ok = r_dev <= 1e-6 and p_dev <= 1e-6 and drops
    record(
        "5",
        ok,
        f"max first-order deviation r {float(r_dev):.1e}, 1-p {float(p_dev):.1e} over n=80..200; "
        f"second-order normalized r residuals {['%.1e' % v for v in norms]}",
    )


@pytest.fixture(scope="module")
def critical_run():
    cfg = ModelConfig.extended(2, 50)
    t0 = time.time()
    res = critical_locate(0.8, 2, 1e-40, cfg, budget=10**6)
    traj = iterate(GeometricTypeLaw(cfg.arith.num(0.8), res.p0_critical), cfg, 2001)
    return cfg, res, traj, time.time() - t0


def test_c06a_critical_bracket(critical_run):
    cfg, res, _, secs = critical_run
    ok = res.resolved and res.bracket_width <= 1e-40
    record(
        "6a",
        ok,
        f"bracket width {float(res.bracket_width):.2e} (target 1e-40), resolved={res.resolved}, "
        f"{len(res.probes)} probes, {secs:.0f}s",
    )


def test_c06b_n_v_n(critical_run):
    cfg, _, traj, _ = critical_run
    est = estimate_coefficients(traj, CoefficientTarget.CRITICAL_NV, start=500)
    devs = [(n, abs(float(x) - 1)) for n, x in zip(est.n, est.raw) if n <= 2000]
    worst_n, worst = max(devs, key=lambda t: t[1])
    first_ok = next((n for n, d in devs if d <= 0.02), None)
    record(
        "6b",
        worst <= 0.02,
        f"max |n v_n m/2 - 1| on [500, 2000] = {worst:.4f} at n={worst_n} (bound 0.02); holds from n={first_ok}",
    )


def test_c06c_lemma_estimator(critical_run):
    _, _, traj, _ = critical_run
    est = estimate_coefficients(traj, CoefficientTarget.CRITICAL_SECOND_DIFFERENCE, start=1000)
    x = float(est.raw[0])
    target = 4 * 3 / (3 * 2 * 1)
    record("6c", abs(x / target - 1) <= 0.10, f"n^3(v_n - v_n+1 - (m/2) v_n v_n+1) at n=1000 = {x:.4f} vs {target}")


def test_c06d_survival(critical_run):
    _, _, traj, _ = critical_run
    w = float(traj.one_minus_p[1000])
    lead = 2 / 1000**2
    record("6d", abs(w / lead - 1) <= 0.05, f"(1 - p_1000) / (2/n^2) = {w / lead:.4f}")


def test_c07_critical_pgf_at_m(critical_run):
    cfg, _, traj, _ = critical_run
    law = traj.records[1000].law
    with cfg.arith.context():
        assert 2 < pgf_radius(law)
        val = (pgf(law, 2) - 1) * (2 - 1) * 1000
    record("7", abs(float(val) - 1) <= 0.05, f"(E(m^Y_1000) - 1)(m-1)n = {float(val):.5f}")


def test_c08a_conditional_structure():
    worst = 0.0
    for n, rec in enumerate(iterate(GeometricTypeLaw(0.5, 0.5), ModelConfig(2), 30)):
        law = rec.law
        for k in range(1, 40):
            geo = law.r * (1 - law.r) ** (k - 1)
            worst = max(worst, abs(law.pmf(k) / law.one_minus_p - geo))
    record("8a", worst <= 1e-12, f"max |P(Y=k | Y>=1) - geometric(r_n)| = {worst:.1e}")


def test_c08b_subcritical_limit(subcritical_run):
    cfg, rep, traj = subcritical_run
    with cfg.arith.context():
        dev = abs(traj.r[200] - rep.r_star)
    record("8b", dev <= 1e-6, f"|r_200 - r_*| = {float(dev):.1e} (subcritical run)")


def test_c08c_critical_limit(critical_run):
    _, _, traj, _ = critical_run
    dev = abs(float(traj.r[2000]) - 0.5)
    record("8c", dev <= 1e-6, f"|r_2000 - (1 - 1/m)| = {dev:.2e} (bound 1e-6; v_n ~ 2/(m n))")


def test_c08d_laplace_limit():
    cfg = ModelConfig(2)
    law0 = GeometricTypeLaw(0.5, 0.5)
    traj = iterate(law0, cfg, 40)
    F = free_energy(traj).value
    law = traj.records[40].law
    devs = [abs(pgf(law, math.exp(-s * 2.0**-40)) - 1 / (1 + F * s)) for s in (0.5, 1.0, 2.0)]
    record("8d", max(devs) <= 1e-4, f"max Laplace deviation at n=40 = {max(devs):.1e}")


def test_c09_monte_carlo():
    t0 = time.time()
    law0 = GeometricTypeLaw(0.5, 0.5)
    s = mc_sample(law0, 2, McConfig(seed=20240601, samples=10**5, n=8))
    law = iterate(law0, ModelConfig(2), 8).records[-1].law
    surv_z = abs(s.survival - law.one_minus_p) / s.survival_se
    mean_z = abs(s.mean - law.one_minus_p / law.r) / s.mean_se
    chi = conditional_chisquare(s, law.r)
    ok = surv_z <= 3 and mean_z <= 3 and not chi.rejected
    record(
        "9",
        ok,
        f"survival z={surv_z:.2f}, mean z={mean_z:.2f}, chi2={chi.statistic:.1f} (dof {chi.dof}, "
        f"crit {chi.critical:.1f}), {time.time() - t0:.1f}s",
    )


def test_c10_phase_diagram():
    grid = centered_grid(100)
    cfg = ModelConfig(2)
    diagram = phase_scan(2, grid, grid, cfg, budget=10**5)
    left_ok = all(rep.regime is Regime.SUPERCRITICAL for r0, _, rep in diagram.cells() if r0 <= 0.5)
    forbidden = sum(
        1
        for _, _, rep in diagram.cells()
        if rep.regime is not Regime.NEAR_CRITICAL and 1e-9 < rep.r_star < 0.5 - 1e-9
    )
    bad_cols = []
    for i, r0 in enumerate(grid):
        if r0 <= 0.5:
            continue
        codes = [rep.regime.code for rep in diagram.reports[i]]
        trimmed = [c for c in codes if c != "C?"]
        switches = sum(1 for a, b in zip(trimmed, trimmed[1:]) if a != b)
        if switches > 1 or (trimmed and trimmed[0] == "U" and "S" in trimmed):
            bad_cols.append(r0)
            continue
        last_s = max((grid[j] for j, c in enumerate(codes) if c == "S"), default=0.0)
        first_u = min((grid[j] for j, c in enumerate(codes) if c == "U"), default=1.0)
        loc = critical_locate(r0, 2, 1e-6, cfg, budget=10**5)
        p = float(loc.p0_critical)
        if not (last_s - 0.01 <= p <= first_u + 0.01):
            bad_cols.append(r0)
    ok = left_ok and forbidden == 0 and not bad_cols
    record(
        "10",
        ok,
        f"left half all S: {left_ok}; forbidden r_* reports: {forbidden}; inconsistent columns: {len(bad_cols)}",
    )
