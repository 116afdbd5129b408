"""Command-line front end: ``geodr <command> [options]``.

Every command writes CSV or JSON to ``--out`` (standard output by default) and
describes itself with a run manifest. JSON outputs embed it under
``"manifest"``; CSV written to a file gets a ``<out>.manifest.json`` sidecar.
``--manifest PATH`` writes it to an explicit location instead.

Exit codes: 0 success, 2 usage or invalid input, 3 resource limit, 4 precision.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from importlib import metadata
from typing import Optional, Sequence

from ._arith import STANDARD, Arithmetic, extended
from .asymptotics import (
    compare,
    corollary_values,
    expand_critical,
    expand_subcritical,
    expand_supercritical,
    RegimeConstants,
)
from .exceptions import (
    BracketNotFoundError,
    DomainError,
    GeodrError,
    PrecisionInsufficientError,
    ResourceLimitError,
)
from .expvariant import ExponentialTypeLaw, ExpVariantConfig, exp_iterate
from .glaw import (
    GeometricTypeLaw,
    ModelConfig,
    identity_residuals,
    iterate,
    mean,
    survival,
)
from .oracle import McConfig, geometric_type_pmf, mc_sample, propagate_pmf, tv_distance
from .regime import Regime, centered_grid, classify, critical_locate, phase_scan

EXIT_USAGE, EXIT_RESOURCE, EXIT_PRECISION = 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _version() -> str:
    try:
        return metadata.version("geodr")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _precision(text: str) -> Arithmetic:
    if text == "standard":
        return STANDARD
    if text.startswith("extended"):
        _, _, digits = text.partition(":")
        try:
            return extended(int(digits) if digits else 50)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    raise argparse.ArgumentTypeError("expected 'standard' or 'extended[:DIGITS]'")


def _grid(text: str) -> list[float]:
    """``lo:hi:num`` cell centres, or a comma-separated list of values."""
    try:
        if ":" in text:
            lo, hi, num = text.split(":")
            return centered_grid(int(num), float(lo), float(hi))
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}; use lo:hi:num or v1,v2,...") from None


class Output:
    """Formats numbers for one precision setting and collects the payload."""

    def __init__(self, ops: Arithmetic):
        self.ops = ops

    def num(self, x):
        """JSON value: float in standard mode, full-digit string in extended mode."""
        if x is None:
            return None
        if isinstance(x, bool) or isinstance(x, int):
            return x
        if self.ops.extended:
            return self.ops.fmt(x)
        x = float(x)
        if math.isnan(x) or math.isinf(x):
            return None
        return float(format(x, ".17g"))

    def pair(self, value, log_value):
        return {"value": self.num(value), "log": self.num(log_value)}

    def cell(self, x) -> str:
        return self.ops.fmt(x)


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


def _config(args, ops: Optional[Arithmetic] = None) -> ModelConfig:
    ops = ops or args.precision
    if ops.extended:
        return ModelConfig.extended(args.m, ops.digits)
    return ModelConfig(args.m)


def _law(ops: Arithmetic, r0, p0) -> GeometricTypeLaw:
    return GeometricTypeLaw(ops.num(r0), ops.num(p0)) if ops.extended else GeometricTypeLaw(float(r0), float(p0))


# --- commands: each returns (kind, payload) with kind in {"csv", "json"} ---


def cmd_iterate(args):
    """R1, R2 and R3_corrected are normalized residuals; R3_paper is the raw
    difference against the uncorrected form."""
    ops = args.precision
    cfg = _config(args)
    # two extra generations so the forward-looking columns are filled on every row
    full = iterate(_law(ops, args.r0, args.p0), cfg, args.steps + 2)
    res = identity_residuals(full)
    out = Output(ops)
    cols = ["n", "r", "p", "log_r", "log_one_minus_p", "mean", "survival", "q_next", "R1", "R2", "R3_corrected", "R3_paper"]
    records = []
    for n in range(args.steps + 1):
        rec, row = full.records[n], res[n]
        law = rec.law
        records.append(
            [n, law.r, law.p, law.log_r, law.log_one_minus_p, mean(law), survival(law),
             full.records[n + 1].q, row.norm_r1, row.norm_r2, row.norm_r3_corrected, row.r3_uncorrected]
        )
    if args.format == "json":
        return "json", {"columns": cols, "rows": [dict(zip(cols, map(out.num, r))) for r in records]}
    return "csv", _csv_text(cols, ([out.cell(v) for v in r] for r in records))


def _report_json(rep, out: Output) -> dict:
    fe = rep.free_energy
    diag = {}
    for k, v in rep.diagnostics.items():
        diag[k] = v if isinstance(v, (str, bool)) or v is None else out.num(v)
    return {
        "regime": rep.regime.value,
        "r_star": out.num(rep.r_star),
        "p_star": out.num(rep.p_star),
        "gamma_star": out.num(rep.gamma_star),
        "free_energy": None if fe is None else out.pair(fe.value, fe.log_value),
        "K": out.num(rep.K),
        "Q": out.num(rep.Q),
        "iterations_used": rep.iterations_used,
        "diagnostics": diag,
    }


def cmd_classify(args):
    ops = args.precision
    rep = classify(_law(ops, args.r0, args.p0), _config(args), args.budget, args.delta)
    return "json", _report_json(rep, Output(ops))


def cmd_critical_locate(args):
    ops = args.precision
    res = critical_locate(args.r0, args.m, args.tol, _config(args), args.budget, args.delta)
    out = Output(ops)
    return "json", {
        "r0": out.num(ops.num(args.r0)),
        "p0_critical": out.num(res.p0_critical),
        "lower": out.num(res.lower),
        "upper": out.num(res.upper),
        "bracket_width": out.num(res.bracket_width),
        "requested_tol": args.tol,
        "resolved": res.resolved,
        "monotonicity_violations": res.monotonicity_violations,
        "flagged": res.flagged,
        "probes": len(res.probes),
    }


def cmd_phase_scan(args):
    ops = args.precision
    diagram = phase_scan(args.m, args.r0_grid, args.p0_grid, _config(args), args.budget, args.delta, n_jobs=args.jobs)
    out = Output(ops)
    rows = ([out.cell(r0), out.cell(p0), rep.regime.code, out.cell(rep.r_star)] for r0, p0, rep in diagram.cells())
    return "csv", _csv_text(["r0", "p0", "regime", "r_star"], rows)


def cmd_expand(args):
    ops = args.precision
    cfg = _config(args)
    p0 = args.p0
    located = None
    if args.locate:
        located = critical_locate(args.r0, args.m, args.tol, cfg, args.budget)
        p0 = located.p0_critical
    law0 = _law(ops, args.r0, p0) if not args.locate else GeometricTypeLaw(ops.num(args.r0), p0)
    rep = classify(law0, cfg, args.budget)
    regime = Regime.NEAR_CRITICAL if args.locate else rep.regime
    traj = iterate(law0, cfg, args.steps + 1)
    m = cfg.m_num
    out = Output(ops)
    with ops.context():
        if regime is Regime.SUPERCRITICAL:
            fe = rep.free_energy.value
            ratio = law0.p / law0.r

            def predict(n):
                return expand_supercritical(n, fe, rep.Q, ratio, m, args.order)

            first = 0
        elif regime is Regime.SUBCRITICAL:

            def predict(n):
                return expand_subcritical(n, rep.r_star, rep.K, m, args.order)

            first = 0
        else:

            def predict(n):
                return expand_critical(n, m, args.order, ops)

            first = 2
        ns = range(first, args.steps + 1)
        rr = compare(traj, predict, "r", ns)
        pp = compare(traj, predict, "p", ns)
        consts = RegimeConstants.from_report(rep, m, law0.p / law0.r) if regime is not Regime.NEAR_CRITICAL else RegimeConstants(regime, m)
        header = ["n", "r_exact", "r_pred", "r_abs_residual", "r_normalized_residual",
                  "p_exact", "p_pred", "p_abs_residual", "p_normalized_residual", "survival_exact", "survival_pred"]
        extra = []
        crit = 1 - 1 / m
        if regime is Regime.SUPERCRITICAL:
            extra = [("p_over_n_r", lambda n, L: L.p / (n * L.r) if n else None)]
        elif regime is Regime.SUBCRITICAL:
            g = m * (1 - rep.r_star)
            extra = [("r_dev_over_gamma_n", lambda n, L: (L.r - rep.r_star) / g**n)]
        else:
            recs = traj.records

            def lemma(n, L):
                v0, v1 = L.r - crit, recs[n + 1].law.r - crit
                return n**3 * (v0 - v1 - m / 2 * v0 * v1)

            extra = [("n_v_n", lambda n, L: n * (L.r - crit)), ("second_difference_n3", lemma)]
        header += [name for name, _ in extra]
        rows = []
        for a, b in zip(rr, pp):
            n = a.n
            law = traj.records[n].law
            cv = corollary_values(n, consts) if (regime is not Regime.NEAR_CRITICAL or n >= 2) else None
            row = [n, a.exact, a.predicted, a.abs_residual, a.normalized_residual,
                   b.exact, b.predicted, b.abs_residual, b.normalized_residual,
                   survival(law), cv.survival_pred if cv else None]
            row += [fn(n, law) for _, fn in extra]
            rows.append(row)
        text_rows = [[out.cell(v) for v in row] for row in rows]
    return "csv", _csv_text(header, text_rows)


def cmd_mc(args):
    law0 = GeometricTypeLaw(args.r0, args.p0)
    cfg = McConfig(args.seed, args.samples, args.n, args.node_budget, args.block_size, args.jobs)
    s = mc_sample(law0, args.m, cfg)
    traj = iterate(law0, ModelConfig(args.m), args.n)
    law_n = traj.records[-1].law
    out = Output(STANDARD)
    rows = [
        ["mean", out.cell(s.mean), out.cell(s.mean_se), out.cell(mean(law_n))],
        ["survival", out.cell(s.survival), out.cell(s.survival_se), out.cell(survival(law_n))],
    ]
    for k, c in enumerate(s.counts):
        freq = c / s.samples
        se = math.sqrt(freq * (1 - freq) / s.samples)
        rows.append([f"pmf[{k}]", out.cell(freq), out.cell(se), out.cell(law_n.pmf(k))])
    return "csv", _csv_text(["quantity", "empirical", "std_error", "exact"], rows)


def cmd_propagate_pmf(args):
    law = GeometricTypeLaw(args.r0, args.p0)
    cfg = ModelConfig(args.m)
    pmf = geometric_type_pmf(law, args.tol)
    traj = iterate(law, cfg, args.steps)
    out = Output(STANDARD)
    rows = [[0, pmf.support_size, out.cell(pmf.tail_bound), out.cell(0.0)]]
    for k in range(1, args.steps + 1):
        pmf = propagate_pmf(pmf, args.m, args.tol)
        exact = geometric_type_pmf(traj.records[k].law, args.tol)
        rows.append([k, pmf.support_size, out.cell(pmf.tail_bound), out.cell(tv_distance(pmf, exact))])
    return "csv", _csv_text(["step", "support", "tail_bound", "tv_to_closed_form"], rows)


def cmd_exp_variant(args):
    cfg = ExpVariantConfig(args.m, args.alpha)
    laws = exp_iterate(ExponentialTypeLaw(args.lam, args.p), cfg, args.steps)
    out = Output(STANDARD)
    rows = []
    for n, law in enumerate(laws):
        ratio = laws[n + 1].lam / law.lam if n + 1 < len(laws) else None
        rows.append([n, out.cell(law.lam), out.cell(law.p), out.cell(law.mean), out.cell(ratio), out.cell(cfg.alpha)])
    return "csv", _csv_text(["n", "lam", "p", "mean", "lam_ratio_next", "alpha"], rows)


def _common(p: argparse.ArgumentParser, precision_default: str = "standard"):
    p.add_argument("--out", help="output path (default: standard output)")
    p.add_argument("--manifest", help="write the run manifest to this path")
    # argparse runs string defaults through ``type`` as well
    p.add_argument("--precision", type=_precision, default=precision_default,
                   help="'standard' or 'extended[:DIGITS]' (default %(default)s)")


def _model(p, p0: bool = True):
    p.add_argument("--m", type=float, required=True, help="offspring mean, > 1")
    p.add_argument("--r0", type=float, required=True)
    if p0:
        p.add_argument("--p0", type=float, required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="geodr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=_version())
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("iterate", help="iterate the (r, p) recursion with identity residuals")
    _model(p)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    _common(p)
    p.set_defaults(func=cmd_iterate)

    p = sub.add_parser("classify", help="regime and limit constants as JSON")
    _model(p)
    p.add_argument("--budget", type=int, default=10**6)
    p.add_argument("--delta", type=float, default=1e-9)
    _common(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("critical-locate", help="bisect p0 onto the critical manifold")
    _model(p, p0=False)
    p.add_argument("--tol", type=float, default=1e-40)
    p.add_argument("--budget", type=int, default=10**6)
    p.add_argument("--delta", type=float, default=None)
    _common(p, "extended:50")
    p.set_defaults(func=cmd_critical_locate)

    p = sub.add_parser("phase-scan", help="regime codes over an (r0, p0) grid")
    p.add_argument("--m", type=float, required=True)
    p.add_argument("--r0-grid", type=_grid, default="0:1:100", help="lo:hi:num cell centres or a list")
    p.add_argument("--p0-grid", type=_grid, default="0:1:100")
    p.add_argument("--budget", type=int, default=10**5)
    p.add_argument("--delta", type=float, default=1e-9)
    p.add_argument("--jobs", type=int, default=1)
    _common(p)
    p.set_defaults(func=cmd_phase_scan)

    p = sub.add_parser("expand", help="asymptotic expansions against the exact trajectory")
    p.add_argument("--m", type=float, required=True)
    p.add_argument("--r0", type=float, required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--p0", type=float)
    g.add_argument("--locate", action="store_true", help="use the bisected critical p0 for this r0")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--order", type=int, choices=[1, 2], default=2)
    p.add_argument("--tol", type=float, default=1e-40, help="bisection tolerance with --locate")
    p.add_argument("--budget", type=int, default=10**6)
    _common(p)
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("mc", help="Monte Carlo tree sampler summary")
    _model(p)
    p.add_argument("--n", type=int, required=True, help="tree depth")
    p.add_argument("--samples", type=int, default=10**5)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--node-budget", type=int, default=10**8)
    p.add_argument("--block-size", type=int, default=4096)
    p.add_argument("--jobs", type=int, default=1)
    _common(p)
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("propagate-pmf", help="exact pmf propagation vs closed form")
    _model(p)
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--tol", type=float, default=1e-12)
    _common(p)
    p.set_defaults(func=cmd_propagate_pmf)

    p = sub.add_parser("exp-variant", help="exponential-type marginal recursion")
    p.add_argument("--m", type=float, required=True)
    p.add_argument("--alpha", type=float, default=None, help="default: log m")
    p.add_argument("--lam", type=float, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    _common(p)
    p.set_defaults(func=cmd_exp_variant)
    return parser


_NOT_PARAMS = {"func", "out", "manifest", "precision", "command"}


def _manifest(args, body: bytes) -> dict:
    params = {}
    for k, v in sorted(vars(args).items()):
        if k in _NOT_PARAMS:
            continue
        params[k] = v
    ops = args.precision
    if args.command == "exp-variant" and args.alpha is None:
        params["alpha"] = math.log(args.m)
    return {
        "command": args.command,
        "params": params,
        "seed": getattr(args, "seed", None),
        "precision": "standard" if not ops.extended else f"extended:{ops.digits}",
        "version": _version(),
        "sha256": hashlib.sha256(body).hexdigest(),
    }


def _emit(args, kind: str, payload, stdout) -> None:
    if kind == "json":
        # the checksum covers the payload as serialized without the manifest
        body = json.dumps(payload, indent=2, sort_keys=False) + "\n"
        manifest = _manifest(args, body.encode())
        text = json.dumps({**payload, "manifest": manifest}, indent=2) + "\n"
    else:
        text = payload
        manifest = _manifest(args, text.encode())
    if args.out:
        with open(args.out, "w", newline="\n", encoding="utf-8") as fh:
            fh.write(text)
    else:
        stdout.write(text)
    target = args.manifest or (f"{args.out}.manifest.json" if args.out and kind == "csv" else None)
    if target:
        with open(target, "w", newline="\n", encoding="utf-8") as fh:
            fh.write(json.dumps(manifest, indent=2) + "\n")


def main(argv: Optional[Sequence[str]] = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        kind, payload = args.func(args)
        _emit(args, kind, payload, stdout)
    except UsageError as exc:
        print(f"geodr: error: {exc}", file=stderr)
        return EXIT_USAGE
    except (DomainError, BracketNotFoundError, ValueError) as exc:
        print(f"geodr: error: {exc}", file=stderr)
        return EXIT_USAGE
    except ResourceLimitError as exc:
        print(f"geodr: resource limit: {exc}", file=stderr)
        return EXIT_RESOURCE
    except PrecisionInsufficientError as exc:
        print(f"geodr: precision: {exc}", file=stderr)
        return EXIT_PRECISION
    except GeodrError as exc:
        print(f"geodr: error: {exc}", file=stderr)
        return EXIT_USAGE
    return 0


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
