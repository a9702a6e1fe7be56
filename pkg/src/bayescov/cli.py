"""Command-line front end.

Commands::

    bayescov simulate --config grid.json [--out results.csv] [--threads N] [--seed S]
    bayescov rates --in results.csv [--group p,loss] [--out rates.csv]
    bayescov bounds --p 10 --n 400 --tau1 0.5 --tau2 2 [--c 0.1] [--c1 0.333] [--tau 2]
    bayescov verify [suite] [--report report.json]

Exit codes: 0 success, 2 config or usage error, 3 scenario errors during a
run, 4 verification failure. ``BAYESCOV_SEED`` overrides the base seed of a
config; ``--seed`` overrides both.
"""

import argparse
import csv
import json
import math
import os
import sys
import time
from collections import OrderedDict

from . import bounds, verify
from .config import load_config
from .exceptions import BayesCovError, ConfigError, DegenerateFit
from .risk import rate_fit, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SCENARIO = 3
EXIT_VERIFY = 4

SEED_ENV = "BAYESCOV_SEED"

CSV_COLUMNS = [
    "scenario_id", "p", "n", "truth_kind", "prior_kind", "nu_rule", "loss_family",
    "loss_power", "loss_scale", "estimator", "risk_mean", "risk_se", "replicates",
    "inner_draws", "inner_method", "base_seed", "wall_ms", "reason",
]

# estimators that ignore the prior; their prior columns read "none"
_PRIORLESS = ("sample_cov", "tapering", "logdet_mle", "logdet_umvue")

# columns always separating rate-fit groups, on top of the requested keys
_IDENTITY_COLUMNS = ("estimator", "truth_kind", "prior_kind", "nu_rule", "loss_family", "loss_power")
_GROUP_ALIASES = {"loss": "loss_family", "truth": "truth_kind", "prior": "prior_kind", "nu": "nu_rule"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


def _row(cell, result=None, wall_ms=0, reason=""):
    sc = cell.scenario
    priorless = sc.estimator in _PRIORLESS
    row = OrderedDict(
        scenario_id=cell.scenario_id,
        p=sc.p,
        n=sc.n,
        truth_kind=cell.truth_kind,
        prior_kind="none" if priorless else sc.prior.kind,
        nu_rule="" if priorless else sc.prior.nu.label,
        loss_family=sc.loss.label,
        loss_power=sc.loss.power,
        loss_scale=_fmt(float(sc.loss.scale)),
        estimator=sc.estimator,
        risk_mean="" if result is None else _fmt(result.mean),
        risk_se="" if result is None else _fmt(result.se),
        replicates=sc.replicates,
        inner_draws="" if result is None else result.inner_draws,
        inner_method="error" if result is None else result.inner_method,
        base_seed=sc.base_seed,
        wall_ms=wall_ms,
        reason=reason,
    )
    return [row[c] for c in CSV_COLUMNS]


def _seed_override(args):
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return None
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"{SEED_ENV}={env!r} is not an integer") from None


def cmd_simulate(args) -> int:
    try:
        cfg = load_config(args.config, _seed_override(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or cfg.output_path
    if not out:
        print("config error: no output path (use --out or output_path)", file=sys.stderr)
        return EXIT_CONFIG
    threads = args.threads or cfg.threads
    errors = 0
    with open(out, "w", encoding="utf-8", newline="") as fh:
        w = _writer(fh)
        w.writerow(CSV_COLUMNS)
        for cell in cfg.cells:
            start = time.perf_counter()
            try:
                result = run_scenario(cell.scenario, threads=threads)
                reason = ""
            except (BayesCovError, ValueError, ArithmeticError) as exc:
                result = None
                reason = f"{type(exc).__name__}: {exc}"
                errors += 1
            wall = int(round(1000 * (time.perf_counter() - start)))
            w.writerow(_row(cell, result, wall, reason))
            fh.flush()
    print(f"wrote {len(cfg.cells)} rows to {out}" + (f" ({errors} error rows)" if errors else ""))
    return EXIT_SCENARIO if errors else EXIT_OK


def _read_rows(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def cmd_rates(args) -> int:
    try:
        rows = _read_rows(args.infile)
    except OSError as exc:
        print(f"cannot read {args.infile}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    keys = [_GROUP_ALIASES.get(k.strip(), k.strip()) for k in args.group.split(",") if k.strip()]
    if rows:
        missing = [k for k in keys + ["n", "risk_mean"] if k not in rows[0]]
        if missing:
            print(f"columns not in {args.infile}: {', '.join(missing)}", file=sys.stderr)
            return EXIT_CONFIG
    cols = keys + [c for c in _IDENTITY_COLUMNS if rows and c in rows[0] and c not in keys]
    groups = OrderedDict()
    for r in rows:
        if r.get("risk_mean", "") == "":
            continue
        groups.setdefault(tuple(r[c] for c in cols), []).append((float(r["n"]), float(r["risk_mean"])))
    header = cols + ["points", "slope", "intercept", "r2", "error"]
    table = []
    for key, pts in groups.items():
        try:
            fit = rate_fit(sorted(pts))
            table.append(list(key) + [len(pts), f"{fit.slope:.4f}", f"{fit.intercept:.4f}", f"{fit.r2:.4f}", ""])
        except DegenerateFit as exc:
            table.append(list(key) + [len(pts), "", "", "", str(exc)])
    widths = [max(len(str(h)), *(len(str(t[i])) for t in table)) if table else len(h) for i, h in enumerate(header)]
    print("  ".join(h.ljust(wd) for h, wd in zip(header, widths)))
    for t in table:
        print("  ".join(str(v).ljust(wd) for v, wd in zip(t, widths)))
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            w = _writer(fh)
            w.writerow(header)
            w.writerows(table)
    return EXIT_OK


def bounds_table(p, n, tau1, tau2, c=0.1, c1=1.0 / 3.0, tau=None):
    """Rows ``(quantity, value)`` of the bounds command, computed with the library calls."""
    tau = tau2 if tau is None else tau
    p_eff = min(p, n)
    eps = c * math.sqrt(p_eff / n)
    spectral = bounds.spectral_lower_bound(p, n, tau1, tau2, c)
    xi = bounds.xi_exact(p_eff, n, eps)
    spec = bounds.HypercubeSpec(p, n, tau, c1)
    return [
        ("p_eff", p_eff),
        ("eps", eps),
        ("xi", xi),
        ("lecam_spectral", bounds.lecam_two_point(0.0, tau2 * eps / 2.0, xi)),
        ("spectral_lower_bound", spectral),
        ("assouad_k", spec.k),
        ("assouad_flip_kl", spec.flip_kl),
        ("assouad_frobenius_bound", bounds.assouad_frobenius_bound(spec)),
    ]


def cmd_bounds(args) -> int:
    try:
        rows = bounds_table(args.p, args.n, args.tau1, args.tau2, args.c, args.c1, args.tau)
    except (BayesCovError, ValueError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    w = _writer(sys.stdout)
    w.writerow(["quantity", "value"])
    for name, value in rows:
        w.writerow([name, _fmt(value)])
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.suite != "all" and args.suite not in verify.SUITES:
        print(f"unknown suite {args.suite!r}; choose from all, {', '.join(verify.SUITES)}", file=sys.stderr)
        return EXIT_CONFIG
    if args.inject_fault == "digamma":
        from .specialfn import digamma_fault

        with digamma_fault(1e-3):
            report = verify.run(args.suite)
    else:
        report = verify.run(args.suite)
    for c in report.checks:
        print(f"[{'PASS' if c.passed else 'FAIL'}] {c.suite}.{c.name} {json.dumps(c.detail, default=float)}")
    counts = report.counts
    print(f"{counts['passed']} passed, {counts['failed']} failed")
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2, default=float)
            fh.write("\n")
    return EXIT_OK if report.passed else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bayescov", description="Bayesian covariance estimation experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run a JSON scenario grid and write a CSV")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.add_argument("--threads", type=int)
    s.add_argument("--seed", type=int, help=f"base seed (overrides the config and {SEED_ENV})")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("rates", help="fit risk ~ n^slope per group")
    r.add_argument("--in", dest="infile", required=True)
    r.add_argument("--group", default="p,loss")
    r.add_argument("--out")
    r.set_defaults(func=cmd_rates)

    b = sub.add_parser("bounds", help="print finite-n lower bounds")
    b.add_argument("--p", type=int, required=True)
    b.add_argument("--n", type=int, required=True)
    b.add_argument("--tau1", type=float, required=True)
    b.add_argument("--tau2", type=float, required=True)
    b.add_argument("--c", type=float, default=0.1)
    b.add_argument("--c1", type=float, default=1.0 / 3.0)
    b.add_argument("--tau", type=float, help="Frobenius class radius (default tau2)")
    b.set_defaults(func=cmd_bounds)

    v = sub.add_parser("verify", help="run the self-check suites")
    v.add_argument("suite", nargs="?", default="all")
    v.add_argument("--report", help="write a JSON report here")
    v.add_argument("--inject-fault", choices=["digamma"], help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
