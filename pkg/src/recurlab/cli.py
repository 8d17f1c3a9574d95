"""``recurlab`` command line: simulate, oracle, rates, liminf, plotdata.

Exit codes: 0 success, 1 a check failed, 2 usage or config error, 3 runtime
failure.  Reals in CSV files are written with 17 significant digits.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import os
import sys
from dataclasses import replace

import numpy as np

from recurlab import __version__, oracle
from recurlab._backend import NAME as BACKEND
from recurlab.config import RunConfig, load_config
from recurlab.errors import ConfigError, InconsistentGrid, InvalidSpec, RecurLabError
from recurlab.estimators import liminf_report
from recurlab.replication import (ReplicaAggregate, Resolved, chebyshev_rate_check,
                                  default_workers, delta_distribution, run_experiment, run_liminf)
from recurlab.schedule import ScheduleSpec

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3
MANIFEST_SCHEMA = "recurlab.manifest/1"


class UsageError(Exception):
    pass


def _f(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    if isinstance(x, (list, tuple)):
        return " ".join(_f(v) for v in x)
    return "" if x is None else str(x)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_f(v) for v in r])


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _manifest(path, rc: RunConfig, started, outputs, extra=None):
    m = {"schema": MANIFEST_SCHEMA, "config_hash": rc.experiment.config_hash(),
         "master_seed": rc.experiment.master_seed, "version": __version__, "backend": BACKEND,
         "oracle_constants": oracle.CONSTANTS, "started": started, "finished": _now(),
         "outputs": sorted(os.path.basename(o) for o in outputs), "config": rc.canonical()}
    if extra:
        m.update(extra)
    with open(path, "w") as fh:
        json.dump(m, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _form_param(cfg):
    t = cfg.target
    return ("alpha", t.alpha) if t.alpha is not None else ("eps", t.eps)


# -- simulate -----------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    rc = load_config(args.config)
    cfg = rc.experiment
    os.makedirs(args.out, exist_ok=True)
    started = _now()
    res = Resolved(cfg)
    rows = []
    pname, pval = _form_param(cfg)

    def per_replica(r, results):
        for a, lim, (score, delta) in zip(res.targets, res.limits, results):
            rows.append([cfg.form.value, a.tolist(), pname, pval, res.schedule.count, score,
                         res.normalizer, score / res.normalizer, lim, delta, cfg.master_seed, r])

    agg = run_experiment(cfg, workers=args.workers, checkpoint=args.checkpoint,
                         on_replica=per_replica if args.per_replica else None)
    outputs = []
    agg_path = os.path.join(args.out, "aggregate.json")
    agg.save(agg_path)
    outputs.append(agg_path)
    if args.per_replica:
        p = os.path.join(args.out, "replicas.csv")
        _write_csv(p, ["theorem_form", "a", "param", "param_value", "count", "hit_count", "normalizer",
                       "empirical", "limit", "delta", "seed", "replica_index"], rows)
        outputs.append(p)
    p = os.path.join(args.out, "summary.csv")
    srows = []
    limit_prov = "quadrature" if cfg.target.mode.value == "box" else "closed-form"
    for t in agg.targets:
        if agg.replicas >= 2:
            s = delta_distribution(agg, t.a)
            mean, var = s.mean, s.variance
        else:
            mean, var = float(t.sum_delta), float("nan")
        srows.append([cfg.form.value, t.a, pname, pval, agg.count, agg.replicas,
                      float(t.sum_score) / agg.replicas, agg.normalizer, agg.normalizer_n_last, t.limit,
                      limit_prov, mean, var,
                      mean * agg.normalizer / agg.normalizer_n_last, "monte-carlo"])
    _write_csv(p, ["theorem_form", "a", "param", "param_value", "count", "replicas", "mean_hits",
                   "normalizer", "normalizer_n_last", "limit", "limit_provenance", "mean_delta",
                   "var_delta", "mean_delta_n_last", "delta_provenance"], srows)
    outputs.append(p)
    mpath = os.path.join(args.out, "manifest.json")
    _manifest(mpath, rc, started, outputs + [mpath],
              {"workers": args.workers or default_workers(), "replicas_completed": agg.replicas})
    print(f"wrote {len(outputs) + 1} files to {args.out}")
    return EXIT_OK


# -- oracle -------------------------------------------------------------------------------

def _vec_arg(s):
    return [float(v) for v in s.replace(",", " ").split()] if s is not None else None


def _mat_arg(s):
    if s is None:
        return None
    return [[float(v) for v in row.replace(",", " ").split()] for row in s.split(";") if row.strip()]


def cmd_oracle(args) -> int:
    f = args.form
    a = _vec_arg(args.a)
    sigma = _mat_arg(args.sigma)

    def need(name):
        v = getattr(args, name)
        if v is None:
            raise UsageError(f"--{name} is required for form {f}")
        return v

    if f == "exact-binomial":
        est = oracle.exact_binomial_prob(need("n"), need("k"))
    elif f == "simple1d":
        est = oracle.exact_simple1d_point(need("n"), (a or [0.0])[0])
    elif f == "simple2d":
        est = oracle.exact_simple2d_point(need("n"), a or [0.0, 0.0])
    elif f == "lclt1d":
        est = oracle.lclt_simple1d_asym(need("n"), (a or [0.0])[0])
    elif f == "lclt2d":
        est = oracle.lclt_simple2d_asym(need("n"), a or [0.0, 0.0])
    elif f == "lclt-lattice":
        need("a"), need("sigma")
        est = oracle.lclt_lattice_asym(need("n"), a, sigma, covolume=args.covolume)
    elif f in ("box", "be-box"):
        d = args.d or (len(a) if a else 1)
        a = a or [0.0] * d
        sigma = sigma or np.eye(d).tolist()
        if f == "box":
            from recurlab.estimators import box_limit_value
            v = box_limit_value(a, need("eps"), sigma)
            est = oracle.ProbEstimate(v, 1e-10, oracle.Kind.EXACT, None,
                                      {"a": a, "eps": args.eps, "sigma": sigma})
        else:
            est = oracle.be_box_prob(need("n"), a, need("eps"), sigma, args.rho, args.c_be)
    elif f == "phi":
        d = args.d or (len(a) if a else 1)
        v = oracle.phi_n(a or [0.0] * d, need("n"), need("alpha"), d)
        est = oracle.ProbEstimate(v, 1e-10, oracle.Kind.EXACT, None,
                                  {"n": args.n, "alpha": args.alpha, "d": d})
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(f"unknown form {f}")
    json.dump(est.to_dict(), sys.stdout, sort_keys=True)
    sys.stdout.write("\n")
    return EXIT_OK


# -- rates --------------------------------------------------------------------------------

def _rate_rows(report):
    d = len(report.rows[0].a) if report.rows else 0
    header = ["form", "n"] + [f"a{k + 1}" for k in range(d)] + [
        "epsilon", "freq", "wilson_lo", "wilson_hi", "bound", "pass", "replicas", "rate", "C", "z",
        "provenance"]
    rows = [[r.form, r.n, *r.a, r.epsilon, r.freq, r.wilson_lo, r.wilson_hi, r.bound, r.passed,
             r.replicas, r.rate, report.C, report.z, "monte-carlo"] for r in report.rows]
    return header, rows


def cmd_rates(args) -> int:
    alpha = args.alpha
    if args.aggregates:
        aggs = [ReplicaAggregate.load(p) for p in args.aggregates]
    else:
        if not args.config:
            raise UsageError("rates needs a config file or --aggregates")
        rc = load_config(args.config)
        if len(rc.rate_counts) < 2:
            raise ConfigError("need at least two counts", "rates.counts")
        if alpha is None:
            alpha = rc.rate_alpha
        aggs = []
        for c in rc.rate_counts:
            spec = ScheduleSpec.from_dict({**rc.experiment.schedule.to_dict(), "count": c})
            aggs.append(run_experiment(replace(rc.experiment, schedule=spec), workers=args.workers))
            if args.save_aggregates:
                os.makedirs(args.save_aggregates, exist_ok=True)
                aggs[-1].save(os.path.join(args.save_aggregates, f"aggregate_count{c}.json"))
    base = {k: v for k, v in aggs[0].config.items() if k not in ("schedule", "replicas")}
    for g in aggs[1:]:
        other = {k: v for k, v in g.config.items() if k not in ("schedule", "replicas")}
        if other != base:
            raise InconsistentGrid("aggregates differ in more than the schedule count")
    report = chebyshev_rate_check(aggs, alpha=alpha, d=args.d)
    header, rows = _rate_rows(report)
    _write_csv(args.out, header, rows)
    print(f"C = {report.C:.6g}; {sum(r.passed for r in report.rows)}/{len(report.rows)} rows pass; "
          f"report written to {args.out}")
    return EXIT_OK if report.passed else EXIT_CHECK


# -- liminf -------------------------------------------------------------------------------

def cmd_liminf(args) -> int:
    rc = load_config(args.config)
    if rc.liminf is None:
        raise ConfigError("missing section", "liminf")
    li = rc.liminf
    res = Resolved(rc.experiment)
    os.makedirs(args.out, exist_ok=True)
    started = _now()
    rows, hist_rows, failed = [], [], False
    for a in res.targets:
        trackers = run_liminf(res.dist, a, li.gamma, li.n_max, li.replicas,
                              rc.experiment.master_seed, li.milestones)
        for r, tr in enumerate(trackers):
            rep = liminf_report(tr, li.bound)
            failed |= rep.status == "fail"
            rows.append([a.tolist(), r, rep.gamma, rep.n_max, rep.running_min, rep.argmin_n,
                         rep.bound, rep.status, "monte-carlo"])
            for n, v in tr.history:
                hist_rows.append([a.tolist(), r, n, v])
    p1 = os.path.join(args.out, "liminf.csv")
    _write_csv(p1, ["a", "replica_index", "gamma", "n_max", "running_min", "argmin_n", "bound",
                    "status", "provenance"], rows)
    p2 = os.path.join(args.out, "liminf_history.csv")
    _write_csv(p2, ["a", "replica_index", "n", "running_min"], hist_rows)
    mpath = os.path.join(args.out, "manifest.json")
    _manifest(mpath, rc, started, [p1, p2, mpath])
    n_pass = sum(r[7] == "pass" for r in rows)
    print(f"{len(rows)} trackers; {n_pass} pass; {'some FAIL' if failed else 'no failures'}")
    return EXIT_CHECK if failed else EXIT_OK


# -- plotdata -----------------------------------------------------------------------------

def cmd_plotdata(args) -> int:
    if not args.aggregates and not args.liminf_history:
        raise UsageError("plotdata needs at least one aggregate file")
    rows = []
    aggs = []
    for p in args.aggregates:
        try:
            aggs.append(ReplicaAggregate.load(p))
        except (KeyError, json.JSONDecodeError, InvalidSpec) as exc:
            raise ConfigError(f"schema mismatch: {exc}", p) from None
    aggs.sort(key=lambda g: g.count)
    for g in aggs:
        for t in g.targets:
            label = "a=" + ",".join(_f(v) for v in t.a)
            R = g.replicas
            mean = float(t.sum_delta) / R
            if R >= 2:
                s = delta_distribution(g, t.a)
                se = math.sqrt(s.variance / R)
            else:
                se = float("nan")
            rows.append([f"delta_mean {label}", g.count, mean, mean - 2 * se, mean + 2 * se,
                         "monte-carlo"])
            for e, k in zip(g.epsilon_grid, t.exceed):
                f = k / R
                se_f = math.sqrt(f * (1 - f) / R)
                rows.append([f"exceedance eps={_f(e)} {label}", g.count, f, f - 2 * se_f, f + 2 * se_f,
                             "monte-carlo"])
    for p in args.liminf_history or []:
        with open(p) as fh:
            rd = csv.DictReader(fh)
            if rd.fieldnames is None or not {"a", "n", "running_min"} <= set(rd.fieldnames):
                raise ConfigError("schema mismatch: not a liminf history file", p)
            by = {}
            for row in rd:
                by.setdefault((row["a"], int(row["n"])), []).append(float(row["running_min"]))
        for (a, n), vals in sorted(by.items()):
            v = np.array(vals)
            rows.append([f"running_min a={a}", n, float(np.median(v)), float(v.min()), float(v.max()),
                         "monte-carlo"])
    _write_csv(args.out, ["series", "x", "y", "lo", "hi", "provenance"], rows)
    print(f"{len(rows)} rows written to {args.out}")
    return EXIT_OK


# -- entry point ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="recurlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"recurlab {__version__} ({BACKEND})")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a replicated experiment")
    s.add_argument("config")
    s.add_argument("--out", default="runs/simulate")
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--per-replica", action="store_true", help="also write replicas.csv")
    s.add_argument("--checkpoint", default=None, help="resumable aggregate checkpoint path")
    s.set_defaults(func=cmd_simulate)

    o = sub.add_parser("oracle", help="print one oracle estimate as JSON")
    o.add_argument("--form", required=True, choices=["exact-binomial", "simple1d", "simple2d", "lclt1d",
                                                     "lclt2d", "lclt-lattice", "box", "be-box", "phi"])
    o.add_argument("--n", type=int)
    o.add_argument("--k", type=int)
    o.add_argument("--a")
    o.add_argument("--sigma", help="matrix rows separated by ';'")
    o.add_argument("--eps", type=float)
    o.add_argument("--alpha", type=float)
    o.add_argument("--d", type=int)
    o.add_argument("--rho", type=float, default=1.0)
    o.add_argument("--c-be", type=float, default=None)
    o.add_argument("--covolume", type=float, default=1.0)
    o.set_defaults(func=cmd_oracle)

    r = sub.add_parser("rates", help="Chebyshev rate-shape check across counts")
    r.add_argument("config", nargs="?")
    r.add_argument("--aggregates", nargs="+")
    r.add_argument("--out", default="rates.csv")
    r.add_argument("--alpha", type=float, default=None, help="rate exponent (defaults to [rates] alpha, then target alpha)")
    r.add_argument("--d", type=int, default=None)
    r.add_argument("--workers", type=int, default=None)
    r.add_argument("--save-aggregates", default=None, metavar="DIR")
    r.set_defaults(func=cmd_rates)

    m = sub.add_parser("liminf", help="running minima of n^gamma |S_n/sqrt(n) - a|")
    m.add_argument("config")
    m.add_argument("--out", default="runs/liminf")
    m.set_defaults(func=cmd_liminf)

    d = sub.add_parser("plotdata", help="tidy CSV series from aggregates")
    d.add_argument("aggregates", nargs="*")
    d.add_argument("--liminf-history", nargs="+")
    d.add_argument("--out", default="plotdata.csv")
    d.set_defaults(func=cmd_plotdata)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigError, UsageError, InconsistentGrid) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RecurLabError as exc:
        # precondition failures of the oracle and experiment inputs are usage errors
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - anything else is a runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
