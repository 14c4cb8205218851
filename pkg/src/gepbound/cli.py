"""Command-line entry point: ``gepbound <subcommand> ...``.

Exit status: 0 on success, 1 on any validation or runtime error (a JSON
error document goes to stderr), 2 when a dominance comparison FAILs.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path

from . import __version__
from .async_core import bound_gepD
from .config import (canonical_json, eval_config, fingerprint, iter_async, load_config, build_sync, sweep_points,
                     trial_plan)
from .estimator import compare, exhaustive_gep, simulate_gep
from .sync_bounds import bound_gep1, bound_gep12, bound_total, id_collision_bound

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2
SYNC_DECODERS = ("d12", "d1", "synthesized")
BOUND_KINDS = ("gep12", "gep1", "synthesized")
TERM_COLUMNS = ["kind", "t2", "d", "family", "subset", "g", "g_tilde", "value", "weight", "mode", "stderr"]
EST_COLUMNS = ["decoder", "t2", "d", "g", "region", "prior", "trials", "incorrect", "collision", "miss",
               "estimate", "stderr"]
VERDICT_COLUMNS = ["verdict", "decoder", "kind", "t2", "d", "estimate", "stderr", "bound", "slack", "margin"]


def _vec(v) -> str:
    return canonical_json([list(x) if isinstance(x, tuple) else x for x in v])


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, columns, rows):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: r.get(k, "") for k in columns})
    path.write_text(buf.getvalue())


def _term_rows(report, t2="", d=""):
    for t in report.terms:
        yield {"kind": report.kind, "t2": t2, "d": d, "family": t.family,
               "subset": "" if t.subset is None else _vec(t.subset), "g": _vec(t.g), "g_tilde": _vec(t.g_tilde),
               "value": repr(t.value), "weight": t.weight, "mode": t.mode, "stderr": repr(t.stderr)}


def _est_rows(est, t2="", d=""):
    for s in est.per_g:
        yield {"decoder": est.decoder, "t2": t2, "d": d, "g": _vec(s.g), "region": s.region,
               "prior": repr(s.prior), "trials": s.trials, "incorrect": s.incorrect, "collision": s.collision,
               "miss": s.miss, "estimate": repr(s.estimate), "stderr": repr(s.stderr)}


def _print_table(rows, columns, out=None):
    out = out or sys.stdout
    widths = {c: max(len(c), *(len(str(r.get(c, ""))) for r in rows)) if rows else len(c) for c in columns}
    out.write("  ".join(c.ljust(widths[c]) for c in columns) + "\n")
    for r in rows:
        out.write("  ".join(str(r.get(c, "")).ljust(widths[c]) for c in columns) + "\n")


class Run:
    """Shared state of one invocation: config, output directory and timings."""

    def __init__(self, args):
        self.cfg = load_config(args.config)
        self.fp = fingerprint(self.cfg)
        self.out = Path(args.out or self.cfg["output"]["dir"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.timing = {}

    def timed(self, label, fn, *a, **kw):
        t = time.perf_counter()
        res = fn(*a, **kw)
        self.timing[label] = round(time.perf_counter() - t, 6)
        return res

    def finish(self, name):
        _write_json(self.out / f"{name}_timing.json", {"fingerprint": self.fp, "seconds": self.timing})


def _sync_bounds(run: Run, kinds):
    system = build_sync(run.cfg)
    if system is None:
        raise ValueError("config has no synchronous section")
    ev = eval_config(run.cfg)
    fns = {"gep12": bound_gep12, "gep1": bound_gep1, "synthesized": bound_total}
    return {th: run.timed(f"bound-{th}", fns[th], system, ev, fingerprint=run.fp) for th in kinds}


def _async_bounds(run: Run):
    ev = eval_config(run.cfg)
    out = []
    for case in iter_async(run.cfg):
        rep = run.timed(f"bound-t2={case.t2}-{case.name}", bound_gepD, case.system, case.dset, case.regions, ev,
                        fingerprint=run.fp)
        rep.extra.update({"t2": case.t2, "d_name": case.name})
        out.append((case, rep))
    if not out:
        raise ValueError("config has no async section")
    return out


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    sys.stdout.write(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    sys.stderr.write(f"valid: fingerprint {fingerprint(cfg)}\n")
    return EXIT_OK


def cmd_bound_sync(args) -> int:
    run = Run(args)
    reps = _sync_bounds(run, args.bound)
    rows = [r for rep in reps.values() for r in _term_rows(rep)]
    _write_json(run.out / "bound_sync.json", {"fingerprint": run.fp, "reports": [r.to_dict() for r in reps.values()]})
    _write_csv(run.out / "bound_sync_terms.csv", TERM_COLUMNS, rows)
    _print_table([{"kind": th, "decoder": r.extra.get("decoder"), "total": f"{r.total:.6g}", "mode": r.mode}
                  for th, r in reps.items()], ["kind", "decoder", "total", "mode"])
    run.finish("bound_sync")
    return EXIT_OK


def cmd_bound_async(args) -> int:
    run = Run(args)
    reps = _async_bounds(run)
    rows = [r for case, rep in reps for r in _term_rows(rep, case.t2, case.name)]
    _write_json(run.out / "bound_async.json", {"fingerprint": run.fp, "reports": [r.to_dict() for _, r in reps]})
    _write_csv(run.out / "bound_async_terms.csv", TERM_COLUMNS, rows)
    _print_table([{"t2": c.t2, "d": c.name, "total": f"{r.total:.6g}", "mode": r.mode} for c, r in reps],
                 ["t2", "d", "total", "mode"])
    run.finish("bound_async")
    return EXIT_OK


def _estimates(run: Run, args):
    plan = trial_plan(run.cfg, trials=args.trials)
    out = []
    decoders = args.decoder
    if "regions" in run.cfg:
        system = build_sync(run.cfg)
        for dec in [d for d in decoders if d in SYNC_DECODERS]:
            if getattr(args, "exact", False):
                est = run.timed(f"exact-{dec}", exhaustive_gep, system, dec, cap=plan.exact_cap, fingerprint=run.fp)
            else:
                est = run.timed(f"simulate-{dec}", simulate_gep, system, dec, plan, fingerprint=run.fp)
            out.append((None, est))
    if "dD" in decoders and "async" in run.cfg:
        for case in iter_async(run.cfg):
            label = f"t2={case.t2}-{case.name}"
            if getattr(args, "exact", False):
                est = run.timed(f"exact-{label}", exhaustive_gep, case.system, "dD", case.dset, case.regions,
                                cap=plan.exact_cap, fingerprint=run.fp)
            else:
                est = run.timed(f"simulate-{label}", simulate_gep, case.system, "dD", plan, case.dset, case.regions,
                                fingerprint=run.fp)
            est.extra.update({"t2": case.t2, "d_name": case.name})
            out.append((case, est))
    if not out:
        raise ValueError("no decoder in the selection applies to this config")
    return out


def _est_key(case):
    return ("", "") if case is None else (case.t2, case.name)


def cmd_simulate(args) -> int:
    run = Run(args)
    ests = _estimates(run, args)
    rows = [r for case, e in ests for r in _est_rows(e, *_est_key(case))]
    _write_json(run.out / "estimates.json", {"fingerprint": run.fp, "estimates": [e.to_dict() for _, e in ests]})
    _write_csv(run.out / "estimates.csv", EST_COLUMNS, rows)
    _print_table([{"decoder": e.decoder, "t2": _est_key(c)[0], "d": _est_key(c)[1], "gep": f"{e.total:.6g}",
                   "stderr": f"{e.stderr:.3g}", "mode": e.mode} for c, e in ests],
                 ["decoder", "t2", "d", "gep", "stderr", "mode"])
    run.finish("simulate")
    return EXIT_OK


def _compare_all(run: Run, args):
    slack = run.cfg["compare"]["sigma_slack"] if args.slack is None else args.slack
    bounds, ests, verdicts = [], [], []
    if "regions" in run.cfg:
        reps = _sync_bounds(run, BOUND_KINDS)
        sync_est = _estimates(run, argparse.Namespace(decoder=list(SYNC_DECODERS), trials=args.trials))
        for (_, est), th in zip(sync_est, BOUND_KINDS):
            bounds.append(reps[th])
            ests.append(est)
            verdicts.append((None, compare(est, reps[th], slack)))
    if "async" in run.cfg:
        reps = _async_bounds(run)
        a_est = _estimates(run, argparse.Namespace(decoder=["dD"], trials=args.trials))
        for (case, rep), (_, est) in zip(reps, a_est):
            bounds.append(rep)
            ests.append(est)
            verdicts.append((case, compare(est, rep, slack)))
    return bounds, ests, verdicts


def cmd_compare(args) -> int:
    run = Run(args)
    bounds, ests, verdicts = _compare_all(run, args)
    vrows = []
    for k, (case, v) in enumerate(verdicts):
        t2, d = _est_key(case)
        vrows.append(dict(v.to_dict(), t2=t2, d=d, bound_index=k, estimate_index=k))
    report = {"fingerprint": run.fp, "config": run.cfg["name"], "bounds": [b.to_dict() for b in bounds],
              "estimates": [e.to_dict() for e in ests], "verdicts": vrows}
    _write_json(run.out / "report.json", report)
    _write_csv(run.out / "verdicts.csv", VERDICT_COLUMNS,
               [dict(r, estimate=repr(r["estimate"]), bound=repr(r["bound"]), margin=repr(r["margin"]),
                     stderr=repr(r["stderr"])) for r in vrows])
    _print_table([{"verdict": r["verdict"], "decoder": r["decoder"], "kind": r["kind"], "t2": r["t2"],
                   "d": r["d"], "estimate": f"{r['estimate']:.6g}", "bound": f"{r['bound']:.6g}"} for r in vrows],
                 ["verdict", "decoder", "kind", "t2", "d", "estimate", "bound"])
    run.finish("compare")
    return EXIT_OK if all(v.passed for _, v in verdicts) else EXIT_FAIL


def _parse_param(text: str):
    if "=" not in text:
        raise ValueError(f"--param {text!r} must look like path=v1,v2,...")
    key, vals = text.split("=", 1)
    return key.strip(), [json.loads(v) for v in vals.split(",") if v.strip()]


def cmd_sweep(args) -> int:
    run = Run(args)
    grid = dict(_parse_param(p) for p in args.param) if args.param else None
    keys = sorted(grid) if grid else sorted(run.cfg.get("sweep", {}).get("grid", {}))
    rows = []
    for k, (point, cfg) in enumerate(sweep_points(run.cfg, grid)):
        base = {"point": k, **{key: json.dumps(point[key]) for key in keys}}
        fp = fingerprint(cfg)
        system = build_sync(cfg)
        if system is not None:
            ev = eval_config(cfg)
            for th, fn in (("gep12", bound_gep12), ("gep1", bound_gep1), ("synthesized", bound_total)):
                rep = run.timed(f"point{k}-bound{th}", fn, system, ev, fingerprint=fp)
                rows.append(dict(base, quantity=f"bound_{th}", decoder=rep.extra["decoder"],
                                 value=repr(rep.total), stderr=repr(rep.stderr)))
            if args.simulate:
                plan = trial_plan(cfg, trials=args.trials)
                for dec in SYNC_DECODERS:
                    est = run.timed(f"point{k}-{dec}", simulate_gep, system, dec, plan, fingerprint=fp)
                    rows.append(dict(base, quantity="gep_estimate", decoder=dec, value=repr(est.total),
                                     stderr=repr(est.stderr)))
        for case in iter_async(cfg):
            rep = run.timed(f"point{k}-t2={case.t2}-{case.name}", bound_gepD, case.system, case.dset, case.regions,
                            eval_config(cfg), fingerprint=fp)
            rows.append(dict(base, quantity=f"bound_async_t2={case.t2}", decoder=f"dD:{case.name}",
                             value=repr(rep.total), stderr=repr(rep.stderr)))
    _write_csv(run.out / "sweep.csv", ["point", *keys, "quantity", "decoder", "value", "stderr"], rows)
    sys.stdout.write(f"{len(rows)} rows written to {run.out / 'sweep.csv'}\n")
    run.finish("sweep")
    return EXIT_OK


def cmd_idc(args) -> int:
    sys.stdout.write(f"{id_collision_bound(args.users, args.pool)!r}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gepbound", description="Random-access receiver error bounds and simulation.")
    p.add_argument("--version", action="version", version=f"gepbound {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(name, help_text):
        s = sub.add_parser(name, help=help_text)
        s.add_argument("config", help="config file or shipped config name")
        s.add_argument("--out", help="output directory (default: the config's output.dir)")
        return s

    s = sub.add_parser("validate", help="check a config and print its normalized form")
    s.add_argument("config")
    s.set_defaults(fn=cmd_validate)
    s = with_config("bound-sync", "synchronous bound reports")
    s.add_argument("--bound", nargs="+", choices=BOUND_KINDS, default=list(BOUND_KINDS))
    s.set_defaults(fn=cmd_bound_sync)
    s = with_config("bound-async", "asynchronous bound report per offset and D set")
    s.set_defaults(fn=cmd_bound_async)
    s = with_config("simulate", "empirical error performance")
    s.add_argument("--decoder", nargs="+", choices=(*SYNC_DECODERS, "dD"), default=[*SYNC_DECODERS, "dD"])
    s.add_argument("--trials", type=int, help="trials per coding vector (overrides the plan)")
    s.add_argument("--exact", action="store_true", help="exhaustive enumeration instead of Monte Carlo")
    s.set_defaults(fn=cmd_simulate)
    s = with_config("compare", "bounds vs simulation with PASS/FAIL verdicts")
    s.add_argument("--trials", type=int)
    s.add_argument("--slack", type=float, help="allowed standard errors above the bound")
    s.set_defaults(fn=cmd_compare)
    s = with_config("sweep", "bounds (and optionally estimates) over a parameter grid")
    s.add_argument("--param", action="append", help="dotted path and values, e.g. channel.flip=0,0.05")
    s.add_argument("--simulate", action="store_true")
    s.add_argument("--trials", type=int)
    s.set_defaults(fn=cmd_sweep)
    s = sub.add_parser("idc", help="union bound on ID collisions")
    s.add_argument("--users", type=int, required=True)
    s.add_argument("--pool", type=int, required=True)
    s.set_defaults(fn=cmd_idc)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # reported as a machine-readable document
        doc = {"error": {"type": type(exc).__name__, "message": str(exc), "command": args.command}}
        sys.stderr.write(json.dumps(doc, sort_keys=True) + "\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
