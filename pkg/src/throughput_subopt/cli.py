"""Command-line front end: analyze | fluid | simulate | sweep | gen."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .fluid import (
    RegimeError,
    build_psi_tilde,
    integrate_trajectory,
    make_perturbation,
    verify_theorem3,
)
from .network import SpecError, builtin_example, dump_spec, load_spec, random_critical_network, scale_system
from .paths import classify
from .simulator import ARRIVAL_KINDS, run
from .static import AssumptionError, solve_static
from .sweep import NotSuboptimal, prepare, summarize, sweep, write_plot_data, write_rows, write_summary

EXIT_OPTIMAL = 0
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ASSUMPTION = 2
EXIT_REGIME = 3
EXIT_SUBOPTIMAL = 10

OUT_ENV = "THROUGHPUT_SUBOPT_OUT"
SCHEMA_ANALYSIS = "throughput-subopt/analysis/v1"
SCHEMA_BOUNDS = "throughput-subopt/fluid-bounds/v1"
SCHEMA_RUN = "throughput-subopt/run/v1"
SCHEMA_EVENTS = "throughput-subopt/events/v1"


class UsageError(Exception):
    pass


def _positive(name, value, integer=False):
    if value is None:
        return value
    if integer and int(value) != value:
        raise UsageError(f"--{name} must be an integer")
    if not value > 0:
        raise UsageError(f"--{name} must be positive, got {value}")
    return int(value) if integer else float(value)


def _n_list(value):
    if isinstance(value, (list, tuple)):
        items = list(value)
    elif isinstance(value, int):
        items = [value]
    else:
        items = [v for v in str(value).split(",") if v.strip()]
    try:
        ns = [int(v) for v in items]
    except ValueError:
        raise UsageError(f"--n expects comma-separated integers, got {value!r}") from None
    for n in ns:
        _positive("n", n, integer=True)
    return ns


def _network(args):
    if args.builtin is not None and args.spec_file is not None:
        raise UsageError("give either --builtin or --spec-file, not both")
    if args.spec_file is not None:
        path = Path(args.spec_file)
        if not path.is_file():
            raise UsageError(f"spec file not found: {path}")
        return load_spec(path)
    if args.builtin is None:
        raise UsageError("a network is required: --builtin ID or --spec-file PATH")
    return builtin_example(args.builtin)


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, schema: str, payload: dict) -> None:
    doc = {"schema": schema, **payload}
    path.write_text(json.dumps(doc, indent=2, default=_json_default) + "\n", encoding="utf-8")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    raise TypeError(f"not serializable: {type(obj)}")


def _fmt_matrix(m) -> str:
    return "\n".join("  " + " ".join(f"{v:9.6g}" for v in row) for row in np.asarray(m))


# ---------------------------------------------------------------- commands

def cmd_analyze(args) -> int:
    spec = _network(args)
    alloc = solve_static(spec)
    verdict = classify(alloc, spec)
    print("psi*:")
    print(_fmt_matrix(alloc.psi_star))
    print("x*: " + " ".join(f"{v:.6g}" for v in alloc.x_star))
    print("basic tree: " + ", ".join(f"({i + 1},{j + 1})" for i, j in alloc.basic_edges))
    for p in verdict.all_paths:
        d = p.to_dict()
        print(f"path classes={d['classes']} pools={d['pools']} {d['kind']:6s} weight={p.weight:.6g}")
    print(f"M_max = {verdict.m_max:.6g}")
    print(f"verdict: {verdict.verdict}")
    if verdict.witness_path is not None:
        print(f"witness weight: {verdict.witness_path.weight:.6g} ({verdict.witness_path.kind})")
    out = _out_dir(args)
    _write_json(out / "analysis.json", SCHEMA_ANALYSIS, {
        "network": spec.to_dict(),
        "rho_star": alloc.rho_star,
        "psi_star": alloc.psi_star,
        "x_star": alloc.x_star,
        "basic_edges": [[i + 1, j + 1] for i, j in alloc.basic_edges],
        **verdict.to_dict(),
    })
    return EXIT_SUBOPTIMAL if verdict.suboptimal else EXIT_OPTIMAL


def cmd_fluid(args) -> int:
    spec = _network(args)
    eps = _positive("eps", args.eps)
    sigma = _positive("sigma", args.sigma)
    step = _positive("step", args.step)
    alloc, verdict, constants = prepare(spec)
    witness = verdict.witness_path
    psi_t = build_psi_tilde(alloc, constants, witness, nu=spec.nu)
    pert = make_perturbation(args.pert, spec.n_classes, spec.n_pools, eps, sigma, seed=args.seed)
    traj = integrate_trajectory(spec, alloc, constants, psi_t, pert, step=step)
    report = verify_theorem3(traj, constants, eps)
    out = _out_dir(args)
    traj.write_csv(out / "trajectory.csv")
    _write_json(out / "fluid_bounds.json", SCHEMA_BOUNDS, {
        "constants": constants.to_dict(), "perturbation": args.pert, **report,
    })
    if not args.no_plot:
        from .plotting import plot_trajectory
        plot_trajectory(traj, alloc.x_star, out / "trajectory.png")
    for name, c in report["checks"].items():
        print(f"{name:14s} {'PASS' if c['pass'] else 'FAIL'}  value={c['value']}  bound={c['bound']}")
    print(f"tau = {traj.tau:.6g} ({'tau~ fired' if traj.tau_tilde_fired else 'horizon'}), K = {traj.K}")
    return EXIT_OK


def _metrics_row(m) -> dict:
    return {
        "n": m.n, "seed": m.seed, "T": m.T, "busy_time": m.busy_time, "busy_fraction": m.busy_fraction,
        "sup_x_dev": m.sup_x_dev, "K": m.K, "tau_n": "" if m.tau_n is None else m.tau_n,
        "tau_fired": m.tau_tilde_fired, "sigma_fired": m.sigma_fired, "events": m.event_count,
        "sup_w": m.sup_w, "drain_time": m.drain_time, "hold_time": m.hold_time, "error": m.error or "",
    }


def cmd_simulate(args) -> int:
    spec = _network(args)
    ns = _n_list(args.n)
    if len(ns) != 1:
        raise UsageError("simulate takes a single --n")
    T = float(args.T)
    if T < 0:
        raise UsageError("--T must be nonnegative")
    alloc, verdict, constants = prepare(spec)
    sys_n = scale_system(spec, alloc.x_star, ns[0])
    log = [] if args.log else None
    m = run(sys_n, alloc, constants, verdict.witness_path, T, int(args.seed), arrivals=args.arrivals,
            eps_scale=_positive("eps-scale", args.eps_scale), log=log, record_errors=True)
    out = _out_dir(args)
    row = _metrics_row(m)
    with open(out / "run.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# schema: {SCHEMA_RUN}\n")
        w = csv.DictWriter(fh, fieldnames=list(row))
        w.writeheader()
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    if log is not None:
        with open(out / "events.csv", "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# schema: {SCHEMA_EVENTS}\n")
            w = csv.writer(fh)
            w.writerow(["index", "t", "event", "phase", "eY", "x_dev"])
            for r in log:
                if r.kind == "arrival":
                    label = f"arrival-{r.cls + 1}"
                elif r.kind == "departure":
                    label = f"departure-{r.cls + 1}{r.pool + 1}"
                else:
                    label = r.kind
                w.writerow([r.index, repr(r.t), label, r.phase, r.eY, r.x_dev])
    print(f"busy fraction {m.busy_fraction:.4f}, sup|X-X0| {m.sup_x_dev:g}, K {m.K}, events {m.event_count}")
    if m.error:
        print(m.error, file=sys.stderr)
        return EXIT_REGIME
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = _network(args)
    ns = _n_list(args.n)
    reps = _positive("reps", args.reps, integer=True)
    T = _positive("T", args.T)
    rows = sweep(spec, ns, reps, T, int(args.seed), rho=_positive("rho", args.rho),
                 eps_scale=_positive("eps-scale", args.eps_scale), arrivals=args.arrivals,
                 workers=_positive("workers", args.workers, integer=True))
    summary = summarize(rows)
    out = _out_dir(args)
    write_rows(out / "sweep.csv", rows)
    write_summary(out / "sweep_summary.csv", summary)
    write_plot_data(out / "plot_busy.csv", summary)
    if not args.no_plot:
        from .plotting import plot_sweep
        plot_sweep(summary, out / "sweep.png")
    print(f"{'n':>7} {'runs':>5} {'errors':>6} {'busy median':>12} {'busy IQR':>20} {'dev median':>11} "
          f"{'fired':>6} {'W p95':>8}")
    for s in summary:
        iqr = f"[{s['busy_q1']:.3g}, {s['busy_q3']:.3g}]"
        print(f"{s['n']:7d} {s['runs']:5d} {s['errors']:6d} {s['busy_median']:12.4g} {iqr:>20} "
              f"{s['dev_median']:11.4g} {s['fired_fraction']:6.3g} {s['w_p95']:8.4g}")
    return EXIT_OK


def cmd_gen(args) -> int:
    I = _positive("classes", args.classes, integer=True)
    J = _positive("pools", args.pools, integer=True)
    if not 0 <= args.p_offtree <= 1:
        raise UsageError("--p-offtree must lie in [0, 1]")
    spec = random_critical_network(I, J, seed=args.seed, p_offtree=args.p_offtree)
    text = dump_spec(spec)
    if args.output:
        Path(args.output).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return EXIT_OK


# ---------------------------------------------------------------- parsing

def _network_args(p):
    p.add_argument("--builtin", type=int, help="built-in example network 1, 2 or 3")
    p.add_argument("--spec-file", help="network JSON file (keys classes, pools, lambda, nu, mu)")
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or the current directory)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="throughput-subopt", description=__doc__)
    parser.add_argument("--config", help="JSON file with default values for the command's options")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="static allocation, simple paths and the optimality verdict")
    _network_args(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("fluid", help="integrate the drain/hold fluid trajectory and check its bounds")
    _network_args(p)
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--step", type=float, default=None, help="Euler step (default min(1e-3, eps/10))")
    p.add_argument("--pert", choices=["zero", "sinusoid", "random-walk"], default="zero")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_fluid)

    for name, func in (("simulate", cmd_simulate), ("sweep", cmd_sweep)):
        p = sub.add_parser(name, help=f"{name} the n-th stochastic system under the drain/hold policy")
        _network_args(p)
        p.add_argument("--n", default="100" if name == "simulate" else "100,400,1600")
        p.add_argument("--T", type=float, default=10.0)
        p.add_argument("--seed", type=int, default=1)
        p.add_argument("--arrivals", choices=ARRIVAL_KINDS, default="exponential")
        p.add_argument("--eps-scale", type=float, default=1.0,
                       help="prefactor on eps_n = log(n)/sqrt(n); 1 is the faithful choice")
        if name == "simulate":
            p.add_argument("--log", action="store_true", help="also write the event log")
        else:
            p.add_argument("--reps", type=int, default=20)
            p.add_argument("--rho", type=float, default=0.6)
            p.add_argument("--workers", type=int, default=1)
            p.add_argument("--no-plot", action="store_true")
        p.set_defaults(func=func)

    p = sub.add_parser("gen", help="draw a random critically loaded network")
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--pools", type=int, default=3)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--p-offtree", type=float, default=0.5)
    p.add_argument("--output")
    p.set_defaults(func=cmd_gen)
    return parser


def _apply_config(parser, argv):
    """Config values become defaults of the chosen subcommand; explicit flags still win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    path = Path(known.config)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    try:
        cfg = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"config is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for sp in subparsers.choices.values():
        dests = {a.dest for a in sp._actions}
        sp.set_defaults(**{k: v for k, v in cfg.items() if k in dests})
    all_dests = {a.dest for sp in subparsers.choices.values() for a in sp._actions}
    unknown = sorted(set(cfg) - all_dests - {"command"})
    if unknown:
        raise UsageError(f"unknown config keys: {unknown}")


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:  # argparse usage errors
        return EXIT_USAGE if exc.code not in (0, None) else 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SpecError as exc:
        print(f"invalid network: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AssumptionError as exc:
        print(f"{exc.assumption} failed: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except NotSuboptimal as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RegimeError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_REGIME


if __name__ == "__main__":
    sys.exit(main())
