"""Replicated runs across system sizes, with per-size summaries and CSV output."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .fluid import RegimeError, compute_constants
from .network import NetworkSpec, scale_system
from .paths import classify
from .simulator import derive_seed, run
from .static import solve_static

SCHEMA_SWEEP = "throughput-subopt/sweep/v1"
SCHEMA_SUMMARY = "throughput-subopt/sweep-summary/v1"
SCHEMA_PLOT = "throughput-subopt/plot-busy/v1"

ROW_FIELDS = ["n", "rep", "seed", "busy_fraction", "scaled_sup_dev", "K", "tau_fired", "sigma_fired",
              "events", "scaled_sup_w", "error"]


class NotSuboptimal(ValueError):
    """The network is throughput optimal, so there is no witness path to drive the policy."""


@dataclass(frozen=True)
class SweepJob:
    spec: NetworkSpec
    n: int
    rep: int
    seed: int
    T: float
    rho: float
    eps_scale: float
    arrivals: str


def prepare(spec: NetworkSpec):
    alloc = solve_static(spec)
    verdict = classify(alloc, spec)
    if not verdict.suboptimal:
        raise NotSuboptimal(
            f"network is throughput optimal; no witness path (M_max = {verdict.m_max:.3g})"
        )
    constants = compute_constants(alloc, verdict.witness_path, spec)
    return alloc, verdict, constants


_CACHE: dict = {}


def _prepared(spec: NetworkSpec):
    key = (spec.lam.tobytes(), spec.nu.tobytes(), spec.mu.tobytes())
    if key not in _CACHE:
        _CACHE[key] = prepare(spec)
    return _CACHE[key]


def run_job(job: SweepJob) -> dict:
    alloc, verdict, constants = _prepared(job.spec)
    row = {"n": job.n, "rep": job.rep, "seed": job.seed}
    try:
        sys = scale_system(job.spec, alloc.x_star, job.n)
        m = run(sys, alloc, constants, verdict.witness_path, job.T, job.seed, arrivals=job.arrivals,
                eps_scale=job.eps_scale, check=False, record_errors=True)
    except RegimeError as exc:
        row.update({k: math.nan for k in ROW_FIELDS[3:]})
        row.update(K=0, tau_fired=False, sigma_fired=False, events=0, error=str(exc))
        return row
    row.update(
        busy_fraction=m.busy_fraction,
        scaled_sup_dev=job.n ** -job.rho * m.sup_x_dev,
        K=m.K,
        tau_fired=m.tau_tilde_fired,
        sigma_fired=m.sigma_fired,
        events=m.event_count,
        scaled_sup_w=math.sqrt(job.n) * m.sup_w,
        error=m.error or "",
    )
    return row


def sweep(spec: NetworkSpec, n_list, reps: int, T: float, base_seed: int, rho: float = 0.6,
          eps_scale: float = 1.0, arrivals: str = "exponential", workers: int = 1) -> list[dict]:
    """One row per (n, rep); seeds come from ``derive_seed(base_seed, n, rep)``."""
    prepare(spec)
    jobs = [SweepJob(spec, int(n), r, derive_seed(base_seed, n, r), T, rho, eps_scale, arrivals)
            for n in n_list for r in range(reps)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run_job, jobs))
    return [run_job(j) for j in jobs]


def _quantiles(values):
    if not values:
        return math.nan, math.nan, math.nan
    q1, med, q3 = np.percentile(values, [25, 50, 75])
    return float(q1), float(med), float(q3)


def summarize(rows: list[dict]) -> list[dict]:
    out = []
    for n in sorted({r["n"] for r in rows}):
        sub = [r for r in rows if r["n"] == n]
        ok = [r for r in sub if not r["error"]]
        bq1, bmed, bq3 = _quantiles([r["busy_fraction"] for r in ok])
        dq1, dmed, dq3 = _quantiles([r["scaled_sup_dev"] for r in ok])
        fired = [r["tau_fired"] or r["sigma_fired"] for r in ok]
        out.append({
            "n": n,
            "runs": len(sub),
            "errors": len(sub) - len(ok),
            "busy_q1": bq1, "busy_median": bmed, "busy_q3": bq3,
            "dev_q1": dq1, "dev_median": dmed, "dev_q3": dq3,
            "fired_fraction": float(np.mean(fired)) if fired else math.nan,
            "w_p95": float(np.percentile([r["scaled_sup_w"] for r in ok], 95)) if ok else math.nan,
        })
    return out


def _write(path, schema: str, fields: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# schema: {schema}\n")
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def write_rows(path, rows: list[dict]) -> None:
    _write(path, SCHEMA_SWEEP, ROW_FIELDS, rows)


def write_summary(path, summary: list[dict]) -> None:
    _write(path, SCHEMA_SUMMARY, list(summary[0]) if summary else ["n"], summary)


def write_plot_data(path, summary: list[dict]) -> None:
    _write(path, SCHEMA_PLOT, ["n", "busy_median", "busy_q1", "busy_q3"], summary)
