"""Experiment runner: repeated-seed runs, the penalty/clip ablation and
throughput scaling sweeps. Every output is a deterministic function of the
configuration."""

import csv
import io
import json
import os
from dataclasses import asdict, dataclass, replace

import numpy as np

from .problems import initial_point, make_logistic, make_mlp, make_quadratic
from .simulator import RoundFailure, simulate
from .timing import overlap_ratio, allreduce_time, scalability_ratio, simulate_timeline

CSV_VERSION = "co2sim-metrics-v1"
METRIC_COLUMNS = ("seed", "round", "sim_time", "train_loss", "grad_norm_sq",
                  "divergence", "stall", "throughput")


def build_problem(cfg):
    p = cfg.problem
    if p.kind == "quadratic":
        return make_quadratic(p.n, p.condition_number, p.samples, p.seed, noise=p.noise)
    if p.kind == "logistic":
        return make_logistic(p.n, p.samples, p.seed, flip=p.flip)
    return make_mlp((p.n, p.hidden), p.samples, p.seed, flip=p.flip)


def run_single(cfg, seed, problem=None, record=False):
    problem = problem or build_problem(cfg)
    x0 = initial_point(problem, seed=cfg.problem.seed)
    return simulate(cfg.algorithm, problem, cfg.hyper, cfg.inner_schedule(), cfg.rounds,
                    G=cfg.G, batch_size=cfg.batch_size, seed=seed, x0=x0,
                    spec=cfg.cluster_spec(), threaded=cfg.threaded, record=record,
                    heterogeneity=cfg.problem.heterogeneity)


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _mean_std(values):
    a = np.asarray(values, dtype=np.float64)
    return {"mean": float(a.mean()), "std": float(a.std())}


@dataclass
class ExperimentResult:
    runs: dict
    summary: dict
    metrics_csv: str


def metrics_csv(runs):
    buf = io.StringIO()
    buf.write(f"# {CSV_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for seed, r in runs.items():
        for m in r.metrics:
            row = asdict(m)
            w.writerow([seed] + [_fmt(row[c]) for c in METRIC_COLUMNS[1:]])
    return buf.getvalue()


def run_experiment(cfg, out_dir=None):
    """Run every seed of ``cfg`` and optionally write metrics, events, summary.

    Numeric failures propagate as ``RoundFailure`` carrying the round index.
    """
    problem = build_problem(cfg)
    runs = {seed: run_single(cfg, seed, problem) for seed in cfg.seeds}
    first = runs[cfg.seeds[0]]
    summary = {
        "algorithm": cfg.algorithm,
        "seeds": cfg.seeds,
        "final_loss": _mean_std([r.metrics[-1].train_loss for r in runs.values()]),
        "final_grad_norm_sq": _mean_std([r.metrics[-1].grad_norm_sq for r in runs.values()]),
        "initial_grad_norm_sq": first.initial_grad_norm_sq,
        "throughput": first.timeline.throughput,
        "timeline": {k: v for k, v in asdict(first.timeline).items()
                     if k not in ("rounds", "events")},
    }
    text = metrics_csv(runs)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "metrics.csv"), "w", newline="") as fh:
            fh.write(text)
        first.timeline.write_events(os.path.join(out_dir, "events.jsonl"))
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return ExperimentResult(runs, summary, text)


ABLATION_VARIANTS = {
    "full": {},
    "no_penalty": {"penalty_enabled": False},
    "no_clip": {"clip_enabled": False},
}
ABLATION_COLUMNS = ("variant", "seed", "final_loss", "final_grad_norm_sq", "diverged",
                    "failed_round")


def run_ablation(cfg, out_dir=None, divergence_factor=1e6):
    """CO2 with and without the staleness penalty and the momentum clip.

    All variants share the problem and the seeds, so each worker draws the
    same batches until the trajectories separate. A run that overflows, or
    whose loss exceeds ``divergence_factor`` times its starting loss, is
    flagged as diverged.
    """
    if cfg.algorithm != "co2":
        raise ValueError("ablation needs algorithm = co2")
    problem = build_problem(cfg)
    rows = []
    for name, change in ABLATION_VARIANTS.items():
        vcfg = replace(cfg, hyper=replace(cfg.hyper, **change))
        for seed in cfg.seeds:
            try:
                r = run_single(vcfg, seed, problem)
            except RoundFailure as exc:
                rows.append({"variant": name, "seed": seed, "final_loss": float("inf"),
                             "final_grad_norm_sq": float("inf"), "diverged": True,
                             "failed_round": exc.round_index})
                continue
            last = r.metrics[-1]
            blown = (not np.isfinite(last.train_loss)
                     or last.train_loss > divergence_factor * r.initial_loss)
            rows.append({"variant": name, "seed": seed, "final_loss": last.train_loss,
                         "final_grad_norm_sq": last.grad_norm_sq, "diverged": bool(blown),
                         "failed_round": -1})
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        _write_rows(os.path.join(out_dir, "ablation.csv"), ABLATION_COLUMNS, rows)
    return rows


SCALING_COLUMNS = ("algorithm", "G", "tau", "t_comm", "wall_time", "throughput",
                   "overlap_ratio", "total_stall", "scalability_ratio")


def run_scaling_sweep(cfg, G_list, tau_list, algorithms=None, out_dir=None):
    """Throughput per (algorithm, G, tau) and its scaling from the smallest G."""
    if list(G_list) != sorted(G_list) or not G_list:
        raise ValueError("G_list must be non-empty and sorted ascending")
    algorithms = algorithms or [cfg.algorithm, "sync_sgd"]
    algorithms = list(dict.fromkeys(algorithms))
    rows = []
    for kind in algorithms:
        # sync SGD has no inner loop, so its rows are the same for every tau
        taus = [1] if kind == "sync_sgd" else tau_list
        for tau in taus:
            base = None
            for G in G_list:
                spec = cfg.cluster_spec(G)
                rounds = max(cfg.rounds, 2)
                rep = simulate_timeline(kind, spec, tau, rounds, cfg.batch_size)
                base = base or (G, rep.throughput)
                t_comm = allreduce_time(spec)
                rows.append({
                    "algorithm": kind, "G": G, "tau": tau, "t_comm": t_comm,
                    "wall_time": rep.wall_time, "throughput": rep.throughput,
                    "overlap_ratio": (overlap_ratio(tau, spec.t_comp, t_comm)
                                      if t_comm > 0 else 1.0),
                    "total_stall": rep.total_stall,
                    "scalability_ratio": scalability_ratio(base[1], rep.throughput, base[0], G),
                })
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        _write_rows(os.path.join(out_dir, "scaling.csv"), SCALING_COLUMNS, rows)
    return rows


def _write_rows(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])
