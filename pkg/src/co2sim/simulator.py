"""Drives a full training run: inner loops, outer rounds, clock and metrics."""

from dataclasses import dataclass, field

import numpy as np

from . import algorithms as alg
from .inner import WorkerState, run_inner_loop
from .params import NonFiniteError, average, l2_norm
from .problems import full_gradient, loss, shard, worker_rng
from .timing import ALGORITHMS, ClusterSpec, RoundClock


@dataclass
class MetricsRecord:
    round: int
    sim_time: float
    train_loss: float
    grad_norm_sq: float
    divergence: float
    stall: float
    throughput: float


@dataclass(eq=False)
class RunResult:
    kind: str
    initial_loss: float
    initial_grad_norm_sq: float
    metrics: list
    timeline: object
    final_params: np.ndarray
    worker_params: list
    # per-round worker-averaged round starts x_{t,0}, t = 0..T
    x_starts: list = field(repr=False, default_factory=list)
    # per-round worker-averaged sum over k of the inner gradients
    grad_sums: list = field(repr=False, default_factory=list)
    # per-round list of per-worker staleness gaps (CO2 only)
    gaps: list = field(repr=False, default_factory=list)
    # per-round list of per-worker outer displacements x_{t+1,0} - x_{t,0}
    outer_steps: list = field(repr=False, default_factory=list)
    # per-round per-worker parameters after the round
    worker_history: list = field(repr=False, default_factory=list)
    engine: object = field(repr=False, default=None)


class RoundFailure(RuntimeError):
    """Wraps a numeric failure with the round it happened in."""

    def __init__(self, round_index, cause):
        super().__init__(f"round {round_index}: {cause}")
        self.round_index = round_index
        self.cause = cause


def make_workers(problem, shards, x0, seed, batch_size, inner_momentum=0.0):
    return [WorkerState(s.worker_index, np.array(x0, dtype=np.float64), s,
                        worker_rng(seed, s.worker_index), batch_size,
                        inner_momentum=inner_momentum)
            for s in shards]


def simulate(kind, problem, hyper, schedule, rounds, *, G, batch_size, seed,
             x0=None, spec=None, shards=None, threaded=False, record=False,
             inner_momentum=0.0, heterogeneity=False):
    """Train ``problem`` with algorithm ``kind`` for ``rounds`` outer steps.

    The math never reads the clock: two runs that differ only in ``spec``
    produce identical parameter trajectories.
    """
    if kind not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {kind!r}")
    spec = spec or ClusterSpec(G=G, gpus_per_node=G, measured_override=0.0)
    if spec.G != G:
        raise ValueError(f"cluster spec has G={spec.G}, run asked for G={G}")
    if shards is None:
        shards = shard(problem, G, seed, heterogeneity=heterogeneity)
    if x0 is None:
        x0 = np.zeros(problem.dimension)
    workers = make_workers(problem, shards, x0, seed, batch_size, inner_momentum)
    states = [alg.OuterState.initial(problem.dimension) for _ in workers]
    rc = RoundClock(kind, spec, hyper.tau, threaded=threaded)
    g0 = full_gradient(problem, x0)
    result = RunResult(kind, loss(problem, x0), float(g0 @ g0), [], None, None, None,
                       engine=rc.engine)
    if record:
        result.x_starts.append(average([w.params for w in workers]))

    with np.errstate(over="ignore", invalid="ignore"):
        try:
            for t in range(rounds):
                rc.begin_round()
                starts = [w.params.copy() for w in workers] if record else None
                try:
                    _one_round(kind, workers, states, problem, schedule, rc, hyper,
                               t, result, record)
                except (NonFiniteError, FloatingPointError, alg.ProtocolError) as exc:
                    raise RoundFailure(t, exc) from exc
                rec = rc.end_round(t)
                x_bar = average([w.params for w in workers])
                if record:
                    result.x_starts.append(x_bar)
                    result.outer_steps.append([w.params - s for w, s in zip(workers, starts)])
                    result.worker_history.append([w.params.copy() for w in workers])
                g = full_gradient(problem, x_bar)
                f, gn = loss(problem, x_bar), float(g @ g)
                if not (np.isfinite(f) and np.isfinite(gn)):
                    raise RoundFailure(t, NonFiniteError("loss or gradient norm overflowed"))
                div = max(l2_norm(w.params - x_bar) for w in workers)
                done = (t + 1) * hyper.tau * G * batch_size
                result.metrics.append(MetricsRecord(
                    t, rc.clock.now, f, gn, div,
                    rec["stall"], done / rc.clock.now if rc.clock.now > 0 else 0.0))
        finally:
            rc.engine.close()

    result.timeline = rc.report(rounds, batch_size)
    result.final_params = average([w.params for w in workers])
    result.worker_params = [w.params.copy() for w in workers]
    return result


def _one_round(kind, workers, states, problem, schedule, rc, hyper, t, result, record):
    if kind == "sync_sgd":
        _, grads = alg.sync_sgd_round(workers, states, problem, schedule, rc, hyper)
        if record:
            per_worker = [sum(step[i] for step in grads) for i in range(len(workers))]
            result.grad_sums.append(average(per_worker))
        return
    traces = [run_inner_loop(w, problem, schedule, hyper.tau, t) for w in workers]
    rc.compute()
    if record:
        result.grad_sums.append(average([_sum_grads(tr) for tr in traces]))
    if kind == "co2":
        gaps = alg.co2_round(workers, states, traces, rc, hyper)
        result.gaps.append(gaps)
    elif kind == "slowmo":
        alg.slowmo_round(workers, states, traces, rc, hyper)
    elif kind == "local_sgd":
        alg.local_sgd_round(workers, states, traces, rc, hyper)
    else:
        alg.overlap_local_sgd_round(workers, states, traces, rc, hyper)


def _sum_grads(trace):
    total = trace.grads[0].copy()
    for g in trace.grads[1:]:
        total += g
    return total
