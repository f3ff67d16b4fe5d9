"""Cluster cost model and discrete-event timelines for each algorithm."""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .collective import Clock, CollectiveEngine

ALGORITHMS = ("co2", "slowmo", "local_sgd", "overlap_local_sgd", "sync_sgd")


@dataclass(frozen=True)
class ClusterSpec:
    G: int = 8
    gpus_per_node: int = 8
    t_comp: float = 0.109
    t_outer: float = 0.0
    param_bytes: float = 4.0e9
    inter_bw: float = 1.0e10
    latency: float = 0.0
    # when set, allreduce_time returns this constant instead of the ring model
    measured_override: float = None

    def __post_init__(self):
        if self.G < 1 or self.gpus_per_node < 1:
            raise ValueError("G and gpus_per_node must be positive")
        if self.G > self.gpus_per_node and self.G % self.gpus_per_node:
            raise ValueError(f"G={self.G} does not fill whole nodes of {self.gpus_per_node}")
        if not (self.t_comp > 0 and self.param_bytes > 0 and self.inter_bw > 0):
            raise ValueError("t_comp, param_bytes and inter_bw must be positive")
        if self.t_outer < 0 or self.latency < 0:
            raise ValueError("t_outer and latency must be non-negative")
        if self.measured_override is not None and self.measured_override < 0:
            raise ValueError("measured_override must be non-negative")

    @property
    def nodes(self):
        return max(1, self.G // self.gpus_per_node)


def allreduce_time(spec, nbytes=None):
    """Ring all-reduce: 2(G-1) hops of latency plus 2(G-1)/G of the payload."""
    if spec.G < 2:
        return 0.0
    if spec.measured_override is not None:
        return float(spec.measured_override)
    nbytes = spec.param_bytes if nbytes is None else nbytes
    G = spec.G
    return 2 * (G - 1) * spec.latency + 2 * ((G - 1) / G) * nbytes / spec.inter_bw


def overlap_ratio(tau, t_comp, t_comm):
    """Fraction of one all-reduce hidden behind tau local steps."""
    if tau <= 0 or t_comp <= 0 or t_comm <= 0:
        raise ValueError("tau, t_comp and t_comm must be positive")
    return min(1.0, tau * t_comp / t_comm)


def scalability_ratio(thpt_small, thpt_large, G_small, G_large):
    """Measured speedup divided by ideal speedup; 1.0 is linear scaling."""
    if min(thpt_small, thpt_large, G_small, G_large) <= 0:
        raise ValueError("throughputs and worker counts must be positive")
    return (thpt_large / thpt_small) / (G_large / G_small)


@dataclass
class TimelineReport:
    wall_time: float
    total_stall: float
    compute_time: float
    overlap_ratio_achieved: float
    throughput: float
    rounds: list = field(default_factory=list, repr=False)
    events: list = field(default_factory=list, repr=False)

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def write_events(self, path):
        with open(path, "w") as fh:
            for e in self.events:
                fh.write(json.dumps(e) + "\n")


class RoundClock:
    """Advances a shared clock through one algorithm's per-round schedule.

    The training simulator and ``simulate_timeline`` both drive time through
    this class, so a training run and a pure timing run of the same
    configuration produce the same timeline.
    """

    def __init__(self, kind, spec, tau, threaded=False):
        if kind not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {kind!r}")
        self.kind = kind
        self.spec = spec
        self.tau = tau
        self.clock = Clock()
        self.engine = CollectiveEngine(
            spec.G, lambda nbytes: allreduce_time(spec, nbytes),
            payload_bytes=spec.param_bytes, threaded=threaded,
            max_in_flight=2 if kind == "co2" else 1)
        self.compute_time = 0.0
        self.rounds = []
        self._round_start = 0.0
        self._stall_at_start = 0.0

    def compute(self, steps=None):
        dt = (self.tau if steps is None else steps) * self.spec.t_comp
        self.clock.advance(dt)
        self.compute_time += dt

    def outer(self):
        self.clock.advance(self.spec.t_outer)
        self.compute_time += self.spec.t_outer

    def begin_round(self):
        self._round_start = self.clock.now
        self._stall_at_start = self.engine.total_stall

    def end_round(self, t):
        rec = {"round": t, "t_start": self._round_start, "t_end": self.clock.now,
               "stall": self.engine.total_stall - self._stall_at_start}
        self.rounds.append(rec)
        return rec

    def report(self, rounds, batch_size=1):
        wall = self.clock.now
        n_reduce = sum(1 for e in self.engine.events if e["event"] == "complete")
        t_comm = allreduce_time(self.spec)
        exposed = self.engine.total_stall
        if n_reduce and t_comm > 0:
            achieved = min(1.0, max(0.0, 1.0 - exposed / (n_reduce * t_comm)))
        else:
            achieved = 1.0
        samples = rounds * self.tau * self.spec.G * batch_size
        return TimelineReport(wall, exposed, self.compute_time, achieved,
                              samples / wall if wall > 0 else float("inf"),
                              list(self.rounds), list(self.engine.events))


def simulate_timeline(kind, spec, tau, rounds, batch_size=1):
    """Pure timing run of ``rounds`` outer steps with dummy payloads."""
    if tau < 1:
        raise ValueError("tau must be >= 1")
    if kind == "co2" and rounds < 2:
        raise ValueError("CO2 timelines need at least 2 rounds")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    rc = RoundClock(kind, spec, tau)
    dummy = [np.zeros(1)] * spec.G
    pending = None
    for t in range(rounds):
        rc.begin_round()
        if kind == "sync_sgd":
            for _ in range(tau):
                rc.compute(1)
                h = rc.engine.launch_all_reduce(dummy, rc.clock, slot="grads")
                rc.engine.wait(h, rc.clock)
        elif kind in ("local_sgd", "slowmo"):
            rc.compute()
            h = rc.engine.launch_all_reduce(dummy, rc.clock)
            rc.engine.wait(h, rc.clock)
            rc.outer()
        elif kind == "overlap_local_sgd":
            rc.compute()
            if pending is not None:
                rc.engine.wait(pending, rc.clock)
                rc.outer()
            pending = rc.engine.launch_all_reduce(dummy, rc.clock)
            if rc.engine.is_completed(pending, rc.clock):
                rc.engine.take(pending, rc.clock)
                rc.outer()
                pending = None
        else:
            rc.compute()
            h = rc.engine.launch_all_reduce(dummy, rc.clock)
            if pending is not None:
                if not rc.engine.is_completed(pending, rc.clock):
                    rc.engine.wait(pending, rc.clock)
                else:
                    rc.engine.take(pending, rc.clock)
                rc.outer()
            pending = h
        rc.end_round(t)
    return rc.report(rounds, batch_size)


def steady_state_round_time(kind, spec, tau):
    """Closed-form per-round wall time once the pipeline is full."""
    c = allreduce_time(spec)
    work = tau * spec.t_comp
    if kind == "co2":
        return max(work + spec.t_outer, c)
    if kind in ("local_sgd", "slowmo"):
        return work + c + spec.t_outer
    if kind == "overlap_local_sgd":
        return work + max(0.0, c - work) + spec.t_outer
    if kind == "sync_sgd":
        return tau * (spec.t_comp + c)
    raise ValueError(f"unknown algorithm {kind!r}")
