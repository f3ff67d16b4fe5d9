"""Simulator for local-update data-parallel training with one-step-stale
asynchronous parameter all-reduce (CO2) and its baselines."""

from .algorithms import (Co2Hyper, OuterState, co2_round, local_sgd_round,
                         outer_iterate, overlap_local_sgd_round, penalized_momentum_update,
                         slowmo_round, staleness_gap, sync_sgd_round)
from .collective import Clock, CollectiveEngine, CollectiveError, ReduceHandle
from .inner import InnerSchedule, InnerTrace, WorkerState, lr_at, run_inner_loop
from .params import (NonFiniteError, average, clip_elementwise, elementwise_abs_diff,
                     l2_norm)
from .problems import (Problem, full_gradient, loss, make_logistic, make_mlp,
                       make_quadratic, shard)
from .simulator import MetricsRecord, RoundFailure, RunResult, simulate
from .timing import (ALGORITHMS, ClusterSpec, TimelineReport, allreduce_time,
                     overlap_ratio, scalability_ratio, simulate_timeline)

__version__ = "0.1.0"
