"""Per-worker local update phase: tau SGD steps with no communication."""

import math
from dataclasses import dataclass, field

import numpy as np

from .params import NonFiniteError
from .problems import stochastic_gradient

SCHEDULES = ("constant", "cosine", "warmup_cosine")


@dataclass(frozen=True)
class InnerSchedule:
    kind: str = "constant"
    base_lr: float = 0.1
    total_outer_steps: int = 1
    warmup_steps: int = 0

    def __post_init__(self):
        if self.kind not in SCHEDULES:
            raise ValueError(f"unknown schedule {self.kind!r}")
        if not self.base_lr > 0:
            raise ValueError("base_lr must be positive")
        if self.total_outer_steps < 1:
            raise ValueError("total_outer_steps must be >= 1")
        if self.kind == "warmup_cosine" and not 0 < self.warmup_steps < self.total_outer_steps:
            raise ValueError("warmup_steps must lie in (0, total_outer_steps)")


def lr_at(schedule, t, k=0):
    """Inner learning rate for outer step ``t``; constant across inner steps k.

    Cosine decays per outer step as base * (1 + cos(pi t / T)) / 2. The
    warmup variant ramps linearly to base over ``warmup_steps`` outer steps
    and then runs the cosine over the remaining ones.
    """
    T = schedule.total_outer_steps
    if not 0 <= t < T:
        raise ValueError(f"outer step {t} outside [0, {T})")
    g0 = schedule.base_lr
    if schedule.kind == "constant":
        return g0
    if schedule.kind == "cosine":
        return g0 * (1.0 + math.cos(math.pi * t / T)) / 2.0
    w = schedule.warmup_steps
    if t < w:
        return g0 * (t + 1) / w
    return g0 * (1.0 + math.cos(math.pi * (t - w) / (T - w))) / 2.0


@dataclass(eq=False)
class WorkerState:
    """One replica: its parameters, data shard and private sampling stream."""

    index: int
    params: np.ndarray
    shard: object
    rng: np.random.Generator
    batch_size: int
    inner_step: int = 0
    # heavy-ball factor for the optional inner momentum variant; 0 is plain SGD
    inner_momentum: float = 0.0
    velocity: np.ndarray = None


@dataclass(eq=False)
class InnerTrace:
    x_start: np.ndarray
    x_first: np.ndarray
    x_end: np.ndarray
    grads: list = field(repr=False)
    losses: list = field(repr=False)
    lr: float = 0.0

    @property
    def steps(self):
        return len(self.grads)


def run_inner_loop(worker, problem, schedule, tau, t):
    """Run ``tau`` local SGD steps on ``worker`` and return the snapshots.

    ``worker.params`` ends at the last local iterate. The start and the
    first-step iterate are kept as copies for the staleness gap.
    """
    if tau < 1:
        raise ValueError(f"tau must be >= 1, got {tau}")
    if worker.params.shape != (problem.dimension,):
        raise ValueError("worker parameters do not match the problem dimension")
    lr = lr_at(schedule, t)
    x = worker.params.copy()
    x_start = x.copy()
    x_first = None
    grads, losses = [], []
    for k in range(tau):
        sample = stochastic_gradient(problem, worker.shard, x, worker.batch_size, worker.rng)
        g = sample.gradient
        if worker.inner_momentum:
            if worker.velocity is None:
                worker.velocity = np.zeros_like(x)
            worker.velocity = worker.inner_momentum * worker.velocity + g
            step = worker.velocity
        else:
            step = g
        x = x - lr * step
        if not np.all(np.isfinite(x)):
            raise NonFiniteError(
                f"worker {worker.index} diverged at outer step {t}, inner step {k}")
        grads.append(g)
        losses.append(sample.batch_loss)
        if k == 0:
            x_first = x.copy()
        worker.inner_step += 1
    worker.params = x
    return InnerTrace(x_start, x_first, x.copy(), grads, losses, lr)
