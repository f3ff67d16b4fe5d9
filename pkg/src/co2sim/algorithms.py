"""Outer-loop updates for CO2 and the baselines it is compared against.

Every round function takes the whole cluster for one outer step: the
workers after their inner loops, the inner traces, and the round clock that
owns the collective engine. Worker parameters are replaced in place with the
starting point of the next round.
"""

from dataclasses import dataclass

import numpy as np

from .inner import lr_at
from .params import average, check_finite, clip_elementwise, elementwise_abs_diff
from .problems import stochastic_gradient


@dataclass(frozen=True)
class Co2Hyper:
    tau: int = 4
    alpha: float = 1.0
    beta: float = 0.7
    phi: float = 1.0
    penalty_enabled: bool = True
    clip_enabled: bool = True
    epsilon: float = 1e-12
    # drive the gap/momentum/outer lines from worker-averaged snapshots; the
    # worker-local alternative only damps consensus error when alpha + beta < 1
    ghost_consistent: bool = True

    def __post_init__(self):
        if self.tau < 1:
            raise ValueError("tau must be >= 1")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not 0 <= self.beta < 1:
            raise ValueError("beta must lie in [0, 1)")
        if not self.phi > 0:
            raise ValueError("phi must be positive")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


@dataclass(eq=False)
class OuterState:
    momentum: np.ndarray
    gap: np.ndarray
    prev_x0: np.ndarray = None
    prev_x1: np.ndarray = None
    pending: object = None
    t: int = 0
    anchor: np.ndarray = None

    @classmethod
    def initial(cls, n):
        return cls(np.zeros(n), np.ones(n))


class ProtocolError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# CO2 building blocks
# ---------------------------------------------------------------------------


def staleness_gap(x_t0, prev_x0, prev_x1, tau, epsilon=1e-12):
    """Per-coordinate ratio of outer displacement to tau first-step moves, plus 1.

    The denominator is floored at ``epsilon`` so a coordinate that did not
    move on the first inner step but moved in the outer loop gets a
    near-zero momentum weight instead of a division by zero.
    """
    if tau < 1:
        raise ValueError("tau must be >= 1")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    outer = elementwise_abs_diff(x_t0, prev_x0)
    inner = elementwise_abs_diff(prev_x1, prev_x0)
    return check_finite(outer / np.maximum(tau * inner, epsilon) + 1.0, "staleness gap")


def penalized_momentum_update(m_prev, beta, gap, delta, penalty_enabled=True):
    """m = beta * m_prev + delta / gap (or + delta when the penalty is off)."""
    m_prev = np.asarray(m_prev, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    if m_prev.shape != delta.shape:
        raise ValueError("momentum and displacement lengths differ")
    if not penalty_enabled:
        return check_finite(beta * m_prev + delta, "momentum")
    gap = np.asarray(gap, dtype=np.float64)
    if gap.shape != delta.shape:
        raise ValueError("gap and displacement lengths differ")
    if np.any(gap < 1.0):
        raise ValueError("staleness gap entries must be >= 1")
    return check_finite(beta * m_prev + delta / gap, "momentum")


def outer_iterate(x_t0, alpha, m, phi, clip_enabled=True):
    x_t0 = np.asarray(x_t0, dtype=np.float64)
    if x_t0.shape != np.shape(m):
        raise ValueError("iterate and momentum lengths differ")
    step = clip_elementwise(m, phi) if clip_enabled else m
    return check_finite(x_t0 - alpha * step, "outer iterate")


# ---------------------------------------------------------------------------
# round functions
# ---------------------------------------------------------------------------


def _finish_reduce(rc, handle):
    # Algorithm order: only block when the reduce has not landed yet.
    if not rc.engine.is_completed(handle, rc.clock):
        return rc.engine.wait(handle, rc.clock)
    return rc.engine.take(handle, rc.clock)


def co2_round(workers, states, traces, rc, hyper):
    """One CO2 outer step for all workers.

    Launches the reduce of this round's local endpoints, then (from the
    second round on) consumes the previous round's reduce and applies the
    penalized, clipped one-step-stale momentum to each worker's round start.
    Returns the per-worker staleness gaps (None on the first round).
    """
    t = states[0].t
    handle = rc.engine.launch_all_reduce([tr.x_end for tr in traces], rc.clock)
    if t == 0:
        # nothing stale to apply yet: each worker keeps its local x_{0,tau}
        for st, tr in zip(states, traces):
            st.prev_x0, st.prev_x1 = tr.x_start, tr.x_first
            st.pending = handle
            st.t += 1
        return None

    prev = states[0].pending
    if prev is None or any(st.pending is not prev for st in states):
        raise ProtocolError(f"round {t}: missing pending reduce")
    x_bar = _finish_reduce(rc, prev)
    rc.outer()

    if hyper.ghost_consistent:
        x_t0s = [average([tr.x_start for tr in traces])] * len(workers)
        prev_x0s = [average([st.prev_x0 for st in states])] * len(workers)
        prev_x1s = [average([st.prev_x1 for st in states])] * len(workers)
        x_firsts = [average([tr.x_first for tr in traces])] * len(workers)
    else:
        x_t0s = [tr.x_start for tr in traces]
        prev_x0s = [st.prev_x0 for st in states]
        prev_x1s = [st.prev_x1 for st in states]
        x_firsts = [tr.x_first for tr in traces]

    gaps = []
    for w, st, x_t0, p0, p1, x1 in zip(workers, states, x_t0s, prev_x0s, prev_x1s, x_firsts):
        gap = staleness_gap(x_t0, p0, p1, hyper.tau, hyper.epsilon)
        st.momentum = penalized_momentum_update(
            st.momentum, hyper.beta, gap, p0 - x_bar, hyper.penalty_enabled)
        st.gap = gap
        w.params = outer_iterate(x_t0, hyper.alpha, st.momentum, hyper.phi,
                                 hyper.clip_enabled)
        st.prev_x0, st.prev_x1 = x_t0, x1
        st.pending = handle
        st.t += 1
        gaps.append(gap)
    return gaps


def _blocking_average(rc, traces):
    h = rc.engine.launch_all_reduce([tr.x_end for tr in traces], rc.clock)
    return rc.engine.wait(h, rc.clock)


def slowmo_round(workers, states, traces, rc, hyper):
    """Blocking average, then m = beta m + (x_start - avg), x -= alpha m.

    The outer step is written as avg + (1 - alpha) d - alpha beta m_prev,
    which is algebraically x_start - alpha m but lands exactly on the
    average when alpha = 1 and beta = 0.
    """
    x_bar = _blocking_average(rc, traces)
    rc.outer()
    for w, st, tr in zip(workers, states, traces):
        d = tr.x_start - x_bar
        m_prev = st.momentum
        st.momentum = check_finite(hyper.beta * m_prev + d, "momentum")
        w.params = check_finite(
            x_bar + (1.0 - hyper.alpha) * d - hyper.alpha * hyper.beta * m_prev,
            "outer iterate")
        st.t += 1


def local_sgd_round(workers, states, traces, rc, hyper=None):
    x_bar = _blocking_average(rc, traces)
    rc.outer()
    for w, st in zip(workers, states):
        w.params = x_bar.copy()
        st.t += 1


def overlap_local_sgd_round(workers, states, traces, rc, hyper=None):
    """Anchor-corrected local SGD whose anchor average overlaps the next round.

    Each worker applies x <- x - (anchor - anchor_avg) once the average of
    the anchors arrives, then re-anchors at its current parameters and
    launches the next average.
    """
    def correct(avg):
        for w, st in zip(workers, states):
            # same as x - (anchor - avg); exact when x == anchor
            w.params = check_finite(avg + (w.params - st.anchor), "corrected params")
        rc.outer()

    pending = states[0].pending
    if pending is not None:
        correct(_finish_reduce(rc, pending))
    for w, st in zip(workers, states):
        st.anchor = w.params.copy()
    handle = rc.engine.launch_all_reduce([st.anchor for st in states], rc.clock)
    if rc.engine.is_completed(handle, rc.clock):
        correct(rc.engine.take(handle, rc.clock))
        handle = None
    for st in states:
        st.pending = handle
        st.t += 1


def sync_sgd_round(workers, states, problem, schedule, rc, hyper):
    """tau fully synchronous steps: average the gradients, shared update."""
    t = states[0].t
    lr = lr_at(schedule, t)
    x_start = workers[0].params.copy()
    grads = []
    for _ in range(hyper.tau):
        gs = [stochastic_gradient(problem, w.shard, w.params, w.batch_size, w.rng).gradient
              for w in workers]
        rc.compute(1)
        h = rc.engine.launch_all_reduce(gs, rc.clock, slot="grads")
        g_bar = rc.engine.wait(h, rc.clock)
        x = check_finite(workers[0].params - lr * g_bar, "params")
        for w in workers:
            w.params = x.copy()
            w.inner_step += 1
        grads.append(gs)
    for st in states:
        st.t += 1
    return x_start, grads
