import math

import numpy as np
import pytest

from co2sim.inner import InnerSchedule, WorkerState, lr_at, run_inner_loop
from co2sim.params import NonFiniteError
from co2sim.problems import full_gradient, loss, shard, shard_gradient, worker_rng


def make_worker(problem, G=4, i=0, batch=None, seed=0, x0=None):
    sh = shard(problem, G, seed=0)[i]
    x0 = np.zeros(problem.dimension) if x0 is None else np.array(x0, dtype=float)
    return WorkerState(i, x0, sh, worker_rng(seed, i), batch or len(sh))


def test_constant_schedule():
    s = InnerSchedule("constant", 0.3, 10)
    assert all(lr_at(s, t, k) == 0.3 for t in range(10) for k in range(5))


def test_cosine_schedule():
    s = InnerSchedule("cosine", 0.4, 10)
    assert lr_at(s, 0) == 0.4
    assert lr_at(s, 9) == pytest.approx(0.4 * (1 + math.cos(math.pi * 9 / 10)) / 2, rel=1e-15)
    with pytest.raises(ValueError):
        lr_at(s, 10)
    lrs = [lr_at(s, t) for t in range(10)]
    assert all(a >= b for a, b in zip(lrs, lrs[1:])) and min(lrs) > 0


def test_warmup_schedule():
    s = InnerSchedule("warmup_cosine", 1.0, 20, warmup_steps=4)
    assert lr_at(s, 0) == pytest.approx(1.0 / 4)
    assert lr_at(s, 4) == 1.0
    assert all(lr_at(s, t) > 0 for t in range(20))


def test_schedule_validation():
    with pytest.raises(ValueError):
        InnerSchedule("linear", 0.1, 3)
    with pytest.raises(ValueError):
        InnerSchedule("constant", 0.0, 3)
    with pytest.raises(ValueError):
        InnerSchedule("warmup_cosine", 0.1, 3, warmup_steps=0)


def test_single_step(quad16):
    w = make_worker(quad16)
    g0 = shard_gradient(quad16, w.shard, np.zeros(16))
    tr = run_inner_loop(w, quad16, InnerSchedule("constant", 0.2, 5), 1, 0)
    np.testing.assert_array_equal(tr.x_end, np.zeros(16) - 0.2 * g0)
    np.testing.assert_array_equal(tr.x_first, tr.x_end)
    np.testing.assert_array_equal(w.params, tr.x_end)


def test_full_batch_matches_scalar_loop(quad16):
    w = make_worker(quad16)
    tr = run_inner_loop(w, quad16, InnerSchedule("constant", 0.3, 5), 5, 0)
    a, b = quad16.features[w.shard.indices], quad16.targets[w.shard.indices]
    x = np.zeros(16)
    for _ in range(5):
        g = a.T @ (a @ x - b) / len(b)
        x = x - 0.3 * g
    np.testing.assert_array_equal(tr.x_end, x)
    assert tr.steps == 5


def test_telescoping(quad16):
    w = make_worker(quad16, batch=8, x0=np.ones(16))
    tr = run_inner_loop(w, quad16, InnerSchedule("constant", 0.1, 5), 7, 0)
    np.testing.assert_allclose(tr.x_start - tr.x_end, 0.1 * sum(tr.grads), atol=1e-13)


def test_descent_below_two_over_L(quad16):
    x0 = np.full(16, 3.0)
    for i in range(4):
        w = make_worker(quad16, i=i, x0=x0)
        a = quad16.features[w.shard.indices]
        L = np.linalg.eigvalsh(a.T @ a / len(a))[-1]
        tr = run_inner_loop(w, quad16, InnerSchedule("constant", 1.9 / L, 3), 10, 0)
        sub = lambda x: float(np.sum((a @ x - quad16.targets[w.shard.indices]) ** 2))
        assert sub(tr.x_end) <= sub(tr.x_start)


def test_no_cross_worker_access(quad16):
    ws = [make_worker(quad16, i=i, batch=4) for i in range(4)]
    before = [w.params.copy() for w in ws]
    run_inner_loop(ws[2], quad16, InnerSchedule("constant", 0.1, 3), 4, 0)
    for i in (0, 1, 3):
        np.testing.assert_array_equal(ws[i].params, before[i])
        assert ws[i].inner_step == 0


def test_determinism_per_seed(quad16):
    a = run_inner_loop(make_worker(quad16, batch=4, seed=5), quad16,
                       InnerSchedule("constant", 0.1, 3), 4, 1)
    b = run_inner_loop(make_worker(quad16, batch=4, seed=5), quad16,
                       InnerSchedule("constant", 0.1, 3), 4, 1)
    assert a.x_end.tobytes() == b.x_end.tobytes()


def test_inner_momentum_flag(quad16):
    w = make_worker(quad16)
    w.inner_momentum = 0.5
    tr = run_inner_loop(w, quad16, InnerSchedule("constant", 0.1, 2), 2, 0)
    g0, g1 = tr.grads
    np.testing.assert_allclose(tr.x_end, -0.1 * g0 - 0.1 * (0.5 * g0 + g1), atol=1e-15)


def test_errors(quad16):
    w = make_worker(quad16)
    with pytest.raises(ValueError):
        run_inner_loop(w, quad16, InnerSchedule("constant", 0.1, 2), 0, 0)
    w.params = np.zeros(3)
    with pytest.raises(ValueError):
        run_inner_loop(w, quad16, InnerSchedule("constant", 0.1, 2), 1, 0)
    w = make_worker(quad16, x0=np.full(16, 1e150))
    with np.errstate(over="ignore", invalid="ignore"), pytest.raises(NonFiniteError):
        run_inner_loop(w, quad16, InnerSchedule("constant", 1e100, 2), 5, 0)
