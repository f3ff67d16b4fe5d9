import math

import numpy as np
import pytest

from co2sim.problems import (DataShard, export_csv, full_gradient, import_csv, initial_point,
                             loss, make_logistic, make_mlp, make_quadratic,
                             quadratic_from_data, shard, shard_gradient, stochastic_gradient,
                             worker_rng)


def fd_gradient(problem, x, coords, h=1e-5):
    out = []
    for j in coords:
        e = np.zeros_like(x)
        e[j] = h
        out.append((loss(problem, x + e) - loss(problem, x - e)) / (2 * h))
    return np.array(out)


def test_quadratic_trivial_identity_rows():
    p = quadratic_from_data(np.eye(2), np.zeros(2))
    np.testing.assert_array_equal(p.known_optimum, [0.0, 0.0])
    assert p.known_optimal_loss == 0.0


def test_quadratic_optimum_is_stationary():
    p = make_quadratic(8, 10, 64, seed=3)
    assert np.linalg.norm(full_gradient(p, p.known_optimum)) < 1e-8
    # independent normal-equation solve
    a, b = p.features, p.targets
    x_ref = np.linalg.lstsq(a, b, rcond=None)[0]
    np.testing.assert_allclose(p.known_optimum, x_ref, atol=1e-10)


def test_quadratic_spectrum():
    p = make_quadratic(8, 10, 64, seed=3)
    eig = np.linalg.eigvalsh(p.features.T @ p.features / 64)
    assert eig[0] == pytest.approx(0.1, rel=1e-10)
    assert eig[-1] == pytest.approx(1.0, rel=1e-10)
    assert p.smoothness() == pytest.approx(1.0, rel=1e-10)


def test_quadratic_optimum_beats_random_points():
    p = make_quadratic(8, 10, 64, seed=3)
    rng = np.random.default_rng(0)
    f_star = loss(p, p.known_optimum)
    assert f_star == pytest.approx(p.known_optimal_loss, rel=1e-12)
    for _ in range(100):
        assert f_star <= loss(p, p.known_optimum + rng.standard_normal(8))


def test_quadratic_rejects_bad_condition():
    with pytest.raises(ValueError):
        make_quadratic(4, 0.5, 10, 0)
    with pytest.raises(ValueError):
        make_quadratic(4, 2, 3, 0)


def test_logistic_zero_params_loss_is_ln2():
    p = make_logistic(5, 40, seed=1)
    assert loss(p, np.zeros(5)) == pytest.approx(math.log(2), abs=1e-15)


@pytest.mark.parametrize("problem", [
    make_quadratic(6, 5, 40, seed=2),
    make_logistic(6, 40, seed=2),
    make_mlp((4, 5), 40, seed=2),
    make_mlp((3, 4, 3), 40, seed=5),
], ids=["quadratic", "logistic", "mlp", "mlp3"])
def test_gradient_matches_finite_differences(problem):
    rng = np.random.default_rng(11)
    x = initial_point(problem, seed=4, scale=0.5)
    n = problem.dimension
    coords = rng.choice(n, size=min(20, n), replace=False)
    g = full_gradient(problem, x)[coords]
    fd = fd_gradient(problem, x, coords)
    rel = np.abs(g - fd) / np.maximum(np.abs(fd), 1e-3)
    assert rel.max() < 1e-5


def test_make_errors():
    with pytest.raises(ValueError):
        make_mlp((), 10, 0)
    with pytest.raises(ValueError):
        make_logistic(3, 0, 0)


def test_shard_sizes_and_partition():
    p = make_quadratic(2, 1, 10, 0)
    s2 = shard(p, 2, seed=0)
    assert sorted(len(s) for s in s2) == [5, 5]
    s3 = shard(p, 3, seed=0)
    assert sorted(len(s) for s in s3) == [3, 3, 4]
    allidx = np.concatenate([s.indices for s in s3])
    assert sorted(allidx.tolist()) == list(range(10))
    assert len(set(allidx.tolist())) == 10
    again = shard(p, 3, seed=0)
    assert all(np.array_equal(a.indices, b.indices) for a, b in zip(s3, again))
    with pytest.raises(ValueError):
        shard(p, 0, 0)


def test_heterogeneous_shards_are_label_skewed():
    p = make_logistic(3, 100, seed=0)
    s = shard(p, 2, seed=0, heterogeneity=True)
    assert p.targets[s[0].indices].mean() < p.targets[s[1].indices].mean()


def test_full_batch_equals_shard_gradient(quad16):
    sh = shard(quad16, 4, seed=0)[1]
    x = np.ones(16)
    g = stochastic_gradient(quad16, sh, x, len(sh), worker_rng(0, 1)).gradient
    np.testing.assert_array_equal(g, shard_gradient(quad16, sh, x))


def test_quadratic_batch_gradient_closed_form(quad16):
    sh = shard(quad16, 4, seed=0)[0]
    x = np.linspace(-1, 1, 16)
    s = stochastic_gradient(quad16, sh, x, 7, worker_rng(5, 0))
    a, b = quad16.features[s.batch_indices], quad16.targets[s.batch_indices]
    ref = sum(a[r] * (a[r] @ x - b[r]) for r in range(7)) / 7
    np.testing.assert_allclose(s.gradient, ref, rtol=1e-12, atol=1e-14)
    assert len(set(s.batch_indices.tolist())) == 7
    assert set(s.batch_indices.tolist()) <= set(sh.indices.tolist())


def test_stochastic_gradient_is_unbiased(quad16):
    sh = shard(quad16, 4, seed=0)[2]
    x = np.linspace(-1, 1, 16)
    rng = worker_rng(9, 2)
    draws = np.array([stochastic_gradient(quad16, sh, x, 8, rng).gradient for _ in range(10000)])
    target = shard_gradient(quad16, sh, x)
    se = draws.std(axis=0) / np.sqrt(len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - target) < 3 * se + 1e-12)


def test_stochastic_gradient_errors_and_determinism(quad16):
    sh = shard(quad16, 4, seed=0)[0]
    x = np.zeros(16)
    with pytest.raises(ValueError):
        stochastic_gradient(quad16, sh, x, len(sh) + 1, worker_rng(0, 0))
    with pytest.raises(ValueError):
        stochastic_gradient(quad16, sh, x, 0, worker_rng(0, 0))
    with pytest.raises(ValueError):
        full_gradient(quad16, np.zeros(3))
    a = stochastic_gradient(quad16, sh, x, 5, worker_rng(3, 0))
    b = stochastic_gradient(quad16, sh, x, 5, worker_rng(3, 0))
    assert a.gradient.tobytes() == b.gradient.tobytes()
    assert a.batch_loss == b.batch_loss


@pytest.mark.parametrize("G", [1, 3, 8])
def test_full_gradient_is_mean_of_shard_gradients(quad16, G):
    x = np.linspace(0, 2, 16)
    shards = shard(quad16, G, seed=1)
    # equal-weight mean needs equal shard sizes; weight by size otherwise
    total = sum(len(s) * shard_gradient(quad16, s, x) for s in shards) / quad16.num_samples
    np.testing.assert_allclose(total, full_gradient(quad16, x), atol=1e-12)


def test_worker_streams_are_independent():
    a = worker_rng(0, 0).random(4)
    b = worker_rng(0, 1).random(4)
    assert not np.array_equal(a, b)
    np.testing.assert_array_equal(a, worker_rng(0, 0).random(4))


@pytest.mark.parametrize("kind", ["quadratic", "logistic", "mlp"])
def test_csv_round_trip(tmp_path, kind):
    p = {"quadratic": make_quadratic(3, 2, 12, 0), "logistic": make_logistic(3, 12, 0),
         "mlp": make_mlp((3, 4), 12, 0)}[kind]
    path = tmp_path / "data.csv"
    export_csv(p, path)
    header = path.read_text().splitlines()[0]
    assert header == "x0,x1,x2,target"
    q = import_csv(path, kind, hidden=4)
    np.testing.assert_array_equal(q.features, p.features)
    np.testing.assert_array_equal(q.targets, p.targets)
    x = initial_point(p, seed=1, scale=0.3)
    assert loss(q, x) == loss(p, x)


def test_data_shard_len():
    assert len(DataShard(0, np.arange(3), 0)) == 3
