"""Synthetic objectives f = (1/G) sum_i f_i over sharded datasets.

Three kinds are available: a least-squares quadratic with a known optimum,
binary logistic regression, and a one-hidden-layer tanh MLP with a softmax
cross-entropy head. All gradients are written out by hand.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .params import check_finite

KINDS = ("quadratic", "logistic", "mlp")


@dataclass(frozen=True, eq=False)
class Problem:
    kind: str
    features: np.ndarray
    targets: np.ndarray
    # (n_in, n_hidden, n_out) for mlp, unused otherwise
    widths: tuple = ()
    known_optimum: np.ndarray = None
    known_optimal_loss: float = None

    @property
    def num_samples(self):
        return self.features.shape[0]

    @property
    def dimension(self):
        if self.kind == "mlp":
            n_in, n_hid, n_out = self.widths
            return n_hid * n_in + n_hid + n_out * n_hid + n_out
        return self.features.shape[1]

    def smoothness(self):
        """Largest Hessian eigenvalue of the full objective (quadratic only)."""
        if self.kind != "quadratic":
            raise ValueError("smoothness constant is only known for quadratics")
        h = self.features.T @ self.features / self.num_samples
        return float(np.linalg.eigvalsh(h)[-1])


@dataclass(frozen=True, eq=False)
class DataShard:
    worker_index: int
    indices: np.ndarray
    rng_seed: int

    def __len__(self):
        return len(self.indices)


@dataclass(frozen=True, eq=False)
class GradSample:
    gradient: np.ndarray
    batch_loss: float
    batch_indices: np.ndarray = field(repr=False)


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------


def quadratic_from_data(features, targets):
    """Least-squares problem f(x) = (1/2m)||Ax - b||^2 for given A, b."""
    a = np.array(features, dtype=np.float64)
    b = np.array(targets, dtype=np.float64)
    if a.ndim != 2 or b.shape != (a.shape[0],):
        raise ValueError("features must be (m, n) and targets (m,)")
    if a.shape[0] < a.shape[1]:
        raise ValueError("need at least as many samples as dimensions")
    m = a.shape[0]
    x_star = np.linalg.solve(a.T @ a, a.T @ b)
    r = a @ x_star - b
    return Problem("quadratic", a, b, known_optimum=x_star,
                   known_optimal_loss=float(r @ r / (2 * m)))


def make_quadratic(n, condition_number, samples, seed, noise=0.1):
    """Random least-squares problem whose Hessian spectrum spans [1/cond, 1].

    A = sqrt(m) Q diag(sqrt(eig)) V^T with orthonormal Q (m x n) and V, so
    A^T A / m = V diag(eig) V^T exactly. Targets are A x_true plus Gaussian
    noise of standard deviation ``noise``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if samples < n:
        raise ValueError("samples must be >= n")
    if condition_number < 1:
        raise ValueError(f"condition_number must be >= 1, got {condition_number}")
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((samples, n)))
    v, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eig = np.geomspace(1.0 / condition_number, 1.0, n) if n > 1 else np.ones(1)
    a = np.sqrt(samples) * (q * np.sqrt(eig)) @ v.T
    x_true = rng.standard_normal(n)
    b = a @ x_true + noise * rng.standard_normal(samples)
    return quadratic_from_data(a, b)


def _classification_data(rng, n_in, samples, flip):
    x = rng.standard_normal((samples, n_in))
    w = rng.standard_normal(n_in)
    y = (x @ w > 0).astype(np.float64)
    flips = rng.random(samples) < flip
    y[flips] = 1.0 - y[flips]
    return x, y


def make_logistic(n, samples, seed, flip=0.05):
    """Linearly separable labels with a fraction ``flip`` of them flipped."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    x, y = _classification_data(np.random.default_rng(seed), n, samples, flip)
    return Problem("logistic", x, y)


def make_mlp(widths, samples, seed, flip=0.05):
    """One-hidden-layer tanh network; ``widths`` is (n_in, n_hidden[, n_out])."""
    widths = tuple(int(w) for w in widths)
    if len(widths) == 0:
        raise ValueError("widths must not be empty")
    if len(widths) == 2:
        widths = widths + (2,)
    if len(widths) != 3 or min(widths) < 1:
        raise ValueError(f"widths must be (n_in, n_hidden[, n_out]), got {widths}")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    n_in, _, n_out = widths
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((samples, n_in))
    proj = rng.standard_normal((n_in, n_out))
    y = np.argmax(np.tanh(x @ proj), axis=1).astype(np.float64)
    flips = rng.random(samples) < flip
    y[flips] = rng.integers(0, n_out, size=int(flips.sum()))
    return Problem("mlp", x, y, widths=widths)


def initial_point(problem, seed=0, scale=None):
    """Deterministic starting parameters.

    Quadratic and logistic start at zero; the MLP needs a random draw to
    break hidden-unit symmetry.
    """
    if problem.kind != "mlp" and scale is None:
        return np.zeros(problem.dimension)
    rng = np.random.default_rng(seed)
    return (0.5 if scale is None else scale) * rng.standard_normal(problem.dimension)


# ---------------------------------------------------------------------------
# sharding and sampling
# ---------------------------------------------------------------------------


def worker_rng(run_seed, worker_index):
    """Independent stream for one worker, keyed on (run_seed, worker_index)."""
    ss = np.random.SeedSequence(int(run_seed), spawn_key=(int(worker_index),))
    return np.random.default_rng(ss)


def shard(problem, G, seed, heterogeneity=False):
    """Partition the dataset into ``G`` shards whose sizes differ by at most 1.

    With ``heterogeneity`` the rows are sorted by target before splitting, so
    each worker sees a skewed slice of the label distribution.
    """
    if G <= 0:
        raise ValueError(f"G must be positive, got {G}")
    m = problem.num_samples
    if m < G:
        raise ValueError(f"dataset of {m} rows cannot feed {G} workers")
    order = np.random.default_rng(seed).permutation(m)
    if heterogeneity:
        order = order[np.argsort(problem.targets[order], kind="stable")]
    parts = np.array_split(order, G)
    return [DataShard(i, np.sort(p), int(seed) * 1_000_003 + i)
            for i, p in enumerate(parts)]


def _unpack_mlp(problem, params):
    n_in, n_hid, n_out = problem.widths
    o = 0
    w1 = params[o:o + n_hid * n_in].reshape(n_hid, n_in)
    o += n_hid * n_in
    b1 = params[o:o + n_hid]
    o += n_hid
    w2 = params[o:o + n_out * n_hid].reshape(n_out, n_hid)
    o += n_out * n_hid
    b2 = params[o:o + n_out]
    return w1, b1, w2, b2


def _loss_and_grad(problem, rows, params):
    x = problem.features[rows]
    y = problem.targets[rows]
    b = len(rows)
    if problem.kind == "quadratic":
        r = x @ params - y
        return float(r @ r / (2 * b)), x.T @ r / b
    if problem.kind == "logistic":
        z = x @ params
        loss = np.mean(np.logaddexp(0.0, z) - y * z)
        p = 0.5 * (1.0 + np.tanh(0.5 * z))
        return float(loss), x.T @ (p - y) / b
    if problem.kind == "mlp":
        w1, b1, w2, b2 = _unpack_mlp(problem, params)
        h = np.tanh(x @ w1.T + b1)
        z = h @ w2.T + b2
        z = z - z.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        labels = y.astype(int)
        loss = -np.mean(logp[np.arange(b), labels])
        dz = np.exp(logp)
        dz[np.arange(b), labels] -= 1.0
        dz /= b
        dh = (dz @ w2) * (1.0 - h * h)
        grad = np.concatenate([
            (dh.T @ x).ravel(), dh.sum(axis=0),
            (dz.T @ h).ravel(), dz.sum(axis=0),
        ])
        return float(loss), grad
    raise ValueError(f"unknown problem kind {problem.kind!r}")


def _check_params(problem, params):
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (problem.dimension,):
        raise ValueError(
            f"params have shape {params.shape}, problem dimension is {problem.dimension}")
    return params


def stochastic_gradient(problem, data_shard, params, batch_size, rng):
    """Mini-batch gradient over ``batch_size`` distinct rows of the shard.

    Rows are drawn without replacement from ``rng`` and then sorted, so a
    batch covering the whole shard reproduces the shard gradient bit for bit.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if batch_size > len(data_shard):
        raise ValueError(f"batch_size {batch_size} exceeds shard size {len(data_shard)}")
    params = _check_params(problem, params)
    rows = np.sort(rng.choice(data_shard.indices, size=batch_size, replace=False))
    batch_loss, grad = _loss_and_grad(problem, rows, params)
    return GradSample(check_finite(grad, "gradient"), batch_loss, rows)


def shard_gradient(problem, data_shard, params):
    params = _check_params(problem, params)
    return _loss_and_grad(problem, data_shard.indices, params)[1]


def full_gradient(problem, params):
    params = _check_params(problem, params)
    return _loss_and_grad(problem, np.arange(problem.num_samples), params)[1]


def loss(problem, params):
    params = _check_params(problem, params)
    return _loss_and_grad(problem, np.arange(problem.num_samples), params)[0]


# ---------------------------------------------------------------------------
# CSV interchange
# ---------------------------------------------------------------------------


def export_csv(problem, path):
    """Write features then the target column, one header row."""
    d = problem.features.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j}" for j in range(d)] + ["target"])
        for row, t in zip(problem.features, problem.targets):
            w.writerow([repr(float(v)) for v in row] + [repr(float(t))])


def import_csv(path, kind, hidden=None):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[-1] != "target":
            raise ValueError(f"{path}: last header column must be 'target'")
        rows = np.array([[float(v) for v in r] for r in reader], dtype=np.float64)
    x, y = rows[:, :-1], rows[:, -1]
    if kind == "quadratic":
        return quadratic_from_data(x, y)
    if kind == "logistic":
        return Problem("logistic", x, y)
    if kind == "mlp":
        if hidden is None:
            raise ValueError("mlp import needs the hidden width")
        n_out = int(y.max()) + 1 if len(y) else 2
        return Problem("mlp", x, y, widths=(x.shape[1], int(hidden), max(n_out, 2)))
    raise ValueError(f"unknown problem kind {kind!r}")


__all__ = [
    "KINDS", "Problem", "DataShard", "GradSample", "quadratic_from_data",
    "make_quadratic", "make_logistic", "make_mlp", "initial_point", "worker_rng",
    "shard", "stochastic_gradient", "shard_gradient", "full_gradient", "loss",
    "export_csv", "import_csv",
]
