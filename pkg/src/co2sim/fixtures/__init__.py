"""Hand-computed round-by-round traces on tiny problems."""

import json
from importlib import resources

import numpy as np

from ..algorithms import Co2Hyper
from ..inner import InnerSchedule
from ..problems import DataShard, quadratic_from_data
from ..simulator import simulate
from ..timing import ClusterSpec


def fixture_names():
    return sorted(p.name[:-5] for p in resources.files(__name__).iterdir()
                  if p.name.endswith(".json"))


def load_fixture(name):
    return json.loads(resources.files(__name__).joinpath(f"{name}.json").read_text())


def run_fixture(fx):
    problem = quadratic_from_data(fx["problem"]["features"], fx["problem"]["targets"])
    shards = [DataShard(i, np.array(rows), i) for i, rows in enumerate(fx["shards"])]
    G = len(shards)
    cluster = dict(fx.get("cluster", {"measured_override": 0.0}))
    spec = ClusterSpec(G=G, gpus_per_node=G, **cluster)
    return simulate(fx["algorithm"], problem, Co2Hyper(**fx["hyper"]),
                    InnerSchedule("constant", fx["lr"], fx["rounds"]), fx["rounds"],
                    G=G, batch_size=fx["batch_size"], seed=0, x0=fx["x0"], spec=spec,
                    shards=shards, record=True)


def check_fixture(fx, tol=1e-12):
    """Return the largest absolute deviation from the recorded trace."""
    result = run_fixture(fx)
    exp = fx["expect"]
    err = 0.0
    got = np.array([[w for w in rnd] for rnd in result.worker_history])
    err = max(err, float(np.max(np.abs(got - np.array(exp["worker_params"])))))
    for want, have in zip(exp.get("gaps", []), result.gaps):
        if want is None:
            if have is not None:
                return float("inf")
            continue
        err = max(err, float(np.max(np.abs(np.array(have) - np.array(want)))))
    return err


def check_all(tol=1e-12):
    out = []
    for name in fixture_names():
        err = check_fixture(load_fixture(name), tol)
        out.append((name, err <= tol, err))
    return out
