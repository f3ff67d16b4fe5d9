"""Run configuration: JSON (or TOML) schema, defaults and validation."""

import json
from dataclasses import asdict, dataclass, field, fields

from .algorithms import Co2Hyper
from .inner import InnerSchedule
from .problems import KINDS
from .timing import ALGORITHMS, ClusterSpec

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class ProblemConfig:
    kind: str = "quadratic"
    n: int = 16
    condition_number: float = 10.0
    samples: int = 1024
    noise: float = 0.1
    hidden: int = 8
    flip: float = 0.05
    seed: int = 0
    heterogeneity: bool = False


@dataclass(frozen=True)
class ScheduleConfig:
    kind: str = "cosine"
    base_lr: float = 0.05
    warmup_steps: int = 0


@dataclass(frozen=True)
class ClusterConfig:
    gpus_per_node: int = 8
    t_comp: float = 0.109
    t_outer: float = 0.0
    param_bytes: float = 7.0e9
    inter_bw: float = 1.0e10
    latency: float = 5.0e-4
    measured_override: float = None


@dataclass(frozen=True)
class RunConfig:
    algorithm: str = "co2"
    G: int = 8
    rounds: int = 500
    batch_size: int = 32
    seed: int = 0
    repeats: int = 5
    out_dir: str = "runs"
    threaded: bool = False
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    hyper: Co2Hyper = field(default_factory=lambda: Co2Hyper(tau=6))
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)

    @property
    def seeds(self):
        return list(range(self.seed, self.seed + self.repeats))

    def inner_schedule(self):
        return InnerSchedule(self.schedule.kind, self.schedule.base_lr, self.rounds,
                             self.schedule.warmup_steps)

    def cluster_spec(self, G=None):
        G = self.G if G is None else G
        per_node = min(self.cluster.gpus_per_node, G)
        return ClusterSpec(G=G, gpus_per_node=per_node, **{
            k: v for k, v in asdict(self.cluster).items() if k != "gpus_per_node"})


_SECTIONS = {"problem": ProblemConfig, "hyper": Co2Hyper,
             "schedule": ScheduleConfig, "cluster": ClusterConfig}


def _build(cls, data, prefix):
    if not isinstance(data, dict):
        raise ConfigError(prefix.rstrip(".") or "config", "expected a table/object")
    names = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ConfigError(prefix + unknown[0], "unknown key")
    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS and cls is RunConfig:
            value = _build(_SECTIONS[key], value, f"{key}.")
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except ValueError as exc:
        # dataclass validators name the offending field at the start of the message
        name = str(exc).split()[0]
        raise ConfigError(prefix + (name if name in names else cls.__name__), str(exc)) from exc


def from_dict(data):
    cfg = _build(RunConfig, data, "")
    validate(cfg)
    return cfg


def validate(cfg):
    if cfg.algorithm not in ALGORITHMS:
        raise ConfigError("algorithm", f"must be one of {', '.join(ALGORITHMS)}")
    for name in ("G", "rounds", "batch_size", "repeats"):
        v = getattr(cfg, name)
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise ConfigError(name, f"must be a positive integer, got {v!r}")
    if cfg.algorithm == "co2" and cfg.rounds < 2:
        raise ConfigError("rounds", "CO2 needs at least 2 rounds")
    p = cfg.problem
    if p.kind not in KINDS:
        raise ConfigError("problem.kind", f"must be one of {', '.join(KINDS)}")
    if p.samples < cfg.G:
        raise ConfigError("problem.samples", "fewer samples than workers")
    if p.kind == "quadratic" and p.samples < p.n:
        raise ConfigError("problem.samples", "quadratic needs samples >= n")
    if p.condition_number < 1:
        raise ConfigError("problem.condition_number", "must be >= 1")
    if cfg.batch_size > p.samples // cfg.G:
        raise ConfigError("batch_size", "larger than the smallest shard")
    try:
        cfg.inner_schedule()
    except ValueError as exc:
        raise ConfigError("schedule", str(exc)) from exc
    try:
        cfg.cluster_spec()
    except ValueError as exc:
        raise ConfigError("cluster", str(exc)) from exc
    return cfg


def to_dict(cfg):
    return asdict(cfg)


def emit_config(cfg):
    return json.dumps(to_dict(cfg), indent=2, sort_keys=True) + "\n"


def load_config(path):
    path = str(path)
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    if path.endswith(".toml"):
        try:
            data = tomllib.loads(raw.decode())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("config", f"{path}: {exc}") from exc
    else:
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return from_dict(data)
