"""Command-line entry point: ``co2sim {run,ablate,scale,fixture-check}``."""

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

from .config import ConfigError, RunConfig, load_config, validate
from .params import NonFiniteError
from .simulator import RoundFailure

log = logging.getLogger("co2sim")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC = 0, 2, 3


def _int_list(text):
    return [int(v) for v in text.split(",") if v]


def build_parser():
    parser = argparse.ArgumentParser(prog="co2sim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="PATH", help="JSON or TOML run configuration")
        p.add_argument("--seed", type=int, help="first seed (overrides the config)")
        p.add_argument("--out", metavar="DIR", help="output directory")
        p.add_argument("--algo", choices=["co2", "slowmo", "local-sgd",
                                          "overlap-local-sgd", "sync-sgd"])
        p.add_argument("--tau", type=int, help="inner steps per outer round")
        p.add_argument("--repeats", type=int, help="number of seeds")
        p.add_argument("--rounds", type=int, help="outer rounds T")

    common(sub.add_parser("run", help="train and write metrics.csv, events.jsonl, summary.json"))
    common(sub.add_parser("ablate", help="CO2 with/without staleness penalty and clipping"))
    scale = sub.add_parser("scale", help="throughput and scalability-ratio sweep")
    common(scale)
    scale.add_argument("--G-list", type=_int_list, default=[16, 32, 64, 128])
    scale.add_argument("--tau-list", type=_int_list, default=[1, 3, 6, 12, 24, 48])
    scale.add_argument("--algorithms", default=None,
                       help="comma-separated algorithms (default: --algo and sync-sgd)")
    sub.add_parser("fixture-check", help="replay the hand-computed traces")
    return parser


def resolve_config(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out_dir"] = args.out
    if args.algo is not None:
        changes["algorithm"] = args.algo.replace("-", "_")
    if args.repeats is not None:
        changes["repeats"] = args.repeats
    if args.rounds is not None:
        changes["rounds"] = args.rounds
    if args.tau is not None:
        try:
            changes["hyper"] = replace(cfg.hyper, tau=args.tau)
        except ValueError as exc:
            raise ConfigError("tau", str(exc)) from exc
    return validate(replace(cfg, **changes))


def main(argv=None):
    from . import harness
    from .fixtures import check_all

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        if args.command == "fixture-check":
            ok = True
            for name, passed, err in check_all():
                print(f"{'PASS' if passed else 'FAIL'} {name} max_abs_err={err:.3g}")
                ok &= passed
            return EXIT_OK if ok else EXIT_NUMERIC
        cfg = resolve_config(args)
        if args.command == "run":
            res = harness.run_experiment(cfg, cfg.out_dir)
            fl = res.summary["final_loss"]
            log.info("%s: final loss %.6g +- %.2g over %d seeds; outputs in %s",
                     cfg.algorithm, fl["mean"], fl["std"], len(cfg.seeds), cfg.out_dir)
        elif args.command == "ablate":
            rows = harness.run_ablation(cfg, cfg.out_dir)
            for r in rows:
                print(json.dumps(r))
        else:
            algos = ([a.replace("-", "_") for a in args.algorithms.split(",")]
                     if args.algorithms else None)
            rows = harness.run_scaling_sweep(cfg, args.G_list, args.tau_list, algos,
                                             cfg.out_dir)
            log.info("wrote %d rows to %s", len(rows), os.path.join(cfg.out_dir, "scaling.csv"))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (RoundFailure, NonFiniteError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
