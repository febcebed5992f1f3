"""Command line front-end for the sweep harness.

Exit codes: 0 = sweep completed (infeasible points included), 2 = config
error, 3 = I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .network import ConfigurationError, build_hex_topology, draw_channel, drop_users
from .harness import (ExperimentConfig, emit_outputs, realization_seed,
                      run_experiment, run_one)


def _load_config(args) -> ExperimentConfig:
    if args.config is None:
        return ExperimentConfig()
    return ExperimentConfig.from_file(args.config)


def _apply_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    if getattr(args, "seed", None) is not None:
        config.master_seed = args.seed
    if getattr(args, "realizations", None) is not None:
        config.n_realizations = args.realizations
        config.__post_init__()
    if getattr(args, "out", None) is not None:
        config.output_dir = args.out
    return config


def cmd_run(args) -> int:
    config = _apply_overrides(_load_config(args), args)
    result = run_experiment(config)
    written = emit_outputs(result, config.output_dir)
    n_infeasible = sum(1 for r in result.runs if r["total_w"] is None)
    print(f"{len(result.runs)} runs ({n_infeasible} infeasible), "
          f"{len(result.rows)} aggregate rows -> {config.output_dir}")
    for path in written[:2]:
        print(f"  {path}")
    return 0


def cmd_validate(args) -> int:
    config = _load_config(args)
    print(f"config ok: {len(config.rates_mbps)} rates x "
          f"{len(config.users_per_cell)} densities x "
          f"{len(config.strategies)} strategies x "
          f"{config.n_realizations} realizations")
    return 0


def _parse_single(spec: str) -> dict:
    out = {}
    for part in spec.split(","):
        if "=" not in part:
            raise ConfigurationError(f"bad --single entry {part!r}, expected key=value")
        key, value = part.split("=", 1)
        out[key.strip()] = value.strip()
    missing = {"rate", "users", "seed", "strategy"} - set(out)
    if missing:
        raise ConfigurationError(f"--single is missing {sorted(missing)}")
    return out


def cmd_trace(args) -> int:
    config = _load_config(args)
    sel = _parse_single(args.single)
    rate = float(sel["rate"])
    users = int(sel["users"])
    realization = int(sel["seed"])
    strategy = sel["strategy"]
    topo = build_hex_topology(config.num_cells, config.rrh_per_cell,
                              config.inter_site_distance)
    seed = realization_seed(config.master_seed, users, realization)
    positions = drop_users(topo, users, seed)
    channel = draw_channel(topo, positions, config.params, seed)
    result = run_one(channel, strategy, rate, config)
    print(f"strategy={strategy} rate={rate:g} users={users} "
          f"realization={realization} seed={seed}")
    print(f"status={result.status.value}")
    if result.trace is not None and len(result.trace):
        cols = list(result.trace.csv_rows()[0].keys())
        print(" ".join(cols))
        for row in result.trace.csv_rows():
            print(" ".join(f"{row[c]:.6g}" if isinstance(row[c], float)
                           else str(row[c]) for c in cols))
    if result.power is not None:
        print(json.dumps(result.power.csv_row(), indent=1))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cranpower",
        description="Monte-Carlo energy-efficiency sweeps for downlink C-RAN")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute the configured sweep")
    p_run.add_argument("--config", help="JSON config path (defaults reproduce the paper setup)")
    p_run.add_argument("--seed", type=int, help="master seed override")
    p_run.add_argument("--realizations", type=int, help="realization count override")
    p_run.add_argument("--out", help="output directory override")
    p_run.set_defaults(func=cmd_run)

    p_val = sub.add_parser("validate", help="check a config file")
    p_val.add_argument("--config", required=True)
    p_val.set_defaults(func=cmd_validate)

    p_tr = sub.add_parser("trace", help="run one case verbosely")
    p_tr.add_argument("--config")
    p_tr.add_argument("--single", required=True,
                      metavar="rate=R,users=U,seed=S,strategy=X")
    p_tr.set_defaults(func=cmd_trace)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, IOError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
