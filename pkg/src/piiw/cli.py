"""Command-line entry point: ``python -m piiw <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from piiw.config import ALGORITHMS, ConfigError, ExperimentConfig, config_keys, load_config
from piiw.env import MapError, resolve_map
from piiw import experiments

log = logging.getLogger("piiw")

# every config key doubles as a --flag; these short names are accepted too
ALIASES = {"algorithm": ["--algo"]}


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="key = value config file; flags override it")
    group = parser.add_argument_group("config overrides")
    for key in config_keys():
        flag = "--" + key.replace("_", "-")
        names = [flag] + ([f"--{key}"] if "_" in key else []) + ALIASES.get(key, [])
        group.add_argument(*names, dest=f"cfg_{key}", metavar="VALUE", default=None)
    parser.add_argument(
        "--no-wall-time",
        action="store_true",
        help="log wall_ms as 0 so identical seeds give byte-identical CSVs",
    )
    parser.add_argument("-v", "--verbose", action="store_true")


def _resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    base = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {
        name[4:]: value
        for name, value in vars(args).items()
        if name.startswith("cfg_") and value is not None
    }
    if args.no_wall_time:
        overrides["record_wall_time"] = "false"
    return base.with_overrides(overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="piiw",
        description="Policy-guided width-based planning on key-door gridworlds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train every seed and write metrics CSVs")
    _add_config_flags(p)
    p.add_argument("--out", type=Path, default=Path("runs"), help="output directory")

    p = sub.add_parser("eval", help="run episodes with a frozen network")
    _add_config_flags(p)
    p.add_argument("--checkpoint", type=Path, help="parameters saved by train (.npz)")
    p.add_argument("--episodes", type=int, default=10)

    p = sub.add_parser("plan-once", help="one lookahead from the initial state")
    _add_config_flags(p)
    p.add_argument("--dump-tree", action="store_true", help="print the whole tree")

    p = sub.add_parser("depth-stats", help="longest unique trajectory of first lookaheads")
    _add_config_flags(p)
    p.add_argument("--runs", type=int, default=100)

    p = sub.add_parser("compare", help="several algorithms over several seeds into one CSV")
    _add_config_flags(p)
    p.add_argument(
        "--algorithms",
        default="pi-iw-basic,pi-iw-dynamic,rollout-iw,iw-bfs,alphazero",
        help=f"comma-separated subset of {', '.join(ALGORITHMS)}",
    )
    p.add_argument("--out", type=Path, default=Path("compare.csv"))
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = _resolve_config(args)
        resolve_map(config.map)  # fail before anything is written
        return COMMANDS[args.command](config, args)
    except (ConfigError, MapError) as exc:
        parser.error(str(exc))
    except OSError as exc:
        print(f"piiw: {exc}", file=sys.stderr)
        return 1


def _train(config: ExperimentConfig, args) -> int:
    results = experiments.run_training(config, args.out)
    for r in results:
        print(
            f"seed={r.seed} episodes={len(r.rows)} interactions={r.interactions} "
            f"solved_at={r.solved_at}"
        )
    return 0


def _eval(config: ExperimentConfig, args) -> int:
    if config.algorithm in experiments.NETWORK_ALGORITHMS and args.checkpoint is None:
        raise ConfigError(f"{config.algorithm} needs --checkpoint")
    rows = experiments.evaluate(config, args.checkpoint, args.episodes, config.seeds[0])
    for row in rows:
        print(f"episode={row['episode']} return={row['episode_return']:g} length={row['episode_length']}")
    mean = sum(r["episode_return"] for r in rows) / max(len(rows), 1)
    print(f"mean_return={mean:g}")
    return 0


def _plan_once(config: ExperimentConfig, args) -> int:
    summary = experiments.plan_once(config, config.seeds[0])
    tree = summary.pop("tree", None)
    print(json.dumps(summary, sort_keys=True))
    if args.dump_tree and tree:
        print(tree)
    return 0


def _depth_stats(config: ExperimentConfig, args) -> int:
    stats = experiments.depth_stats(config, args.runs)
    stats.pop("values")
    print(json.dumps(stats, sort_keys=True))
    return 0


def _compare(config: ExperimentConfig, args) -> int:
    algorithms = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    for algo in algorithms:
        if algo not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {algo!r}")
    rows = experiments.compare(config, algorithms, args.out)
    print(f"wrote {len(rows)} episodes to {args.out}")
    return 0


COMMANDS = {
    "train": _train,
    "eval": _eval,
    "plan-once": _plan_once,
    "depth-stats": _depth_stats,
    "compare": _compare,
}


if __name__ == "__main__":
    sys.exit(main())
