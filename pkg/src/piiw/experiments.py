"""Experiment orchestration shared by the CLI and the acceptance tests."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from piiw.config import ExperimentConfig
from piiw.env import GridEnv, resolve_map
from piiw.learner import WidthAgent, read_metrics, run_agent, run_episode, write_metrics
from piiw.mcts import AlphaZeroAgent
from piiw.network import Architecture, PolicyNetwork, RMSProp
from piiw.stats import average_curves, longest_unique_trajectory, mean_std, solved_at
from piiw.tree import backup_returns

log = logging.getLogger(__name__)

NETWORK_ALGORITHMS = ("pi-iw-basic", "pi-iw-dynamic", "alphazero")


def make_env(config: ExperimentConfig) -> GridEnv:
    return GridEnv(resolve_map(config.map), obs_mode=config.obs_mode, max_steps=config.max_steps)


def make_architecture(config: ExperimentConfig, env: GridEnv) -> Architecture:
    value_head = config.algorithm == "alphazero"
    if config.obs_mode == "image":
        return Architecture.image(env.observation_shape, env.n_actions, value_head=value_head)
    return Architecture.compact(env.observation_shape, env.n_actions, config.hidden, value_head)


def make_optimizer(config: ExperimentConfig) -> RMSProp:
    return RMSProp(
        lr=config.learning_rate,
        decay=config.rmsprop_decay,
        eps=config.rmsprop_epsilon,
        clip_norm=config.clip_grad_norm,
    )


def build_agent(
    config: ExperimentConfig,
    seed: int,
    env: Optional[GridEnv] = None,
    network: Optional[PolicyNetwork] = None,
    learn: bool = True,
):
    """Construct the agent for ``config.algorithm``; all randomness flows from ``seed``."""
    env = env or make_env(config)
    rng = np.random.default_rng(seed)
    algo = config.algorithm
    if algo in NETWORK_ALGORITHMS and network is None:
        network = PolicyNetwork.initialize(make_architecture(config, env), rng)
    common = dict(
        budget=config.tree_budget,
        gamma=config.discount_factor,
        dataset_size=config.dataset_size,
        batch_size=config.batch_size,
        l2=config.l2_factor,
        optimizer=make_optimizer(config),
    )
    if algo == "alphazero":
        return AlphaZeroAgent(
            env,
            rng,
            network,
            p_uct=config.p_uct,
            dirichlet_alpha=config.dirichlet_alpha,
            noise_factor=config.noise_factor,
            tau=1.0,
            tree_tau=config.tree_temperature,
            value_loss_factor=config.value_loss_factor,
            learn=learn,
            **common,
        )
    if algo in ("pi-iw-basic", "pi-iw-dynamic"):
        features = "basic" if algo == "pi-iw-basic" else "dynamic"
        return WidthAgent(
            env,
            rng,
            network,
            features=features,
            learn=learn,
            budget_mode=config.budget_mode,
            tau=config.tree_temperature,
            target_mode=config.target_mode,
            target_tau=config.target_temperature,
            **common,
        )
    planner = "bfs" if algo == "iw-bfs" else "rollout"
    return WidthAgent(
        env,
        rng,
        None,
        features="basic",
        planner=planner,
        learn=False,
        budget_mode=config.budget_mode,
        target_mode=config.target_mode,
        target_tau=config.target_temperature,
        **common,
    )


@dataclass
class RunResult:
    seed: int
    rows: list[dict]
    interactions: int
    solved_at: Optional[int]
    agent: object


def train_seed(config: ExperimentConfig, seed: int) -> RunResult:
    agent = build_agent(config, seed)
    rows = run_agent(
        agent,
        config.interactions,
        algorithm=config.algorithm,
        run_seed=seed,
        record_wall_time=config.record_wall_time,
        stop_avg_return=config.stop_avg_return,
    )
    return RunResult(seed, rows, agent.env.interactions, solved_at(rows), agent)


def run_training(config: ExperimentConfig, out_dir) -> list[RunResult]:
    """Train every seed, writing per-seed CSVs, checkpoints, the resolved config and a mean curve."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(config.serialize(), encoding="utf-8")
    results = []
    for seed in config.seeds:
        result = train_seed(config, seed)
        stem = f"{config.algorithm}_seed{seed}"
        write_metrics(result.rows, out / f"{stem}.csv")
        network = getattr(result.agent, "network", None)
        if network is not None:
            network.save(out / f"{stem}.npz")
        log.info(
            "seed %d: %d episodes, %d interactions, solved at %s",
            seed,
            len(result.rows),
            result.interactions,
            result.solved_at,
        )
        results.append(result)
    write_curve([r.rows for r in results], config.interactions, out / f"{config.algorithm}_mean.csv")
    return results


CURVE_COLUMNS = ("interactions", "mean_return", "min_return", "max_return", "mean_length")


def write_curve(runs: Sequence[Sequence[dict]], budget: float, path, points: int = 100) -> None:
    grid = np.linspace(budget / points, budget, points) if budget > 0 else np.zeros(0)
    curve = average_curves(runs, grid)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CURVE_COLUMNS)
        for i in range(grid.size):
            writer.writerow([f"{curve[c][i]:.6g}" for c in CURVE_COLUMNS])


def compare(config: ExperimentConfig, algorithms: Sequence[str], out_path) -> list[dict]:
    """Run each algorithm over every seed and write all episodes to one CSV."""
    rows: list[dict] = []
    for algo in algorithms:
        sub = config.replace(algorithm=algo)
        for seed in sub.seeds:
            rows.extend(train_seed(sub, seed).rows)
    write_metrics(rows, out_path)
    return rows


def first_lookahead(config: ExperimentConfig, seed: int):
    """One planning step from reset with a freshly initialised network; returns (agent, tree root, expansions)."""
    agent = build_agent(config, seed, learn=False)
    if isinstance(agent, AlphaZeroAgent):
        expansions = agent.plan()
        return agent, agent.root, expansions
    agent.tree = agent.new_tree()
    expansions = agent.plan()
    return agent, agent.tree.root, expansions


def depth_stats(config: ExperimentConfig, runs: int = 100, first_seed: int = 0) -> dict:
    """Longest unique trajectory of the first lookahead, over ``runs`` independent networks."""
    nodes = []
    for seed in range(first_seed, first_seed + runs):
        _, root, _ = first_lookahead(config, seed)
        nodes.append(longest_unique_trajectory(root).nodes)
    mean, std = mean_std(nodes)
    edges_mean, edges_std = mean_std([n - 1 for n in nodes])
    return {
        "algorithm": config.algorithm,
        "runs": runs,
        "mean_nodes": mean,
        "std_nodes": std,
        "mean_edges": edges_mean,
        "std_edges": edges_std,
        "values": nodes,
    }


def plan_once(config: ExperimentConfig, seed: int) -> dict:
    agent, root, expansions = first_lookahead(config, seed)
    summary = {
        "algorithm": config.algorithm,
        "expansions": expansions,
        "budget": config.tree_budget,
        "longest_unique_trajectory": longest_unique_trajectory(root).nodes,
    }
    if isinstance(agent, AlphaZeroAgent):
        summary["root_visits"] = [int(n) for n in root.N]
        return summary
    tree = agent.tree
    returns = backup_returns(tree, config.discount_factor)
    summary.update(
        nodes=tree.node_count,
        max_depth=max(n.depth for n in tree),
        root_solved=bool(tree.root.solved),
        goal_found=any(n.reward > 0 for n in tree),
        root_returns={int(a): round(r, 6) for a, r in returns.items()},
        tree=tree.dump(),
    )
    return summary


def evaluate(
    config: ExperimentConfig, checkpoint, episodes: int = 10, seed: int = 0
) -> list[dict]:
    """Run ``episodes`` episodes with a frozen network loaded from ``checkpoint``."""
    network = PolicyNetwork.load(checkpoint) if checkpoint else None
    agent = build_agent(config, seed, network=network, learn=False)
    rows = []
    for episode in range(episodes):
        result = run_episode(agent)
        rows.append(
            {
                "episode": episode,
                "episode_return": result.episode_return,
                "episode_length": result.episode_length,
                "interactions": agent.env.interactions,
            }
        )
    return rows


def offline_goal_reached(agent: WidthAgent, budget: int = 100_000) -> bool:
    """One planning step from reset with a large budget; True if any node collects the goal reward.

    The lookahead runs until the root is solved, so this tests whether the
    feature set lets width-1 search reach the goal at all.
    """
    saved = agent.lookahead.budget, agent.budget
    agent.lookahead.budget = agent.budget = budget
    try:
        agent.tree = agent.new_tree()
        agent.plan()
        found = any(node.reward > 0 for node in agent.tree)
    finally:
        agent.lookahead.budget, agent.budget = saved
        agent.tree = None
    return found


__all__ = [
    "build_agent",
    "compare",
    "depth_stats",
    "evaluate",
    "first_lookahead",
    "make_env",
    "offline_goal_reached",
    "plan_once",
    "read_metrics",
    "run_training",
    "train_seed",
]
