"""Online plan/learn/act loop for the width-based agents."""
from __future__ import annotations

import csv
import logging
import time
from collections import deque
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Optional

import numpy as np

from piiw.env import GridEnv, decode_image
from piiw.features import basic_features, basic_universe_size, dynamic_features
from piiw.network import PolicyNetwork, RMSProp, softmax
from piiw.planner import Lookahead, iw1_bfs, sample_action, softmax_policy_sampler, uniform_sampler
from piiw.tree import Node, SearchTree, backup_returns

log = logging.getLogger(__name__)

METRIC_COLUMNS = (
    "algorithm",
    "run_seed",
    "episode",
    "interactions",
    "episode_return",
    "episode_length",
    "mean_loss",
    "wall_ms",
)


class Transition(NamedTuple):
    observation: np.ndarray
    target: np.ndarray
    value: float = 0.0


class Dataset:
    """Bounded FIFO of transitions; the oldest entry is evicted first."""

    def __init__(self, capacity: int = 1000):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._items: deque[Transition] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[Transition]:
        return iter(self._items)

    def __getitem__(self, index: int) -> Transition:
        return self._items[index]

    def append(self, transition: Transition) -> None:
        target = np.asarray(transition.target)
        if np.any(target < 0) or abs(float(target.sum()) - 1.0) > 1e-6:
            raise ValueError("target must be a probability vector")
        self._items.append(transition)

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        """Uniform sampling with replacement."""
        idx = rng.integers(len(self._items), size=batch_size)
        return [self._items[i] for i in idx]


def induce_target_policy(
    root_returns: dict[int, float],
    n_actions: int,
    mode: str = "deterministic",
    tau: float = 1.0,
) -> np.ndarray:
    """Target distribution over actions from backed-up root returns.

    Actions without an expanded child get probability zero. The deterministic
    mode splits the mass evenly across exactly tied maxima.
    """
    if not root_returns:
        raise ValueError("lookahead expanded no root child; cannot induce a target policy")
    actions = np.array(sorted(root_returns))
    values = np.array([root_returns[a] for a in actions], dtype=np.float64)
    target = np.zeros(n_actions)
    if mode == "deterministic":
        best = actions[values == values.max()]
        target[best] = 1.0 / len(best)
    elif mode == "softmax":
        target[actions] = softmax(values, tau)
    else:
        raise ValueError(f"unknown target mode {mode!r}")
    return target


def train_step(
    dataset: Dataset,
    network: PolicyNetwork,
    optimizer: RMSProp,
    rng: np.random.Generator,
    batch_size: int = 32,
    l2: float = 1e-3,
    value_loss_factor: Optional[float] = None,
) -> Optional[float]:
    """One gradient step on a uniformly sampled batch; returns the loss, or None if empty."""
    if len(dataset) == 0:
        log.debug("train_step skipped: empty dataset")
        return None
    batch = dataset.sample(batch_size, rng)
    observations = np.stack([t.observation for t in batch])
    targets = np.stack([t.target for t in batch])
    kwargs = {}
    if value_loss_factor is not None:
        kwargs = dict(
            value_targets=np.array([t.value for t in batch]), value_loss_factor=value_loss_factor
        )
    loss, grads = network.loss_and_grads(observations, targets, l2, **kwargs)
    optimizer.step(network, grads)
    return loss


@dataclass
class StepInfo:
    action: int
    reward: float
    terminal: bool
    expansions: int
    loss: Optional[float]


class WidthAgent:
    """π-IW(1) and its non-learning baselines behind one plan/learn/act step.

    ``planner`` is ``"rollout"`` (Rollout IW lookahead, guided by the network
    when one is given) or ``"bfs"`` (breadth-first IW(1)). ``features`` picks
    BASIC tile atoms or the binarised last hidden layer of the network.
    """

    def __init__(
        self,
        env: GridEnv,
        rng: np.random.Generator,
        network: Optional[PolicyNetwork] = None,
        features: str = "basic",
        planner: str = "rollout",
        learn: bool = True,
        budget: int = 50,
        budget_mode: str = "tree",
        gamma: float = 0.99,
        tau: float = 1.0,
        target_mode: str = "deterministic",
        target_tau: float = 1.0,
        dataset_size: int = 1000,
        batch_size: int = 32,
        l2: float = 1e-3,
        optimizer: Optional[RMSProp] = None,
    ):
        if features == "dynamic" and network is None:
            raise ValueError("dynamic features need a network")
        if planner not in ("rollout", "bfs"):
            raise ValueError(f"unknown planner {planner!r}")
        self.env = env
        self.rng = rng
        self.network = network
        self.features = features
        self.planner = planner
        self.learn = learn and network is not None
        self.budget = budget
        self.budget_mode = budget_mode
        self.gamma = gamma
        self.target_mode = target_mode
        self.target_tau = target_tau
        self.batch_size = batch_size
        self.l2 = l2
        self.optimizer = optimizer or RMSProp()
        self.dataset = Dataset(dataset_size)
        if features == "basic":
            shape = (env.grid.rows, env.grid.cols, 5)
            self.feature_size = basic_universe_size(shape)
        else:
            self.feature_size = network.arch.hidden_size
        sampler = softmax_policy_sampler(tau) if network is not None else uniform_sampler()
        self.lookahead = Lookahead(sampler, budget, self.feature_size, rng, budget_mode)
        self.tree: Optional[SearchTree] = None

    def annotate(self, node: Node) -> None:
        if self.network is not None:
            out = self.network.forward(node.observation)
            node.logits = out.logits
            node.hidden = out.hidden
        if self.features == "dynamic":
            node.atoms = dynamic_features(node.hidden)
        elif self.env.obs_mode == "image":
            node.atoms = basic_features(decode_image(node.observation, self.env.grid.rows, self.env.grid.cols))
        else:
            node.atoms = basic_features(node.observation)

    def new_tree(self) -> SearchTree:
        state, obs = self.env.reset()
        return SearchTree(self.env, state, obs, self.annotate)

    def plan(self) -> int:
        if self.planner == "bfs":
            return iw1_bfs(self.tree, self.budget, self.feature_size, self.budget_mode)
        return self.lookahead.run(self.tree)

    def step(self) -> StepInfo:
        if self.tree is None:
            self.tree = self.new_tree()
        expansions = self.plan()
        returns = backup_returns(self.tree, self.gamma)
        target = induce_target_policy(returns, self.env.n_actions, self.target_mode, self.target_tau)
        loss = None
        if self.learn:
            self.dataset.append(Transition(self.tree.root.observation, target))
            loss = train_step(
                self.dataset, self.network, self.optimizer, self.rng, self.batch_size, self.l2
            )
        action = sample_action(target, self.rng)
        child = self.tree.root.children[action]
        self.tree.advance(action)
        if child.terminal:
            self.tree = None
        return StepInfo(action, child.reward, child.terminal, expansions, loss)

    def end_episode(self) -> None:
        self.tree = None


@dataclass
class EpisodeResult:
    episode_return: float
    episode_length: int
    mean_loss: float
    wall_ms: float
    complete: bool


def run_episode(agent, interaction_budget: Optional[float] = None) -> EpisodeResult:
    """Drive ``agent`` until a terminal step (or until the interaction budget runs out)."""
    start = time.perf_counter()
    total, length, losses = 0.0, 0, []
    complete = False
    while interaction_budget is None or agent.env.interactions < interaction_budget:
        info = agent.step()
        total += info.reward
        length += 1
        if info.loss is not None:
            losses.append(info.loss)
        if info.terminal:
            complete = True
            break
    if not complete:
        agent.end_episode()
    return EpisodeResult(
        total,
        length,
        float(np.mean(losses)) if losses else float("nan"),
        (time.perf_counter() - start) * 1000.0,
        complete,
    )


def run_agent(
    agent,
    interaction_budget: float,
    algorithm: str = "",
    run_seed: int = 0,
    record_wall_time: bool = True,
    stop_avg_return: Optional[float] = None,
    stop_window: int = 10,
) -> list[dict]:
    """Run episodes until ``interaction_budget`` simulator steps have been used.

    An episode cut short by the budget is not logged. With ``stop_avg_return``
    the run also ends once the mean return of the last ``stop_window``
    episodes reaches it.
    """
    rows: list[dict] = []
    returns: deque[float] = deque(maxlen=stop_window)
    episode = 0
    while agent.env.interactions < interaction_budget:
        result = run_episode(agent, interaction_budget)
        if not result.complete:
            break
        rows.append(
            {
                "algorithm": algorithm,
                "run_seed": run_seed,
                "episode": episode,
                "interactions": agent.env.interactions,
                "episode_return": result.episode_return,
                "episode_length": result.episode_length,
                "mean_loss": result.mean_loss,
                "wall_ms": round(result.wall_ms, 3) if record_wall_time else 0,
            }
        )
        episode += 1
        returns.append(result.episode_return)
        if (
            stop_avg_return is not None
            and len(returns) == stop_window
            and np.mean(returns) >= stop_avg_return
        ):
            break
    return rows


def write_metrics(rows: list[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row[k]) for k in METRIC_COLUMNS})


def read_metrics(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for key in ("run_seed", "episode", "interactions", "episode_length"):
            row[key] = int(row[key])
        for key in ("episode_return", "mean_loss", "wall_ms"):
            row[key] = float(row[key])
    return rows


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)
