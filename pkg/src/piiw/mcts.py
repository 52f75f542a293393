"""AlphaZero-style PUCT search adapted to single-agent MDPs with edge rewards."""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from piiw.env import ContractError, GridEnv, SimulatorState
from piiw.learner import Dataset, StepInfo, Transition, train_step
from piiw.network import PolicyNetwork, RMSProp, softmax
from piiw.planner import sample_action


class MctsNode:
    __slots__ = (
        "state",
        "observation",
        "reward",
        "terminal",
        "children",
        "N",
        "W",
        "P",
        "value",
        "evaluated",
    )

    def __init__(
        self,
        state: SimulatorState,
        observation: np.ndarray,
        n_actions: int,
        reward: float = 0.0,
        terminal: bool = False,
    ):
        self.state = state
        self.observation = observation
        self.reward = reward
        self.terminal = terminal
        self.children: dict[int, MctsNode] = {}
        self.N = np.zeros(n_actions)
        self.W = np.zeros(n_actions)
        self.P = np.full(n_actions, 1.0 / n_actions)
        self.value = 0.0
        self.evaluated = False

    @property
    def Q(self) -> np.ndarray:
        """Mean backed-up value per action; zero for unvisited actions."""
        return np.divide(self.W, self.N, out=np.zeros_like(self.W), where=self.N > 0)


def puct_scores(node: MctsNode, p_uct: float, priors: Optional[np.ndarray] = None) -> np.ndarray:
    priors = node.P if priors is None else priors
    return node.Q + p_uct * priors * np.sqrt(node.N.sum()) / (1.0 + node.N)


def puct_select(
    node: MctsNode,
    p_uct: float,
    rng: np.random.Generator,
    priors: Optional[np.ndarray] = None,
) -> int:
    scores = puct_scores(node, p_uct, priors)
    best = np.flatnonzero(scores == scores.max())
    return int(best[0]) if len(best) == 1 else int(rng.choice(best))


def mcts_backup(path: Sequence[tuple[MctsNode, int]], leaf_value: float, gamma: float) -> None:
    """Credit every edge on ``path`` with the discounted rewards below it plus the leaf value.

    ``path`` lists ``(node, action)`` pairs from the root down; the last
    action leads to the evaluated leaf.
    """
    ret = leaf_value
    for node, action in reversed(path):
        ret = node.children[action].reward + gamma * ret
        node.W[action] += ret
        node.N[action] += 1


def visit_target(node: MctsNode, tau: float = 1.0) -> np.ndarray:
    counts = node.N ** (1.0 / tau)
    total = counts.sum()
    if total <= 0:
        raise ValueError("root has no visits")
    return counts / total


class AlphaZeroAgent:
    """PUCT planner with a policy/value network, trained once per executed step.

    ``budget`` is the number of simulations per planning step; each simulation
    adds at most one node to the tree.
    """

    def __init__(
        self,
        env: GridEnv,
        rng: np.random.Generator,
        network: PolicyNetwork,
        budget: int = 50,
        gamma: float = 0.99,
        p_uct: float = 0.5,
        dirichlet_alpha: float = 0.03,
        noise_factor: float = 0.25,
        tau: float = 1.0,
        tree_tau: float = 1.0,
        value_loss_factor: float = 1.0,
        dataset_size: int = 1000,
        batch_size: int = 32,
        l2: float = 1e-3,
        learn: bool = True,
        optimizer: Optional[RMSProp] = None,
    ):
        if not network.arch.value_head:
            raise ValueError("the MCTS baseline needs a network with a value head")
        self.env = env
        self.rng = rng
        self.network = network
        self.budget = budget
        self.gamma = gamma
        self.p_uct = p_uct
        self.dirichlet_alpha = dirichlet_alpha
        self.noise_factor = noise_factor
        self.tau = tau
        self.tree_tau = tree_tau
        self.value_loss_factor = value_loss_factor
        self.batch_size = batch_size
        self.l2 = l2
        self.learn = learn
        self.optimizer = optimizer or RMSProp()
        self.dataset = Dataset(dataset_size)
        self.root: Optional[MctsNode] = None
        self.root_priors: Optional[np.ndarray] = None
        self._episode: list[tuple[np.ndarray, np.ndarray, float]] = []

    def evaluate(self, node: MctsNode) -> None:
        out = self.network.forward(node.observation)
        node.P = softmax(out.logits, self.tree_tau)
        node.value = float(out.value)
        node.evaluated = True

    def new_root(self) -> MctsNode:
        state, obs = self.env.reset()
        return MctsNode(state, obs, self.env.n_actions)

    def expand(self, node: MctsNode, action: int) -> MctsNode:
        if node.terminal:
            raise ContractError("cannot expand a terminal node")
        state, result = self.env.step(self.env.clone_state(node.state), action)
        child = MctsNode(state, result.observation, self.env.n_actions, result.reward, result.terminal)
        if not child.terminal:
            self.evaluate(child)
        node.children[action] = child
        return child

    def simulate(self, root: MctsNode) -> None:
        node, path = root, []
        while True:
            if node.terminal:
                leaf_value = 0.0
                break
            priors = self.root_priors if node is root else None
            action = puct_select(node, self.p_uct, self.rng, priors)
            path.append((node, action))
            child = node.children.get(action)
            if child is None:
                child = self.expand(node, action)
                leaf_value = 0.0 if child.terminal else child.value
                break
            node = child
        mcts_backup(path, leaf_value, self.gamma)

    def plan(self) -> int:
        """Run one planning step from the current root; returns simulator calls made."""
        if self.root is None:
            self.root = self.new_root()
        root = self.root
        if not root.evaluated:
            self.evaluate(root)
        noise = self.rng.dirichlet(np.full(self.env.n_actions, self.dirichlet_alpha))
        self.root_priors = (1.0 - self.noise_factor) * root.P + self.noise_factor * noise
        before = self.env.interactions
        for _ in range(self.budget):
            self.simulate(root)
        return self.env.interactions - before

    def step(self) -> StepInfo:
        expansions = self.plan()
        root = self.root
        target = visit_target(root, self.tau)
        loss = None
        if self.learn:
            loss = train_step(
                self.dataset,
                self.network,
                self.optimizer,
                self.rng,
                self.batch_size,
                self.l2,
                value_loss_factor=self.value_loss_factor,
            )
        action = sample_action(target, self.rng)
        child = root.children[action]
        self._episode.append((root.observation, target, child.reward))
        self.root = child
        if child.terminal:
            self._finish_episode()
            self.root = None
        return StepInfo(action, child.reward, child.terminal, expansions, loss)

    def _finish_episode(self) -> None:
        if self.learn:
            for obs, target, z in zip(*_with_returns(self._episode, self.gamma)):
                self.dataset.append(Transition(obs, target, z))
        self._episode = []

    def end_episode(self) -> None:
        self._episode = []
        self.root = None


def discounted_returns_to_go(rewards: Sequence[float], gamma: float) -> np.ndarray:
    out = np.zeros(len(rewards))
    ret = 0.0
    for t in reversed(range(len(rewards))):
        ret = rewards[t] + gamma * ret
        out[t] = ret
    return out


def _with_returns(episode, gamma):
    observations = [obs for obs, _, _ in episode]
    targets = [target for _, target, _ in episode]
    z = discounted_returns_to_go([r for _, _, r in episode], gamma)
    return observations, targets, z
