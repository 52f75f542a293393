"""Width-based lookahead: policy-guided Rollout IW(1) and breadth-first IW(1)."""
from __future__ import annotations

from collections import deque
from typing import Callable, Optional

import numpy as np

from piiw.features import NoveltyTable, new_table
from piiw.network import softmax
from piiw.tree import Node, SearchTree, initialize_labels, solve_and_propagate

# Maps a node to a distribution over actions with solved actions masked out,
# or None when every action of the node is solved.
ActionSampler = Callable[[Node, int], Optional[np.ndarray]]


def solved_mask(node: Node, n_actions: int) -> np.ndarray:
    mask = np.zeros(n_actions, dtype=bool)
    for action, child in node.children.items():
        mask[action] = child.solved
    return mask


def mask_and_normalize(probs: np.ndarray, mask: np.ndarray) -> Optional[np.ndarray]:
    if not mask.any():
        return probs
    probs = np.where(mask, 0.0, probs)
    total = probs.sum()
    if total <= 0.0:
        if mask.all():
            return None
        # every unsolved action underflowed to zero probability
        probs = (~mask).astype(np.float64)
        total = probs.sum()
    return probs / total


def uniform_sampler() -> ActionSampler:
    uniform = {}

    def sample_probs(node: Node, n_actions: int) -> Optional[np.ndarray]:
        if n_actions not in uniform:
            uniform[n_actions] = np.full(n_actions, 1.0 / n_actions)
        if not node.children:
            return uniform[n_actions]
        return mask_and_normalize(uniform[n_actions], solved_mask(node, n_actions))

    return sample_probs


def softmax_policy_sampler(tau: float = 1.0) -> ActionSampler:
    """Softmax over the logits cached on each node at expansion time."""
    if tau <= 0:
        raise ValueError("temperature must be positive")

    def sample_probs(node: Node, n_actions: int) -> Optional[np.ndarray]:
        if node.prior is None:
            if node.logits is None:
                raise ValueError("node has no cached logits; annotate nodes with the network")
            if not np.all(np.isfinite(node.logits)):
                raise FloatingPointError("non-finite logits")
            node.prior = softmax(node.logits, tau)
        if not node.children:
            return node.prior
        return mask_and_normalize(node.prior, solved_mask(node, n_actions))

    return sample_probs


def sample_action(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw, so equal distributions consume the RNG identically."""
    u = rng.random()
    acc = 0.0
    last = 0
    for action, p in enumerate(probs.tolist()):
        if p > 0.0:
            acc += p
            last = action
            if u < acc:
                return action
    return last


BUDGET_MODES = ("tree", "expansions")


def _check_budget(budget: int, budget_mode: str) -> None:
    if budget <= 0:
        raise ValueError("budget must be positive")
    if budget_mode not in BUDGET_MODES:
        raise ValueError(f"unknown budget mode {budget_mode!r}")


def within_budget(tree: SearchTree, expansions: int, budget: int, budget_mode: str) -> bool:
    """``tree`` mode caps the tree size (cached nodes included); ``expansions`` caps new nodes."""
    if budget_mode == "tree":
        return tree.node_count < budget
    return expansions < budget


class Lookahead:
    """One planning step of Rollout IW(1) with a pluggable action sampler.

    Either mode guarantees at most ``budget`` new nodes (simulator calls) per
    lookahead.
    """

    def __init__(
        self,
        sampler: ActionSampler,
        budget: int,
        feature_size: int,
        rng: np.random.Generator,
        budget_mode: str = "tree",
    ):
        _check_budget(budget, budget_mode)
        self.sampler = sampler
        self.budget = budget
        self.budget_mode = budget_mode
        self.feature_size = feature_size
        self.rng = rng
        self.expansions = 0
        self.table: NoveltyTable = new_table(feature_size)
        self._tree: Optional[SearchTree] = None

    def within_budget(self) -> bool:
        return within_budget(self._tree, self.expansions, self.budget, self.budget_mode)

    def run(self, tree: SearchTree) -> int:
        initialize_labels(tree)
        self.table = new_table(self.feature_size)
        self.expansions = 0
        self._tree = tree
        while self.within_budget() and not tree.root.solved:
            node, action = self.select(tree)
            if action is not None:
                self.rollout(tree, node, action)
        return self.expansions

    def select(self, tree: SearchTree) -> tuple[Node, Optional[int]]:
        node = tree.root
        n_actions = tree.n_actions
        while True:
            # the root is always worth expanding, even with an empty atom set
            # (a dynamic-feature state whose hidden units are all zero)
            novel = node is tree.root or self.table.check(node.atoms, node.depth, is_new=False)
            if node.terminal or not novel:
                solve_and_propagate(node, n_actions)
                return node, None
            probs = self.sampler(node, n_actions)
            if probs is None:
                solve_and_propagate(node, n_actions)
                return node, None
            action = sample_action(probs, self.rng)
            child = node.children.get(action)
            if child is None:
                return node, action
            node = child

    def rollout(self, tree: SearchTree, node: Node, action: int) -> None:
        n_actions = tree.n_actions
        while self.within_budget():
            node = tree.expand(node, action)
            self.expansions += 1
            node.solved = False
            novel = self.table.check(node.atoms, node.depth, is_new=True)
            if node.terminal or not novel:
                solve_and_propagate(node, n_actions)
                return
            probs = self.sampler(node, n_actions)
            if probs is None:
                solve_and_propagate(node, n_actions)
                return
            action = sample_action(probs, self.rng)


def lookahead(
    tree: SearchTree,
    sampler: ActionSampler,
    budget: int,
    feature_size: int,
    rng: np.random.Generator,
    budget_mode: str = "tree",
) -> int:
    """Expand ``tree`` in place; returns the number of expansions."""
    return Lookahead(sampler, budget, feature_size, rng, budget_mode).run(tree)


def iw1_bfs(tree: SearchTree, budget: int, feature_size: int, budget_mode: str = "tree") -> int:
    """Breadth-first IW(1) with plain (depth-free) novelty.

    Children are generated in fixed action order. A generated node is kept for
    expansion only if one of its atoms is seen for the first time; pruned and
    terminal nodes stay in the tree as solved leaves. Cached children are
    re-tested but cost no simulator call. Returns the number of expansions.
    """
    _check_budget(budget, budget_mode)
    initialize_labels(tree)
    table = new_table(feature_size)
    table.check(tree.root.atoms, 0, is_new=True)
    if tree.root.terminal:
        return 0
    queue = deque([tree.root])
    expansions = 0
    while queue:
        node = queue.popleft()
        for action in range(tree.n_actions):
            child = node.children.get(action)
            if child is None:
                if not within_budget(tree, expansions, budget, budget_mode):
                    return expansions
                child = tree.expand(node, action)
                expansions += 1
            novel = table.check(child.atoms, 0, is_new=True)
            if child.terminal or not novel:
                child.solved = True
                continue
            queue.append(child)
    return expansions
