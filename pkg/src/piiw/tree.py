"""Cached lookahead tree shared by the width-based planners."""
from __future__ import annotations

from collections import deque
from typing import Callable, Iterator, Optional

import numpy as np

from piiw.env import ContractError, GridEnv, SimulatorState


class Node:
    __slots__ = (
        "state",
        "observation",
        "atoms",
        "reward",
        "terminal",
        "solved",
        "depth",
        "children",
        "parent",
        "action",
        "logits",
        "hidden",
        "prior",
        "R",
    )

    def __init__(
        self,
        state: SimulatorState,
        observation: np.ndarray,
        reward: float = 0.0,
        terminal: bool = False,
        depth: int = 0,
        parent: Optional["Node"] = None,
        action: Optional[int] = None,
    ):
        self.state = state
        self.observation = observation
        self.reward = reward
        self.terminal = terminal
        self.depth = depth
        self.parent = parent
        self.action = action
        self.solved = False
        self.children: dict[int, Node] = {}
        self.atoms = np.empty(0, dtype=np.int64)
        self.logits: Optional[np.ndarray] = None
        self.hidden: Optional[np.ndarray] = None
        self.prior: Optional[np.ndarray] = None  # sampler scratch, derived from logits
        self.R = 0.0

    def __repr__(self) -> str:
        return (
            f"Node(depth={self.depth}, action={self.action}, reward={self.reward}, "
            f"terminal={self.terminal}, solved={self.solved}, children={sorted(self.children)})"
        )


Annotator = Callable[[Node], None]


def _no_annotation(node: Node) -> None:
    pass


class SearchTree:
    """A rooted tree of simulator snapshots.

    ``annotate`` is called once on every node the tree creates (root
    included) and is expected to fill ``node.atoms`` and, for policy-guided
    search, ``node.logits``/``node.hidden``.
    """

    def __init__(
        self,
        env: GridEnv,
        root_state: SimulatorState,
        root_observation: np.ndarray,
        annotate: Annotator = _no_annotation,
    ):
        self.env = env
        self.annotate = annotate
        self.root = Node(root_state, root_observation, terminal=root_state.terminal)
        annotate(self.root)
        self.node_count = 1

    @property
    def n_actions(self) -> int:
        return self.env.n_actions

    def __iter__(self) -> Iterator[Node]:
        return self.iter_breadth_first()

    def iter_breadth_first(self, start: Optional[Node] = None) -> Iterator[Node]:
        queue = deque([start or self.root])
        while queue:
            node = queue.popleft()
            yield node
            queue.extend(node.children[a] for a in sorted(node.children))

    def expand(self, parent: Node, action: int) -> Node:
        if parent.terminal:
            raise ContractError("cannot expand a terminal node")
        if action in parent.children:
            raise ContractError(f"action {action} already expanded at this node")
        state, result = self.env.step(self.env.clone_state(parent.state), action)
        child = Node(
            state,
            result.observation,
            reward=result.reward,
            terminal=result.terminal,
            depth=parent.depth + 1,
            parent=parent,
            action=action,
        )
        self.annotate(child)
        parent.children[action] = child
        self.node_count += 1
        return child

    def advance(self, action: int) -> "SearchTree":
        """Re-root the tree at the child reached by ``action``; other branches are dropped."""
        child = self.root.children.get(action)
        if child is None:
            child = self.expand(self.root, action)
        child.parent = None
        child.action = None
        self.root = child
        count = 0
        for node in self.iter_breadth_first():
            node.depth = 0 if node.parent is None else node.parent.depth + 1
            count += 1
        self.node_count = count
        return self

    def count_nodes(self) -> int:
        return sum(1 for _ in self.iter_breadth_first())

    def dump(self) -> str:
        """Indented text rendering used by golden-file and reproducibility tests."""
        lines = []
        stack = [(self.root, 0)]
        while stack:
            node, indent = stack.pop()
            action = "root" if node.action is None else str(node.action)
            lines.append(
                f"{'  ' * indent}{action} r={node.reward:g} d={node.depth} "
                f"solved={int(node.solved)} R={node.R:.6g}"
            )
            stack.extend((node.children[a], indent + 1) for a in sorted(node.children, reverse=True))
        return "\n".join(lines)


def expand_node(tree: SearchTree, parent: Node, action: int) -> Node:
    return tree.expand(parent, action)


def advance_root(tree: SearchTree, action: int) -> SearchTree:
    return tree.advance(action)


def backup_returns(tree: SearchTree, gamma: float) -> dict[int, float]:
    """Discounted max-backup ``R = r + gamma * max_child R``; leaves keep ``R = r``.

    Returns the backed-up value of every expanded root action.
    """
    order = list(tree.iter_breadth_first())
    for node in reversed(order):
        if node.children:
            node.R = node.reward + gamma * max(c.R for c in node.children.values())
        else:
            node.R = node.reward
    return {a: child.R for a, child in sorted(tree.root.children.items())}


def initialize_labels(tree: SearchTree) -> None:
    for node in tree.iter_breadth_first():
        node.solved = node.terminal


def solve_and_propagate(node: Node, n_actions: int) -> None:
    """Mark ``node`` solved and climb while every action of the parent is expanded and solved."""
    node.solved = True
    parent = node.parent
    while parent is not None:
        if len(parent.children) < n_actions:
            break
        if not all(child.solved for child in parent.children.values()):
            break
        parent.solved = True
        parent = parent.parent
