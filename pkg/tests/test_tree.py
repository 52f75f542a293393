import numpy as np
import pytest

from piiw.env import DOWN, NOOP, RIGHT, UP, ContractError, GridEnv, StepResult, builtin_map
from piiw.tree import (
    Node,
    SearchTree,
    advance_root,
    backup_returns,
    expand_node,
    initialize_labels,
    solve_and_propagate,
)


class Path(tuple):
    """Abstract state: the action sequence from the root."""

    terminal = False


class TableEnv:
    """Abstract simulator whose rewards come from a lookup keyed by the action path."""

    def __init__(self, rewards, n_actions=3, terminal=frozenset()):
        self.rewards = rewards
        self.terminal = terminal
        self.n_actions = n_actions
        self.interactions = 0

    @staticmethod
    def clone_state(state):
        return state

    def step(self, state, action):
        self.interactions += 1
        path = Path(state + (action,))
        return path, StepResult(np.zeros(1), self.rewards.get(path, 0.0), path in self.terminal)


def random_tree(rng, max_nodes=50, n_actions=3):
    env = TableEnv({}, n_actions)
    tree = SearchTree(env, Path(), np.zeros(1))
    nodes = [tree.root]
    target = int(rng.integers(1, max_nodes + 1))
    while tree.node_count < target:
        parent = nodes[int(rng.integers(len(nodes)))]
        free = [a for a in range(n_actions) if a not in parent.children]
        if not free:
            continue
        action = free[int(rng.integers(len(free)))]
        env.rewards[parent.state + (action,)] = float(rng.choice([-1.0, 0.0, 0.0, 1.0, rng.normal()]))
        nodes.append(tree.expand(parent, action))
    return tree


def all_paths(node, prefix=()):
    if not node.children:
        yield prefix
        return
    for child in node.children.values():
        yield from all_paths(child, prefix + (child.reward,))


def brute_force_returns(tree, gamma):
    out = {}
    for action, child in tree.root.children.items():
        best = -np.inf
        for path in all_paths(child, (child.reward,)):
            best = max(best, sum(r * gamma**i for i, r in enumerate(path)))
        out[action] = best
    return out


def test_backup_matches_brute_force_on_random_trees():
    rng = np.random.default_rng(7)
    for _ in range(200):
        tree = random_tree(rng)
        assert tree.count_nodes() <= 50
        got = backup_returns(tree, 0.99)
        want = brute_force_returns(tree, 0.99)
        assert got.keys() == want.keys()
        for a in want:
            assert abs(got[a] - want[a]) <= 1e-12


def test_backup_examples():
    env = TableEnv({(0,): 0.0, (0, 1): 1.0, (1,): -1.0})
    tree = SearchTree(env, Path(), np.zeros(1))
    a = tree.expand(tree.root, 0)
    tree.expand(a, 1)
    tree.expand(tree.root, 1)
    returns = backup_returns(tree, 0.99)
    assert returns == {0: pytest.approx(0.99, abs=1e-15), 1: -1.0}


def test_single_node_tree_has_no_returns():
    tree = SearchTree(TableEnv({}), Path(), np.zeros(1))
    assert backup_returns(tree, 0.99) == {}
    assert tree.root.R == 0.0


def test_expand_sets_depth_reward_and_parent(open_env):
    state, obs = open_env.reset()
    tree = SearchTree(open_env, state, obs)
    child = expand_node(tree, tree.root, UP)
    assert child.depth == 1 and child.reward == 0.0 and child.parent is tree.root
    assert child.action == UP and not child.solved
    assert tree.node_count == 2 and open_env.interactions == 1


def test_expand_twice_raises(open_env):
    state, obs = open_env.reset()
    tree = SearchTree(open_env, state, obs)
    tree.expand(tree.root, UP)
    with pytest.raises(ContractError):
        tree.expand(tree.root, UP)


def test_expand_terminal_raises(open_env):
    state, obs = open_env.reset()
    tree = SearchTree(open_env, state, obs)
    child = tree.expand(tree.root, UP)
    wall = tree.expand(child, UP)
    assert wall.terminal and wall.reward == -1.0
    with pytest.raises(ContractError):
        tree.expand(wall, NOOP)


def test_annotate_called_on_every_node(open_env):
    seen = []
    state, obs = open_env.reset()
    tree = SearchTree(open_env, state, obs, annotate=seen.append)
    tree.expand(tree.root, DOWN)
    assert seen[0] is tree.root and len(seen) == 2


def test_advance_reroots_and_recomputes_depths(open_env):
    state, obs = open_env.reset()
    tree = SearchTree(open_env, state, obs)
    right = tree.expand(tree.root, RIGHT)
    grand = tree.expand(right, DOWN)
    tree.expand(grand, DOWN)
    tree.expand(tree.root, UP)
    advance_root(tree, RIGHT)
    assert tree.root is right and right.parent is None
    assert right.depth == 0 and grand.depth == 1
    assert tree.node_count == 3 == tree.count_nodes()


def test_advance_on_unexpanded_action_expands_it(open_env):
    state, obs = open_env.reset()
    tree = SearchTree(open_env, state, obs)
    tree.advance(DOWN)
    assert tree.root.state.pos == (3, 2) and tree.node_count == 1
    assert open_env.interactions == 1


def test_initialize_labels_marks_only_terminals(open_env):
    state, obs = open_env.reset()
    tree = SearchTree(open_env, state, obs)
    up = tree.expand(tree.root, UP)
    wall = tree.expand(up, UP)
    for node in tree:
        node.solved = True
    initialize_labels(tree)
    assert wall.solved and not up.solved and not tree.root.solved


def test_propagation_requires_all_actions_solved():
    env = TableEnv({}, n_actions=2)
    tree = SearchTree(env, Path(), np.zeros(1))
    a = tree.expand(tree.root, 0)
    solve_and_propagate(a, 2)
    assert a.solved and not tree.root.solved
    b = tree.expand(tree.root, 1)
    c = tree.expand(b, 0)
    solve_and_propagate(c, 2)
    assert not b.solved and not tree.root.solved
    d = tree.expand(b, 1)
    solve_and_propagate(d, 2)
    assert b.solved and tree.root.solved


def test_propagation_stops_at_unsolved_sibling():
    env = TableEnv({}, n_actions=2)
    tree = SearchTree(env, Path(), np.zeros(1))
    a = tree.expand(tree.root, 0)
    tree.expand(tree.root, 1)
    x, y = tree.expand(a, 0), tree.expand(a, 1)
    solve_and_propagate(x, 2)
    solve_and_propagate(y, 2)
    assert a.solved and not tree.root.solved


def test_dump_lists_every_node(open_env):
    state, obs = open_env.reset()
    tree = SearchTree(open_env, state, obs)
    tree.expand(tree.expand(tree.root, RIGHT), DOWN)
    tree.expand(tree.root, NOOP)
    backup_returns(tree, 0.99)
    lines = tree.dump().splitlines()
    assert lines[0].startswith("root r=0 d=0")
    assert [l.split()[0] for l in lines] == ["root", "0", "4", "2"]
    assert lines[3].startswith("    2")


def test_node_repr_mentions_children():
    node = Node(None, np.zeros(1))
    assert "children=[]" in repr(node)
