import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from piiw.env import FLOOR, KEY, DOOR, LEFT, RIGHT, WALL, GridEnv, GridMap, builtin_map
from piiw.features import basic_features, basic_universe_size, new_table
from piiw.planner import (
    Lookahead,
    iw1_bfs,
    lookahead,
    mask_and_normalize,
    sample_action,
    softmax_policy_sampler,
    solved_mask,
    uniform_sampler,
)
from piiw.tree import Node, SearchTree


def basic_tree(env):
    def annotate(node):
        node.atoms = basic_features(node.observation)

    state, obs = env.reset()
    return SearchTree(env, state, obs, annotate)


def universe(env):
    return basic_universe_size(env.observation_shape)


@pytest.mark.parametrize("mode", ["tree", "expansions"])
@pytest.mark.parametrize("name", ["maze1", "maze2", "maze3", "empty"])
def test_budget_respected_on_fresh_root(name, mode):
    env = GridEnv(builtin_map(name))
    for seed in range(5):
        tree = basic_tree(env)
        before = env.interactions
        n = lookahead(tree, uniform_sampler(), 50, universe(env), np.random.default_rng(seed), mode)
        assert n == env.interactions - before <= 50
        assert tree.node_count <= 51


def test_tree_mode_caps_tree_size_with_cached_nodes():
    env = GridEnv(builtin_map("empty"))
    rng = np.random.default_rng(0)
    tree = basic_tree(env)
    planner = Lookahead(uniform_sampler(), 50, universe(env), rng, "tree")
    planner.run(tree)
    tree.advance(next(iter(tree.root.children)))
    cached = tree.node_count
    n = planner.run(tree)
    assert n <= 50 - cached + 1
    assert tree.node_count <= 50


def test_expansion_mode_allows_growth_beyond_budget():
    env = GridEnv(builtin_map("empty"))
    rng = np.random.default_rng(0)
    tree = basic_tree(env)
    planner = Lookahead(uniform_sampler(), 50, universe(env), rng, "expansions")
    planner.run(tree)
    action = max(tree.root.children, key=lambda a: tree.iter_breadth_first(tree.root.children[a]).__sizeof__())
    tree.advance(action)
    cached = tree.node_count
    n = planner.run(tree)
    assert n <= 50
    assert tree.node_count == cached + n


def test_invalid_budget():
    with pytest.raises(ValueError):
        Lookahead(uniform_sampler(), 0, 10, np.random.default_rng(0))
    with pytest.raises(ValueError):
        Lookahead(uniform_sampler(), 10, 10, np.random.default_rng(0), "seconds")


def test_lookahead_stops_when_root_solved():
    env = GridEnv(builtin_map("corridor"))
    tree = basic_tree(env)
    n = lookahead(tree, uniform_sampler(), 10_000, universe(env), np.random.default_rng(0))
    assert tree.root.solved
    assert n < 10_000


def _corridor_offline_tree(seed):
    env = GridEnv(builtin_map("corridor"))
    tree = basic_tree(env)
    lookahead(tree, uniform_sampler(), 10_000, universe(env), np.random.default_rng(seed))
    return env, tree


@pytest.mark.parametrize("seed", range(5))
def test_corridor_pruned_two_steps_after_key(seed):
    env, tree = _corridor_offline_tree(seed)
    assert not any(node.reward > 0 for node in tree)
    # walk the key-pickup branch: six steps left, then back to the right
    node = tree.root
    for _ in range(6):
        node = node.children[LEFT]
    assert node.state.has_key and node.state.pos == env.grid.key
    after = node.children[RIGHT]
    assert after.children, "first step after the key reveals the emptied key tile"
    pruned = after.children[RIGHT]
    assert pruned.depth == 8 and not pruned.children and pruned.solved


def test_cached_node_pruned_by_shallower_registration():
    env = GridEnv(builtin_map("empty"))
    tree = basic_tree(env)
    child = tree.expand(tree.root, RIGHT)
    tree.expand(child, RIGHT)
    planner = Lookahead(lambda node, n: np.eye(5)[RIGHT], 50, universe(env), np.random.default_rng(0))
    planner._tree = tree
    planner.table = new_table(universe(env))
    planner.table.depths[child.atoms] = 0
    node, action = planner.select(tree)
    assert node is child and action is None
    assert child.solved


def test_select_descends_into_unexpanded_action():
    env = GridEnv(builtin_map("empty"))
    tree = basic_tree(env)
    tree.expand(tree.root, RIGHT)
    planner = Lookahead(lambda node, n: np.eye(5)[RIGHT], 50, universe(env), np.random.default_rng(0))
    planner.table = new_table(universe(env))
    node, action = planner.select(tree)
    assert node is tree.root.children[RIGHT] and action == RIGHT


def test_rollout_cut_by_budget_leaves_last_node_unsolved():
    env = GridEnv(builtin_map("empty"))
    tree = basic_tree(env)
    planner = Lookahead(lambda node, n: np.eye(5)[RIGHT], 2, universe(env), np.random.default_rng(0), "expansions")
    planner.run(tree)
    last = tree.root.children[RIGHT].children[RIGHT]
    assert not last.terminal and not last.solved
    assert planner.expansions == 2


def test_masking_on_random_nodes():
    rng = np.random.default_rng(3)
    sampler = softmax_policy_sampler(1.0)
    for _ in range(1000):
        node = Node(None, np.zeros(1))
        node.logits = rng.normal(scale=rng.choice([0.1, 1.0, 30.0]), size=5)
        for a in range(5):
            if rng.random() < 0.5:
                child = Node(None, np.zeros(1), parent=node, action=a)
                child.solved = bool(rng.random() < 0.6)
                node.children[a] = child
        mask = solved_mask(node, 5)
        probs = sampler(node, 5)
        if mask.all():
            assert probs is None
            continue
        assert np.all(probs[mask] == 0.0)
        assert abs(probs.sum() - 1.0) < 1e-12
        assert sample_action(probs, rng) not in np.flatnonzero(mask)


def test_mask_all_unsolved_returns_input():
    p = np.array([0.2, 0.8])
    assert mask_and_normalize(p, np.zeros(2, bool)) is p


def test_mask_underflow_falls_back_to_uniform():
    p = np.array([1.0, 0.0, 0.0])
    out = mask_and_normalize(p, np.array([True, False, False]))
    assert np.allclose(out, [0.0, 0.5, 0.5])


def test_softmax_sampler_needs_logits():
    with pytest.raises(ValueError):
        softmax_policy_sampler(1.0)(Node(None, np.zeros(1)), 5)
    node = Node(None, np.zeros(1))
    node.logits = np.array([0.0, np.nan, 0.0, 0.0, 0.0])
    with pytest.raises(FloatingPointError):
        softmax_policy_sampler(1.0)(node, 5)
    with pytest.raises(ValueError):
        softmax_policy_sampler(0.0)


def test_high_temperature_sampler_is_uniform():
    node = Node(None, np.zeros(1))
    node.logits = np.array([3.0, -2.0, 0.5, 1.0, 0.0])
    probs = softmax_policy_sampler(1e6)(node, 5)
    assert np.max(np.abs(probs - 0.2)) < 1e-5


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(0, 1), min_size=2, max_size=6).filter(lambda x: sum(x) > 0),
    st.integers(0, 2**32 - 1),
)
def test_sample_action_respects_support(weights, seed):
    probs = np.array(weights) / sum(weights)
    a = sample_action(probs, np.random.default_rng(seed))
    assert probs[a] > 0


def test_sample_action_frequencies():
    rng = np.random.default_rng(0)
    probs = np.array([0.1, 0.0, 0.6, 0.3])
    counts = np.bincount([sample_action(probs, rng) for _ in range(20_000)], minlength=4)
    assert counts[1] == 0
    assert np.allclose(counts / counts.sum(), probs, atol=0.015)


def test_lookahead_is_seed_deterministic():
    env = GridEnv(builtin_map("maze2"))
    dumps = []
    for _ in range(2):
        tree = basic_tree(env)
        lookahead(tree, uniform_sampler(), 50, universe(env), np.random.default_rng(11))
        dumps.append(tree.dump())
    assert dumps[0] == dumps[1]


def random_grid(rng) -> GridMap:
    rows, cols = (int(x) for x in rng.integers(4, 11, size=2))
    cells = np.full((rows, cols), FLOOR, dtype=np.int8)
    cells[0, :] = cells[-1, :] = cells[:, 0] = cells[:, -1] = WALL
    inner = [(r, c) for r in range(1, rows - 1) for c in range(1, cols - 1)]
    for r, c in inner:
        if rng.random() < 0.2:
            cells[r, c] = WALL
    picks = rng.choice(len(inner), size=3, replace=False)
    start, key, door = (inner[i] for i in picks)
    cells[start] = FLOOR
    cells[key] = KEY
    cells[door] = DOOR
    return GridMap(cells, start, key, door)


def test_bfs_novel_count_bounded_by_atoms():
    rng = np.random.default_rng(5)
    for _ in range(50):
        env = GridEnv(random_grid(rng))
        tree = basic_tree(env)
        iw1_bfs(tree, 10**6, universe(env))
        novel = [n for n in tree if not n.solved]
        assert len(novel) <= universe(env)
        atoms = set()
        for n in novel:
            atoms.update(n.atoms.tolist())
        # every kept node contributed at least one atom nobody kept before it
        assert len(novel) <= len(atoms) - (len(tree.root.atoms) - 1)


def test_bfs_respects_budget():
    env = GridEnv(builtin_map("empty"))
    tree = basic_tree(env)
    assert iw1_bfs(tree, 20, universe(env), "expansions") == 20
    tree = basic_tree(env)
    iw1_bfs(tree, 20, universe(env), "tree")
    assert tree.node_count == 20


def test_bfs_corridor_is_width_two():
    env = GridEnv(builtin_map("corridor"))
    tree = basic_tree(env)
    iw1_bfs(tree, 10**6, universe(env))
    assert not any(n.reward > 0 for n in tree)
    assert any(n.state.has_key for n in tree)


def test_bfs_expands_breadth_first():
    env = GridEnv(builtin_map("empty"))
    tree = basic_tree(env)
    iw1_bfs(tree, 5, universe(env), "expansions")
    assert sorted(tree.root.children) == [0, 1, 2, 3, 4]
    assert tree.root.children[0].solved  # noop repeats the root state


def test_root_without_atoms_is_still_expanded():
    # e.g. dynamic features when every hidden unit of the root is zero
    env = GridEnv(builtin_map("empty"))

    def annotate(node):
        node.atoms = np.zeros(0, dtype=np.int64)

    state, obs = env.reset()
    tree = SearchTree(env, state, obs, annotate)
    expansions = lookahead(tree, uniform_sampler(), 50, 8, np.random.default_rng(0))
    assert expansions == env.n_actions == len(tree.root.children)
    assert tree.root.solved and all(child.solved for child in tree.root.children.values())
