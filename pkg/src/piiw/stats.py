"""Statistics reported by the experiments: trajectory depth and averaged learning curves."""
from __future__ import annotations

from typing import Iterable, NamedTuple, Sequence

import numpy as np


class TrajectoryLength(NamedTuple):
    nodes: int  # distinct states on the longest path, root included
    edges: int  # nodes - 1


def _children(node) -> Iterable:
    children = node.children
    return children.values() if isinstance(children, dict) else children


def longest_unique_trajectory(root) -> TrajectoryLength:
    """Longest root-to-leaf path, counting each distinct state once.

    Works for both planner trees and MCTS trees: any node with ``state`` and a
    ``children`` mapping. States are identified by ``state.identity`` (agent
    position and key flag). Repeats are removed per path, not across the tree.
    """
    best = 0
    stack = [(root, frozenset([root.state.identity]))]
    while stack:
        node, seen = stack.pop()
        kids = list(_children(node))
        if not kids:
            best = max(best, len(seen))
            continue
        for child in kids:
            stack.append((child, seen | {child.state.identity}))
    return TrajectoryLength(best, best - 1)


def mean_std(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        return float("nan"), float("nan")
    return float(arr.mean()), float(arr.std())


def moving_average(values: Sequence[float], window: int = 10) -> np.ndarray:
    """Trailing mean over at most ``window`` values, defined from the first entry on."""
    if window <= 0:
        raise ValueError("window must be positive")
    arr = np.asarray(values, dtype=np.float64)
    csum = np.concatenate([[0.0], np.cumsum(arr)])
    idx = np.arange(1, arr.size + 1)
    lo = np.maximum(idx - window, 0)
    return (csum[idx] - csum[lo]) / (idx - lo)


def solved_at(rows: Sequence[dict], target: float = 1.0, window: int = 10):
    """Interactions at which the trailing ``window``-episode mean first reaches ``target``.

    Returns None when it never does (fewer than ``window`` episodes also count as not solved).
    """
    returns = [r["episode_return"] for r in rows]
    if len(returns) < window:
        return None
    avg = moving_average(returns, window)
    for i in range(window - 1, len(returns)):
        if avg[i] >= target - 1e-12:
            return rows[i]["interactions"]
    return None


def average_curves(
    runs: Sequence[Sequence[dict]], grid: Sequence[float], window: int = 10
) -> dict[str, np.ndarray]:
    """Average per-seed learning curves on a shared interaction grid.

    Each run's trailing mean return (and episode length) is treated as a step
    function of cumulative interactions; grid points before a run's first
    logged episode are NaN for that run and excluded from the mean.
    """
    grid = np.asarray(grid, dtype=np.float64)
    ret = np.full((len(runs), grid.size), np.nan)
    length = np.full((len(runs), grid.size), np.nan)
    for k, rows in enumerate(runs):
        if not rows:
            continue
        x = np.array([r["interactions"] for r in rows], dtype=np.float64)
        r_avg = moving_average([r["episode_return"] for r in rows], window)
        l_avg = moving_average([r["episode_length"] for r in rows], window)
        pos = np.searchsorted(x, grid, side="right") - 1
        ok = pos >= 0
        ret[k, ok] = r_avg[pos[ok]]
        length[k, ok] = l_avg[pos[ok]]
    with np.errstate(all="ignore"):
        out = {
            "interactions": grid,
            "mean_return": _nan_reduce(np.nanmean, ret),
            "min_return": _nan_reduce(np.nanmin, ret),
            "max_return": _nan_reduce(np.nanmax, ret),
            "mean_length": _nan_reduce(np.nanmean, length),
        }
    return out


def _nan_reduce(fn, arr: np.ndarray) -> np.ndarray:
    out = np.full(arr.shape[1], np.nan)
    has = ~np.all(np.isnan(arr), axis=0)
    if has.any():
        out[has] = fn(arr[:, has], axis=0)
    return out
