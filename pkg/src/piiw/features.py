"""Boolean atoms of a state and the depth-based novelty table.

A feature set is a sorted ``int64`` array of distinct atom ids drawn from a
dense universe ``[0, size)``.
"""
from __future__ import annotations

import numpy as np


def basic_features(observation: np.ndarray) -> np.ndarray:
    """Tile/colour atoms of a one-hot grid, one atom per cell.

    Atom ``(i, j, k)`` is encoded as ``(i * cols + j) * K + k``.
    """
    rows, cols, n_classes = observation.shape
    classes = np.argmax(observation, axis=2).ravel()
    return np.arange(rows * cols, dtype=np.int64) * n_classes + classes


def basic_universe_size(observation_shape: tuple[int, int, int]) -> int:
    rows, cols, n_classes = observation_shape
    return rows * cols * n_classes


def dynamic_features(hidden: np.ndarray) -> np.ndarray:
    """Atom ``i`` holds iff hidden unit ``i`` is strictly positive."""
    return np.flatnonzero(np.asarray(hidden) > 0).astype(np.int64)


class NoveltyTable:
    """Minimum depth at which each atom was registered in the current lookahead."""

    def __init__(self, size: int):
        self.depths = np.full(size, np.inf)

    def __len__(self) -> int:
        return self.depths.size

    def check(self, atoms: np.ndarray, depth: int, is_new: bool) -> bool:
        """Novelty test of a node; registers ``atoms`` at ``depth`` only when ``is_new``.

        A node is novel if one of its atoms is registered strictly deeper than
        ``depth``. A cached node (``is_new=False``) also counts as novel when
        it sits exactly at the registered depth of one of its atoms.
        """
        registered = self.depths[atoms]
        novel = bool(np.any(depth < registered))
        if is_new:
            if novel:
                self.depths[atoms] = np.minimum(registered, depth)
        elif not novel:
            novel = bool(np.any(registered == depth))
        return novel

    def copy(self) -> "NoveltyTable":
        other = NoveltyTable(0)
        other.depths = self.depths.copy()
        return other


def new_table(universe_size: int) -> NoveltyTable:
    return NoveltyTable(universe_size)


def check_novelty(table: NoveltyTable, atoms, depth: int, is_new: bool) -> bool:
    return table.check(np.asarray(atoms, dtype=np.int64), depth, is_new)
