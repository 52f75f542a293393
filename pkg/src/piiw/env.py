"""Deterministic key-door gridworld with a resettable, value-like simulator state.

The agent must pick up a key and then walk through a door. Bumping into a
wall ends the episode with reward -1 (the agent does not move), reaching the door while holding the key
ends it with +1, and every episode is cut at ``MAX_STEPS`` steps.
"""
from __future__ import annotations

import copy
import os
from dataclasses import dataclass
from importlib import resources
from typing import NamedTuple

import numpy as np

MAX_STEPS = 200
IMAGE_SIZE = 84

NOOP, UP, DOWN, LEFT, RIGHT = range(5)
ACTIONS = (NOOP, UP, DOWN, LEFT, RIGHT)
ACTION_NAMES = ("noop", "up", "down", "left", "right")
_MOVES = {NOOP: (0, 0), UP: (-1, 0), DOWN: (1, 0), LEFT: (0, -1), RIGHT: (0, 1)}

# Cell classes of the compact observation (last axis of the one-hot grid).
FLOOR, WALL, KEY, DOOR, AGENT = range(5)
N_CLASSES = 5
CLASS_NAMES = ("floor", "wall", "key", "door", "agent")
COLORS = np.array(
    [
        (0, 0, 0),  # floor: black
        (255, 255, 255),  # wall: white
        (255, 0, 0),  # key: red
        (0, 255, 0),  # door: green
        (0, 0, 255),  # agent: blue
    ],
    dtype=np.uint8,
)

BUILTIN_MAPS = ("corridor", "empty", "maze1", "maze2", "maze3")


class MapError(ValueError):
    """Raised for malformed ASCII maps or invalid map configurations."""


class ContractError(RuntimeError):
    """Raised when an operation's precondition is violated by the caller."""


@dataclass(frozen=True)
class GridMap:
    """Static layout. ``cells`` holds one of FLOOR/WALL/KEY/DOOR per cell."""

    cells: np.ndarray
    start: tuple[int, int]
    key: tuple[int, int]
    door: tuple[int, int]
    name: str = ""

    @property
    def rows(self) -> int:
        return self.cells.shape[0]

    @property
    def cols(self) -> int:
        return self.cells.shape[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GridMap):
            return NotImplemented
        return (
            np.array_equal(self.cells, other.cells)
            and self.start == other.start
            and self.key == other.key
            and self.door == other.door
        )

    def __hash__(self) -> int:
        return hash((self.cells.tobytes(), self.cells.shape, self.start, self.key, self.door))

    def validate(self) -> None:
        if self.cells.ndim != 2 or self.rows < 3 or self.cols < 3:
            raise MapError("map must be a 2-D grid of at least 3x3 cells")
        border = np.concatenate(
            [self.cells[0], self.cells[-1], self.cells[:, 0], self.cells[:, -1]]
        )
        if np.any(border != WALL):
            raise MapError("border cells must be walls")
        for label, cls, pos in (("key", KEY, self.key), ("door", DOOR, self.door)):
            if int(np.sum(self.cells == cls)) != 1 or self.cells[pos] != cls:
                raise MapError(f"map must contain exactly one {label}")
        if self.cells[self.start] != FLOOR:
            raise MapError("start must be on a floor cell")


_CHARS = {"#": WALL, ".": FLOOR, "K": KEY, "D": DOOR, "S": FLOOR}


def load_map(text: str, name: str = "") -> GridMap:
    """Parse an ASCII map over the alphabet ``# . K D S``.

    Errors carry 1-based line and column numbers.
    """
    lines = [line.rstrip("\r") for line in text.strip("\n").split("\n")]
    lines = [line for line in lines if line.strip()]
    if not lines:
        raise MapError("empty map")
    width = len(lines[0])
    cells = np.zeros((len(lines), width), dtype=np.int8)
    found: dict[str, list[tuple[int, int]]] = {"K": [], "D": [], "S": []}
    for r, line in enumerate(lines):
        if len(line) != width:
            raise MapError(f"line {r + 1}: ragged row (length {len(line)}, expected {width})")
        for c, ch in enumerate(line):
            if ch not in _CHARS:
                raise MapError(f"line {r + 1}, column {c + 1}: unknown character {ch!r}")
            cells[r, c] = _CHARS[ch]
            if ch in found:
                found[ch].append((r, c))
    for ch, label in (("K", "key"), ("D", "door"), ("S", "start")):
        if not found[ch]:
            raise MapError(f"missing {label}")
        if len(found[ch]) > 1:
            r, c = found[ch][1]
            raise MapError(f"line {r + 1}, column {c + 1}: duplicate {label}")
    grid = GridMap(cells, found["S"][0], found["K"][0], found["D"][0], name=name)
    grid.validate()
    return grid


def builtin_map(name: str) -> GridMap:
    if name not in BUILTIN_MAPS:
        raise MapError(f"unknown built-in map {name!r}; choose from {', '.join(BUILTIN_MAPS)}")
    text = resources.files("piiw.maps").joinpath(f"{name}.txt").read_text(encoding="utf-8")
    return load_map(text, name=name)


def resolve_map(name_or_path: str) -> GridMap:
    """Built-in map name or a path to an ASCII map file."""
    if name_or_path in BUILTIN_MAPS:
        return builtin_map(name_or_path)
    if not os.path.isfile(name_or_path):
        raise MapError(f"{name_or_path!r} is neither a built-in map ({', '.join(BUILTIN_MAPS)}) nor a file")
    with open(name_or_path, encoding="utf-8") as fh:
        return load_map(fh.read(), name=name_or_path)


@dataclass(frozen=True)
class SimulatorState:
    pos: tuple[int, int]
    has_key: bool
    step_count: int
    terminal: bool
    grid: GridMap

    @property
    def identity(self) -> tuple[tuple[int, int], bool]:
        return self.pos, self.has_key


class StepResult(NamedTuple):
    observation: np.ndarray
    reward: float
    terminal: bool


class GridEnv:
    """Functional simulator: ``step`` maps a state to its successor.

    States are immutable, so a state can be reused as a search node snapshot
    and stepped any number of times. ``interactions`` counts ``step`` calls.
    """

    def __init__(self, grid: GridMap, obs_mode: str = "compact", max_steps: int = MAX_STEPS):
        if obs_mode not in ("compact", "image"):
            raise ValueError(f"unknown observation mode {obs_mode!r}")
        grid.validate()
        self.grid = grid
        self.obs_mode = obs_mode
        self.max_steps = max_steps
        self.interactions = 0
        self.n_actions = len(ACTIONS)
        self._base = np.eye(N_CLASSES, dtype=np.float64)[grid.cells]
        self._rows = np.minimum(np.arange(IMAGE_SIZE) * grid.rows // IMAGE_SIZE, grid.rows - 1)
        self._cols = np.minimum(np.arange(IMAGE_SIZE) * grid.cols // IMAGE_SIZE, grid.cols - 1)

    @property
    def observation_shape(self) -> tuple[int, int, int]:
        if self.obs_mode == "image":
            return (IMAGE_SIZE, IMAGE_SIZE, 3)
        return (self.grid.rows, self.grid.cols, N_CLASSES)

    def reset(self) -> tuple[SimulatorState, np.ndarray]:
        state = SimulatorState(self.grid.start, False, 0, False, self.grid)
        return state, self.observe(state)

    def step(self, state: SimulatorState, action: int) -> tuple[SimulatorState, StepResult]:
        if state.terminal:
            raise ContractError("cannot step a terminal state")
        if action not in _MOVES:
            raise ContractError(f"invalid action {action!r}")
        self.interactions += 1
        dr, dc = _MOVES[action]
        target = (state.pos[0] + dr, state.pos[1] + dc)
        cell = self.grid.cells[target]
        steps = state.step_count + 1
        pos, has_key = state.pos, state.has_key
        reward, terminal = 0.0, False
        if cell == WALL:
            # the agent bumps into the wall and stays where it was
            reward, terminal = -1.0, True
        else:
            pos = target
            has_key = has_key or pos == self.grid.key
            if cell == DOOR and has_key:
                reward, terminal = 1.0, True
        if steps >= self.max_steps:
            terminal = True
        nxt = SimulatorState(pos, has_key, steps, terminal, self.grid)
        return nxt, StepResult(self.observe(nxt), reward, terminal)

    @staticmethod
    def clone_state(state: SimulatorState) -> SimulatorState:
        return copy.copy(state)

    def class_grid(self, state: SimulatorState) -> np.ndarray:
        cells = self.grid.cells.copy()
        if state.has_key:
            cells[self.grid.key] = FLOOR
        cells[state.pos] = AGENT
        return cells

    def observe(self, state: SimulatorState) -> np.ndarray:
        if self.obs_mode == "image":
            return render_image(self.class_grid(state), self._rows, self._cols)
        obs = self._base.copy()
        if state.has_key:
            obs[self.grid.key] = 0.0
            obs[self.grid.key + (FLOOR,)] = 1.0
        obs[state.pos] = 0.0
        obs[state.pos + (AGENT,)] = 1.0
        return obs

    def compact_observation(self, state: SimulatorState) -> np.ndarray:
        return np.eye(N_CLASSES, dtype=np.float64)[self.class_grid(state)]


def render_image(class_grid: np.ndarray, row_index=None, col_index=None) -> np.ndarray:
    """Nearest-neighbour upscaling of a class grid to an 84x84 RGB image."""
    rows, cols = class_grid.shape
    if row_index is None:
        row_index = np.minimum(np.arange(IMAGE_SIZE) * rows // IMAGE_SIZE, rows - 1)
    if col_index is None:
        col_index = np.minimum(np.arange(IMAGE_SIZE) * cols // IMAGE_SIZE, cols - 1)
    return COLORS[class_grid[np.ix_(row_index, col_index)]]


def decode_image(image: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Recover the one-hot compact grid from a rendered image."""
    # first pixel of every tile under the same nearest-neighbour mapping
    ys = np.searchsorted(np.arange(IMAGE_SIZE) * rows // IMAGE_SIZE, np.arange(rows))
    xs = np.searchsorted(np.arange(IMAGE_SIZE) * cols // IMAGE_SIZE, np.arange(cols))
    pixels = image[np.ix_(ys, xs)].astype(np.int64)
    classes = np.full((rows, cols), -1, dtype=np.int64)
    for k, color in enumerate(COLORS):
        classes[np.all(pixels == color, axis=-1)] = k
    if np.any(classes < 0):
        raise ValueError("image contains a tile with an unknown colour")
    return np.eye(N_CLASSES, dtype=np.float64)[classes]
