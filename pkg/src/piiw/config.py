"""Experiment configuration: flat ``key = value`` text with strict validation."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from typing import Any

ALGORITHMS = ("pi-iw-basic", "pi-iw-dynamic", "rollout-iw", "iw-bfs", "alphazero")
OBS_MODES = ("compact", "image")
TARGET_MODES = ("deterministic", "softmax")
BUDGET_MODES = ("tree", "expansions")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce a run. Defaults follow the published hyperparameter table."""

    algorithm: str = "pi-iw-basic"
    map: str = "maze1"
    obs_mode: str = "compact"
    hidden: int = 256  # width of the compact hidden layer, as wide as the image net's last layer
    max_steps: int = 200
    interactions: int = 200_000
    seeds: tuple[int, ...] = (0,)

    discount_factor: float = 0.99
    batch_size: int = 32
    learning_rate: float = 0.0005
    clip_grad_norm: float = 40.0
    rmsprop_decay: float = 0.99
    rmsprop_epsilon: float = 0.1
    tree_budget: int = 50
    budget_mode: str = "tree"
    dataset_size: int = 1000
    l2_factor: float = 1e-3
    tree_temperature: float = 1.0
    target_mode: str = "deterministic"
    target_temperature: float = 1.0

    p_uct: float = 0.5
    dirichlet_alpha: float = 0.03
    noise_factor: float = 0.25
    value_loss_factor: float = 1.0

    stop_avg_return: float | None = None
    record_wall_time: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        _choice("algorithm", self.algorithm, ALGORITHMS)
        _choice("obs_mode", self.obs_mode, OBS_MODES)
        _choice("target_mode", self.target_mode, TARGET_MODES)
        _choice("budget_mode", self.budget_mode, BUDGET_MODES)
        for name in ("hidden", "max_steps", "batch_size", "tree_budget", "dataset_size"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.interactions < 0:
            raise ConfigError("interactions must be non-negative")
        if not 0.0 <= self.discount_factor <= 1.0:
            raise ConfigError("discount_factor must lie in [0, 1]")
        if not 0.0 <= self.rmsprop_decay < 1.0:
            raise ConfigError("rmsprop_decay must lie in [0, 1)")
        if not 0.0 <= self.noise_factor <= 1.0:
            raise ConfigError("noise_factor must lie in [0, 1]")
        for name in (
            "learning_rate",
            "clip_grad_norm",
            "rmsprop_epsilon",
            "tree_temperature",
            "target_temperature",
            "dirichlet_alpha",
        ):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("l2_factor", "p_uct", "value_loss_factor"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if not self.map:
            raise ConfigError("map must be set")

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def with_overrides(self, pairs: dict[str, str]) -> "ExperimentConfig":
        """Apply textual overrides (as parsed from a file or the command line)."""
        return self.replace(**{key: _coerce(key, text) for key, text in pairs.items()})

    def serialize(self) -> str:
        """Canonical text form: every key, sorted, one ``key = value`` per line."""
        lines = []
        for f in sorted(_public_fields(), key=lambda f: f.name):
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"


def _public_fields():
    return list(fields(ExperimentConfig))


_FIELD_TYPES = {f.name: f.type for f in _public_fields()}


def _choice(name: str, value: str, allowed) -> None:
    if value not in allowed:
        raise ConfigError(f"{name} must be one of {', '.join(allowed)}; got {value!r}")


def _format(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _coerce(key: str, text: str) -> Any:
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    kind = _FIELD_TYPES[key]
    text = text.strip()
    try:
        if kind == "int":
            return int(float(text)) if _is_integral(text) else int(text)
        if kind == "float":
            return float(text)
        if kind == "float | None":
            return None if text.lower() == "none" else float(text)
        if kind == "bool":
            lowered = text.lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return lowered in ("true", "1", "yes")
        if kind == "tuple[int, ...]":
            return parse_seeds(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {text!r}") from exc
    return text


def _is_integral(text: str) -> bool:
    # accept 2e5-style budgets but not 2.5
    try:
        value = float(text)
    except ValueError:
        return False
    return value.is_integer() and any(c in text for c in "eE.")


def parse_seeds(text: str) -> tuple[int, ...]:
    """``"0,1,2"`` or a range ``"0-4"``."""
    text = text.strip()
    if "-" in text and "," not in text and not text.startswith("-"):
        lo, hi = (int(x) for x in text.split("-", 1))
        if hi < lo:
            raise ValueError(text)
        return tuple(range(lo, hi + 1))
    return tuple(int(x) for x in text.split(",") if x.strip())


def parse_pairs(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment. Duplicate keys are an error."""
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = value
    return pairs


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    return (base or ExperimentConfig()).with_overrides(parse_pairs(text))


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def config_keys() -> list[str]:
    return sorted(_FIELD_TYPES)
