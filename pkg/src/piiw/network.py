"""Small policy network in plain numpy.

Layers run in order: optional convolutions (rectified), dense hidden layers
(rectified), then a linear logits head and, for the MCTS baseline, a linear
value head. Observations are channels-last; image inputs are scaled to [0, 1].
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from piiw.env import ContractError

CHECKPOINT_FORMAT = "piiw-params-v1"


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class Architecture:
    input_shape: tuple[int, int, int]
    n_actions: int
    conv: tuple[tuple[int, int, int], ...] = ()  # (filters, kernel, stride)
    hidden: tuple[int, ...] = (256,)
    value_head: bool = False

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        object.__setattr__(self, "conv", tuple(tuple(int(v) for v in c) for c in self.conv))
        object.__setattr__(self, "hidden", tuple(int(v) for v in self.hidden))
        if not self.hidden:
            raise ConfigurationError("at least one hidden dense layer is required")

    @classmethod
    def compact(cls, input_shape, n_actions: int, hidden: int, value_head: bool = False):
        return cls(tuple(input_shape), n_actions, (), (hidden,), value_head)

    @classmethod
    def image(cls, input_shape=(84, 84, 3), n_actions: int = 5, value_head: bool = False):
        return cls(tuple(input_shape), n_actions, ((16, 8, 4), (32, 4, 2)), (256,), value_head)

    @property
    def hidden_size(self) -> int:
        return self.hidden[-1]

    def conv_shapes(self) -> list[tuple[int, int, int]]:
        """(channels, height, width) after each convolution, input first."""
        h, w, c = self.input_shape
        shapes = [(c, h, w)]
        for filters, kernel, stride in self.conv:
            h = (h - kernel) // stride + 1
            w = (w - kernel) // stride + 1
            if h < 1 or w < 1:
                raise ConfigurationError("convolution stack shrinks the input below 1x1")
            shapes.append((filters, h, w))
        return shapes

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Architecture":
        data = json.loads(text)
        data["conv"] = tuple(tuple(c) for c in data["conv"])
        return cls(**data)


class NetworkOutput(NamedTuple):
    logits: np.ndarray
    hidden: np.ndarray
    value: Optional[np.ndarray] = None


def _glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


@dataclass
class PolicyNetwork:
    arch: Architecture
    params: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def initialize(cls, arch: Architecture, rng: np.random.Generator) -> "PolicyNetwork":
        params: dict[str, np.ndarray] = {}
        shapes = arch.conv_shapes()
        for i, (filters, kernel, _stride) in enumerate(arch.conv):
            channels = shapes[i][0]
            params[f"conv{i}.W"] = _glorot(
                rng, (filters, channels, kernel, kernel), channels * kernel**2, filters * kernel**2
            )
            params[f"conv{i}.b"] = np.zeros(filters)
        fan_in = int(np.prod(shapes[-1]))
        for i, units in enumerate(arch.hidden):
            params[f"fc{i}.W"] = _glorot(rng, (fan_in, units), fan_in, units)
            params[f"fc{i}.b"] = np.zeros(units)
            fan_in = units
        params["logits.W"] = _glorot(rng, (fan_in, arch.n_actions), fan_in, arch.n_actions)
        params["logits.b"] = np.zeros(arch.n_actions)
        if arch.value_head:
            # zero output layer: an untrained value head predicts 0 everywhere
            params["value.W"] = np.zeros((fan_in, 1))
            params["value.b"] = np.zeros(1)
        return cls(arch, params)

    @classmethod
    def zeros(cls, arch: Architecture) -> "PolicyNetwork":
        net = cls.initialize(arch, np.random.default_rng(0))
        for value in net.params.values():
            value[...] = 0.0
        return net

    def copy(self) -> "PolicyNetwork":
        return PolicyNetwork(self.arch, {k: v.copy() for k, v in self.params.items()})

    def forward(self, observation: np.ndarray) -> NetworkOutput:
        if not self.arch.conv and len(self.arch.hidden) == 1 and observation.dtype == np.float64:
            if observation.shape != self.arch.input_shape:
                raise ConfigurationError(
                    f"observation shape {observation.shape} does not match network input {self.arch.input_shape}"
                )
            p = self.params
            hidden = np.maximum(observation.reshape(-1) @ p["fc0.W"] + p["fc0.b"], 0.0)
            value = None
            if self.arch.value_head:
                value = float(hidden @ p["value.W"][:, 0] + p["value.b"][0])
            return NetworkOutput(hidden @ p["logits.W"] + p["logits.b"], hidden, value)
        out = self.forward_batch(observation[None])
        return NetworkOutput(
            out.logits[0], out.hidden[0], None if out.value is None else out.value[0]
        )

    def forward_batch(self, observations: np.ndarray) -> NetworkOutput:
        logits, hidden, value, _ = self._forward(observations, keep_cache=False)
        return NetworkOutput(logits, hidden, value)

    def _prepare(self, observations: np.ndarray) -> np.ndarray:
        obs = np.asarray(observations)
        if obs.shape[1:] != self.arch.input_shape:
            raise ConfigurationError(
                f"observation shape {obs.shape[1:]} does not match network input {self.arch.input_shape}"
            )
        x = obs.astype(np.float64)
        if obs.dtype == np.uint8:
            x /= 255.0
        return x

    def _forward(self, observations: np.ndarray, keep_cache: bool):
        x = self._prepare(observations)
        n = x.shape[0]
        cache = []
        if self.arch.conv:
            x = x.transpose(0, 3, 1, 2)
            for i, (_filters, kernel, stride) in enumerate(self.arch.conv):
                z, cols = _conv_forward(x, self.params[f"conv{i}.W"], self.params[f"conv{i}.b"], stride)
                if keep_cache:
                    cache.append((x.shape, cols, z > 0))
                x = np.maximum(z, 0.0)
        x = x.reshape(n, -1)
        for i in range(len(self.arch.hidden)):
            z = x @ self.params[f"fc{i}.W"] + self.params[f"fc{i}.b"]
            if keep_cache:
                cache.append((x, z > 0))
            x = np.maximum(z, 0.0)
        logits = x @ self.params["logits.W"] + self.params["logits.b"]
        value = None
        if self.arch.value_head:
            value = (x @ self.params["value.W"] + self.params["value.b"])[:, 0]
        return logits, x, value, cache

    def weight_names(self) -> list[str]:
        return [name for name in self.params if name.endswith(".W")]

    def l2_penalty(self) -> float:
        return float(sum(np.sum(self.params[name] ** 2) for name in self.weight_names()))

    def loss_and_grads(
        self,
        observations: np.ndarray,
        targets: np.ndarray,
        l2: float = 1e-3,
        value_targets: Optional[np.ndarray] = None,
        value_loss_factor: float = 1.0,
    ) -> tuple[float, dict[str, np.ndarray]]:
        """Mean cross-entropy (plus value MSE when targets are given) plus ``l2 * sum(W**2)``."""
        targets = np.asarray(targets, dtype=np.float64)
        if np.any(targets < 0) or np.any(np.abs(targets.sum(axis=1) - 1.0) > 1e-6):
            raise ContractError("target policies must be probability vectors")
        logits, hidden, value, cache = self._forward(observations, keep_cache=True)
        n = logits.shape[0]
        log_probs = log_softmax(logits)
        loss = float(-np.sum(targets * log_probs) / n)
        d_logits = (np.exp(log_probs) - targets) / n

        grads: dict[str, np.ndarray] = {}
        grads["logits.W"] = hidden.T @ d_logits
        grads["logits.b"] = d_logits.sum(axis=0)
        d_x = d_logits @ self.params["logits.W"].T
        if value_targets is not None:
            if value is None:
                raise ConfigurationError("value targets given to a network without a value head")
            err = value - np.asarray(value_targets, dtype=np.float64)
            loss += value_loss_factor * float(np.mean(err**2))
            d_value = (2.0 * value_loss_factor / n) * err[:, None]
            grads["value.W"] = hidden.T @ d_value
            grads["value.b"] = d_value.sum(axis=0)
            d_x = d_x + d_value @ self.params["value.W"].T
        elif self.arch.value_head:
            grads["value.W"] = np.zeros_like(self.params["value.W"])
            grads["value.b"] = np.zeros_like(self.params["value.b"])

        n_conv = len(self.arch.conv)
        for i in reversed(range(len(self.arch.hidden))):
            x_in, active = cache[n_conv + i]
            d_z = d_x * active
            grads[f"fc{i}.W"] = x_in.T @ d_z
            grads[f"fc{i}.b"] = d_z.sum(axis=0)
            d_x = d_z @ self.params[f"fc{i}.W"].T
        if n_conv:
            shapes = self.arch.conv_shapes()
            d_x = d_x.reshape((n,) + shapes[-1])
            for i in reversed(range(n_conv)):
                in_shape, cols, active = cache[i]
                d_z = d_x * active
                d_w, d_b, d_x = _conv_backward(
                    d_z, cols, self.params[f"conv{i}.W"], in_shape, self.arch.conv[i][2]
                )
                grads[f"conv{i}.W"] = d_w
                grads[f"conv{i}.b"] = d_b

        if l2:
            loss += l2 * self.l2_penalty()
            for name in self.weight_names():
                grads[name] = grads[name] + 2.0 * l2 * self.params[name]
        return loss, {name: grads[name] for name in self.params}

    def save(self, path) -> None:
        arrays = {f"param:{k}": v for k, v in self.params.items()}
        np.savez(
            path,
            __format__=np.array(CHECKPOINT_FORMAT),
            __arch__=np.array(self.arch.to_json()),
            **arrays,
        )

    @classmethod
    def load(cls, path) -> "PolicyNetwork":
        with np.load(path, allow_pickle=False) as data:
            if str(data["__format__"]) != CHECKPOINT_FORMAT:
                raise ConfigurationError(f"unsupported checkpoint format {data['__format__']}")
            arch = Architecture.from_json(str(data["__arch__"]))
            params = {k.split(":", 1)[1]: data[k].copy() for k in data.files if k.startswith("param:")}
        net = cls(arch, {})
        reference = cls.zeros(arch)
        for name, ref in reference.params.items():
            if name not in params or params[name].shape != ref.shape:
                raise ConfigurationError(f"checkpoint parameter {name!r} missing or mis-shaped")
            net.params[name] = params[name]
        return net


def _conv_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, stride: int):
    n = x.shape[0]
    filters, channels, kernel, _ = weight.shape
    windows = sliding_window_view(x, (kernel, kernel), axis=(2, 3))[:, :, ::stride, ::stride]
    out_h, out_w = windows.shape[2], windows.shape[3]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * out_h * out_w, channels * kernel * kernel)
    z = cols @ weight.reshape(filters, -1).T + bias
    return z.reshape(n, out_h, out_w, filters).transpose(0, 3, 1, 2), cols


def _conv_backward(d_z: np.ndarray, cols: np.ndarray, weight: np.ndarray, in_shape, stride: int):
    n, filters, out_h, out_w = d_z.shape
    _, channels, kernel, _ = weight.shape
    d_flat = d_z.transpose(0, 2, 3, 1).reshape(-1, filters)
    d_w = (d_flat.T @ cols).reshape(weight.shape)
    d_b = d_flat.sum(axis=0)
    d_cols = (d_flat @ weight.reshape(filters, -1)).reshape(n, out_h, out_w, channels, kernel, kernel)
    d_x = np.zeros(in_shape)
    span_h = stride * (out_h - 1) + 1
    span_w = stride * (out_w - 1) + 1
    for i in range(kernel):
        for j in range(kernel):
            d_x[:, :, i : i + span_h : stride, j : j + span_w : stride] += d_cols[..., i, j].transpose(
                0, 3, 1, 2
            )
    return d_w, d_b, d_x


def log_softmax(logits: np.ndarray, tau: float = 1.0) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64) / tau
    z = z - np.max(z, axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def softmax(logits: np.ndarray, tau: float = 1.0) -> np.ndarray:
    if tau <= 0:
        raise ValueError("temperature must be positive")
    z = np.asarray(logits, dtype=np.float64) / tau
    z = np.exp(z - np.max(z, axis=-1, keepdims=True))
    return z / np.sum(z, axis=-1, keepdims=True)


def forward(net: PolicyNetwork, observation: np.ndarray) -> NetworkOutput:
    return net.forward(observation)


def loss_and_grads(net: PolicyNetwork, observations, targets, l2: float = 1e-3, **kwargs):
    return net.loss_and_grads(observations, targets, l2, **kwargs)


@dataclass
class RMSProp:
    """Non-centred RMSProp with global gradient-norm clipping; epsilon sits inside the root."""

    lr: float = 0.0005
    decay: float = 0.99
    eps: float = 0.1
    clip_norm: float = 40.0
    accumulators: dict[str, np.ndarray] = field(default_factory=dict)

    def step(self, net: PolicyNetwork, grads: dict[str, np.ndarray]) -> float:
        """Apply one update in place; returns the pre-clipping gradient norm."""
        for name, grad in grads.items():
            if not np.all(np.isfinite(grad)):
                raise FloatingPointError(f"non-finite gradient for {name}")
            if grad.shape != net.params[name].shape:
                raise ContractError(f"gradient shape mismatch for {name}")
        norm = float(np.sqrt(sum(np.sum(g**2) for g in grads.values())))
        scale = self.clip_norm / norm if self.clip_norm and norm > self.clip_norm else 1.0
        for name, grad in grads.items():
            g = grad * scale
            acc = self.accumulators.get(name)
            if acc is None:
                acc = np.zeros_like(g)
            acc = self.decay * acc + (1.0 - self.decay) * g**2
            self.accumulators[name] = acc
            net.params[name] -= self.lr * g / np.sqrt(acc + self.eps)
        return norm


def rmsprop_step(net: PolicyNetwork, grads: dict[str, np.ndarray], opt: RMSProp) -> float:
    return opt.step(net, grads)
