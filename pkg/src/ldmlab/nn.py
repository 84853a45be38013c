"""Layers, models, the Adam optimizer and parameter checkpoints."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .tensor import Tensor


def normal_init(rng: np.random.Generator, shape: tuple, fan_in: int, gain: float = 2.0) -> Tensor:
    """Zero-mean normal weights with std ``sqrt(gain / fan_in)``.

    ``gain=2`` for layers followed by ReLU, ``gain=1`` for the sigmoid-scored
    discriminator output.
    """
    std = np.sqrt(gain / fan_in)
    return Tensor(rng.standard_normal(shape) * std, requires_grad=True)


class Linear:
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, gain: float = 2.0):
        self.weight = normal_init(rng, (n_in, n_out), n_in, gain)
        self.bias = Tensor(np.zeros(n_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]


class Conv2d:
    def __init__(self, c_in: int, c_out: int, k: int, rng: np.random.Generator):
        fan_in = c_in * k * k
        self.weight = normal_init(rng, (c_out, c_in, k, k), fan_in)
        self.bias = Tensor(np.zeros(c_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.bias)

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]


class MLP:
    """``d_in -> hidden (ReLU) -> n_classes`` classifier.

    ``forward`` returns ``(logits, hidden)`` where ``hidden`` is the
    post-ReLU activation matrix of the regularized layer.
    """

    def __init__(self, d_in: int, hidden: int, n_classes: int, rng: np.random.Generator):
        self.fc1 = Linear(d_in, hidden, rng)
        self.fc2 = Linear(hidden, n_classes, rng)
        self.d_in = d_in

    def forward(self, x: Tensor, dropout_rate: float = 0.0, rng=None, training=False):
        h = T.relu(self.fc1(x))
        hd = T.dropout(h, dropout_rate, rng, training) if dropout_rate > 0 else h
        return self.fc2(hd), h

    def parameters(self) -> list[Tensor]:
        return self.fc1.parameters() + self.fc2.parameters()

    def predict_logits(self, x: np.ndarray) -> np.ndarray:
        h = np.maximum(x @ self.fc1.weight.data + self.fc1.bias.data, 0.0)
        return h @ self.fc2.weight.data + self.fc2.bias.data


class SmallCNN:
    """Two conv+pool stages and a linear head on ``side x side`` images.

    The regularized layer is the last pool output; ``forward`` returns it
    as a ``(N, F, Hs, Ws)`` tensor alongside the logits.
    """

    def __init__(self, side: int, n_classes: int, rng: np.random.Generator,
                 channels: tuple[int, int] = (4, 8), k: int = 5):
        self.side = side
        self.conv1 = Conv2d(1, channels[0], k, rng)
        self.conv2 = Conv2d(channels[0], channels[1], k, rng)
        s = (side - k + 1) // 2
        s = (s - k + 1) // 2
        if s < 1:
            raise ValueError(f"image side {side} too small for two {k}x{k} conv stages")
        self.pool_shape = (channels[1], s, s)
        self.fc = Linear(channels[1] * s * s, n_classes, rng)

    def _features(self, x: Tensor) -> Tensor:
        n = x.shape[0]
        img = T.reshape(x, (n, 1, self.side, self.side))
        a = T.maxpool2d(T.relu(self.conv1(img)))
        return T.maxpool2d(T.relu(self.conv2(a)))

    def forward(self, x: Tensor, dropout_rate: float = 0.0, rng=None, training=False):
        pooled = self._features(x)
        flat = T.reshape(pooled, (x.shape[0], -1))
        fd = T.dropout(flat, dropout_rate, rng, training) if dropout_rate > 0 else flat
        return self.fc(fd), pooled

    def parameters(self) -> list[Tensor]:
        return self.conv1.parameters() + self.conv2.parameters() + self.fc.parameters()

    def predict_logits(self, x: np.ndarray, chunk: int = 2048) -> np.ndarray:
        out = []
        for i in range(0, len(x), chunk):
            logits, _ = self.forward(Tensor(x[i:i + chunk]))
            out.append(logits.data)
        return np.concatenate(out)


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


class Adam:
    """Adam with bias correction; ``step`` applies the update and zeroes grads."""

    def __init__(self, params: list[Tensor], lr: float = 1e-3):
        self.params = list(params)
        self.state = AdamState(
            lr=lr,
            m=[np.zeros_like(p.data) for p in self.params],
            v=[np.zeros_like(p.data) for p in self.params],
        )

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state)
        self.zero_grad()


def adam_step(params: list[Tensor], grads: list[np.ndarray], state: AdamState) -> None:
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state differ in length")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}, state {m.shape}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        g.fill(0.0)


# -- checkpoints ----------------------------------------------------------
def save_checkpoint(params: dict[str, Tensor], path: str | Path) -> None:
    """Write ``<path>.bin`` (little-endian float64 stream) and ``<path>.json``."""
    path = Path(path)
    manifest = []
    offset = 0
    with open(path.with_suffix(".bin"), "wb") as fh:
        for name, t in params.items():
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
            manifest.append({"name": name, "shape": list(t.shape), "offset": offset})
            offset += t.size
    path.with_suffix(".json").write_text(json.dumps({"dtype": "<f8", "tensors": manifest}, indent=1))


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    flat = np.fromfile(path.with_suffix(".bin"), dtype="<f8")
    out = {}
    for entry in meta["tensors"]:
        n = int(np.prod(entry["shape"], dtype=np.int64))
        chunk = flat[entry["offset"]: entry["offset"] + n]
        if chunk.size != n:
            raise ValueError(f"checkpoint truncated at tensor {entry['name']!r}")
        out[entry["name"]] = chunk.reshape(entry["shape"]).astype(np.float64)
    return out
