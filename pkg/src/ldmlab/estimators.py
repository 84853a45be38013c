"""Neural Jensen-Shannon estimates of total correlation among hidden units.

A discriminator ``T`` is trained to separate rows of an activation batch
(samples of the joint) from rows whose columns were independently permuted
(samples of the product of marginals). The objective

    mean log sigma(T(joint)) + mean log(1 - sigma(T(shuffled)))

is at most ``2 JSD - 2 ln 2``; the estimates returned here add ``2 ln 2`` so
that independent units read 0.
"""
from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .metrics import ActivationBatch
from .nn import Adam, Linear
from .tensor import Tensor

OFFSET = 2.0 * math.log(2.0)


class EstimatorDiverged(RuntimeError):
    pass


class Discriminator:
    """``m -> hidden (ReLU) -> 1`` scorer with its own Adam state."""

    def __init__(self, m: int, rng: np.random.Generator, hidden: int = 200, lr: float = 1e-4):
        self.m = m
        self.fc1 = Linear(m, hidden, rng, gain=2.0)
        self.fc2 = Linear(hidden, 1, rng, gain=1.0)
        self.opt = Adam(self.parameters(), lr=lr)

    def parameters(self) -> list[Tensor]:
        return self.fc1.parameters() + self.fc2.parameters()

    def __call__(self, x: Tensor, frozen: bool = False) -> Tensor:
        if frozen:
            w1, b1, w2, b2 = (Tensor(p.data) for p in self.parameters())
        else:
            w1, b1, w2, b2 = self.parameters()
        return T.relu(x @ w1 + b1) @ w2 + b2

    def objective(self, joint: Tensor, shuffled: Tensor, frozen: bool = False) -> Tensor:
        """Uncentred JS objective (between ``-2 ln 2`` and 0 at the optimum)."""
        params = [Tensor(p.data) for p in self.parameters()] if frozen else self.parameters()
        return T.js_objective(joint, shuffled, *params)

    def objective_composed(self, joint: Tensor, shuffled: Tensor, frozen: bool = False) -> Tensor:
        """Same value as :meth:`objective`, built from elementary ops."""
        pos = T.mean(T.log(T.sigmoid(self(joint, frozen))))
        neg = T.mean(T.log(1.0 - T.sigmoid(self(shuffled, frozen))))
        return pos + neg

    def update(self, joint: np.ndarray, shuffled: np.ndarray) -> float:
        """One Adam ascent step on the objective; returns its pre-step value."""
        obj = self.objective(Tensor(joint), Tensor(shuffled))
        value = obj.item()
        if not math.isfinite(value):
            raise EstimatorDiverged(f"discriminator objective became {value}")
        (-obj).backward()
        self.opt.step()
        return value

    def state_arrays(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.parameters()]


def column_permutations(K: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """``(K, m)`` index array; column ``j`` is an independent uniform permutation."""
    return np.stack([rng.permutation(K) for _ in range(m)], axis=1)


def apply_permutations(values: np.ndarray, perms: np.ndarray) -> np.ndarray:
    return values[perms, np.arange(values.shape[1])[None, :]]


def shuffle_marginal_product(batch: ActivationBatch, seed) -> ActivationBatch:
    """Permute each column independently; labels are dropped."""
    if batch.K < 2:
        raise ValueError("need at least 2 rows to resample the product of marginals")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    perms = column_permutations(batch.K, batch.m, rng)
    return ActivationBatch(apply_permutations(batch.values, perms))


def filters_to_activation_batch(feature_maps) -> ActivationBatch:
    """``(K, F, Hs, Ws)`` feature maps -> ``(K*Hs*Ws, F)`` rows, one per position."""
    fm = feature_maps.data if isinstance(feature_maps, Tensor) else np.asarray(feature_maps, dtype=np.float64)
    if fm.ndim != 4:
        raise ValueError(f"feature maps must be (K, F, Hs, Ws), got {fm.shape}")
    if fm.shape[1] < 2:
        raise ValueError("need at least 2 filters")
    return ActivationBatch(fm.transpose(0, 2, 3, 1).reshape(-1, fm.shape[1]))


def filters_to_rows(feature_maps: Tensor) -> Tensor:
    """Differentiable version of :func:`filters_to_activation_batch`."""
    K, F, H, W = feature_maps.shape
    data = feature_maps.data.transpose(0, 2, 3, 1).reshape(-1, F)

    def backward(g):
        return (g.reshape(K, H, W, F).transpose(0, 3, 1, 2).copy(),)

    return T._result(data, (feature_maps,), backward, "filters_to_rows")


def _seeds(seed):
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    init, shuffle = ss.spawn(2)
    return np.random.default_rng(init), np.random.default_rng(shuffle)


def _canonical_order(values: np.ndarray, labels=None) -> np.ndarray:
    keys = [values[:, j] for j in range(values.shape[1] - 1, -1, -1)]
    if labels is not None:
        keys.append(labels)
    return np.lexsort(keys)


def js_mi_estimate(batch: ActivationBatch, disc: Discriminator | None = None, updates: int = 2000,
                   seed=0, lr: float = 1e-3, hidden: int = 200, eval_shuffles: int = 1) -> float:
    """Train ``disc`` for ``updates`` steps, return the objective plus ``2 ln 2``.

    Rows are put in canonical (lexicographic) order first, so the result does
    not depend on the input row order. ``disc=None`` starts a fresh
    discriminator seeded from ``seed``.
    """
    if batch.K < 2:
        raise ValueError("need at least 2 rows")
    values = batch.values[_canonical_order(batch.values)]
    init_rng, rng = _seeds(seed)
    if disc is None:
        disc = Discriminator(batch.m, init_rng, hidden=hidden, lr=lr)
    for _ in range(updates):
        disc.update(values, apply_permutations(values, column_permutations(batch.K, batch.m, rng)))
    return _evaluate(disc, [values], [1.0], rng, eval_shuffles)


def conditional_js_mi_estimate(batch: ActivationBatch, disc: Discriminator | None = None,
                               updates: int = 2000, seed=0, lr: float = 1e-3, hidden: int = 200,
                               eval_shuffles: int = 1) -> float:
    """Class-proportion-weighted JS estimate with one shared discriminator.

    Each round updates ``disc`` once per class on that class's rows and a
    within-class shuffle. Classes with fewer than 2 rows are skipped and the
    class weights renormalized over the rest.
    """
    if batch.labels is None:
        raise ValueError("conditional estimate needs labels")
    order = _canonical_order(batch.values, batch.labels)
    values, labels = batch.values[order], batch.labels[order]
    canon = ActivationBatch(values, labels)
    groups = canon.class_rows(2)
    if not groups:
        raise ValueError("no class has at least 2 samples")
    init_rng, rng = _seeds(seed)
    if disc is None:
        disc = Discriminator(batch.m, init_rng, hidden=hidden, lr=lr)
    blocks = [values[rows] for _, rows in groups]
    n = sum(b.shape[0] for b in blocks)
    weights = [b.shape[0] / n for b in blocks]
    for _ in range(updates):
        for b in blocks:
            disc.update(b, apply_permutations(b, column_permutations(b.shape[0], b.shape[1], rng)))
    return _evaluate(disc, blocks, weights, rng, eval_shuffles)


def _evaluate(disc, blocks, weights, rng, eval_shuffles: int) -> float:
    total = 0.0
    for b, w in zip(blocks, weights):
        acc = 0.0
        for _ in range(eval_shuffles):
            shuffled = apply_permutations(b, column_permutations(b.shape[0], b.shape[1], rng))
            acc += disc.objective(Tensor(b), Tensor(shuffled), frozen=True).item()
        total += w * (acc / eval_shuffles + OFFSET)
    if not math.isfinite(total):
        raise EstimatorDiverged(f"estimate is {total}")
    return total


def d_lb_estimate(batch: ActivationBatch, disc1: Discriminator | None = None,
                  disc2: Discriminator | None = None, updates: int = 2000, seed=0,
                  lr: float = 1e-3, hidden: int = 200, eval_shuffles: int = 1) -> float:
    """Unconditional minus class-conditional JS estimate."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    s1, s2 = ss.spawn(2)
    kw = dict(updates=updates, lr=lr, hidden=hidden, eval_shuffles=eval_shuffles)
    return js_mi_estimate(batch, disc1, seed=s1, **kw) - conditional_js_mi_estimate(batch, disc2, seed=s2, **kw)
