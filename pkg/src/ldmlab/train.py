"""Classifier training with diversity regularizers.

Methods: ``none``, ``dropout``, ``decov`` (cross-covariance penalty),
``udm`` (adversarial total-correlation penalty) and ``ldm`` (total
correlation minus its class-conditional counterpart). The adversarial
methods train their discriminators a few steps per classifier step, then
take one classifier step on ``E_loss + lam * regularizer`` with the
discriminators frozen.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .dataio import Dataset
from .estimators import OFFSET, Discriminator, apply_permutations, column_permutations, filters_to_rows
from .metrics import ActivationBatch, MetricError, accuracy, correlation_stats
from .nn import MLP, Adam, SmallCNN
from .tensor import Tensor

log = logging.getLogger(__name__)

METHODS = ("none", "dropout", "decov", "udm", "ldm")
DEFAULT_LAMBDA = {"none": 0.0, "dropout": 0.0, "decov": 0.1, "udm": 0.1, "ldm": 0.7}
CSV_COLUMNS = ("iteration", "e_loss", "d_js", "d_js_l", "t_loss", "corre", "corre_cond",
               "corre_gap", "train_acc", "test_acc")


@dataclass
class TrainConfig:
    method: str = "ldm"
    lam: float | None = None
    batch_size: int = 64
    lr: float = 1e-3
    disc_lr: float = 1e-4
    disc_updates: int = 4
    disc_hidden: int = 200
    iterations: int = 1000
    seed: int = 0
    arch: str = "mlp"
    hidden: int = 32
    dropout_rate: float = 0.5
    eval_every: int = 50
    probe_size: int = 2048
    train_eval_size: int | None = None
    max_conv_rows: int = 1024
    noise_std: float = 1.0
    noise_test: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.lam is None:
            self.lam = DEFAULT_LAMBDA[self.method]
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.lr <= 0 or self.disc_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.batch_size < 2:
            raise ValueError("batch size must be at least 2")
        if self.arch not in ("mlp", "cnn"):
            raise ValueError(f"unknown architecture {self.arch!r}")
        if self.iterations < 1 or self.eval_every < 1:
            raise ValueError("iterations and eval_every must be positive")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def load(cls, path: str | Path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class RunRecord:
    config: dict
    rows: list = field(default_factory=list)
    train_acc: float = float("nan")
    test_acc: float = float("nan")
    wall_clock: float = 0.0

    @property
    def gap(self) -> float:
        return self.train_acc - self.test_acc

    def summary(self) -> dict:
        last = self.rows[-1] if self.rows else {}
        return {"config": self.config, "train_acc": self.train_acc, "test_acc": self.test_acc,
                "gap": self.gap, "final_corre_gap": last.get("corre_gap"),
                "iterations": last.get("iteration"), "wall_clock": self.wall_clock}


# -- regularizers -----------------------------------------------------------
def total_loss(e_loss: Tensor, d_js: Tensor, d_js_l: Tensor, lam: float) -> Tensor:
    """``E_loss + lam * (D_JS - D_JS^L)``."""
    if lam == 0:
        return e_loss
    return e_loss + T.scale(d_js - d_js_l, lam)


def decov_penalty(acts: Tensor | ActivationBatch | np.ndarray) -> Tensor:
    """Half the squared Frobenius norm of the off-diagonal batch covariance."""
    if not isinstance(acts, Tensor):
        acts = Tensor(acts.values if isinstance(acts, ActivationBatch) else acts)
    K = acts.shape[0]
    if K < 2:
        raise ValueError("DeCov needs at least 2 rows")
    centred = acts - T.mean(acts, axis=0)
    cov = T.scale(T.transpose(centred) @ centred, 1.0 / K)
    return T.scale(T.sum_(T.square(cov)) - T.sum_(T.square(T.diagonal(cov))), 0.5)


# -- training state ---------------------------------------------------------
class TrainState:
    """Model, optimizers, discriminators and the random streams of one run.

    Random streams (model init, discriminator init, batch order, shuffles,
    dropout) are independent children of ``SeedSequence(seed)``, so methods
    that do not use a stream leave the others untouched.
    """

    def __init__(self, config: TrainConfig, d_in: int, n_classes: int):
        self.config = config
        init, disc_init, data, shuffle, drop = np.random.SeedSequence(config.seed).spawn(5)
        init_rng = np.random.default_rng(init)
        if config.arch == "mlp":
            self.model = MLP(d_in, config.hidden, n_classes, init_rng)
            m = config.hidden
        else:
            side = int(round(math.sqrt(d_in)))
            if side * side != d_in:
                raise ValueError(f"CNN needs square images, got {d_in} features")
            self.model = SmallCNN(side, n_classes, init_rng)
            m = self.model.pool_shape[0]
        self.opt = Adam(self.model.parameters(), lr=config.lr)
        self.data_rng = np.random.default_rng(data)
        self.shuffle_rng = np.random.default_rng(shuffle)
        self.dropout_rng = np.random.default_rng(drop)
        self.disc1 = self.disc2 = None
        if config.method in ("udm", "ldm"):
            drng = np.random.default_rng(disc_init)
            self.disc1 = Discriminator(m, drng, config.disc_hidden, config.disc_lr)
            if config.method == "ldm":
                self.disc2 = Discriminator(m, drng, config.disc_hidden, config.disc_lr)
        self.iteration = 0
        self._order = np.empty(0, dtype=np.int64)
        self._cursor = 0

    def next_batch(self, n: int) -> np.ndarray:
        """Indices of the next minibatch; epochs are reshuffled without replacement."""
        K = self.config.batch_size
        out = []
        while K > 0:
            if self._cursor >= self._order.size:
                self._order = self.data_rng.permutation(n)
                self._cursor = 0
            take = self._order[self._cursor:self._cursor + K]
            out.append(take)
            self._cursor += take.size
            K -= take.size
        return np.concatenate(out)


def _regularized_rows(state: TrainState, hidden: Tensor, labels: np.ndarray):
    """Rows seen by the regularizer and their labels (CNN maps are unrolled)."""
    if state.config.arch == "mlp":
        return hidden, labels
    K, F, H, W = hidden.shape
    rows = filters_to_rows(hidden)
    row_labels = np.repeat(labels, H * W)
    cap = state.config.max_conv_rows
    if rows.shape[0] > cap:
        pick = np.sort(state.shuffle_rng.choice(rows.shape[0], cap, replace=False))
        rows, row_labels = T.take_rows(rows, pick), row_labels[pick]
    return rows, row_labels


def _class_groups(labels: np.ndarray) -> list[np.ndarray]:
    return [np.flatnonzero(labels == y) for y in np.unique(labels) if np.sum(labels == y) >= 2]


def _shuffled(x: np.ndarray, rng) -> np.ndarray:
    return apply_permutations(x, column_permutations(x.shape[0], x.shape[1], rng))


def adversarial_terms(state: TrainState, acts: Tensor, labels: np.ndarray, conditional: bool):
    """Train the discriminators, then build ``D_JS`` and ``D_JS^L`` on ``acts``.

    Returns raw (uncentred) objectives as tensors differentiable with respect
    to ``acts``; the discriminators enter as constants. ``d_js_l`` is ``None``
    when ``conditional`` is off or no class has two rows.
    """
    cfg, rng = state.config, state.shuffle_rng
    hv = acts.data
    for _ in range(cfg.disc_updates):
        state.disc1.update(hv, _shuffled(hv, rng))
    groups = _class_groups(labels) if conditional else []
    if conditional and not groups:
        log.info("iteration %d: every class is a singleton; conditional term skipped", state.iteration)
    blocks = [hv[g] for g in groups]
    for _ in range(cfg.disc_updates if groups else 0):
        for b in blocks:
            state.disc2.update(b, _shuffled(b, rng))

    perms = column_permutations(acts.shape[0], acts.shape[1], rng)
    d_js = state.disc1.objective(acts, T.permute_columns(acts, perms), frozen=True)
    if not groups:
        return d_js, None
    n = sum(g.size for g in groups)
    d_js_l = None
    for g in groups:
        part = T.take_rows(acts, g)
        p = column_permutations(g.size, acts.shape[1], rng)
        term = T.scale(state.disc2.objective(part, T.permute_columns(part, p), frozen=True), g.size / n)
        d_js_l = term if d_js_l is None else d_js_l + term
    return d_js, d_js_l


def train_step(state: TrainState, xb: np.ndarray, yb: np.ndarray) -> dict:
    """One classifier update; returns the logged losses."""
    cfg = state.config
    state.iteration += 1
    drop = cfg.dropout_rate if cfg.method == "dropout" else 0.0
    logits, hidden = state.model.forward(Tensor(xb), drop, state.dropout_rng, training=True)
    e_loss = T.softmax_cross_entropy(logits, yb)
    row = {"iteration": state.iteration, "e_loss": e_loss.item(), "d_js": None, "d_js_l": None}

    if cfg.method in ("udm", "ldm"):
        acts, labels = _regularized_rows(state, hidden, yb)
        d_js, d_js_l = adversarial_terms(state, acts, labels, conditional=cfg.method == "ldm")
        row["d_js"] = d_js.item() + OFFSET
        if d_js_l is not None:
            row["d_js_l"] = d_js_l.item() + OFFSET
        t_loss = total_loss(e_loss, d_js, d_js_l if d_js_l is not None else Tensor(0.0), cfg.lam)
    elif cfg.method == "decov" and cfg.lam != 0:
        acts, _ = _regularized_rows(state, hidden, yb)
        t_loss = e_loss + T.scale(decov_penalty(acts), cfg.lam)
    else:
        t_loss = e_loss

    row["t_loss"] = t_loss.item()
    t_loss.backward()
    state.opt.step()
    return row


# -- evaluation -------------------------------------------------------------
def _hidden_rows(model, x: np.ndarray, labels: np.ndarray):
    if isinstance(model, MLP):
        return np.maximum(x @ model.fc1.weight.data + model.fc1.bias.data, 0.0), labels
    _, pooled = model.forward(Tensor(x))
    K, F, H, W = pooled.shape
    return pooled.data.transpose(0, 2, 3, 1).reshape(-1, F), np.repeat(labels, H * W)


def evaluate(state: TrainState, train: Dataset, test: Dataset, probe: np.ndarray, train_eval: np.ndarray) -> dict:
    model = state.model
    out = {
        "train_acc": accuracy(model.predict_logits(train.features[train_eval]), train.labels[train_eval]),
        "test_acc": accuracy(model.predict_logits(test.features), test.labels),
    }
    values, labels = _hidden_rows(model, test.features[probe], test.labels[probe])
    try:
        stats = correlation_stats(ActivationBatch(values, labels))
        out.update(corre=stats.corre, corre_cond=stats.corre_cond, corre_gap=stats.gap)
    except MetricError as exc:
        log.warning("iteration %d: correlation gap undefined (%s)", state.iteration, exc)
        out.update(corre=None, corre_cond=None, corre_gap=None)
    return out


def probe_indices(n_test: int, size: int) -> np.ndarray:
    """Fixed probe rows of the test split, shared by every run."""
    return np.sort(np.random.default_rng(20240601).choice(n_test, min(size, n_test), replace=False))


def validate(config: TrainConfig, train: Dataset, test: Dataset) -> None:
    if train.features.ndim != 2 or test.features.ndim != 2:
        raise ValueError("datasets must hold flattened feature rows")
    if train.features.shape[1] != test.features.shape[1]:
        raise ValueError(f"train has {train.features.shape[1]} features, test has {test.features.shape[1]}")
    if train.n_classes != test.n_classes:
        raise ValueError("train and test disagree on the class count")
    if len(train) < config.batch_size:
        raise ValueError(f"training split ({len(train)}) smaller than the batch size")
    if config.arch == "cnn":
        d = train.features.shape[1]
        if int(round(math.sqrt(d))) ** 2 != d:
            raise ValueError(f"CNN needs square images, got {d} features")


def run_experiment(config: TrainConfig, train: Dataset, test: Dataset, progress=None) -> RunRecord:
    """Train for ``config.iterations`` steps, evaluating every ``eval_every``."""
    validate(config, train, test)
    t0 = time.perf_counter()
    state = TrainState(config, train.features.shape[1], train.n_classes)
    probe = probe_indices(len(test), config.probe_size)
    if config.train_eval_size is None or config.train_eval_size >= len(train):
        train_eval = np.arange(len(train))
    else:
        train_eval = np.sort(np.random.default_rng(20240602).choice(len(train), config.train_eval_size, replace=False))
    record = RunRecord(config.to_dict())
    for it in range(1, config.iterations + 1):
        idx = state.next_batch(len(train))
        row = train_step(state, train.features[idx], train.labels[idx])
        if it % config.eval_every == 0 or it == config.iterations:
            row.update(evaluate(state, train, test, probe, train_eval))
            record.rows.append(row)
            if progress:
                progress(row)
    last = record.rows[-1]
    record.train_acc, record.test_acc = last["train_acc"], last["test_acc"]
    record.wall_clock = time.perf_counter() - t0
    record.state = state
    return record
