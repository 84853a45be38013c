"""Correlation-gap diagnostic and classification accuracy."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class ActivationBatch:
    """``K x m`` activations, optionally with ``K`` integer labels."""

    values: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1:
            raise ValueError(f"activation batch must be a non-empty K x m matrix, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("activation batch contains non-finite values")
        object.__setattr__(self, "values", v)
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if lab.shape[0] != v.shape[0]:
                raise ValueError(f"{lab.shape[0]} labels for {v.shape[0]} rows")
            object.__setattr__(self, "labels", lab)

    @property
    def K(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def class_rows(self, min_count: int = 2) -> list[tuple[int, np.ndarray]]:
        """``(label, row indices)`` for every class with at least ``min_count`` rows."""
        if self.labels is None:
            raise ValueError("batch has no labels")
        out = []
        for y in np.unique(self.labels):
            rows = np.flatnonzero(self.labels == y)
            if rows.size >= min_count:
                out.append((int(y), rows))
        return out


@dataclass(frozen=True)
class CorrelationStats:
    cov: np.ndarray
    means: np.ndarray
    corre: float
    corre_cond: float
    gap: float


def covariance(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Biased (1/n) covariance and column means."""
    mu = values.mean(axis=0)
    d = values - mu
    return d.T @ d / values.shape[0], mu


def correlation_index(batch: ActivationBatch | np.ndarray) -> float:
    """Mean absolute off-diagonal correlation over live (non-constant) units."""
    values = batch.values if isinstance(batch, ActivationBatch) else np.asarray(batch, dtype=np.float64)
    if values.shape[0] < 2:
        raise MetricError("correlation index needs at least 2 samples")
    live = np.ptp(values, axis=0) > 0
    m = int(live.sum())
    if m < 2:
        raise MetricError(f"only {m} live unit(s); correlation index needs 2")
    c, _ = covariance(values[:, live])
    sd = np.sqrt(np.diag(c))
    ratio = np.abs(c) / np.outer(sd, sd)
    return float((ratio.sum() - m) / (m * (m - 1)))


def class_conditional_index(batch: ActivationBatch) -> float:
    """Class-proportion-weighted correlation index.

    Classes with fewer than 2 rows, or fewer than 2 live units, are skipped
    and the remaining weights renormalized.
    """
    parts = []
    for _, rows in batch.class_rows(2):
        try:
            parts.append((rows.size, correlation_index(batch.values[rows])))
        except MetricError:
            continue
    if not parts:
        raise MetricError("no class has 2 samples and 2 live units")
    n = sum(c for c, _ in parts)
    return float(sum((c / n) * idx for c, idx in parts))


def correlation_stats(batch: ActivationBatch) -> CorrelationStats:
    cov, mu = covariance(batch.values)
    corre = correlation_index(batch)
    cond = class_conditional_index(batch)
    return CorrelationStats(cov, mu, corre, cond, corre - cond)


def correlation_gap(batch: ActivationBatch) -> float:
    """Class-independent minus class-conditional correlation index."""
    return correlation_stats(batch).gap


def accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of rows whose argmax (lowest index on ties) equals the label."""
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if labels.size == 0:
        raise MetricError("accuracy of an empty dataset")
    if logits.shape[0] != labels.shape[0]:
        raise MetricError(f"{logits.shape[0]} predictions for {labels.shape[0]} labels")
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def model_accuracy(model, features: np.ndarray, labels: np.ndarray) -> float:
    return accuracy(model.predict_logits(features), labels)
