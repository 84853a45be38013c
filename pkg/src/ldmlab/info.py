"""Exact information quantities over finite joint distributions.

All functions enumerate a dense probability table, so they are exact up to
floating-point rounding. Natural logarithms are used unless a ``base`` is
given; :func:`hellman_raviv_check` works in bits.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAX_OUTCOMES = 10**7
SUM_TOL = 1e-12


class InvalidDistribution(ValueError):
    pass


@dataclass(frozen=True)
class DiscreteJoint:
    """Probability table over ``m`` unit alphabets and an optional label.

    ``pmf`` has shape ``alphabets + (labels,)`` when ``labels > 0``, else
    ``alphabets``. Unit axes come first; the label axis is last.
    """

    pmf: np.ndarray
    alphabets: tuple[int, ...]
    labels: int = 0

    def __post_init__(self):
        pmf = np.asarray(self.pmf, dtype=np.float64)
        expect = tuple(self.alphabets) + ((self.labels,) if self.labels else ())
        if int(np.prod(expect, dtype=np.int64)) > MAX_OUTCOMES:
            raise InvalidDistribution(f"joint has more than {MAX_OUTCOMES} outcomes")
        if pmf.shape != expect:
            if pmf.size != int(np.prod(expect, dtype=np.int64)):
                raise InvalidDistribution(f"pmf has {pmf.size} entries, expected shape {expect}")
            pmf = pmf.reshape(expect)
        if np.any(pmf < 0) or not np.all(np.isfinite(pmf)):
            raise InvalidDistribution("pmf has negative or non-finite mass")
        if abs(pmf.sum() - 1.0) > SUM_TOL:
            raise InvalidDistribution(f"pmf sums to {pmf.sum()!r}, not 1")
        object.__setattr__(self, "pmf", pmf)
        object.__setattr__(self, "alphabets", tuple(int(a) for a in self.alphabets))

    @property
    def m(self) -> int:
        return len(self.alphabets)

    @classmethod
    def from_units(cls, pmf, labels: bool = False) -> "DiscreteJoint":
        """Build from an array whose last axis is the label when ``labels``."""
        pmf = np.asarray(pmf, dtype=np.float64)
        if labels:
            return cls(pmf, pmf.shape[:-1], pmf.shape[-1])
        return cls(pmf, pmf.shape, 0)

    def units(self) -> np.ndarray:
        """Joint table of the units with the label summed out."""
        return self.pmf.sum(axis=-1) if self.labels else self.pmf

    def label_marginal(self) -> np.ndarray:
        if not self.labels:
            raise InvalidDistribution("joint has no label axis")
        return self.pmf.reshape(-1, self.labels).sum(axis=0)

    def unit_marginal(self, i: int) -> np.ndarray:
        tab = self.units()
        return tab.sum(axis=tuple(a for a in range(tab.ndim) if a != i))

    # -- file format --------------------------------------------------------
    def to_json(self) -> dict:
        return {"alphabets": list(self.alphabets), "labels": self.labels,
                "pmf": self.pmf.reshape(-1).tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "DiscreteJoint":
        for key in ("alphabets", "pmf"):
            if key not in obj:
                raise InvalidDistribution(f"joint file missing field {key!r}")
        alph = obj["alphabets"]
        if not isinstance(alph, list) or not all(isinstance(a, int) and a > 0 for a in alph):
            raise InvalidDistribution("field 'alphabets' must be a list of positive integers")
        labels = obj.get("labels", 0) or 0
        if not isinstance(labels, int) or labels < 0:
            raise InvalidDistribution("field 'labels' must be a nonnegative integer")
        return cls(np.asarray(obj["pmf"], dtype=np.float64), tuple(alph), labels)

    @classmethod
    def load(cls, path: str | Path) -> "DiscreteJoint":
        text = Path(path).read_text()
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidDistribution(f"{path}: line {exc.lineno} col {exc.colno}: {exc.msg}") from exc
        return cls.from_json(obj)


def _logf(base: float | None):
    if base is None:
        return np.log
    c = math.log(base)
    return lambda x: np.log(x) / c


def entropy(p, base: float | None = None) -> float:
    """Shannon entropy with ``0 log 0 = 0``."""
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    if np.any(p < 0):
        raise InvalidDistribution("negative probability mass")
    nz = p[p > 0]
    return float(-(nz * _logf(base)(nz)).sum())


def kl_divergence(p, q, base: float | None = None) -> float:
    """KL(p || q); ``math.inf`` when p puts mass where q has none."""
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    if p.shape != q.shape:
        raise InvalidDistribution("KL arguments have different alphabets")
    sup = p > 0
    if np.any(q[sup] <= 0):
        return math.inf
    return float((p[sup] * _logf(base)(p[sup] / q[sup])).sum())


def js_divergence_exact(p, q, base: float | None = None) -> float:
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    mid = 0.5 * (p + q)
    return 0.5 * kl_divergence(p, mid, base) + 0.5 * kl_divergence(q, mid, base)


def product_of_marginals(table: np.ndarray) -> np.ndarray:
    out = np.ones(())
    for ax in range(table.ndim):
        marg = table.sum(axis=tuple(a for a in range(table.ndim) if a != ax))
        out = np.multiply.outer(out, marg)
    return out


def total_correlation(table, base: float | None = None) -> float:
    """KL of a joint table to the product of its own marginals (0 for one axis)."""
    table = np.asarray(table, dtype=np.float64)
    if table.ndim < 2:
        return 0.0
    return kl_divergence(table, product_of_marginals(table), base)


def multivariate_mi(joint: DiscreteJoint | np.ndarray, base: float | None = None) -> float:
    table = joint.units() if isinstance(joint, DiscreteJoint) else np.asarray(joint)
    return total_correlation(table, base)


def conditional_multivariate_mi(joint: DiscreteJoint, base: float | None = None) -> float:
    """Label-prior-weighted total correlation of the class-conditional tables."""
    py = joint.label_marginal()
    total = 0.0
    for y, w in enumerate(py):
        if w <= 0:
            continue
        total += w * total_correlation(joint.pmf[..., y] / w, base)
    return total


def d_lb_exact(joint: DiscreteJoint, base: float | None = None) -> float:
    """Marginal total correlation minus the class-conditional one (can be < 0)."""
    return multivariate_mi(joint, base) - conditional_multivariate_mi(joint, base)


def mutual_information(pxy, base: float | None = None) -> float:
    """I(A;B) for a 2-D table, via entropies."""
    pxy = np.asarray(pxy, dtype=np.float64)
    return entropy(pxy.sum(axis=1), base) + entropy(pxy.sum(axis=0), base) - entropy(pxy, base)


def _units_vs_label(joint: DiscreteJoint) -> np.ndarray:
    return joint.pmf.reshape(-1, joint.labels)


def ensemble_decomposition_residual(joint: DiscreteJoint, base: float | None = None) -> float:
    """I(units; Y) minus (sum of unit relevancies + conditional TC - TC)."""
    lhs = mutual_information(_units_vs_label(joint), base)
    relevancy = 0.0
    for i in range(joint.m):
        axes = tuple(a for a in range(joint.m) if a != i)
        relevancy += mutual_information(joint.pmf.sum(axis=axes), base)
    rhs = relevancy + conditional_multivariate_mi(joint, base) - multivariate_mi(joint, base)
    return lhs - rhs


def hellman_raviv_check(joint: DiscreteJoint) -> tuple[float, float]:
    """Bayes error of predicting Y from the units and ``H(Y | units) / 2`` in bits."""
    tab = _units_vs_label(joint)
    bayes_error = float(1.0 - tab.max(axis=1).sum())
    bound = 0.5 * (entropy(tab.sum(axis=0), 2) - mutual_information(tab, 2))
    return max(bayes_error, 0.0), bound


def random_joint(rng: np.random.Generator, alphabets, labels: int, concentration: float = 1.0) -> DiscreteJoint:
    """Dirichlet-distributed table, optionally with sparse zeros."""
    shape = tuple(alphabets) + ((labels,) if labels else ())
    w = rng.gamma(concentration, size=shape)
    if rng.random() < 0.3:
        w = w * (rng.random(shape) > 0.3)
        if w.sum() == 0:
            w.reshape(-1)[0] = 1.0
    return DiscreteJoint(w / w.sum(), tuple(alphabets), labels)
