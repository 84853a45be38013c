"""Exact enumeration of small learning problems.

A :class:`ToyLearningProblem` fixes a finite instance distribution, hidden
maps from inputs to finite alphabets, a finite hypothesis set with a bounded
loss on ``f(z) = (h(x), y)``, and a stochastic learning rule given as an
explicit table ``P(W | S)`` over every dataset of size ``n``. Everything
downstream (the generalization gap, ``I(f(S); W)``, every entropy) is a sum
over that enumeration.

Datasets are indexed in mixed radix: sample ``k`` of dataset ``s`` is
``z_k = (s // |Z|**(n-1-k)) % |Z|`` and ``z = x * n_labels + y``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .info import DiscreteJoint, conditional_multivariate_mi, entropy, multivariate_mi, mutual_information

MAX_ENUMERATION = 10**6
ROW_TOL = 1e-12


class EnumerationTooLarge(ValueError):
    pass


@dataclass
class ToyLearningProblem:
    """Finite learning problem.

    Parameters
    ----------
    pz : (n_x, n_labels) array
        Instance distribution ``P(X=x, Y=y)``.
    hidden : (m, n_x) int array
        ``hidden[i, x]`` is the value of unit ``i`` on input ``x``.
    alphabets : tuple of int
        Alphabet size of every unit.
    n : int
        Sample size.
    loss : (n_codes * n_labels, n_hyp) array
        ``loss[f, w]`` with ``f = unit_code * n_labels + y``; the unit code is
        the mixed-radix index of ``(h_1(x), ..., h_m(x))``.
    rule : (n_z ** n, n_hyp) array
        Rows of the learning rule ``P(W | S)``.
    loss_range : (a, b)
        Declared bounds of the loss.
    """

    pz: np.ndarray
    hidden: np.ndarray
    alphabets: tuple
    n: int
    loss: np.ndarray
    rule: np.ndarray
    loss_range: tuple = (0.0, 1.0)

    def __post_init__(self):
        self.pz = np.asarray(self.pz, dtype=np.float64)
        self.hidden = np.atleast_2d(np.asarray(self.hidden, dtype=np.int64))
        self.alphabets = tuple(int(a) for a in self.alphabets)
        self.loss = np.asarray(self.loss, dtype=np.float64)
        self.rule = np.asarray(self.rule, dtype=np.float64)
        nx, ny = self.pz.shape
        if abs(self.pz.sum() - 1.0) > ROW_TOL or np.any(self.pz < 0):
            raise ValueError("instance distribution is not a pmf")
        if self.hidden.shape != (len(self.alphabets), nx):
            raise ValueError(f"hidden maps must have shape (m, {nx})")
        if np.any(self.hidden < 0) or np.any(self.hidden >= np.array(self.alphabets)[:, None]):
            raise ValueError("hidden map value outside its alphabet")
        if self.n < 1:
            raise ValueError("sample size must be positive")
        n_codes = int(np.prod(self.alphabets))
        if self.loss.shape[0] != n_codes * ny:
            raise ValueError(f"loss table needs {n_codes * ny} rows, has {self.loss.shape[0]}")
        a, b = self.loss_range
        if np.any(self.loss < a - ROW_TOL) or np.any(self.loss > b + ROW_TOL):
            raise ValueError("loss value outside declared range")
        n_sets = (nx * ny) ** self.n
        if n_sets * self.n_hyp > MAX_ENUMERATION:
            raise EnumerationTooLarge(f"{n_sets} datasets x {self.n_hyp} hypotheses exceeds {MAX_ENUMERATION}")
        if self.rule.shape != (n_sets, self.n_hyp):
            raise ValueError(f"rule table must have shape ({n_sets}, {self.n_hyp})")
        if np.any(self.rule < 0) or np.any(np.abs(self.rule.sum(axis=1) - 1.0) > ROW_TOL):
            raise ValueError("learning rule rows must be pmfs")

    @property
    def n_labels(self) -> int:
        return self.pz.shape[1]

    @property
    def n_z(self) -> int:
        return self.pz.size

    @property
    def n_hyp(self) -> int:
        return self.loss.shape[1]

    @property
    def sigma(self) -> float:
        a, b = self.loss_range
        return (b - a) / 2.0

    def unit_codes(self) -> np.ndarray:
        """Mixed-radix code of the unit vector for every input ``x``."""
        code = np.zeros(self.hidden.shape[1], dtype=np.int64)
        for i, a in enumerate(self.alphabets):
            code = code * a + self.hidden[i]
        return code

    def single_sample_joint(self) -> DiscreteJoint:
        """Joint of ``(h_1(X), ..., h_m(X), Y)``."""
        pmf = np.zeros(self.alphabets + (self.n_labels,))
        for x in range(self.pz.shape[0]):
            idx = tuple(self.hidden[:, x])
            pmf[idx] += self.pz[x]
        return DiscreteJoint(pmf, self.alphabets, self.n_labels)

    def scaled(self, c: float) -> "ToyLearningProblem":
        """Same problem with the loss multiplied by ``c > 0``."""
        a, b = self.loss_range
        return ToyLearningProblem(self.pz, self.hidden, self.alphabets, self.n,
                                  self.loss * c, self.rule, (a * c, b * c))


@dataclass
class _Enumeration:
    p_s: np.ndarray        # P(S) per dataset
    f_code: np.ndarray     # compact code of f(S)
    hx_code: np.ndarray    # compact code of h(S_x)
    train_loss: np.ndarray # L_{f(S)}(w), shape (n_sets, n_hyp)


def _enumerate(p: ToyLearningProblem) -> _Enumeration:
    nz, n = p.n_z, p.n
    s = np.arange(nz**n, dtype=np.int64)
    digits = np.stack([(s // nz ** (n - 1 - k)) % nz for k in range(n)], axis=1)
    xs, ys = digits // p.n_labels, digits % p.n_labels
    p_s = np.prod(p.pz.reshape(-1)[digits], axis=1)
    hcode = p.unit_codes()[xs]
    f = hcode * p.n_labels + ys
    n_f = int(np.prod(p.alphabets)) * p.n_labels
    n_h = int(np.prod(p.alphabets))
    f_full = np.zeros(len(s), dtype=np.int64)
    h_full = np.zeros(len(s), dtype=np.int64)
    for k in range(n):
        f_full = f_full * n_f + f[:, k]
        h_full = h_full * n_h + hcode[:, k]
    _, f_code = np.unique(f_full, return_inverse=True)
    _, hx_code = np.unique(h_full, return_inverse=True)
    train_loss = p.loss[f].mean(axis=1)  # (n_sets, n, n_hyp) -> mean over samples
    return _Enumeration(p_s, f_code.reshape(-1), hx_code.reshape(-1), train_loss)


def _group(codes: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Sum rows of ``weights`` (n_sets, n_hyp) sharing a code -> (n_codes, n_hyp)."""
    out = np.zeros((codes.max() + 1, weights.shape[1]))
    np.add.at(out, codes, weights)
    return out


def generalization_gap_exact(p: ToyLearningProblem) -> float:
    """E over independent (S, W) minus E over the joint, of the empirical risk."""
    e = _enumerate(p)
    joint = e.p_s[:, None] * p.rule
    p_w = joint.sum(axis=0)
    product = e.p_s[:, None] * p_w[None, :]
    return float(((product - joint) * e.train_loss).sum())


def mi_dataset_hypothesis(p: ToyLearningProblem) -> float:
    """I(f(S); W) from the exact joint of the data representation and hypothesis."""
    e = _enumerate(p)
    return mutual_information(_group(e.f_code, e.p_s[:, None] * p.rule))


def lemma1_bound(p: ToyLearningProblem) -> tuple[float, float]:
    """``(|g|, sqrt(2 sigma^2 I(f(S); W) / n))``."""
    g = generalization_gap_exact(p)
    mi = max(mi_dataset_hypothesis(p), 0.0)
    return abs(g), math.sqrt(2.0 * p.sigma**2 * mi / p.n)


def theorem1_terms(p: ToyLearningProblem) -> dict[str, float]:
    """Both sides of the decomposition of ``I(f(S); W) / n`` (radicands)."""
    e = _enumerate(p)
    joint_sw = e.p_s[:, None] * p.rule
    f_w = _group(e.f_code, joint_sw)
    hx = _group(e.hx_code, e.p_s[:, None]).reshape(-1)
    single = p.single_sample_joint()
    relevancy = 0.0
    for i in range(single.m):
        axes = tuple(a for a in range(single.m) if a != i)
        relevancy += mutual_information(single.pmf.sum(axis=axes))
    # (h(S_x), S_y) carries the same information as f(S)
    h_sy_w_given_hx = entropy(f_w) - entropy(hx)
    terms = {
        "lhs": mutual_information(f_w) / p.n,
        "tc": multivariate_mi(single),
        "tc_given_y": conditional_multivariate_mi(single),
        "relevancy": relevancy,
        "h_y": entropy(single.label_marginal()),
        "h_w": entropy(joint_sw.sum(axis=0)),
        "h_sy_w_given_hx": h_sy_w_given_hx,
    }
    terms["rhs"] = (terms["tc"] - terms["tc_given_y"] - terms["relevancy"] + terms["h_y"]
                    + (terms["h_w"] - terms["h_sy_w_given_hx"]) / p.n)
    return terms


def theorem1_residual(p: ToyLearningProblem) -> float:
    t = theorem1_terms(p)
    return t["lhs"] - t["rhs"]


# -- construction helpers -------------------------------------------------
def zero_one_loss(predictions: np.ndarray, n_labels: int) -> np.ndarray:
    """Loss table for lookup-table classifiers.

    ``predictions[w, code]`` is the label hypothesis ``w`` assigns to unit
    code ``code``.
    """
    predictions = np.asarray(predictions, dtype=np.int64)
    n_hyp, n_codes = predictions.shape
    f = np.arange(n_codes * n_labels)
    code, y = f // n_labels, f % n_labels
    return (predictions[:, code] != y[None, :]).astype(np.float64).T


def dataset_train_losses(pz, hidden, alphabets, n, loss) -> np.ndarray:
    """Empirical risk of every hypothesis on every dataset (for building rules)."""
    pz = np.asarray(pz, dtype=np.float64)
    n_sets = pz.size**n
    dummy = np.full((n_sets, np.asarray(loss).shape[1]), 1.0 / np.asarray(loss).shape[1])
    prob = ToyLearningProblem(pz, hidden, alphabets, n, loss, dummy, (float(np.min(loss)), float(np.max(loss))))
    return _enumerate(prob).train_loss


def gibbs_rule(train_loss: np.ndarray, beta: float) -> np.ndarray:
    """``P(w | S) ∝ exp(-beta * L_S(w))``."""
    z = -beta * train_loss
    z -= z.max(axis=1, keepdims=True)
    w = np.exp(z)
    return w / w.sum(axis=1, keepdims=True)


def erm_rule(train_loss: np.ndarray) -> np.ndarray:
    """Uniform over empirical-risk minimizers."""
    best = np.isclose(train_loss, train_loss.min(axis=1, keepdims=True), rtol=0, atol=1e-12)
    return best / best.sum(axis=1, keepdims=True)


def constant_rule(n_sets: int, p_w) -> np.ndarray:
    return np.tile(np.asarray(p_w, dtype=np.float64), (n_sets, 1))


def random_problem(rng: np.random.Generator, n: int | None = None, max_x: int = 4,
                   max_m: int = 2, max_hyp: int = 4, n_labels: int = 2) -> ToyLearningProblem:
    """Random problem with 0-1 loss and a random stochastic or Gibbs rule."""
    nx = int(rng.integers(2, max_x + 1))
    m = int(rng.integers(1, max_m + 1))
    n = int(rng.integers(1, 4)) if n is None else n
    alphabets = tuple(int(rng.integers(2, 4)) for _ in range(m))
    hidden = np.stack([rng.integers(0, a, size=nx) for a in alphabets])
    pz = rng.dirichlet(np.ones(nx * n_labels)).reshape(nx, n_labels)
    n_hyp = int(rng.integers(2, max_hyp + 1))
    n_codes = int(np.prod(alphabets))
    preds = rng.integers(0, n_labels, size=(n_hyp, n_codes))
    loss = zero_one_loss(preds, n_labels)
    n_sets = (nx * n_labels) ** n
    kind = rng.integers(0, 3)
    if kind == 0:
        rule = rng.dirichlet(np.full(n_hyp, 0.5), size=n_sets)
    else:
        tl = dataset_train_losses(pz, hidden, alphabets, n, loss)
        rule = gibbs_rule(tl, beta=float(rng.uniform(0.5, 20.0))) if kind == 1 else erm_rule(tl)
    return ToyLearningProblem(pz, hidden, alphabets, n, loss, rule, (0.0, 1.0))


def load_problem(path: str | Path) -> ToyLearningProblem:
    """Read a problem from JSON.

    Fields: ``pz`` (nested list), ``hidden`` (m lists), ``alphabets``, ``n``,
    ``loss`` (table) or ``predictions`` (lookup classifiers, 0-1 loss),
    ``loss_range`` (default ``[0, 1]``) and ``rule``: an explicit table, or
    ``{"kind": "erm"}``, ``{"kind": "gibbs", "beta": b}``,
    ``{"kind": "constant", "p_w": [...]}``.
    """
    obj = json.loads(Path(path).read_text())
    for key in ("pz", "hidden", "alphabets", "n", "rule"):
        if key not in obj:
            raise ValueError(f"{path}: missing field {key!r}")
    pz = np.asarray(obj["pz"], dtype=np.float64)
    if "loss" in obj:
        loss = np.asarray(obj["loss"], dtype=np.float64)
    elif "predictions" in obj:
        loss = zero_one_loss(np.asarray(obj["predictions"]), pz.shape[1])
    else:
        raise ValueError(f"{path}: need 'loss' or 'predictions'")
    n = int(obj["n"])
    rule = obj["rule"]
    if isinstance(rule, dict):
        kind = rule.get("kind")
        if kind == "constant":
            rule = constant_rule(pz.size**n, rule["p_w"])
        elif kind in ("erm", "gibbs"):
            tl = dataset_train_losses(pz, obj["hidden"], obj["alphabets"], n, loss)
            rule = erm_rule(tl) if kind == "erm" else gibbs_rule(tl, float(rule["beta"]))
        else:
            raise ValueError(f"{path}: unknown rule kind {kind!r}")
    return ToyLearningProblem(pz, obj["hidden"], tuple(obj["alphabets"]), n, loss,
                              np.asarray(rule, dtype=np.float64),
                              tuple(obj.get("loss_range", (0.0, 1.0))))
