"""Finite-difference oracle and random graph builder shared by the tests."""
from __future__ import annotations

import numpy as np

from ldmlab import tensor as T
from ldmlab.tensor import Tensor

H = 1e-5


def numeric_grad(f, arrays, h=H):
    """Central differences of scalar ``f(*arrays)`` with respect to each array."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = a[i]
            a[i] = old + h
            fp = f(*arrays)
            a[i] = old - h
            fm = f(*arrays)
            a[i] = old
            g[i] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


def rel_err(a, b) -> float:
    a, b = np.ravel(a), np.ravel(b)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-8)
    return float(np.linalg.norm(a - b) / denom)


def gradcheck(build, arrays, h=H) -> float:
    """Largest relative error between autodiff and central differences.

    ``build(*tensors)`` must return a scalar Tensor.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    leaves = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    build(*leaves).backward()
    fd = numeric_grad(lambda *xs: build(*(Tensor(x) for x in xs)).item(), arrays, h)
    return max(rel_err(l.grad, g) for l, g in zip(leaves, fd))


def away_from_zero(rng, shape, margin=0.1):
    """Normal draws pushed at least ``margin`` away from 0 (keeps ReLU off its kink)."""
    x = rng.standard_normal(shape)
    return np.where(x >= 0, x + margin, x - margin)


# unary ops applied to a (r, c) tensor, returning the same shape
_UNARY = [
    ("relu", T.relu),
    ("sigmoid", T.sigmoid),
    ("square", T.square),
    ("scale", lambda x: T.scale(x, -1.7)),
    ("neg", T.neg),
    ("log_sigmoid", lambda x: T.log(T.sigmoid(x))),
]


def random_graph(rng):
    """A random small expression graph.

    Returns ``(build, arrays, ops)`` where ``build(*tensors)`` gives a scalar.
    """
    r, c, k = (int(v) for v in rng.integers(2, 5, size=3))
    arrays = [away_from_zero(rng, (r, c)), away_from_zero(rng, (c, k)), away_from_zero(rng, (k,))]
    n_ops = int(rng.integers(1, 4))
    picks = [_UNARY[i] for i in rng.integers(0, len(_UNARY), size=n_ops)]
    head = int(rng.integers(0, 5))
    labels = rng.integers(0, k, size=r)
    perms = np.stack([rng.permutation(r) for _ in range(k)], axis=1)
    rows = rng.integers(0, r, size=r + 1)

    def build(x, w, b):
        z = x @ w + b
        for _, op in picks:
            z = op(z)
        if head == 0:
            return T.softmax_cross_entropy(z, labels)
        if head == 1:
            return T.mean(T.permute_columns(z, perms) * z)
        if head == 2:
            return T.sum_(T.take_rows(z, rows))
        if head == 3:
            return T.sum_(T.diagonal(T.transpose(z) @ z))
        return T.mean(T.sum_(z * z, axis=1))

    ops = ["matmul", "add"] + [n for n, _ in picks] + [
        ("softmax_xent", "permute_columns", "take_rows", "diagonal", "sum_axis")[head]]
    return build, arrays, ops


# -- quadrature oracle for 2-D Gaussian mixtures -----------------------------
_GRID = np.linspace(-12.0, 12.0, 961)
_GX, _GY = np.meshgrid(_GRID, _GRID, indexing="ij")
_DA = (_GRID[1] - _GRID[0]) ** 2


def gaussian_density(mx, my, rho):
    u, v = _GX - mx, _GY - my
    return np.exp(-(u * u - 2 * rho * u * v + v * v) / (2 * (1 - rho * rho))) / (2 * np.pi * np.sqrt(1 - rho * rho))


def twice_jsd(p, q) -> float:
    """``2 JSD(p || q)`` for densities on the grid, in nats."""
    m = 0.5 * (p + q)

    def part(a):
        safe = np.where(a > 0, a, 1.0)
        return np.where(a > 0, a * np.log(safe / np.where(m > 0, m, 1.0)), 0.0).sum()

    return float((part(p) + part(q)) * _DA)


def product_of_grid_marginals(p):
    dx = _GRID[1] - _GRID[0]
    return np.outer(p.sum(axis=1) * dx, p.sum(axis=0) * dx)


# -- CLI inputs -----------------------------------------------------------------
SYNTH_SPEC = {"means": [[0, 0, 0, 0], [1, 1, 0, 0], [0, 0, 1, 1]],
              "covs": [np.eye(4).tolist()] * 3, "n_train": 300, "n_test": 150, "seed": 3}
SMALL_CONFIG = {"method": "ldm", "iterations": 12, "eval_every": 4, "hidden": 6, "batch_size": 32,
                "probe_size": 100, "noise_std": 0.0}


def write_cli_inputs(directory):
    """Synthetic mixture spec and a small config; returns their paths."""
    import json

    syn, cfg = directory / "syn.json", directory / "cfg.json"
    syn.write_text(json.dumps(SYNTH_SPEC))
    cfg.write_text(json.dumps(SMALL_CONFIG))
    return syn, cfg


def csv_bytes(directory):
    """``{name: bytes}`` for every CSV below ``directory``."""
    return {p.relative_to(directory).as_posix(): p.read_bytes() for p in sorted(directory.rglob("*.csv"))}


# -- acceptance report ----------------------------------------------------------
ACCEPTANCE: list[str] = []


def verdict(number: int, title: str, ok: bool, detail: str, seconds: float, budget: float) -> None:
    """Record and print one PASS/FAIL line."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} | {detail} | {seconds:.1f}s (budget {budget:.0f}s)"
    ACCEPTANCE.append(line)
    print(line)
