"""Command-line entry point.

Subcommands
-----------
oracle    exact information quantities of a discrete joint (JSON file)
estimate  neural JS estimates for an activation CSV
boundlab  exact generalization-bound checks on enumerable toy problems
train     one or more training runs (methods x seeds)
sweep     lambda x seeds grid for one method
report    aggregate table and SVG plots for a directory of runs

Seeds
-----
Every run draws its seed from the master seed ``--seed`` and its run index:
``SeedSequence([master, index]).generate_state(1)[0]``. In ``train`` and
``sweep`` the run index is the seed index, so different methods or lambdas
with the same index share data order, noise and initialization.

Run CSV columns, in order: iteration, e_loss, d_js, d_js_l, t_loss, corre,
corre_cond, corre_gap, train_acc, test_acc. Empty cells mean "not defined
for this method or row".
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import report
from .dataio import Dataset, add_gaussian_noise, load_mnist, synth_mixture
from .train import CSV_COLUMNS, METHODS, TrainConfig, run_experiment

log = logging.getLogger("ldmlab")


def derive_seed(master: int, index: int) -> int:
    """Seed of run ``index`` under master seed ``master``."""
    return int(np.random.SeedSequence([int(master), int(index)]).generate_state(1)[0])


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=1, sort_keys=True) + "\n")


# -- oracle -----------------------------------------------------------------
def cmd_oracle(args) -> int:
    from . import info

    joint = info.DiscreteJoint.load(args.joint)
    units = joint.units()
    out = {
        "entropy_units": info.entropy(units.ravel()),
        "multivariate_mi": info.multivariate_mi(joint),
    }
    if joint.labels:
        bayes, bound = info.hellman_raviv_check(joint)
        out.update({
            "entropy_label": info.entropy(joint.label_marginal()),
            "entropy_joint": info.entropy(joint.pmf.ravel()),
            "conditional_mi": info.conditional_multivariate_mi(joint),
            "d_lb": info.d_lb_exact(joint),
            "decomposition_residual": info.ensemble_decomposition_residual(joint),
            "bayes_error": bayes,
            "hellman_raviv_bound_bits": bound,
        })
    _emit(out)
    return 0


# -- estimate ---------------------------------------------------------------
def _read_activation_csv(path: str | Path):
    import csv

    from .metrics import ActivationBatch

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
    arr = np.array(rows, dtype=np.float64).reshape(len(rows), len(header))
    if "label" in header:
        j = header.index("label")
        labels = arr[:, j]
        if np.any(labels != np.round(labels)):
            raise ValueError(f"{path}: label column must hold integers")
        return ActivationBatch(np.delete(arr, j, axis=1), labels.astype(np.int64))
    return ActivationBatch(arr)


def cmd_estimate(args) -> int:
    from .estimators import conditional_js_mi_estimate, js_mi_estimate

    batch = _read_activation_csv(args.input)
    s_js, s_cond = np.random.SeedSequence(args.seed).spawn(2)
    kw = dict(updates=args.updates, lr=args.lr, hidden=args.hidden)
    out = {"K": batch.K, "m": batch.m, "js_mi": js_mi_estimate(batch, seed=s_js, **kw)}
    if batch.labels is not None:
        out["conditional_js_mi"] = conditional_js_mi_estimate(batch, seed=s_cond, **kw)
        out["d_lb"] = out["js_mi"] - out["conditional_js_mi"]
    _emit(out)
    return 0


# -- boundlab ---------------------------------------------------------------
BOUND_COLUMNS = ("problem", "n", "m", "gap", "mi", "bound", "lemma1_holds", "theorem1_residual")


def _bound_row(name, p) -> dict:
    from .boundlab import lemma1_bound, mi_dataset_hypothesis, theorem1_residual

    g, b = lemma1_bound(p)
    return {"problem": name, "n": p.n, "m": len(p.alphabets), "gap": g, "mi": mi_dataset_hypothesis(p),
            "bound": b, "lemma1_holds": int(abs(g) <= b + 1e-12), "theorem1_residual": theorem1_residual(p)}


def cmd_boundlab(args) -> int:
    from .boundlab import load_problem, random_problem

    rows = []
    for path in args.problem or []:
        rows.append(_bound_row(Path(path).name, load_problem(path)))
    rng = np.random.default_rng(args.seed)
    for i in range(args.random):
        rows.append(_bound_row(f"random{i}", random_problem(rng)))
    if not rows:
        raise ValueError("nothing to check: pass --problem FILE or --random N")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "boundlab.csv").write_text(report.rows_to_csv(rows, BOUND_COLUMNS))
    _emit({
        "problems": len(rows),
        "lemma1_violations": sum(1 - r["lemma1_holds"] for r in rows),
        "max_theorem1_residual": max(r["theorem1_residual"] for r in rows),
        "rows": rows if args.verbose else None,
    })
    return 0


# -- data -------------------------------------------------------------------
def load_datasets(data_dir, synthetic, run_seed: int, config: TrainConfig) -> tuple[Dataset, Dataset]:
    """Train/test splits for one run, with the noise protocol applied.

    Noise streams are ``[run_seed, 1]`` (train) and ``[run_seed, 2]`` (test).
    """
    if synthetic:
        spec = json.loads(Path(synthetic).read_text())
        seed = spec.get("seed", 0)
        args = (spec["means"], spec["covs"])
        train = synth_mixture(*args, int(spec["n_train"]), [seed, 1], spec.get("weights"))
        test = synth_mixture(*args, int(spec["n_test"]), [seed, 2], spec.get("weights"))
    else:
        if not data_dir:
            raise ValueError("no data directory: pass --data-dir or set LDMLAB_DATA")
        train, test = load_mnist(data_dir, "train"), load_mnist(data_dir, "test")
    if config.noise_std > 0:
        train = add_gaussian_noise(train, [run_seed, 1], config.noise_std)
        if config.noise_test:
            test = add_gaussian_noise(test, [run_seed, 2], config.noise_std)
    return train, test


def _base_config(args) -> dict:
    base = TrainConfig.load(args.config).to_dict() if args.config else TrainConfig().to_dict()
    for key in ("iterations", "eval_every"):
        v = getattr(args, key, None)
        if v is not None:
            base[key] = v
    return base


def _run_one(job: dict) -> dict:
    """Execute one isolated run; returns its summary or an error record."""
    try:
        config = TrainConfig.from_dict(job["config"])
        train, test = load_datasets(job["data_dir"], job["synthetic"], config.seed, config)
        record = run_experiment(config, train, test)
        report.write_run(record, job["out_dir"])
        return record.summary()
    except Exception as exc:  # noqa: BLE001 - reported per run, the batch goes on
        return {"error": type(exc).__name__, "message": str(exc), "config": job["config"]}


def _execute(jobs: list[dict], n_jobs: int) -> list[dict]:
    if n_jobs <= 1 or len(jobs) <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(_run_one, jobs))


def _finish(results: list[dict], out_dir: Path) -> int:
    errors = [r for r in results if "error" in r]
    if errors:
        (out_dir / "errors.json").write_text(json.dumps(errors, indent=1, sort_keys=True))
    summary = report.write_report(out_dir)
    _emit({"runs": len(results), "failed": len(errors), "out_dir": str(out_dir), "table": summary["table"]})
    return 1 if errors else 0


def _jobs(args, configs: list[dict]) -> list[dict]:
    return [{"config": c, "data_dir": args.data_dir, "synthetic": args.synthetic, "out_dir": str(args.out_dir)}
            for c in configs]


def cmd_train(args) -> int:
    base = _base_config(args)
    methods = args.method.split(",") if args.method else [base["method"]]
    master = base["seed"] if args.seed is None else args.seed
    configs = []
    for method in methods:
        for i in range(args.seeds):
            c = dict(base, method=method, seed=derive_seed(master, i))
            if args.lam is not None:
                c["lam"] = args.lam
            elif method != base["method"]:
                c["lam"] = None
            configs.append(TrainConfig.from_dict(c).to_dict())
    Path(args.out_dir).mkdir(parents=True, exist_ok=True)
    return _finish(_execute(_jobs(args, configs), args.jobs), Path(args.out_dir))


def cmd_sweep(args) -> int:
    base = _base_config(args)
    if args.method:
        base["method"] = args.method
    lams = [float(v) for v in args.lam.split(",")] if args.lam else []
    if not lams or any(v < 0 for v in lams):
        raise ValueError("--lambda must be a nonempty comma-separated list of values >= 0")
    master = base["seed"] if args.seed is None else args.seed
    configs = [TrainConfig.from_dict(dict(base, lam=lam, seed=derive_seed(master, i))).to_dict()
               for lam in sorted(lams) for i in range(args.seeds)]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    status = _finish(_execute(_jobs(args, configs), args.jobs), out)
    table = report.aggregate(report.load_runs(out))
    trend, prev = [], None
    for row in sorted(table, key=lambda r: (r["lam"], r["method"])):
        trend.append(dict(row, gap_change=None if prev is None else row["gap"] - prev))
        prev = row["gap"]
    (out / "sweep.csv").write_text(report.rows_to_csv(trend, report.AGG_COLUMNS + ("gap_change",)))
    return status


def cmd_report(args) -> int:
    summary = report.write_report(args.runs_dir, args.out_dir)
    _emit(summary)
    return 0


# -- parser -----------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ldmlab", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    o = sub.add_parser("oracle", help="exact quantities of a discrete joint JSON")
    o.add_argument("joint")
    o.set_defaults(func=cmd_oracle)

    e = sub.add_parser("estimate", help="JS estimates for an activation CSV (optional 'label' column)")
    e.add_argument("input")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--updates", type=int, default=2000)
    e.add_argument("--lr", type=float, default=1e-3)
    e.add_argument("--hidden", type=int, default=200)
    e.set_defaults(func=cmd_estimate)

    b = sub.add_parser("boundlab", help="check the bounds on toy problems")
    b.add_argument("--problem", action="append", help="problem JSON (repeatable)")
    b.add_argument("--random", type=int, default=0, help="also check N random problems")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out-dir")
    b.set_defaults(func=cmd_boundlab)

    for name, func, help_ in (("train", cmd_train, "training runs, methods x seeds"),
                              ("sweep", cmd_sweep, "lambda x seeds grid")):
        t = sub.add_parser(name, help=help_, description=f"Run CSV columns: {', '.join(CSV_COLUMNS)}")
        t.add_argument("--config", help="TrainConfig JSON")
        t.add_argument("--data-dir", default=os.environ.get("LDMLAB_DATA"),
                       help="MNIST IDX directory (default: $LDMLAB_DATA)")
        t.add_argument("--synthetic", help="Gaussian-mixture JSON used instead of MNIST")
        t.add_argument("--out-dir", required=True)
        t.add_argument("--seed", type=int, help="master seed (default: the config's seed)")
        t.add_argument("--seeds", type=int, default=1, help="number of runs per setting")
        t.add_argument("--jobs", type=int, default=1)
        t.add_argument("--iterations", type=int)
        t.add_argument("--eval-every", type=int)
        if name == "train":
            t.add_argument("--method", help=f"comma-separated subset of {','.join(METHODS)}")
            t.add_argument("--lambda", dest="lam", type=float)
        else:
            t.add_argument("--method", choices=METHODS)
            t.add_argument("--lambda", dest="lam", required=True, help="comma-separated values")
        t.set_defaults(func=func)

    r = sub.add_parser("report", help="aggregate table and plots for a run directory")
    r.add_argument("runs_dir")
    r.add_argument("--out-dir")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - converted to an error record
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
