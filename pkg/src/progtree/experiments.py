"""XOR data, metrics, feature expansion and the benchmark orchestrator."""
from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .data import Dataset, FeatureMode, load_csv, minmax_normalize, train_val_split
from .forests import (FrcParams, RfParams, fit_breiman_tree, fit_forest_rc, fit_random_forest,
                      fit_rf_plus_s, params_from_dict)
from .progressive import ProgressiveConfig, refine
from .splitspace import CandidatePool
from .tree import FitConfig
from .tuning import frc_space, random_search, refit_pooled, rf_plus_s_space, rf_space


class BenchmarkError(ValueError):
    pass


@dataclass(frozen=True)
class XorSpec:
    n: int
    p: int
    s0: int
    sigma: float = 0.0
    seed: Optional[int] = None
    n_test: int = 5000

    def __post_init__(self):
        if self.n < 1 or self.p < 1 or self.n_test < 1:
            raise ValueError("n, p and n_test must be >= 1")
        if not 1 <= self.s0 <= self.p:
            raise ValueError(f"need 1 <= s0 <= p, got s0={self.s0}, p={self.p}")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")


def xor_parity(X, support):
    odd = X[:, support].sum(axis=1) % 2 == 1
    return np.where(odd, 1.0, -1.0)


def gen_xor(spec: XorSpec, rng=None):
    """Training set with noise, errorless test set and the active coordinates."""
    rng = np.random.default_rng(spec.seed if rng is None else rng)
    support = np.sort(rng.choice(spec.p, size=spec.s0, replace=False))
    X = rng.integers(0, 2, size=(spec.n, spec.p)).astype(np.float64)
    y = xor_parity(X, support) + spec.sigma * rng.standard_normal(spec.n)
    Xt = rng.integers(0, 2, size=(spec.n_test, spec.p)).astype(np.float64)
    train = Dataset(X, y, FeatureMode.BINARY)
    test = Dataset(Xt, xor_parity(Xt, support), FeatureMode.BINARY)
    return train, test, support


def r2_score(predictions, targets) -> float:
    pred = np.asarray(predictions, dtype=np.float64).reshape(-1)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if pred.shape != y.shape or y.size < 2:
        raise ValueError("need equal-length inputs of size >= 2")
    var = np.mean((y - y.mean()) ** 2)
    if var == 0:
        raise ValueError("targets have zero variance")
    return float(1.0 - np.mean((y - pred) ** 2) / var)


def rrs(scores: dict, dataset_name="dataset") -> dict:
    """Min-max rescaling of one dataset's method scores: best 1, worst 0."""
    if len(scores) < 2:
        raise ValueError(f"{dataset_name}: need at least two methods")
    lo, hi = min(scores.values()), max(scores.values())
    if hi == lo:
        raise ValueError(f"{dataset_name}: all methods scored {lo}; relative score undefined")
    return {m: (v - lo) / (hi - lo) for m, v in scores.items()}


def expand_interactions(dataset: Dataset) -> Dataset:
    """Append X_i * X_j for i <= j in lexicographic order."""
    X = dataset.features
    p = dataset.p
    ii, jj = np.triu_indices(p)
    names = list(dataset.feature_names)
    names += [f"{names[i]}*{names[j]}" for i, j in zip(ii, jj)]
    return dataset.with_features(np.column_stack([X, X[:, ii] * X[:, jj]]), names)


# --------------------------------------------------------------------------
# methods


def _pool(opts, p):
    B = opts.get("B")
    s = min(int(opts.get("s", 5)), p)
    size = int(opts.get("subset_size", 100))
    if B is None:
        return CandidatePool.infinite(p, s, size)
    return CandidatePool.finite(int(B), p, s, size, opts["_pool_rng"])


def _tree_config(opts):
    return FitConfig.constrained(int(opts.get("H", 3)), int(opts.get("minimum", 10)))


def run_progressive(train, test, opts, rng, callback=None):
    rng = np.random.default_rng(rng)
    pool = _pool({**opts, "_pool_rng": rng}, train.p)
    cfg = ProgressiveConfig(pool, int(opts["b"]), _tree_config(opts))
    res = refine(train, cfg, rng, callback=callback)
    return res.final_tree, {"n_splits": len(res.split_set), "train_sse": res.history[-1].training_sse}


def run_breiman(train, test, opts, rng):
    tree = fit_breiman_tree(train, int(opts["B"]), min(int(opts.get("s", 5)), train.p),
                            _tree_config(opts), rng)
    return tree, {}


def _rf_builder(n_trees):
    def build(data, params, rng):
        return fit_random_forest(data, params_from_dict(RfParams, {**params, "n_estimators": n_trees}), rng)
    return build


def _frc_builder(n_trees, B):
    def build(data, params, rng):
        params = {**params, "n_estimators": n_trees, "max_features": B}
        params["feature_combinations"] = min(params.get("feature_combinations", 5), data.p)
        return fit_forest_rc(data, params_from_dict(FrcParams, params), rng)
    return build


def run_rf(train, test, opts, rng):
    rng = np.random.default_rng(rng)
    report = random_search(train, rf_space(), int(opts.get("R", 30)),
                           _rf_builder(int(opts.get("trees_tune", 30))), r2_score, rng)
    model = refit_pooled(train, report.best_params, _rf_builder(int(opts.get("trees_final", 100))), rng)
    return model, {"best_params": report.best_params, "best_val": report.best_val_score}


def run_frc(train, test, opts, rng):
    rng = np.random.default_rng(rng)
    B = int(opts.get("B") or min(1000, train.p ** 2))
    report = random_search(train, frc_space(train.p), int(opts.get("R", 30)),
                           _frc_builder(int(opts.get("trees_tune", 30)), B), r2_score, rng)
    model = refit_pooled(train, report.best_params, _frc_builder(int(opts.get("trees_final", 100)), B), rng)
    return model, {"best_params": report.best_params, "best_val": report.best_val_score}


def _rfs_builder(split_set, n_trees):
    def build(data, params, rng):
        rf = params_from_dict(RfParams, {**params, "n_estimators": n_trees})
        return fit_rf_plus_s(data, split_set, rf, int(params["h"]), rng)
    return build


def run_rf_plus_s(train, test, opts, rng):
    """Refine on the 80% part, tune the forest on the held-out 20%, refit the forest on all rows."""
    rng = np.random.default_rng(rng)
    H = int(opts.get("H", 3))
    R = int(opts.get("R", 30))
    plan = train_val_split(train, 0.8, rng)
    inner = train.subset(plan.train_indices)
    pool = _pool({**opts, "_pool_rng": rng}, train.p)
    res = refine(inner, ProgressiveConfig(pool, int(opts["b"]), _tree_config(opts)), rng)
    splits = res.split_set
    report = random_search(train, rf_plus_s_space(H), R,
                           _rfs_builder(splits, int(opts.get("trees_tune", 30))), r2_score, rng,
                           plan=plan)
    model = refit_pooled(train, report.best_params,
                         _rfs_builder(splits, int(opts.get("trees_final", 100))), rng)
    return model, {"best_params": report.best_params, "best_val": report.best_val_score,
                   "n_splits": len(splits)}


METHODS = {
    "progressive": run_progressive,
    "breiman": run_breiman,
    "rf": run_rf,
    "frc": run_frc,
    "rf_plus_s": run_rf_plus_s,
}


# --------------------------------------------------------------------------
# orchestration

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["seed", "methods", "specs", "trials", "output_dir"],
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "trials": {"type": "integer", "minimum": 1},
        "output_dir": {"type": "string"},
        "methods": {
            "type": "array", "minItems": 1,
            "items": {"type": "object", "required": ["name"],
                      "properties": {"name": {"enum": sorted(METHODS)},
                                     "label": {"type": "string"}}},
        },
        "specs": {
            "type": "array", "minItems": 1,
            "items": {
                "oneOf": [
                    {"type": "object", "required": ["n", "p", "s0"],
                     "properties": {"kind": {"const": "xor"}, "n": {"type": "integer", "minimum": 1},
                                    "p": {"type": "integer", "minimum": 1},
                                    "s0": {"type": "integer", "minimum": 1},
                                    "sigma": {"type": "number", "minimum": 0},
                                    "n_test": {"type": "integer", "minimum": 1}}},
                    {"type": "object", "required": ["kind", "path"],
                     "properties": {"kind": {"const": "csv"}, "path": {"type": "string"},
                                    "target": {"type": "string"},
                                    "expand": {"type": "boolean"},
                                    "test_fraction": {"type": "number", "exclusiveMinimum": 0,
                                                      "exclusiveMaximum": 1}}},
                ]
            },
        },
    },
}


def validate_config(config: dict) -> dict:
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise BenchmarkError(f"config error at {path}: {exc.message}") from None
    return config


def spec_label(spec):
    if spec.get("kind", "xor") == "csv":
        return Path(spec["path"]).stem + ("+int" if spec.get("expand") else "")
    return f"xor_n{spec['n']}_p{spec['p']}_s{spec['s0']}_sd{spec.get('sigma', 0)}"


def method_label(m):
    return m.get("label", m["name"])


def make_trial_data(spec, seed, base_dir="."):
    rng = np.random.default_rng(seed)
    if spec.get("kind", "xor") == "xor":
        xs = XorSpec(spec["n"], spec["p"], spec["s0"], spec.get("sigma", 0.0),
                     n_test=spec.get("n_test", 5000))
        train, test, _ = gen_xor(xs, rng)
        return train, test
    path = Path(spec["path"])
    if not path.is_absolute():
        path = Path(base_dir) / path
    full = load_csv(path, spec.get("target"))
    plan = train_val_split(full, 1.0 - spec.get("test_fraction", 0.2), rng)
    train, record = minmax_normalize(full.subset(plan.train_indices))
    test = record.apply(full.subset(plan.val_indices), clamp=True)
    if spec.get("expand"):
        train, test = expand_interactions(train), expand_interactions(test)
    return train, test


def _trial_task(args):
    config, base_dir, si, t, mi = args
    spec = config["specs"][si]
    method = config["methods"][mi]
    seed = config["seed"]
    rec = {"spec": spec_label(spec), "method": method_label(method), "trial": t,
           "seed": [seed, si, t, mi], "config": {"spec": spec, "method": method}}
    t0 = time.perf_counter()
    try:
        train, test = make_trial_data(spec, np.random.SeedSequence(seed, spawn_key=(si, t)), base_dir)
        opts = {k: v for k, v in method.items() if k not in ("name", "label")}
        model, extra = METHODS[method["name"]](
            train, test, opts, np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(si, t, mi))))
        rec["r2"] = r2_score(model.predict(test.features), test.targets)
        rec["extra"] = _jsonable(extra)
        rec["error"] = None
    except Exception as exc:  # recorded, the run continues
        rec["r2"] = None
        rec["extra"] = {}
        rec["error"] = f"{type(exc).__name__}: {exc}"
    rec["runtime_seconds"] = time.perf_counter() - t0
    return rec


def _jsonable(obj):
    return json.loads(json.dumps(obj, default=lambda o: o.item() if hasattr(o, "item") else str(o)))


def aggregate(records):
    """Per (spec, method) cell: trial count, successes, mean and sd of R2, mean runtime."""
    cells = {}
    for r in records:
        cells.setdefault((r["spec"], r["method"]), []).append(r)
    rows = []
    for (spec, method), recs in cells.items():
        r2 = np.array([r["r2"] for r in recs if r["r2"] is not None], dtype=np.float64)
        rows.append({
            "spec": spec, "method": method, "trials": len(recs), "ok": int(r2.size),
            "mean_r2": float(r2.mean()) if r2.size else math.nan,
            "sd_r2": float(r2.std(ddof=1)) if r2.size > 1 else 0.0 if r2.size else math.nan,
            "mean_runtime": float(np.mean([r["runtime_seconds"] for r in recs])),
        })
    by_spec = {}
    for row in rows:
        if not math.isnan(row["mean_r2"]):
            by_spec.setdefault(row["spec"], {})[row["method"]] = row["mean_r2"]
    for row in rows:
        try:
            row["rrs"] = rrs(by_spec[row["spec"]], row["spec"])[row["method"]]
        except (KeyError, ValueError):
            row["rrs"] = math.nan
    return rows


AGG_FIELDS = ["spec", "method", "trials", "ok", "mean_r2", "sd_r2", "mean_runtime", "rrs"]


def run_benchmark(config, threads=1, base_dir=None, progress=None):
    """Run every (spec, trial, method) cell and write trials.jsonl plus aggregate.csv.

    ``config`` is a dict or a path to a JSON file.  Returns (records, aggregate rows).
    """
    if not isinstance(config, dict):
        path = Path(config)
        base_dir = base_dir or path.parent
        config = json.loads(path.read_text())
    validate_config(config)
    base_dir = str(base_dir or ".")
    tasks = [(config, base_dir, si, t, mi)
             for si in range(len(config["specs"]))
             for t in range(config["trials"])
             for mi in range(len(config["methods"]))]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            records = list(ex.map(_trial_task, tasks))
    else:
        records = []
        for task in tasks:
            records.append(_trial_task(task))
            if progress:
                progress(records[-1])
    out = Path(config["output_dir"])
    if not out.is_absolute():
        out = Path(base_dir) / out
    out.mkdir(parents=True, exist_ok=True)
    with (out / "trials.jsonl").open("w") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    rows = aggregate(records)
    with (out / "aggregate.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=AGG_FIELDS)
        w.writeheader()
        for row in rows:
            w.writerow(row)
    return records, rows
