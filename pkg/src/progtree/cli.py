"""Command-line entry point: benchmarks, refinement, tuning, fitting and prediction."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .data import DataError, MinMaxRecord, load_csv, minmax_normalize
from .forests import Forest, RfPlusSModel
from .progressive import ProgressiveConfig, checkpoint, refine, resume
from .splitspace import CandidatePool
from .tree import FitConfig, ObliqueTree

log = logging.getLogger("progtree")

MODEL_FORMAT = "progtree.model"


def _write_json(obj, path):
    if path is None or path == "-":
        json.dump(obj, sys.stdout, indent=1)
        sys.stdout.write("\n")
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(obj, indent=1))


def _load_data(args):
    data = load_csv(args.data, args.target)
    record = None
    if args.normalize:
        data, record = minmax_normalize(data)
    return data, record


def _xor_default_config(args):
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    return {
        "seed": args.seed if args.seed is not None else 0,
        "trials": args.trials,
        "output_dir": args.out or "bench_out",
        "methods": [dict(name=m, b=args.b, B=args.B) if m in ("progressive", "rf_plus_s")
                    else dict(name=m, B=args.B or 10000) if m == "breiman" else dict(name=m)
                    for m in methods],
        "specs": [{"n": args.n, "p": args.p, "s0": args.s0, "sigma": args.sigma,
                   "n_test": args.n_test}],
    }


def cmd_bench(args):
    if args.config:
        path = Path(args.config)
        config = json.loads(path.read_text())
        base = path.parent
    elif args.command == "bench-xor":
        config, base = _xor_default_config(args), Path(".")
    else:
        if not args.csv:
            raise SystemExit("bench-csv needs --config or at least one --csv")
        methods = [m.strip() for m in args.methods.split(",") if m.strip()]
        config = {"seed": args.seed if args.seed is not None else 0, "trials": args.trials,
                  "output_dir": args.out or "bench_out",
                  "methods": [dict(name=m, b=args.b) if m in ("progressive", "rf_plus_s")
                              else dict(name=m) for m in methods],
                  "specs": [{"kind": "csv", "path": c, "expand": args.expand} for c in args.csv]}
        base = Path(".")
    if args.seed is not None:
        config["seed"] = args.seed
    if args.out:
        config["output_dir"] = args.out
    want = "csv" if args.command == "bench-csv" else "xor"
    for spec in config.get("specs", []):
        if spec.get("kind", "xor") != want:
            raise SystemExit(f"{args.command}: spec {spec} is not a {want} spec")

    def progress(rec):
        status = f"R2={rec['r2']:.4f}" if rec["r2"] is not None else f"FAILED {rec['error']}"
        log.info("%s %s trial %d: %s (%.1fs)", rec["spec"], rec["method"], rec["trial"], status,
                 rec["runtime_seconds"])

    _, rows = ex.run_benchmark(config, threads=args.threads, base_dir=base, progress=progress)
    for row in rows:
        print(f"{row['spec']:<32} {row['method']:<14} mean R2 {row['mean_r2']:.4f} "
              f"(sd {row['sd_r2']:.4f}, {row['ok']}/{row['trials']} ok) {row['mean_runtime']:.2f}s")
    return 0


def _pool_from_args(args, p, rng):
    s = min(args.s, p)
    if args.B is None:
        return CandidatePool.infinite(p, s, args.subset_size)
    return CandidatePool.finite(args.B, p, s, args.subset_size, rng)


def _fit_config(args):
    if args.strict:
        return FitConfig(depth=args.H)
    return FitConfig.constrained(args.H, args.minimum)


def cmd_refine(args):
    data, _ = _load_data(args)

    def cb(l, tree):
        if l % max(1, args.log_every) == 0:
            log.info("iteration %d: training SSE %.6g", l, tree.training_sse(data))

    if args.resume:
        state = json.loads(Path(args.resume).read_text())
        result = resume(state, data, args.b, callback=cb)
    else:
        rng = np.random.default_rng(args.seed)
        cfg = ProgressiveConfig(_pool_from_args(args, data.p, rng), args.b, _fit_config(args),
                                seed=args.seed)
        result = refine(data, cfg, rng, callback=cb)
    _write_json(checkpoint(result), args.out)
    log.info("done: %d iterations, %d splits", result.iterations_done, len(result.split_set))
    return 0


def _builders(method, args, data):
    if method == "rf":
        return ex.rf_space(), ex._rf_builder(args.trees_tune), ex._rf_builder(args.trees_final)
    if method == "frc":
        B = args.B or min(1000, data.p ** 2)
        return (ex.frc_space(data.p), ex._frc_builder(args.trees_tune, B),
                ex._frc_builder(args.trees_final, B))
    raise SystemExit(f"tune supports rf and frc, got {method}")


def cmd_tune(args):
    data, record = _load_data(args)
    rng = np.random.default_rng(args.seed)
    if args.method == "rf_plus_s":
        model, extra = ex.run_rf_plus_s(data, None, {"b": args.b, "B": args.B, "s": args.s,
                                                     "H": args.H, "R": args.R,
                                                     "subset_size": args.subset_size,
                                                     "minimum": args.minimum,
                                                     "trees_tune": args.trees_tune,
                                                     "trees_final": args.trees_final}, rng)
        report = {"best_params": extra["best_params"], "best_val_score": extra["best_val"]}
    else:
        space, build, final = _builders(args.method, args, data)
        rep = ex.random_search(data, space, args.R, build, ex.r2_score, rng)
        model = ex.refit_pooled(data, rep.best_params, final, rng)
        report = rep.to_json()
    _write_json(report, args.report)
    if args.out:
        _write_json(_bundle(args.method, model, record), args.out)
    print(f"best validation R2 {report['best_val_score']:.4f} with {report['best_params']}")
    return 0


def _bundle(kind, model, record):
    return {"format": MODEL_FORMAT, "kind": kind, "model": model.to_json(),
            "normalization": record.to_json() if record is not None else None}


def cmd_fit(args):
    data, record = _load_data(args)
    rng = np.random.default_rng(args.seed)
    opts = {"b": args.b, "B": args.B, "s": args.s, "H": args.H, "subset_size": args.subset_size,
            "minimum": args.minimum, "R": args.R, "trees_tune": args.trees_tune,
            "trees_final": args.trees_final}
    if args.method == "breiman":
        opts["B"] = args.B or 10000
    model, _ = ex.METHODS[args.method](data, None, opts, rng)
    _write_json(_bundle(args.method, model, record), args.out)
    return 0


def load_model(path):
    obj = json.loads(Path(path).read_text())
    if obj.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not a model file")
    kind = obj["kind"]
    if kind in ("progressive", "breiman"):
        model = ObliqueTree.from_json(obj["model"])
    elif kind == "rf_plus_s":
        model = RfPlusSModel.from_json(obj["model"])
    else:
        model = Forest.from_json(obj["model"])
    record = MinMaxRecord.from_json(obj["normalization"]) if obj["normalization"] else None
    return model, record


def cmd_predict(args):
    model, record = load_model(args.model)
    data = load_csv(args.data, args.target)
    if record is not None:
        data = record.apply(data, clamp=True)
    pred = model.predict(data.features)
    lines = ["prediction"] + [repr(float(v)) for v in pred]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if np.ptp(data.targets) > 0:
        log.info("R2 against the target column: %.4f", ex.r2_score(pred, data.targets))
    return 0


def _tree_args(p):
    p.add_argument("--b", type=int, default=200, help="refinement iterations")
    p.add_argument("--B", type=int, default=None, help="pool size (omit for fresh draws)")
    p.add_argument("--subset-size", type=int, default=100, help="directions drawn per iteration")
    p.add_argument("--s", type=int, default=5, help="max nonzeros per weight vector")
    p.add_argument("--H", type=int, default=3, help="tree depth")
    p.add_argument("--minimum", type=int, default=10, help="min rows per leaf / split")
    p.add_argument("--strict", action="store_true", help="split every node regardless of minima")


def _data_args(p):
    p.add_argument("--data", required=True, help="CSV with a header row")
    p.add_argument("--target", default=None, help="target column (default: last)")
    p.add_argument("--normalize", action="store_true", help="min-max scale features to [0, 1]")


def build_parser():
    ap = argparse.ArgumentParser(prog="progtree", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    for name in ("bench-xor", "bench-csv"):
        p = sub.add_parser(name, help=f"run the {name[6:].upper()} benchmark grid")
        p.add_argument("--config", help="JSON benchmark config")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--methods", default="progressive,rf")
        p.add_argument("--trials", type=int, default=3)
        p.add_argument("--b", type=int, default=200)
        p.add_argument("--B", type=int, default=None)
        if name == "bench-xor":
            p.add_argument("--n", type=int, default=250)
            p.add_argument("--p", type=int, default=20)
            p.add_argument("--s0", type=int, default=2)
            p.add_argument("--sigma", type=float, default=0.0)
            p.add_argument("--n-test", type=int, default=5000)
        else:
            p.add_argument("--csv", action="append", default=[])
            p.add_argument("--expand", action="store_true", help="add pairwise products")
        p.set_defaults(func=cmd_bench)

    p = sub.add_parser("refine", help="progressive refinement on a CSV; writes a checkpoint")
    _data_args(p)
    _tree_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resume", help="checkpoint to continue; --b is then the extra iterations")
    p.add_argument("--log-every", type=int, default=100)
    p.add_argument("--out", default=None, help="checkpoint path (default stdout)")
    p.set_defaults(func=cmd_refine)

    for name, fn, methods in (("tune", cmd_tune, ("rf", "frc", "rf_plus_s")),
                              ("fit", cmd_fit, tuple(ex.METHODS))):
        p = sub.add_parser(name, help=f"{name} a model on a CSV")
        _data_args(p)
        _tree_args(p)
        p.add_argument("--method", choices=methods, default=methods[0])
        p.add_argument("--R", type=int, default=30, help="random-search rounds")
        p.add_argument("--trees-tune", type=int, default=30)
        p.add_argument("--trees-final", type=int, default=100)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out", default=None, help="model JSON path")
        if name == "tune":
            p.add_argument("--report", default=None, help="tuning report JSON path")
        p.set_defaults(func=fn)

    p = sub.add_parser("predict", help="predict a CSV with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--target", default=None)
    p.add_argument("--out", default=None, help="predictions CSV (default stdout)")
    p.set_defaults(func=cmd_predict)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (DataError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
