"""``interpretabnet`` command-line entry point.

Subcommands: preprocess, pretrain, train, importance, stability, pfi, baseline.
Every command writes its resolved configuration (``config.ini``) beside its
outputs. Exit codes: 0 success, 1 usage or configuration error, 2 data
error, 3 numeric failure.
"""
import argparse
import json
import logging
import os
import sys

import numpy as np

from . import images
from .baseline import coefficients_as_importance, fit_logistic
from .checkpoint import load_checkpoint, save_checkpoint
from .config import load_config
from .data import (BUNDLED, CLEANERS, CREDIT_LABELS, SplitSpec, load_bundled, load_csv, save_csv,
                   standardize, stratified_split, reorder_by_importance)
from .errors import ConfigError, DataError, InterpreTabNetError, SchemaError
from .metrics import accuracy, auc, permutation_importance, pfi_variance_summary
from .stability import (load_importance_table, run_stability_experiment, stability_from_importances,
                        write_reports)
from .training import finetune, pretrain

log = logging.getLogger("interpretabnet")

OUT_ENV = "INTERPRETABNET_OUT"
SPLITS = ("train", "val", "test")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _outdir(args, cfg):
    out = args.out or cfg.run.out or os.environ.get(OUT_ENV) or "runs"
    os.makedirs(out, exist_ok=True)
    return out


def load_split(path):
    """Load a CSV written by ``preprocess``; the label column comes from its sidecar."""
    side = path + ".json"
    label = None
    if os.path.exists(side):
        with open(side) as fh:
            label = json.load(fh).get("label_name") or None
    return load_csv(path, label=label)


def _load_source(spec, cleaner, label):
    if spec.startswith("bundled:"):
        name = spec.split(":", 1)[1]
        if name not in BUNDLED:
            raise DataError(f"unknown bundled dataset {name!r}; choose from {BUNDLED}")
        ds = load_bundled(name)
    else:
        if label:
            wanted = label
        elif cleaner == "credit":
            wanted = CREDIT_LABELS
        else:
            raise ConfigError("set [data] label (or --label) to name the class column")
        ds = load_csv(spec, label=wanted)
    if cleaner not in CLEANERS:
        raise ConfigError(f"unknown cleaner {cleaner!r}; choose from {sorted(CLEANERS)}")
    return CLEANERS[cleaner](ds)


def _splits_dir(args, cfg, out):
    return args.splits or cfg.data.splits or out


def _load_splits(directory, names=SPLITS):
    paths = [os.path.join(directory, f"{n}.csv") for n in names]
    for p in paths:
        if not os.path.exists(p):
            raise DataError(f"split file {p} not found; run 'preprocess' first")
    return [load_split(p) for p in paths]


def _scale(splits, method):
    """Scale every split with statistics from the first (training) split."""
    train = standardize(splits[0], method=method)
    return [train] + [standardize(s, stats=train.stats) for s in splits[1:]]


def _apply_stats(ds, stats):
    stats = {k: np.asarray(v, dtype=np.float64) if isinstance(v, list) else v for k, v in stats.items()}
    return standardize(ds, stats=stats)


def _stats_json(stats):
    return {k: v.tolist() if isinstance(v, np.ndarray) else v for k, v in stats.items()}


def _check_columns(ds, expected):
    if list(ds.columns) != list(expected):
        missing = [c for c in expected if c not in ds.columns]
        extra = [c for c in ds.columns if c not in expected]
        raise SchemaError(f"data columns do not match the checkpoint: missing {missing}, unexpected {extra}"
                          if missing or extra else "data columns are in a different order than the checkpoint")


def _load_model_data(args, cfg, out):
    model, meta = load_checkpoint(args.checkpoint)
    path = args.data or os.path.join(_splits_dir(args, cfg, out), "test.csv")
    ds = load_split(path)
    _check_columns(ds, meta.get("columns", ds.columns))
    if meta.get("stats"):
        ds = _apply_stats(ds, meta["stats"])
    return model, meta, ds


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_preprocess(args, cfg, out):
    source = args.input or cfg.data.input
    if not source:
        raise ConfigError("no input given; use --input or [data] input")
    ds = _load_source(source, args.cleaner or cfg.data.cleaner, args.label or cfg.data.label)
    spec = SplitSpec(cfg.data.split_ratios, cfg.data.stratified, cfg.run.seed)
    parts = stratified_split(ds, spec)
    report = {
        "source": source,
        "n_samples": ds.n_samples,
        "n_features": ds.n_features,
        "columns": list(ds.columns),
        "recoded": ds.provenance.get("recoded", {}),
        "split_seed": cfg.run.seed,
        "split_ratios": list(spec.ratios),
        "splits": {},
    }
    for name, part in zip(SPLITS, parts):
        save_csv(part, os.path.join(out, f"{name}.csv"))
        counts = np.bincount(part.labels, minlength=ds.n_classes)
        report["splits"][name] = {
            "rows": part.n_samples,
            "class_counts": counts.tolist(),
            "positive_ratio": float(counts[1] / part.n_samples) if ds.n_classes == 2 else None,
        }
    _write_json(os.path.join(out, "preprocess_report.json"), report)
    print(f"wrote {', '.join(f'{n}={parts[i].n_samples}' for i, n in enumerate(SPLITS))} to {out}")


def cmd_pretrain(args, cfg, out):
    train, val = _scale(_load_splits(_splits_dir(args, cfg, out), ("train", "val")), cfg.data.normalization)
    model, trainlog = pretrain(train.features, val.features, cfg.pretrain, cfg.arch,
                               n_classes=max(train.n_classes, 2))
    meta = {"phase": "pretrain", "columns": train.columns, "stats": _stats_json(train.stats),
            "best_epoch": trainlog.best_epoch, "best_val_loss": trainlog.best_val_loss, "seed": cfg.pretrain.seed}
    save_checkpoint(model, os.path.join(out, "pretrain.ckpt"), meta)
    trainlog.write_jsonl(os.path.join(out, "pretrain_log.jsonl"))
    print(f"pretraining stopped ({trainlog.stop_reason}) after {len(trainlog.records)} epochs; "
          f"best val loss {trainlog.best_val_loss:.5f}")


def cmd_train(args, cfg, out):
    train, val, test = _scale(_load_splits(_splits_dir(args, cfg, out)), cfg.data.normalization)
    init = None
    if args.init:
        init, init_meta = load_checkpoint(args.init)
        _check_columns(train, init_meta.get("columns", train.columns))
    n_classes = int(max(train.n_classes, val.n_classes, test.n_classes))
    model, trainlog = finetune(train.features, train.labels, val.features, val.labels,
                               cfg.train, cfg.arch, init, n_classes)
    probs = model.predict_proba(test.features)
    metrics = {
        "accuracy": accuracy(test.labels, probs),
        "auc": auc(test.labels, probs),
        "epochs": len(trainlog.records),
        "stop_reason": trainlog.stop_reason,
        "best_epoch": trainlog.best_epoch,
        "best_val_loss": trainlog.best_val_loss,
        "warm_start": bool(args.init),
    }
    meta = {"phase": "train", "columns": train.columns, "stats": _stats_json(train.stats),
            "best_epoch": trainlog.best_epoch, "best_val_loss": trainlog.best_val_loss, "seed": cfg.train.seed}
    save_checkpoint(model, os.path.join(out, "model.ckpt"), meta)
    trainlog.write_jsonl(os.path.join(out, "train_log.jsonl"))
    _write_json(os.path.join(out, "metrics.json"), metrics)
    print(f"test accuracy {metrics['accuracy']:.4f}  auc {metrics['auc']:.4f}  "
          f"({metrics['epochs']} epochs, {metrics['stop_reason']})")


def cmd_importance(args, cfg, out):
    model, meta, ds = _load_model_data(args, cfg, out)
    imp = model.importance(ds.features, model_id=os.path.basename(args.checkpoint), feature_names=ds.columns)
    imp.save(os.path.join(out, "importance.json"))
    images.write_ppm(os.path.join(out, "importance.ppm"), images.bar_chart(imp.scores))
    if args.reorder:
        # reorder the unscaled file so the output stays in source units
        raw = load_split(args.data or os.path.join(_splits_dir(args, cfg, out), "test.csv"))
        save_csv(reorder_by_importance(raw, imp), os.path.join(out, "reordered.csv"))
    top = np.argsort(-imp.scores, kind="stable")[:5]
    print("top features: " + ", ".join(f"{ds.columns[i]}={imp.scores[i]:.4f}" for i in top))


def cmd_stability(args, cfg, out):
    scfg = cfg.stability
    if args.importances:
        vectors = [v for path in args.importances for v in load_importance_table(path)]
        label = args.label or "external"
        report = stability_from_importances(vectors, scfg, label)
        write_reports({"table": report}, out, label)
        print(f"{label}: InterpreStability {report.score:.4f} ({report.level})")
        return
    directory = _splits_dir(args, cfg, out)
    train, val, test = _scale(_load_splits(directory), cfg.data.normalization)
    full = None
    if scfg.mode == "resplit":
        if not cfg.data.input:
            raise ConfigError("resplit mode re-splits [data] input; set it in the config")
        source = _load_source(cfg.data.input, cfg.data.cleaner, cfg.data.label)
        full = standardize(source, method=cfg.data.normalization)
    reports = run_stability_experiment(train, val, test, cfg.arch, cfg.train, scfg, outdir=out,
                                       label=args.label or "InterpreTabNet", full=full)
    for size, rep in reports.items():
        status = rep.error or f"{rep.score:.4f} ({rep.level})"
        print(f"subset {size}: {status}")
    if all(rep.error for rep in reports.values()):
        raise DataError("every subset size failed")


def cmd_pfi(args, cfg, out):
    model, meta, ds = _load_model_data(args, cfg, out)
    if ds.labels is None:
        raise DataError("permutation importance needs labelled data")
    p = cfg.pfi
    if p.metric == "accuracy":
        predict = model.predict
    else:
        predict = model.predict_proba
    mean, var, drops = permutation_importance(predict, ds.features, ds.labels, p.metric, p.n_repeats,
                                              cfg.run.seed)
    order = np.argsort(-mean, kind="stable")
    report = {
        "metric": p.metric,
        "n_repeats": p.n_repeats,
        "columns": list(ds.columns),
        "mean": mean.tolist(),
        "variance": var.tolist(),
        "drops": drops.tolist(),
        "ranking": [ds.columns[i] for i in order],
        "variance_summary": pfi_variance_summary(var, p.reduction),
        "variance_reduction": p.reduction,
    }
    _write_json(os.path.join(out, "pfi.json"), report)
    print(f"most important by permutation: {report['ranking'][0]}; "
          f"{p.reduction} variance {report['variance_summary']:.3g}")


def cmd_baseline(args, cfg, out):
    train, val, test = _scale(_load_splits(_splits_dir(args, cfg, out)), cfg.data.normalization)
    model = fit_logistic(train.features, train.labels, lr=args.lr, epochs=args.epochs, l2=args.l2,
                         feature_names=train.columns)
    probs = model.predict_proba(test.features)
    imp = coefficients_as_importance(model)
    imp.save(os.path.join(out, "baseline_importance.json"))
    metrics = {"accuracy": accuracy(test.labels, probs), "auc": auc(test.labels, probs)}
    _write_json(os.path.join(out, "baseline_metrics.json"), metrics)
    print(f"logistic baseline: accuracy {metrics['accuracy']:.4f}  auc {metrics['auc']:.4f}")


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run configuration")
    common.add_argument("--seed", type=int, help="global seed (overrides the config)")
    common.add_argument("--out", help=f"output directory (default: [run] out, ${OUT_ENV}, ./runs)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="interpretabnet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("preprocess", parents=[common], help="clean and split a CSV")
    p.add_argument("--input", help="CSV path or bundled:<iris|breast_cancer|digits>")
    p.add_argument("--cleaner", choices=sorted(CLEANERS))
    p.add_argument("--label", help="class column name")
    p.set_defaults(func=cmd_preprocess)

    for name, func, text in (("pretrain", cmd_pretrain, "self-supervised pretraining"),
                             ("train", cmd_train, "supervised training and test evaluation")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--splits", help="directory holding train/val/test CSVs (default: output dir)")
        if name == "train":
            p.add_argument("--init", help="warm-start from a pretraining checkpoint")
        p.set_defaults(func=func)

    for name, func, text in (("importance", cmd_importance, "mask-based feature importance"),
                             ("pfi", cmd_pfi, "permutation feature importance")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--data", help="CSV to explain (default: <splits>/test.csv)")
        p.add_argument("--splits")
        if name == "importance":
            p.add_argument("--reorder", action="store_true", help="also write the data with columns by importance")
        p.set_defaults(func=func)

    p = sub.add_parser("stability", parents=[common], help="InterpreStability experiment")
    p.add_argument("--splits")
    p.add_argument("--importances", nargs="+", help="score precomputed importance CSV tables instead")
    p.add_argument("--label", help="model label for the reports")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("baseline", parents=[common], help="logistic-regression baseline")
    p.add_argument("--splits")
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--l2", type=float, default=0.0)
    p.set_defaults(func=cmd_baseline)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.with_seed(args.seed)
        out = _outdir(args, cfg)
        cfg.run.out = out
        cfg.dump(os.path.join(out, "config.ini"))
        args.func(args, cfg, out)
    except InterpreTabNetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
