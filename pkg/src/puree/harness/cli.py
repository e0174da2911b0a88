"""Command-line entry point: ``puree <command> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import load_config
from .experiment import (METHODS, LeakageGuard, evaluate_method, flavor_table_csv, load_dataset,
                         load_general_nets, net_path, pretrain_general_nets, run_full_experiment,
                         summarize, table1_csv, write_feature_csv)
from .synth import generate_synthetic_dataset, load_manifest

log = logging.getLogger("puree")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; every key is optional")
    p.add_argument("--profile", choices=("desk", "full"), help="default profile (overrides the config's)")
    p.add_argument("--out", help="run directory (default: the config's output_dir)")


def _cfg(args):
    cfg = load_config(args.config, args.profile)
    if getattr(args, "out", None):
        cfg.output_dir = args.out
    return cfg


def _manifest_path(args, cfg) -> Path:
    if getattr(args, "manifest", None):
        return Path(args.manifest)
    return Path(cfg.output_dir) / "manifest.json"


def cmd_synth(args) -> int:
    cfg = _cfg(args)
    m = generate_synthetic_dataset(cfg, cfg.output_dir)
    print(f"wrote {m.meta['n_patches']} patches for {m.meta['n_samples']} samples "
          f"to {Path(cfg.output_dir) / 'manifest.json'}")
    return 0


def cmd_features(args) -> int:
    n = write_feature_csv(load_manifest(args.manifest), args.out)
    print(f"wrote features for {n} patches to {args.out}")
    return 0


def cmd_pretrain(args) -> int:
    cfg = _cfg(args)
    path = _manifest_path(args, cfg)
    data = load_dataset(load_manifest(path))
    nets = pretrain_general_nets(cfg, data.vectors, path.parent / "models", args.nets)
    print(f"pretrained {len(nets)} general networks into {path.parent / 'models'}")
    return 0


def cmd_train(args) -> int:
    cfg = _cfg(args)
    path = _manifest_path(args, cfg)
    if (args.method, args.features) not in METHODS:
        print(f"error: method {args.method!r} does not run on {args.features!r} features", file=sys.stderr)
        return 2
    data = load_dataset(load_manifest(path))
    if args.flavor not in set(data.flavors):
        print(f"error: flavor {args.flavor!r} not in the manifest", file=sys.stderr)
        return 2
    nets = []
    if args.features == "auto":
        model_dir = path.parent / "models"
        if not all(net_path(model_dir, k).exists() for k in range(cfg.n_nets)):
            print(f"error: no pretrained networks in {model_dir}; run 'puree pretrain' first", file=sys.stderr)
            return 2
        nets = load_general_nets(model_dir, cfg.n_nets)
    guard = LeakageGuard()
    records = evaluate_method(cfg, data, nets, args.flavor, args.method, args.features, guard)
    summary = summarize(records)
    out = path.parent / "runs" / f"{args.flavor}_{args.method}_{args.features}.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps({"summary": summary, "runs": records, "leakage": guard.to_dict()},
                              indent=1, sort_keys=True) + "\n", encoding="utf-8")
    acc = summary["accuracy"]
    print(f"{args.flavor} {args.method}/{args.features}: accuracy {acc['mean']:.3f} ± {acc['sd']:.3f} "
          f"over {summary['n']} fits -> {out}")
    return 0


def cmd_evaluate(args) -> int:
    if not args.all:
        print("error: only 'evaluate --all' is supported", file=sys.stderr)
        return 2
    cfg = _cfg(args)
    path = _manifest_path(args, cfg)
    result = run_full_experiment(cfg, path, out_dir=path.parent, reuse_nets=True)
    print(table1_csv(result.report), end="")
    for f in result.failures:
        print(f"FAILED {f}", file=sys.stderr)
    return 0 if result.ok else 1


def cmd_report(args) -> int:
    cfg = _cfg(args)
    path = Path(cfg.output_dir) / "report.json"
    if not path.exists():
        print(f"error: {path} not found; run 'puree evaluate --all' first", file=sys.stderr)
        return 2
    if args.format == "json":
        sys.stdout.write(path.read_text(encoding="utf-8"))
        return 0
    report = json.loads(path.read_text(encoding="utf-8"))
    sys.stdout.write(table1_csv(report))
    for features in ("auto", "hand"):
        sys.stdout.write("\n" + flavor_table_csv(report, features))
    return 0


def cmd_run(args) -> int:
    cfg = _cfg(args)
    generate_synthetic_dataset(cfg, cfg.output_dir)
    result = run_full_experiment(cfg, Path(cfg.output_dir) / "manifest.json", out_dir=cfg.output_dir)
    print(table1_csv(result.report), end="")
    for f in result.failures:
        print(f"FAILED {f}", file=sys.stderr)
    return 0 if result.ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="puree", description="Synthetic purée dilution classification pipeline")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render the synthetic dataset and manifest")
    _common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("features", help="write handcrafted features and descriptive stats as CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("pretrain", help="pretrain the general autoencoder networks")
    _common(p)
    p.add_argument("--manifest")
    p.add_argument("--nets", type=int, default=None, help="number of general networks")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="cross-validate one method on one flavor")
    _common(p)
    p.add_argument("--manifest")
    p.add_argument("--flavor", required=True)
    p.add_argument("--method", required=True, choices=("softmax", "rf", "svm-linear", "svm-rbf"))
    p.add_argument("--features", required=True, choices=("auto", "hand"))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="run every method on every flavor and write reports")
    _common(p)
    p.add_argument("--manifest")
    p.add_argument("--all", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="print the written report")
    _common(p)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", help="synth followed by evaluate --all")
    _common(p)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
