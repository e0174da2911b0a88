"""End-to-end experiment driver: general networks, per-fold training, reports."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..classifiers import predict_classifier, train_random_forest, train_svm
from ..evaluation import (N_CLASSES, confusion_and_metrics, mean_sd, mode_vote,
                          position_folds)
from ..features import FEATURE_NAMES, STAT_NAMES, descriptive_stats, handcrafted_features
from ..modelio import load_stack, save_stack
from ..neural import StackedNet, finetune_stack, pretrain_stack
from .config import ExperimentConfig, derive_seed
from .synth import Manifest, generate_synthetic_dataset, load_manifest, load_patches, patch_vectors

log = logging.getLogger(__name__)

METHODS = (
    ("softmax", "auto"),
    ("rf", "auto"),
    ("svm-linear", "auto"),
    ("svm-rbf", "auto"),
    ("rf", "hand"),
    ("svm-linear", "hand"),
    ("svm-rbf", "hand"),
)
METHOD_LABELS = {
    ("softmax", "auto"): "Softmax DNN (AE codes)",
    ("rf", "auto"): "Random forest (AE codes)",
    ("svm-linear", "auto"): "Linear SVM (AE codes)",
    ("svm-rbf", "auto"): "RBF SVM (AE codes)",
    ("rf", "hand"): "Random forest (handcrafted)",
    ("svm-linear", "hand"): "Linear SVM (handcrafted)",
    ("svm-rbf", "hand"): "RBF SVM (handcrafted)",
}
CONVENTIONS = ("sensitivity and specificity per class from the one-vs-rest 2x2 collapse of the "
               "5x5 confusion matrix, macro-averaged over classes present in the test fold; "
               "accuracy = trace/total; mu +- sigma is the sample mean and sd (ddof=1) over "
               "folds x repeats")
REPORT_VERSION = 1


class ExperimentFailure(RuntimeError):
    pass


@dataclass
class LeakageGuard:
    """Counts training rows that share the held-out position of their fold."""

    fits: int = 0
    violations: int = 0
    by_stage: dict = field(default_factory=dict)

    def check(self, stage: str, train_positions, test_position: int) -> None:
        bad = int(np.count_nonzero(np.asarray(train_positions) == test_position))
        self.fits += 1
        self.violations += bad
        self.by_stage[stage] = self.by_stage.get(stage, 0) + bad
        if bad:
            raise ExperimentFailure(f"{stage}: {bad} training rows from test position {test_position}")

    def to_dict(self) -> dict:
        return {"fits_checked": self.fits, "violations": self.violations,
                "violations_by_stage": dict(sorted(self.by_stage.items()))}


@dataclass
class Dataset:
    manifest: Manifest
    vectors: np.ndarray
    hand: np.ndarray
    labels: np.ndarray
    positions: np.ndarray
    flavors: np.ndarray

    def rows(self, flavor: str) -> np.ndarray:
        return np.flatnonzero(self.flavors == flavor)


def load_dataset(manifest: Manifest) -> Dataset:
    patches = load_patches(manifest)
    return Dataset(
        manifest=manifest,
        vectors=patch_vectors(patches),
        hand=np.stack([handcrafted_features(p) for p in patches]),
        labels=manifest.column("label").astype(int),
        positions=manifest.column("position").astype(int),
        flavors=manifest.column("flavor"),
    )


def write_feature_csv(manifest: Manifest, path) -> int:
    """One row per patch: id, 71 handcrafted features, 8 descriptive statistics."""
    patches = load_patches(manifest)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", *FEATURE_NAMES, *STAT_NAMES])
        for rec, p in zip(manifest.records, patches):
            values = np.concatenate([handcrafted_features(p), descriptive_stats(p).as_array()])
            w.writerow([rec["id"], *(repr(float(v)) for v in values)])
    return len(patches)


# ---------------------------------------------------------------- general networks

def _net_cfgs(cfg: ExperimentConfig, k: int):
    return [replace(cfg.ae1, seed=derive_seed(cfg.master_seed, "net", k, "ae1") % 2**32),
            replace(cfg.ae2, seed=derive_seed(cfg.master_seed, "net", k, "ae2") % 2**32)]


def net_path(model_dir, k: int) -> Path:
    return Path(model_dir) / f"general_net_{k}.pmdl"


def pretrain_general_nets(cfg: ExperimentConfig, vectors, model_dir, n_nets=None) -> list[StackedNet]:
    """Pretrain, save and reload the general networks; the float32 reloads are returned."""
    n_nets = cfg.n_nets if n_nets is None else n_nets
    nets = []
    for k in range(n_nets):
        seed = derive_seed(cfg.master_seed, "net", k) % 2**32
        net, traces = pretrain_stack(vectors, seed, _net_cfgs(cfg, k), cfg.dims)
        meta = {"seed": seed, "ae1": cfg.ae1.to_dict(), "ae2": cfg.ae2.to_dict(),
                "final_losses": [float(t[-1]) for t in traces], "n_train": int(len(vectors))}
        save_stack(net_path(model_dir, k), net, meta)
        nets.append(load_stack(net_path(model_dir, k)))
        log.info("general net %d: reconstruction losses %s", k, meta["final_losses"])
    return nets


def load_general_nets(model_dir, n_nets: int) -> list[StackedNet]:
    return [load_stack(net_path(model_dir, k)) for k in range(n_nets)]


def _fingerprint(nets) -> str:
    h = hashlib.sha256()
    for net in nets:
        for p in net.params():
            h.update(np.ascontiguousarray(p).tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------- one method

def _fit_predict(cfg: ExperimentConfig, method: str, Xtr, ytr, Xte, seed: int, net=None):
    c = cfg.classifiers
    if method == "softmax":
        head = replace(cfg.head, seed=seed % 2**32)
        full = replace(cfg.finetune, seed=(seed + 1) % 2**32)
        tuned, _ = finetune_stack(net, Xtr, ytr, full, head)
        return tuned.predict(Xte)
    if method == "rf":
        model = train_random_forest(Xtr, ytr, c.rf_trees, seed, N_CLASSES, c.rf_max_depth)
    elif method in ("svm-linear", "svm-rbf"):
        model = train_svm(Xtr, ytr, kernel=method[4:], lam=c.svm_lambda,
                          iterations=c.svm_iterations_per_sample * len(ytr), seed=seed,
                          n_classes=N_CLASSES)
    else:
        raise ValueError(f"unknown method {method!r}")
    return predict_classifier(model, Xte)


def _score(cfg: ExperimentConfig, data: Dataset, test_rows, preds):
    truths = data.labels[test_rows]
    if cfg.aggregation == "mode":
        groups = [(int(data.labels[r]), int(data.positions[r])) for r in test_rows]
        votes = mode_vote(preds, groups)
        keys = list(votes)
        preds = np.array([votes[g] for g in keys])
        truths = np.array([g[0] for g in keys])
    return confusion_and_metrics(preds, truths)


def evaluate_method(cfg: ExperimentConfig, data: Dataset, nets, flavor: str, method: str,
                    features: str, guard: LeakageGuard) -> list[dict]:
    """All folds x repeats for one (flavor, method, feature set); one record per fit."""
    rows = data.rows(flavor)
    if rows.size == 0:
        raise ExperimentFailure(f"no patches for flavor {flavor!r}")
    plan = position_folds(data.positions[rows], tuple(range(1, cfg.synth.positions + 1)))
    repeats = len(nets) if features == "auto" else cfg.classifiers.repeats
    if features == "auto" and not nets:
        raise ExperimentFailure("auto features need pretrained general networks")
    codes = [net.codes(data.vectors[rows]) for net in nets] if features == "auto" and method != "softmax" else None
    out = []
    for fold in plan:
        tr, te = plan.split(data.positions[rows], fold)
        guard.check(f"{method}/{features}", data.positions[rows][tr], fold.test_position)
        ytr = data.labels[rows][tr]
        for rep in range(repeats):
            seed = derive_seed(cfg.master_seed, "fit", flavor, method, features, fold.test_position, rep)
            if method == "softmax":
                X = data.vectors[rows]
            elif features == "auto":
                X = codes[rep]
            else:
                X = data.hand[rows]
            preds = _fit_predict(cfg, method, X[tr], ytr, X[te], seed,
                                 nets[rep] if method == "softmax" else None)
            cm, m = _score(cfg, data, rows[te], preds)
            out.append({"fold": fold.test_position, "repeat": rep, "seed": seed,
                        "confusion": cm.tolist(), "metrics": m.to_dict()})
    return out


# ---------------------------------------------------------------- aggregation and reports

def summarize(records: list[dict]) -> dict:
    keys = ("macro_sensitivity", "macro_specificity", "accuracy")
    out = {}
    for k in keys:
        mu, sd = mean_sd([r["metrics"][k] for r in records])
        out[k] = {"mean": mu, "sd": sd}
    out["n"] = len(records)
    return out


def _pm(s: dict) -> str:
    return f"{s['mean']:.3f} ± {s['sd']:.3f}"


def table1_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    buf.write(f"# {CONVENTIONS}\n")
    w.writerow(["method", "features", "sensitivity", "specificity", "accuracy", "n"])
    for row in report["table1"]:
        w.writerow([row["label"], row["features"], _pm(row["macro_sensitivity"]),
                    _pm(row["macro_specificity"]), _pm(row["accuracy"]), row["n"]])
    return buf.getvalue()


def flavor_table_csv(report: dict, features: str) -> str:
    methods = [m for m in METHODS if m[1] == features]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    buf.write(f"# {CONVENTIONS}\n")
    header = ["flavor"]
    for m, _ in methods:
        header += [f"{m} sens", f"{m} spec", f"{m} acc"]
    w.writerow(header)
    for flavor in report["flavors"]:
        row = [flavor]
        for m, f in methods:
            s = report["per_flavor"][flavor].get(f"{m}/{f}")
            row += [_pm(s["macro_sensitivity"]), _pm(s["macro_specificity"]), _pm(s["accuracy"])] if s else ["", "", ""]
        w.writerow(row)
    return buf.getvalue()


def build_report(cfg: ExperimentConfig, data: Dataset, results: dict, guard: LeakageGuard,
                 failures: list, fingerprints: dict) -> dict:
    per_flavor = {}
    table1 = []
    for method, features in METHODS:
        key = f"{method}/{features}"
        pooled = []
        for flavor in cfg.flavors:
            recs = results.get((flavor, key))
            if recs:
                per_flavor.setdefault(flavor, {})[key] = summarize(recs)
                pooled += recs
        if pooled:
            table1.append({"method": method, "features": features, "label": METHOD_LABELS[(method, features)],
                           **summarize(pooled)})
    meta = data.manifest.meta
    return {
        "version": REPORT_VERSION,
        "conventions": CONVENTIONS,
        "config": cfg.to_dict(),
        "flavors": list(cfg.flavors),
        "counts": {"n_patches": int(len(data.labels)), "n_samples": data.manifest.n_samples,
                   "patches_per_sample": meta.get("patches_per_sample")},
        "protocol": {
            "folds": "leave one position out over all positions",
            "general_networks": "pretrained once on all unlabeled patches, reused for every flavor and fold",
            "aggregation": cfg.aggregation,
            "general_nets_unchanged": fingerprints.get("before") == fingerprints.get("after"),
        },
        "leakage": guard.to_dict(),
        "table1": table1,
        "per_flavor": {f: per_flavor.get(f, {}) for f in cfg.flavors},
        "runs": {f"{flavor}|{key}": recs for (flavor, key), recs in sorted(results.items())},
        "failures": failures,
    }


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=1, sort_keys=True, allow_nan=True) + "\n"


def write_reports(report: dict, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"json": out / "report.json", "table1": out / "table1.csv",
             "auto": out / "per_flavor_auto.csv", "hand": out / "per_flavor_hand.csv"}
    paths["json"].write_text(dumps_report(report), encoding="utf-8")
    paths["table1"].write_text(table1_csv(report), encoding="utf-8")
    paths["auto"].write_text(flavor_table_csv(report, "auto"), encoding="utf-8")
    paths["hand"].write_text(flavor_table_csv(report, "hand"), encoding="utf-8")
    return paths


@dataclass
class ExperimentResult:
    report: dict
    paths: dict
    failures: list

    @property
    def ok(self) -> bool:
        return not self.failures


def run_full_experiment(cfg: ExperimentConfig, manifest_path=None, out_dir=None,
                        methods=METHODS, reuse_nets: bool = False) -> ExperimentResult:
    """Synthesize (if needed), pretrain general networks, evaluate every method, write reports.

    Stage failures are recorded in the report and the run continues where it can.
    """
    out = Path(out_dir or cfg.output_dir)
    failures = []
    if manifest_path is None:
        manifest_path = out / "manifest.json"
        if not manifest_path.exists():
            generate_synthetic_dataset(cfg, out)
    data = load_dataset(load_manifest(manifest_path))
    model_dir = out / "models"
    nets = []
    needs_nets = any(f == "auto" for _, f in methods)
    if needs_nets:
        try:
            if reuse_nets and all(net_path(model_dir, k).exists() for k in range(cfg.n_nets)):
                nets = load_general_nets(model_dir, cfg.n_nets)
            else:
                nets = pretrain_general_nets(cfg, data.vectors, model_dir)
        except Exception as exc:  # recorded, auto-feature methods are then skipped
            failures.append({"stage": "pretrain", "error": f"{type(exc).__name__}: {exc}"})
    fingerprints = {"before": _fingerprint(nets)}
    guard = LeakageGuard()
    results = {}
    for flavor in cfg.flavors:
        for method, features in methods:
            if features == "auto" and not nets:
                continue
            try:
                results[(flavor, f"{method}/{features}")] = evaluate_method(
                    cfg, data, nets, flavor, method, features, guard)
            except Exception as exc:
                failures.append({"stage": f"{method}/{features}", "flavor": flavor,
                                 "error": f"{type(exc).__name__}: {exc}"})
            log.info("%s %s/%s done", flavor, method, features)
    fingerprints["after"] = _fingerprint(nets)
    report = build_report(cfg, data, results, guard, failures, fingerprints)
    paths = write_reports(report, out)
    return ExperimentResult(report, paths, failures)
