"""Leave-one-position-out folds, confusion matrices and sensitivity/specificity summaries."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

N_CLASSES = 5
POSITIONS = (1, 2, 3, 4, 5, 6)


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class Fold:
    test_position: int
    train_positions: tuple[int, ...]


@dataclass(frozen=True)
class FoldPlan:
    folds: tuple[Fold, ...]

    def __iter__(self):
        return iter(self.folds)

    def __len__(self):
        return len(self.folds)

    def split(self, positions, fold: Fold) -> tuple[np.ndarray, np.ndarray]:
        """Row indices ``(train, test)`` of ``positions`` for one fold."""
        positions = np.asarray(positions)
        test = np.flatnonzero(positions == fold.test_position)
        train = np.flatnonzero(np.isin(positions, fold.train_positions))
        return train, test


def position_folds(positions, expected=POSITIONS) -> FoldPlan:
    """One fold per position; accepts a manifest's position column or a set of ids."""
    present = sorted({int(p) for p in np.ravel(positions)})
    missing = sorted(set(expected) - set(present))
    extra = sorted(set(present) - set(expected))
    if missing or extra:
        raise EvaluationError(f"positions must be exactly {list(expected)}; "
                              f"missing {missing}, unexpected {extra}")
    folds = tuple(Fold(p, tuple(q for q in present if q != p)) for p in present)
    return FoldPlan(folds)


@dataclass(frozen=True)
class MetricsSummary:
    sensitivity: np.ndarray     # per class, nan where the class is absent from truth
    specificity: np.ndarray
    class_accuracy: np.ndarray  # one-vs-rest (TP + TN) / total per class
    macro_sensitivity: float
    macro_specificity: float
    accuracy: float             # trace / total
    present: np.ndarray

    def to_dict(self) -> dict:
        clean = lambda a: [None if np.isnan(v) else float(v) for v in a]
        return {
            "sensitivity": clean(self.sensitivity),
            "specificity": clean(self.specificity),
            "class_accuracy": clean(self.class_accuracy),
            "macro_sensitivity": self.macro_sensitivity,
            "macro_specificity": self.macro_specificity,
            "accuracy": self.accuracy,
        }


def confusion_matrix(preds, truths, n_classes=N_CLASSES) -> np.ndarray:
    """Rows are expected class, columns observed class."""
    preds = np.asarray(preds, dtype=int).ravel()
    truths = np.asarray(truths, dtype=int).ravel()
    if preds.shape != truths.shape:
        raise EvaluationError(f"{preds.size} predictions vs {truths.size} truths")
    for arr in (preds, truths):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise EvaluationError(f"labels must lie in 0..{n_classes - 1}")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (truths, preds), 1)
    return cm


def metrics_from_confusion(cm) -> MetricsSummary:
    cm = np.asarray(cm, dtype=np.int64)
    total = cm.sum()
    if total == 0:
        raise EvaluationError("empty confusion matrix")
    tp = np.diag(cm).astype(float)
    fn = cm.sum(axis=1) - tp
    fp = cm.sum(axis=0) - tp
    tn = total - tp - fn - fp
    present = (tp + fn) > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        sens = np.where(present, tp / (tp + fn), np.nan)
        spec = np.where(tn + fp > 0, tn / (tn + fp), np.nan)
    spec = np.where(present, spec, np.nan)
    if not present.all():
        warnings.warn(f"classes {np.flatnonzero(~present).tolist()} absent from truth; "
                      "excluded from macro averages", stacklevel=3)
    return MetricsSummary(
        sensitivity=sens,
        specificity=spec,
        class_accuracy=(tp + tn) / total,
        macro_sensitivity=float(np.nanmean(sens)),
        macro_specificity=float(np.nanmean(spec)),
        accuracy=float(tp.sum() / total),
        present=present,
    )


def confusion_and_metrics(preds, truths, n_classes=N_CLASSES) -> tuple[np.ndarray, MetricsSummary]:
    cm = confusion_matrix(preds, truths, n_classes)
    return cm, metrics_from_confusion(cm)


def binary_collapse(cm, k: int) -> np.ndarray:
    """One-vs-rest ``[[TP, FN], [FP, TN]]`` for class ``k``."""
    cm = np.asarray(cm)
    tp = cm[k, k]
    fn = cm[k].sum() - tp
    fp = cm[:, k].sum() - tp
    tn = cm.sum() - tp - fn - fp
    return np.array([[tp, fn], [fp, tn]])


def mean_sd(values) -> tuple[float, float]:
    """Sample mean and standard deviation (ddof=1; 0 for a single value)."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return float("nan"), float("nan")
    sd = float(v.std(ddof=1)) if v.size > 1 else 0.0
    return float(v.mean()), sd


def mode_vote(preds, groups, n_classes=N_CLASSES) -> dict:
    """Most frequent patch prediction per group (ties to the lowest class)."""
    out = {}
    preds = np.asarray(preds, dtype=int)
    groups = list(groups)
    for g in dict.fromkeys(groups):
        sel = np.array([x == g for x in groups])
        out[g] = int(np.bincount(preds[sel], minlength=n_classes).argmax())
    return out
