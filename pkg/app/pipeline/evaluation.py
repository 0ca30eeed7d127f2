"""Stratified k-fold evaluation: accuracy, macro-F1, confusion, one-vs-rest ROC/AUC."""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import UsageError
from .models import EvalReport, RocCurve
from .settings import AugmentConfig, TrainSettings
from .signal import NUM_CLASSES, LabeledDataset
from .training import predict_windows, train_model

logger = logging.getLogger(__name__)

ROC_GRID_POINTS = 101


@dataclass(frozen=True, eq=False)
class FoldPlan:
    k: int
    assignments: np.ndarray
    seed: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def fold_sizes(self) -> list[int]:
        return np.bincount(self.assignments, minlength=self.k).tolist()


def stratified_kfold(labels: Sequence[int], k: int, seed: int = 0) -> FoldPlan:
    """Shuffle within each class, then deal round-robin across folds.

    The dealing position carries over from one class to the next, so fold
    sizes differ by at most one as well as per-class counts.
    """
    y = np.asarray(labels, dtype=np.int64)
    n = y.shape[0]
    if k < 2:
        raise UsageError("k must be >= 2")
    if k > n:
        raise UsageError(f"k={k} exceeds the number of samples ({n})")
    rng = np.random.default_rng(seed)
    assignments = np.empty(n, dtype=np.int64)
    position = 0
    for cls in np.unique(y):
        members = rng.permutation(np.flatnonzero(y == cls))
        assignments[members] = (position + np.arange(members.shape[0])) % k
        position += members.shape[0]
    return FoldPlan(k=k, assignments=assignments, seed=seed)


def confusion_matrix(y_true: Sequence[int], y_pred: Sequence[int], n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return cm


def macro_f1(confusion: np.ndarray) -> float:
    """Unweighted mean F1; a class with no true and no predicted samples scores 0."""
    cm = np.asarray(confusion, dtype=np.float64)
    tp = np.diag(cm)
    predicted = cm.sum(axis=0)
    actual = cm.sum(axis=1)
    f1 = np.zeros(cm.shape[0])
    for c in range(cm.shape[0]):
        if tp[c] == 0:
            continue
        precision = tp[c] / predicted[c]
        recall = tp[c] / actual[c]
        f1[c] = 2 * precision * recall / (precision + recall)
    return float(f1.mean()) if f1.size else 0.0


def auc_rank(binary: np.ndarray, scores: np.ndarray) -> Optional[float]:
    """Mann-Whitney AUC with average ranks for ties; None if a side is empty."""
    pos = binary.astype(bool)
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def roc_curve(binary: np.ndarray, scores: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Empirical ROC with tied scores grouped into one step, from (0, 0) to (1, 1)."""
    pos = binary.astype(bool)
    order = np.argsort(-scores, kind="mergesort")
    s, p = scores[order], pos[order]
    distinct = np.flatnonzero(np.diff(s)) if s.size else np.zeros(0, dtype=np.int64)
    ends = np.r_[distinct, s.size - 1]
    tps = np.cumsum(p)[ends]
    fps = np.cumsum(~p)[ends]
    tpr = np.r_[0.0, tps / max(pos.sum(), 1)]
    fpr = np.r_[0.0, fps / max((~pos).sum(), 1)]
    return fpr, tpr


def roc_auc_ovr(labels: Sequence[int], proba: np.ndarray, n_classes: int | None = None) -> dict:
    """Per-class one-vs-rest AUC, macro AUC, and a vertically averaged mean ROC."""
    y = np.asarray(labels, dtype=np.int64)
    P = np.asarray(proba, dtype=np.float64)
    n_classes = n_classes or P.shape[1]
    grid = np.linspace(0.0, 1.0, ROC_GRID_POINTS)
    aucs: list[Optional[float]] = []
    curves: list[Optional[RocCurve]] = []
    absent: list[int] = []
    interpolated = []
    for c in range(n_classes):
        binary = y == c
        auc = auc_rank(binary, P[:, c]) if c < P.shape[1] else None
        aucs.append(auc)
        if auc is None:
            absent.append(c)
            curves.append(None)
            continue
        fpr, tpr = roc_curve(binary, P[:, c])
        curves.append(RocCurve(fpr=fpr.tolist(), tpr=tpr.tolist()))
        interpolated.append(np.interp(grid, fpr, tpr))
    if absent:
        logger.warning(f"⚠️ AUC undefined for classes {absent} (no positive or no negative samples)")
    defined = [a for a in aucs if a is not None]
    mean_tpr = np.mean(interpolated, axis=0) if interpolated else np.zeros_like(grid)
    if interpolated:
        mean_tpr[0] = 0.0
    return {
        "per_class_auc": aucs,
        "macro_auc": float(np.mean(defined)) if defined else None,
        "absent_classes": absent,
        "roc_curves": curves,
        "mean_roc": RocCurve(fpr=grid.tolist(), tpr=mean_tpr.tolist()),
    }


@dataclass
class FoldResult:
    fold: int
    test_indices: np.ndarray
    predictions: np.ndarray
    proba: np.ndarray


# (fold, train indices, test indices) -> None; lets tests audit the split
FoldAudit = Callable[[int, np.ndarray, np.ndarray], None]


def _run_fold(ds, plan, fold, settings, augment, n_classes, audit) -> FoldResult:
    train_idx, test_idx = plan.train_indices(fold), plan.test_indices(fold)
    if audit is not None:
        audit(fold, train_idx, test_idx)
    fold_augment = augment.model_copy(update={"seed": augment.seed + fold})
    model, _ = train_model(ds.subset(train_idx), settings, fold_augment)
    test = ds.subset(test_idx)
    predictions, proba = predict_windows(model, test.windows)
    full = np.zeros((test_idx.shape[0], n_classes))
    full[:, model.classes] = proba
    logger.info(f"🔁 Fold {fold}: accuracy {np.mean(predictions == test.y()):.4f} on {len(test)} windows")
    return FoldResult(fold=fold, test_indices=test_idx, predictions=predictions, proba=full)


def cross_validate(
    ds: LabeledDataset,
    k: int = 10,
    seed: int = 42,
    train_cfg: TrainSettings | None = None,
    augment: AugmentConfig | None = None,
    jobs: int = 1,
    audit: FoldAudit | None = None,
) -> EvalReport:
    """Fit and score one pipeline per fold; augmentation touches training splits only."""
    settings = train_cfg or TrainSettings()
    augment = augment or AugmentConfig(copies=0)
    y = ds.y()
    # fixed label space: classes missing from ds keep their rows and AUC slots
    n_classes = max(NUM_CLASSES, ds.num_classes())
    plan = stratified_kfold(y, k, seed)
    logger.info(f"🚀 {k}-fold cross-validation on {len(ds)} windows ({n_classes} classes)")

    def run(fold: int) -> FoldResult:
        return _run_fold(ds, plan, fold, settings, augment, n_classes, audit)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, range(k)))
    else:
        results = [run(fold) for fold in range(k)]

    predictions = np.empty(len(ds), dtype=np.int64)
    proba = np.zeros((len(ds), n_classes))
    fold_accuracy = []
    for result in results:
        predictions[result.test_indices] = result.predictions
        proba[result.test_indices] = result.proba
        fold_accuracy.append(float(np.mean(result.predictions == y[result.test_indices])))

    cm = confusion_matrix(y, predictions, n_classes)
    roc = roc_auc_ovr(y, proba, n_classes)
    names = list(ds.class_names or ())
    names += [f"class_{i}" for i in range(len(names), n_classes)]
    report = EvalReport(
        k=k,
        seed=seed,
        n_samples=len(ds),
        class_names=names[:n_classes],
        fold_sizes=plan.fold_sizes(),
        fold_accuracy=fold_accuracy,
        mean_accuracy=float(np.mean(fold_accuracy)),
        std_accuracy=float(np.std(fold_accuracy)),
        macro_f1=macro_f1(cm),
        confusion=cm.tolist(),
        **roc,
    )
    logger.info(
        f"✅ Accuracy {report.mean_accuracy:.4f} ± {report.std_accuracy:.4f}, macro-F1 {report.macro_f1:.4f}"
    )
    return report
