"""Leave-one-subject-out evaluation: ROC/AUC, grid search, early classification.

Scores are pooled across folds into one ROC curve per class by default
(per-fold averaging is available via ``pool_scores=False``).  The pairwise
kernel base matrix is computed once on the full dataset and sliced per
fold; PSD repair of the warping-distance kernel is rerun on each training
submatrix so the projection never sees test information.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .core import LabeledDataset, atomic_write_text, crop_dataset
from .exceptions import OneClassOnly, SingleClass, SingleSubject, WarpkitError
from .kernels import GramResult, KernelConfig, gram_matrix
from .psdrepair import nearest_correlation
from .svm import train_one_vs_all


# ---------------------------------------------------------------------------
# ROC / AUC

@dataclass(frozen=True)
class RocCurve:
    """Threshold sweep, tie-grouped: one point per distinct score."""

    points: tuple[tuple[float, float], ...]
    thresholds: tuple[float, ...]

    def __post_init__(self):
        pts = tuple((float(a), float(b)) for a, b in self.points)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        if len(pts) != len(self.thresholds):
            raise ValueError("one threshold per point required")
        if pts[0] != (0.0, 0.0) or pts[-1] != (1.0, 1.0):
            raise ValueError("curve must run from (0,0) to (1,1)")
        for (f0, t0), (f1, t1) in zip(pts, pts[1:]):
            if f1 < f0 or t1 < t0:
                raise ValueError("curve coordinates must be non-decreasing")


def roc_curve(scores, truth) -> RocCurve:
    """ROC over descending unique score thresholds (ties grouped)."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=bool).ravel()
    if scores.shape != truth.shape:
        raise ValueError("scores and truth must have equal length")
    n_pos = int(truth.sum())
    n_neg = truth.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise OneClassOnly(f"need both classes, got {n_pos} positives / {n_neg} negatives")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    tps = np.cumsum(truth[order])
    fps = np.cumsum(~truth[order])
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    points = [(0.0, 0.0)] + [(fps[i] / n_neg, tps[i] / n_pos) for i in last]
    thresholds = [np.inf] + [s[i] for i in last]
    return RocCurve(tuple(points), tuple(thresholds))


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under the curve."""
    pts = np.asarray(curve.points)
    return float(np.trapezoid(pts[:, 1], pts[:, 0]))


def write_roc_csv(curve: RocCurve, path) -> None:
    lines = ["fpr,tpr,threshold"]
    for (f, t), thr in zip(curve.points, curve.thresholds):
        lines.append(f"{f!r},{t!r},{thr!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# folds

def loso_split(ds: LabeledDataset) -> list[tuple[np.ndarray, np.ndarray]]:
    """One fold per subject: test = that subject's items, train = the rest."""
    if len(ds.subjects) < 2:
        raise SingleSubject(f"need >= 2 subjects, got {ds.subjects}")
    subjects = np.array([it.subject for it in ds.items])
    folds = []
    for subj in ds.subjects:
        test = np.flatnonzero(subjects == subj)
        train = np.flatnonzero(subjects != subj)
        folds.append((train, test))
    return folds


# ---------------------------------------------------------------------------
# reports

@dataclass
class EvalReport:
    per_class_auc: dict
    mean_auc: float
    mean_error: float
    predictions: list
    params: dict
    roc_curves: dict = field(default_factory=dict)
    early_curve: dict | None = None

    def to_dict(self) -> dict:
        doc = {
            "per_class_auc": self.per_class_auc,
            "mean_auc": self.mean_auc,
            "mean_error": self.mean_error,
            "params": self.params,
            "predictions": self.predictions,
        }
        if self.early_curve is not None:
            doc["early_curve"] = {str(k): v for k, v in self.early_curve.items()}
        return doc


def format_auc_table(per_class_auc: dict, mean_auc: float) -> str:
    """Fixed-width per-class + average AUC table."""
    names = list(per_class_auc) + ["Average"]
    values = [per_class_auc[c] for c in per_class_auc] + [mean_auc]
    width = max(8, max(len(n) for n in names) + 2)
    head = "".join(n.rjust(width) for n in names)
    vals = "".join(f"{v:.3f}".rjust(width) for v in values)
    return head + "\n" + vals


# ---------------------------------------------------------------------------
# LOSO evaluation

def _base_matrix(ds: LabeledDataset, cfg: KernelConfig, workers: int,
                 repair_tol: float, repair_max_iter: int) -> np.ndarray:
    """GA kernel values, or raw warping distances for pseudo_dtw."""
    if cfg.family == "pseudo_dtw":
        result: GramResult = gram_matrix(ds, cfg, workers=workers,
                                         repair_tol=repair_tol,
                                         repair_max_iter=repair_max_iter)
        return result.distances
    return gram_matrix(ds, cfg, workers=workers).gram.values


def _fold_kernels(base: np.ndarray, cfg: KernelConfig, folds,
                  repair_tol: float, repair_max_iter: int):
    """Per-fold (train x train, test x train) kernel blocks.

    pseudo_dtw blocks are exponentiated and the train block PSD-repaired;
    GA blocks are plain slices (principal submatrices of a PSD matrix).
    """
    out = []
    for train, test in folds:
        if cfg.family == "pseudo_dtw":
            k_train = np.exp(-base[np.ix_(train, train)] / cfg.t)
            k_train, _ = nearest_correlation(k_train, tol=repair_tol,
                                             max_iter=repair_max_iter)
            k_test = np.exp(-base[np.ix_(test, train)] / cfg.t)
        else:
            k_train = base[np.ix_(train, train)]
            k_test = base[np.ix_(test, train)]
        out.append((train, test, k_train, k_test))
    return out


def _score_folds(fold_kernels, labels: np.ndarray, classes, C: float,
                 svm_tol: float) -> tuple[np.ndarray, list]:
    """Pooled decision scores (one row per item) from per-fold models."""
    scores = np.full((labels.size, len(classes)), np.nan)
    fold_of = np.full(labels.size, -1)
    for fold_idx, (train, test, k_train, k_test) in enumerate(fold_kernels):
        try:
            model = train_one_vs_all(k_train, labels[train], C, tol=svm_tol,
                                     classes=classes)
        except WarpkitError as exc:
            raise type(exc)(f"fold {fold_idx}: {exc}") from exc
        scores[test] = model.decision_matrix(k_test)
        fold_of[test] = fold_idx
    return scores, fold_of.tolist()


def _summarize(ds, labels, classes, scores, fold_of, folds, pool_scores, params
               ) -> EvalReport:
    curves = {}
    per_class = {}
    if pool_scores:
        for k, cls in enumerate(classes):
            curves[cls] = roc_curve(scores[:, k], labels == cls)
            per_class[cls] = auc(curves[cls])
    else:
        # average per-fold AUCs; folds whose test side misses a class are skipped
        for k, cls in enumerate(classes):
            fold_aucs = []
            for _, test in folds:
                truth = labels[test] == cls
                if truth.any() and not truth.all():
                    fold_aucs.append(auc(roc_curve(scores[test, k], truth)))
            if not fold_aucs:
                raise OneClassOnly(f"class {cls!r} never mixed within a test fold")
            per_class[cls] = float(np.mean(fold_aucs))
            curves[cls] = roc_curve(scores[:, k], labels == cls)

    predicted = [classes[k] for k in np.argmax(scores, axis=1)]
    mean_error = float(np.mean([p != t for p, t in zip(predicted, labels)]))
    predictions = [
        {
            "index": i,
            "subject": ds.items[i].subject,
            "label": ds.items[i].label,
            "frames": ds.items[i].series.n_frames,
            "predicted": predicted[i],
            "fold": fold_of[i],
            "scores": {cls: float(scores[i, k]) for k, cls in enumerate(classes)},
        }
        for i in range(len(ds))
    ]
    return EvalReport(
        per_class_auc=per_class,
        mean_auc=float(np.mean(list(per_class.values()))),
        mean_error=mean_error,
        predictions=predictions,
        params=params,
        roc_curves=curves,
    )


def loso_evaluate(ds: LabeledDataset, cfg: KernelConfig, C: float, *,
                  workers: int = 1, pool_scores: bool = True,
                  repair_tol: float = 1e-7, repair_max_iter: int = 200,
                  svm_tol: float = 1e-3, _base: np.ndarray | None = None
                  ) -> EvalReport:
    """Full leave-one-subject-out run at fixed hyperparameters.

    The kernel base matrix is computed once (pass ``_base`` to reuse one),
    sliced per fold, and the pooled per-class decision scores are turned
    into one ROC/AUC per class.
    """
    labels = np.array(ds.labels())
    classes = ds.classes
    if len(classes) < 2:
        raise SingleClass(f"need >= 2 classes, got {classes}")
    folds = loso_split(ds)
    base = _base if _base is not None else _base_matrix(
        ds, cfg, workers, repair_tol, repair_max_iter)
    fold_kernels = _fold_kernels(base, cfg, folds, repair_tol, repair_max_iter)
    scores, fold_of = _score_folds(fold_kernels, labels, classes, C, svm_tol)
    params = dict(cfg.to_dict(), C=C, pool_scores=pool_scores)
    return _summarize(ds, labels, classes, scores, fold_of, folds, pool_scores, params)


# ---------------------------------------------------------------------------
# grid search

def default_param_grid() -> list[float]:
    """16 kernel-parameter values, 2^-5 .. 2^10, equidistant in log2."""
    return [float(2.0 ** e) for e in range(-5, 11)]


def default_c_grid() -> list[float]:
    """11 regularization values, 2^-5 .. 2^5, equidistant in log2."""
    return [float(2.0 ** e) for e in range(-5, 6)]


class GridSearchResult(NamedTuple):
    best_param: float
    best_C: float
    table: list


def grid_search(ds: LabeledDataset, family: str, param_grid=None, C_grid=None, *,
                divergence: str | None = None, workers: int = 1,
                repair_tol: float = 1e-7, repair_max_iter: int = 200,
                svm_tol: float = 1e-3) -> GridSearchResult:
    """LOSO mean classification error over the (kernel parameter, C) grid.

    Returns the error-minimizing pair (ties toward smaller parameter, then
    smaller C) plus the full error table.  For pseudo_dtw the distance
    matrix is reused across the whole grid; per-fold kernels are reused
    across the C axis.
    """
    param_grid = list(param_grid) if param_grid is not None else default_param_grid()
    C_grid = list(C_grid) if C_grid is not None else default_c_grid()
    if not param_grid or not C_grid:
        raise ValueError("grids must be nonempty")

    labels = np.array(ds.labels())
    classes = ds.classes
    folds = loso_split(ds)
    # the distance matrix only depends on the kernel parameter through the
    # divergence, so it is shared across the grid for plain warping distances
    share_base = family == "pseudo_dtw" and divergence in (None, "sq_euclidean")
    shared_base = None

    table = []
    best = None
    for param in param_grid:
        if family == "pseudo_dtw":
            cfg = KernelConfig(family, t=param, sigma=param, divergence=divergence)
        else:
            cfg = KernelConfig(family, sigma=param, divergence=divergence)
        if share_base:
            if shared_base is None:
                shared_base = _base_matrix(ds, cfg, workers, repair_tol, repair_max_iter)
            base = shared_base
        else:
            base = _base_matrix(ds, cfg, workers, repair_tol, repair_max_iter)
        fold_kernels = _fold_kernels(base, cfg, folds, repair_tol, repair_max_iter)
        for C in C_grid:
            scores, _ = _score_folds(fold_kernels, labels, classes, C, svm_tol)
            predicted = [classes[k] for k in np.argmax(scores, axis=1)]
            error = float(np.mean([p != t for p, t in zip(predicted, labels)]))
            table.append({"param": param, "C": C, "error": error})
            key = (error, param, C)
            if best is None or key < best:
                best = key
    return GridSearchResult(best_param=best[1], best_C=best[2], table=table)


def nested_grid_evaluate(ds: LabeledDataset, family: str, param_grid=None,
                         C_grid=None, *, divergence: str | None = None,
                         workers: int = 1, pool_scores: bool = True,
                         repair_tol: float = 1e-7, repair_max_iter: int = 200,
                         svm_tol: float = 1e-3) -> EvalReport:
    """LOSO with the grid selection nested inside every fold.

    Each outer fold reruns :func:`grid_search` on its training subjects
    only, so the reported AUCs never see the hyperparameter choice.  Costs
    roughly fold-count times the flat search; the per-fold choices are
    recorded in the report's params.
    """
    param_grid = list(param_grid) if param_grid is not None else default_param_grid()
    C_grid = list(C_grid) if C_grid is not None else default_c_grid()
    if not param_grid or not C_grid:
        raise ValueError("grids must be nonempty")
    labels = np.array(ds.labels())
    classes = ds.classes
    if len(classes) < 2:
        raise SingleClass(f"need >= 2 classes, got {classes}")
    folds = loso_split(ds)

    base_cache = {}

    def full_base(cfg, cacheable_param):
        if cacheable_param not in base_cache:
            base_cache[cacheable_param] = _base_matrix(ds, cfg, workers, repair_tol,
                                                       repair_max_iter)
        return base_cache[cacheable_param]

    scores = np.full((len(ds), len(classes)), np.nan)
    fold_of = np.full(len(ds), -1)
    choices = []
    for fold_idx, (train, test) in enumerate(folds):
        sub = LabeledDataset(tuple(ds.items[i] for i in train))
        inner = grid_search(sub, family, param_grid, C_grid, divergence=divergence,
                            workers=workers, repair_tol=repair_tol,
                            repair_max_iter=repair_max_iter, svm_tol=svm_tol)
        if family == "pseudo_dtw":
            cfg = KernelConfig(family, t=inner.best_param, sigma=inner.best_param,
                               divergence=divergence)
            # the distance matrix ignores t under the plain divergence
            key = "dtw" if divergence in (None, "sq_euclidean") else (
                "dtw", inner.best_param)
        else:
            cfg = KernelConfig(family, sigma=inner.best_param, divergence=divergence)
            key = ("ga", inner.best_param)
        base = full_base(cfg, key)
        (_, _, k_train, k_test), = _fold_kernels(base, cfg, [(train, test)],
                                                 repair_tol, repair_max_iter)
        try:
            model = train_one_vs_all(k_train, labels[train], inner.best_C,
                                     tol=svm_tol, classes=classes)
        except WarpkitError as exc:
            raise type(exc)(f"fold {fold_idx}: {exc}") from exc
        scores[test] = model.decision_matrix(k_test)
        fold_of[test] = fold_idx
        choices.append({"fold": fold_idx, "param": inner.best_param,
                        "C": inner.best_C})
    params = {
        "family": family,
        "divergence": divergence,
        "selection": "nested",
        "per_fold_choices": choices,
        "pool_scores": pool_scores,
    }
    return _summarize(ds, labels, classes, scores, fold_of.tolist(), folds,
                      pool_scores, params)


# ---------------------------------------------------------------------------
# early classification

def early_curve(ds: LabeledDataset, cfg: KernelConfig, C: float,
                budgets=tuple(range(2, 17)), *, workers: int = 1,
                pool_scores: bool = True, repair_tol: float = 1e-7,
                repair_max_iter: int = 200, svm_tol: float = 1e-3) -> dict:
    """Per-class AUC as a function of the frame budget.

    Every series is cropped to its first min(T, budget) frames and the
    whole LOSO evaluation reruns on the cropped dataset.
    """
    budgets = [int(b) for b in budgets]
    if not budgets or min(budgets) < 2:
        raise ValueError(f"budgets must all be >= 2, got {budgets}")
    out = {}
    for budget in budgets:
        report = loso_evaluate(crop_dataset(ds, budget), cfg, C, workers=workers,
                               pool_scores=pool_scores, repair_tol=repair_tol,
                               repair_max_iter=repair_max_iter, svm_tol=svm_tol)
        out[budget] = dict(report.per_class_auc)
    return out


def write_early_csv(early: dict, cls: str, path) -> None:
    lines = ["budget,auc"]
    for budget in sorted(early):
        lines.append(f"{budget},{early[budget][cls]!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")
