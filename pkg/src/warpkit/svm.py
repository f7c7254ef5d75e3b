"""Soft-margin SVM over precomputed Gram matrices.

The dual is solved by sequential minimal optimization with the working
pair picked by maximal KKT violation.  Kernels here are expensive dynamic
programs computed once upstream, so the solver only ever sees dense
precomputed matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .exceptions import IndefiniteGram, NoConvergence, ShapeMismatch, SingleClass

DEFAULT_TOL = 1e-3
DEFAULT_MAX_UPDATES = 10_000_000


def _as_matrix(gram) -> np.ndarray:
    values = getattr(gram, "values", gram)
    return np.asarray(values, dtype=np.float64)


@dataclass(frozen=True)
class SvmModel:
    """Trained dual state; everything needed to score new kernel rows."""

    alphas: np.ndarray
    labels: np.ndarray
    bias: float
    support_indices: np.ndarray
    C: float
    gram_ref: str = ""

    def __post_init__(self):
        alphas = np.asarray(self.alphas, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.float64)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "support_indices",
                           np.asarray(self.support_indices, dtype=np.int64))
        k = alphas.shape[0]
        if labels.shape[0] != k:
            raise ShapeMismatch(f"{k} alphas vs {labels.shape[0]} labels")
        if np.any(alphas < -1e-12 * self.C) or np.any(alphas > self.C * (1 + 1e-12)):
            raise ValueError("alphas outside [0, C]")
        if abs(float(alphas @ labels)) > 1e-8 * self.C * max(k, 1):
            raise ValueError("dual equality constraint violated")

    @property
    def n_train(self) -> int:
        return self.alphas.shape[0]

    def to_dict(self) -> dict:
        return {
            "alphas": self.alphas.tolist(),
            "labels": self.labels.tolist(),
            "bias": self.bias,
            "C": self.C,
            "support_indices": self.support_indices.tolist(),
            "gram_ref": self.gram_ref,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SvmModel":
        return cls(np.asarray(d["alphas"]), np.asarray(d["labels"]), float(d["bias"]),
                   np.asarray(d["support_indices"]), float(d["C"]),
                   d.get("gram_ref", ""))


def _check_binary_labels(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).ravel()
    if not np.all(np.abs(y) == 1.0):
        raise ValueError("labels must be +1/-1")
    if np.all(y == y[0]):
        raise SingleClass("both labels must be present")
    return y


def _smo(K: np.ndarray, y: np.ndarray, C: float, tol: float, max_updates: int):
    n = K.shape[0]
    alpha = np.zeros(n)
    grad = -np.ones(n)          # gradient of 1/2 a'Qa - sum(a) at a = 0
    pos = y > 0
    updates = 0
    while updates < max_updates:
        neg_yg = -(y * grad)
        up = (pos & (alpha < C)) | (~pos & (alpha > 0.0))
        low = (~pos & (alpha < C)) | (pos & (alpha > 0.0))
        i = int(np.argmax(np.where(up, neg_yg, -np.inf)))
        j = int(np.argmin(np.where(low, neg_yg, np.inf)))
        violation = neg_yg[i] - neg_yg[j]
        # the margin residual after biasing is bounded by this gap, so run
        # to half the requested tolerance
        if violation <= 0.5 * tol:
            return alpha, grad, updates, True
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        step = violation / max(quad, 1e-12)
        step = min(step,
                   C - alpha[i] if pos[i] else alpha[i],
                   alpha[j] if pos[j] else C - alpha[j])
        alpha[i] = min(max(alpha[i] + y[i] * step, 0.0), C)
        alpha[j] = min(max(alpha[j] - y[j] * step, 0.0), C)
        grad += step * y * (K[:, i] - K[:, j])
        updates += 1
    return alpha, grad, updates, False


def _bias(alpha: np.ndarray, y: np.ndarray, grad: np.ndarray, C: float) -> float:
    # for free support vectors -y*grad equals the optimal bias exactly
    neg_yg = -(y * grad)
    free = (alpha > 1e-9 * C) & (alpha < C * (1.0 - 1e-9))
    if np.any(free):
        return float(np.mean(neg_yg[free]))
    pos = y > 0
    up = (pos & (alpha < C)) | (~pos & (alpha > 0.0))
    low = (~pos & (alpha < C)) | (pos & (alpha > 0.0))
    hi = np.max(np.where(up, neg_yg, -np.inf))
    lo = np.min(np.where(low, neg_yg, np.inf))
    return float(0.5 * (hi + lo))


def train_svm(gram, y, C: float, tol: float = DEFAULT_TOL,
              max_updates: int = DEFAULT_MAX_UPDATES, gram_ref: str = "") -> SvmModel:
    """Train a binary soft-margin SVM on a precomputed Gram matrix.

    ``y`` holds +1/-1 labels; the returned model satisfies the KKT
    conditions within ``tol`` (see :func:`kkt_violation`).

    Raises
    ------
    SingleClass
        when only one label is present.
    IndefiniteGram
        when the Gram matrix is not PSD within 1e-6 relative (repair it
        upstream first).
    NoConvergence
        when the pair-update cap is hit; the best model rides in the
        exception's ``result``.
    """
    K = _as_matrix(gram)
    y = _check_binary_labels(y)
    if K.ndim != 2 or K.shape[0] != K.shape[1] or K.shape[0] != y.shape[0]:
        raise ShapeMismatch(f"gram {K.shape} incompatible with {y.shape[0]} labels")
    if C <= 0:
        raise ValueError(f"C must be > 0, got {C}")
    eigs = np.linalg.eigvalsh(K)
    spectral = max(abs(eigs[0]), abs(eigs[-1]))
    if eigs[0] < -1e-6 * max(spectral, 1.0):
        raise IndefiniteGram(
            f"min eigenvalue {eigs[0]:.3e} below -1e-6 * spectral norm {spectral:.3e}"
        )

    alpha, grad, updates, ok = _smo(K, y, float(C), tol, max_updates)
    # snap bound values so support detection is exact
    alpha[alpha < 1e-12 * C] = 0.0
    alpha[alpha > C * (1.0 - 1e-12)] = C
    b = _bias(alpha, y, grad, C)
    model = SvmModel(alpha, y, b, np.flatnonzero(alpha > 0.0), float(C), gram_ref)
    if not ok:
        raise NoConvergence(f"SMO hit the update cap ({updates})", result=model)
    return model


def decision_values(model: SvmModel, k_rows) -> np.ndarray:
    """f_i = sum_j alpha_j y_j k(i, j) + b for each row of kernel evaluations."""
    k_rows = np.atleast_2d(np.asarray(k_rows, dtype=np.float64))
    if k_rows.shape[1] != model.n_train:
        raise ShapeMismatch(
            f"kernel rows have {k_rows.shape[1]} columns, model has {model.n_train}"
        )
    return k_rows @ (model.alphas * model.labels) + model.bias


def kkt_violation(model: SvmModel, gram, y, C: float) -> float:
    """Maximum KKT residual of ``model`` on its training problem.

    alpha = 0 wants y*f >= 1, free alphas want y*f = 1, alpha = C wants
    y*f <= 1; the residual is how far each sample is from its own case.
    """
    K = _as_matrix(gram)
    y = np.asarray(y, dtype=np.float64).ravel()
    if K.shape[0] != K.shape[1] or K.shape[0] != y.shape[0] or y.shape[0] != model.n_train:
        raise ShapeMismatch("gram/labels/model sizes disagree")
    yf = y * decision_values(model, K)
    margin = 1e-9 * C
    at_zero = model.alphas <= margin
    at_c = model.alphas >= C - margin
    free = ~(at_zero | at_c)
    residual = np.zeros_like(yf)
    residual[at_zero] = np.maximum(0.0, 1.0 - yf[at_zero])
    residual[free] = np.abs(yf[free] - 1.0)
    residual[at_c] = np.maximum(0.0, yf[at_c] - 1.0)
    return float(residual.max())


@dataclass(frozen=True)
class OneVsAllModel:
    """One binary model per class, in sorted class order."""

    models: tuple[SvmModel, ...]
    classes: tuple[str, ...]

    def __post_init__(self):
        if len(self.models) != len(self.classes):
            raise ShapeMismatch("one model per class required")

    def decision_matrix(self, k_rows) -> np.ndarray:
        return np.column_stack([decision_values(m, k_rows) for m in self.models])

    def predict(self, k_rows) -> list[str]:
        scores = self.decision_matrix(k_rows)
        return [self.classes[k] for k in np.argmax(scores, axis=1)]

    def to_dicts(self) -> list[dict]:
        return [dict(m.to_dict(), **{"class": c})
                for m, c in zip(self.models, self.classes)]


def train_one_vs_all(gram, labels, C: float, tol: float = DEFAULT_TOL,
                     max_updates: int = DEFAULT_MAX_UPDATES,
                     gram_ref: str = "", classes=None) -> OneVsAllModel:
    """Train one-vs-all binary models, one per distinct label (sorted order).

    ``classes`` pins the class list explicitly (e.g. the full dataset's
    classes during cross-validation); a class absent from ``labels`` then
    raises SingleClass tagged with that class.
    """
    labels = [str(l) for l in labels]
    classes = tuple(sorted(set(labels))) if classes is None else tuple(classes)
    if len(classes) < 2:
        raise SingleClass(f"need >= 2 classes, got {classes}")
    models = []
    for cls in classes:
        y = np.where(np.asarray(labels) == cls, 1.0, -1.0)
        try:
            models.append(train_svm(gram, y, C, tol, max_updates, gram_ref))
        except NoConvergence as exc:
            raise NoConvergence(f"class {cls!r}: {exc}", result=exc.result) from exc
        except (SingleClass, IndefiniteGram, ShapeMismatch) as exc:
            raise type(exc)(f"class {cls!r}: {exc}") from exc
    return OneVsAllModel(tuple(models), classes)


# ---------------------------------------------------------------------------
# estimator facade

class PrecomputedKernelSVC(BaseEstimator, ClassifierMixin):
    """Binary SVC on a precomputed kernel; fit takes the train x train Gram,
    predict/decision_function take test x train kernel rows."""

    def __init__(self, C=1.0, tol=DEFAULT_TOL, max_updates=DEFAULT_MAX_UPDATES):
        self.C = C
        self.tol = tol
        self.max_updates = max_updates

    def fit(self, K, y):
        self.model_ = train_svm(K, y, self.C, self.tol, self.max_updates)
        self.classes_ = np.array([-1.0, 1.0])
        return self

    def decision_function(self, K_rows):
        return decision_values(self.model_, K_rows)

    def predict(self, K_rows):
        return np.where(self.decision_function(K_rows) >= 0.0, 1.0, -1.0)


class OneVsRestPrecomputedSVC(BaseEstimator, ClassifierMixin):
    """Multiclass wrapper over string labels, precomputed kernel in, argmax out."""

    def __init__(self, C=1.0, tol=DEFAULT_TOL, max_updates=DEFAULT_MAX_UPDATES):
        self.C = C
        self.tol = tol
        self.max_updates = max_updates

    def fit(self, K, labels):
        self.model_ = train_one_vs_all(K, labels, self.C, self.tol, self.max_updates)
        self.classes_ = np.array(self.model_.classes)
        return self

    def decision_function(self, K_rows):
        return self.model_.decision_matrix(K_rows)

    def predict(self, K_rows):
        return np.array(self.model_.predict(K_rows))
