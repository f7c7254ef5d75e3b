"""Positive semi-definite repair of indefinite similarity matrices.

The warping distance is not negative definite, so ``exp(-D/t)`` can have
negative eigenvalues.  ``nearest_correlation`` projects such a matrix onto
the correlation matrices (symmetric PSD, unit diagonal) by alternating
projections with Dykstra's correction, which converges to the nearest point
of the intersection in Frobenius norm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import (
    NegativeDistance,
    NoConvergence,
    NonPositiveT,
    NonZeroDiagonal,
    NotSymmetric,
)


@dataclass(frozen=True)
class RepairReport:
    iterations: int
    frobenius_change: float
    min_eig_before: float
    min_eig_after: float
    converged: bool

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "frobenius_change": self.frobenius_change,
            "min_eig_before": self.min_eig_before,
            "min_eig_after": self.min_eig_after,
            "converged": self.converged,
        }


def _require_symmetric(A: np.ndarray, what: str = "matrix") -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NotSymmetric(f"{what} must be square, got shape {A.shape}")
    scale = max(1.0, float(np.abs(A).max())) if A.size else 1.0
    if A.size and float(np.abs(A - A.T).max()) > 1e-12 * scale:
        raise NotSymmetric(f"{what} asymmetry exceeds 1e-12 relative tolerance")
    return A


def min_eigenvalue(A) -> float:
    """Smallest eigenvalue of a symmetric matrix (dense symmetric solve)."""
    A = _require_symmetric(A)
    return float(np.linalg.eigvalsh(A)[0])


def _psd_project(A: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(A)
    np.maximum(w, 0.0, out=w)
    return (V * w) @ V.T


def nearest_correlation(A, tol: float = 1e-7, max_iter: int = 200
                        ) -> tuple[np.ndarray, RepairReport]:
    """Nearest correlation matrix in Frobenius norm.

    Alternates the PSD-cone projection (eigendecompose, clamp negative
    eigenvalues) against the unit-diagonal projection, with Dykstra's
    correction applied to the cone step so the limit is the *nearest*
    point, not merely a feasible one.  Stops once the successive-iterate
    Frobenius change drops below ``tol`` and the smallest eigenvalue is
    above ``-tol``.

    Raises NoConvergence when ``max_iter`` is hit first; the partial
    result rides in the exception's ``result`` attribute.
    """
    if tol <= 0:
        raise ValueError(f"tol must be > 0, got {tol}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")
    A = _require_symmetric(A)
    A = 0.5 * (A + A.T)
    min_eig_before = float(np.linalg.eigvalsh(A)[0])

    Y = A.copy()
    correction = np.zeros_like(A)
    iterations = 0
    change = np.inf
    converged = False
    while iterations < max_iter:
        iterations += 1
        R = Y - correction
        X = _psd_project(R)
        correction = X - R
        Y_new = X.copy()
        np.fill_diagonal(Y_new, 1.0)
        change = float(np.linalg.norm(Y_new - Y))
        Y = Y_new
        if change < tol and float(np.linalg.eigvalsh(Y)[0]) >= -tol:
            converged = True
            break

    Y = 0.5 * (Y + Y.T)
    report = RepairReport(
        iterations=iterations,
        frobenius_change=float(np.linalg.norm(A - Y)),
        min_eig_before=min_eig_before,
        min_eig_after=float(np.linalg.eigvalsh(Y)[0]),
        converged=converged,
    )
    if not converged:
        raise NoConvergence(
            f"no convergence after {iterations} iterations (last change {change:.3e})",
            result=(Y, report),
        )
    return Y, report


def dtw_to_kernel(D, t: float, mode: str = "exp_then_repair", tol: float = 1e-7,
                  max_iter: int = 200, config=None, item_ids=None):
    """Turn a symmetric zero-diagonal distance matrix into a PSD Gram matrix.

    ``exp_then_repair`` (default) exponentiates entrywise to ``exp(-D/t)``
    (unit diagonal by construction) and projects that onto the nearest
    correlation matrix, so the result is PSD.  ``repair_then_exp`` follows
    the distance-substitution order literally: project the max-normalized
    distance matrix first, rescale, then exponentiate; since the
    exponential of a repaired matrix need not be PSD, a second repair pass
    runs whenever the result's smallest eigenvalue falls below ``-tol``.

    Returns ``(GramMatrix, RepairReport)``; the report describes the last
    repair pass that ran.
    """
    from .kernels import GramMatrix, KernelConfig

    D = _require_symmetric(D, "distance matrix")
    scale = max(1.0, float(np.abs(D).max())) if D.size else 1.0
    if float(np.abs(np.diag(D)).max()) > 1e-12 * scale:
        raise NonZeroDiagonal("distance matrix diagonal must be zero")
    if float(D.min()) < 0.0:
        raise NegativeDistance(f"negative distance entry {D.min()}")
    if t is None or t <= 0:
        raise NonPositiveT(f"t must be > 0, got {t}")
    if mode not in ("exp_then_repair", "repair_then_exp"):
        raise ValueError(f"unknown repair mode {mode!r}")
    if item_ids is None:
        item_ids = tuple(str(k) for k in range(D.shape[0]))
    if config is None:
        config = KernelConfig("pseudo_dtw", t=t)

    if mode == "exp_then_repair":
        K0 = np.exp(-D / t)
        K, report = nearest_correlation(K0, tol=tol, max_iter=max_iter)
    else:
        dmax = float(np.abs(D).max())
        if dmax == 0.0:
            K = np.exp(-D / t)
            report = RepairReport(0, 0.0, min_eigenvalue(K), min_eigenvalue(K), True)
        else:
            repaired, report = nearest_correlation(D / dmax, tol=tol, max_iter=max_iter)
            K = np.exp(-(repaired * dmax) / t)
            K = 0.5 * (K + K.T)
            if min_eigenvalue(K) < -tol:
                K, report = nearest_correlation(K, tol=tol, max_iter=max_iter)
    gram = GramMatrix(K, config, repaired=True, item_ids=item_ids)
    return gram, report
