"""Alignment kernels between multichannel time series.

Two families:

* ``pseudo_dtw`` -- the minimum-cost warping distance, turned into a kernel
  downstream by exponentiation plus nearest-correlation repair (the DTW
  distance itself is not negative definite, so the kernel needs repair).
* ``global_alignment`` -- the sum of ``exp(-cost)`` over *all* alignments,
  computed in log space so long series do not underflow.  Positive definite
  with the ``phi_sigma`` local divergence.

A brute-force alignment enumerator is included as the test oracle for both
dynamic programs.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import _dp
from .core import LabeledDataset, TimeSeries, atomic_write_text, write_json_atomic
from .exceptions import (
    DimensionMismatch,
    EmptyDataset,
    NonPositiveSigma,
    NonPositiveT,
    NotSymmetric,
    TooLarge,
)

DEFAULT_ENUMERATION_CAP = 1_000_000

_DIV_CODES = {"sq_euclidean": _dp.SQ_EUCLIDEAN, "phi_sigma": _dp.PHI_SIGMA}


# ---------------------------------------------------------------------------
# local divergences

def sq_euclidean(u, v) -> float:
    """Squared Euclidean distance between two frames."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise DimensionMismatch(f"frame dims {u.shape[0]} vs {v.shape[0]}")
    diff = u - v
    return float(diff @ diff)


def phi_sigma(u, v, sigma: float) -> float:
    """Bandwidth-sigma local divergence r/(2*sigma^2) + log(2 - exp(-r/(2*sigma^2))).

    Evaluated as z + log1p(-expm1(-z)) so the value is exactly 0 at r = 0
    and does not lose precision for small z.
    """
    if sigma is None or sigma <= 0:
        raise NonPositiveSigma(f"sigma must be > 0, got {sigma}")
    r = sq_euclidean(u, v)
    z = r / (2.0 * sigma * sigma)
    return z + math.log1p(-math.expm1(-z))


# ---------------------------------------------------------------------------
# alignments

@dataclass(frozen=True)
class AlignmentPath:
    """A monotone index pairing (1-based) with unit steps (0,1), (1,0), (1,1)."""

    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        pairs = tuple((int(a), int(b)) for a, b in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        if not pairs or pairs[0] != (1, 1):
            raise ValueError("alignment must start at (1, 1)")
        for (a0, b0), (a1, b1) in zip(pairs, pairs[1:]):
            if (a1 - a0, b1 - b0) not in ((0, 1), (1, 0), (1, 1)):
                raise ValueError(f"illegal step ({a0},{b0}) -> ({a1},{b1})")

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def end(self) -> tuple[int, int]:
        return self.pairs[-1]


def count_alignments(n: int, m: int) -> int:
    """Number of alignments between series of lengths n and m (exact integer).

    Satisfies c(n,m) = c(n-1,m) + c(n,m-1) + c(n-1,m-1) with c(1,1) = 1.
    """
    if n < 1 or m < 1:
        raise ValueError("lengths must be >= 1")
    row = [1] * m
    for _ in range(1, n):
        new = [1] * m
        for j in range(1, m):
            new[j] = new[j - 1] + row[j] + row[j - 1]
        row = new
    return row[m - 1]


def enumerate_alignments(n: int, m: int, cap: int = DEFAULT_ENUMERATION_CAP):
    """Every alignment between lengths n and m, exactly once (test oracle).

    Raises TooLarge when the exact path count exceeds ``cap``.
    """
    total = count_alignments(n, m)
    if total > cap:
        raise TooLarge(f"|A({n},{m})| = {total} exceeds cap {cap}")
    out = []
    stack = [(1, 1)]

    def walk(i, j):
        if i == n and j == m:
            out.append(AlignmentPath(tuple(stack)))
            return
        for di, dj in ((1, 1), (1, 0), (0, 1)):
            ni, nj = i + di, j + dj
            if ni <= n and nj <= m:
                stack.append((ni, nj))
                walk(ni, nj)
                stack.pop()

    walk(1, 1)
    return out


# ---------------------------------------------------------------------------
# dynamic programs

def _series_values(x) -> np.ndarray:
    if isinstance(x, TimeSeries):
        return x.values
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    return np.ascontiguousarray(arr)


def _check_pair(xv, yv, band):
    if xv.shape[1] != yv.shape[1]:
        raise DimensionMismatch(f"channel dims {xv.shape[1]} vs {yv.shape[1]}")
    if band is not None:
        band = int(band)
        if band < 0:
            raise ValueError("band must be >= 0")
        if band < abs(xv.shape[0] - yv.shape[0]):
            raise ValueError(
                f"band {band} narrower than length gap {abs(xv.shape[0] - yv.shape[0])}"
            )
        return band
    return -1


def _div_code(divergence: str, sigma) -> tuple[int, float]:
    if divergence not in _DIV_CODES:
        raise ValueError(f"unknown divergence {divergence!r}")
    if divergence == "phi_sigma":
        if sigma is None or sigma <= 0:
            raise NonPositiveSigma(f"phi_sigma needs sigma > 0, got {sigma}")
        return _DIV_CODES[divergence], float(sigma)
    return _DIV_CODES[divergence], 1.0


def dtw_distance(x, y, divergence: str = "sq_euclidean", sigma: float | None = None,
                 band: int | None = None) -> float:
    """Minimum summed divergence over all alignments (O(nm) dynamic program)."""
    xv, yv = _series_values(x), _series_values(y)
    b = _check_pair(xv, yv, band)
    code, sig = _div_code(divergence, sigma)
    return float(_dp.dtw_final(xv, yv, code, sig, b))


def dtw_path(x, y, divergence: str = "sq_euclidean", sigma: float | None = None,
             band: int | None = None) -> tuple[float, AlignmentPath]:
    """DTW cost plus one optimal alignment.

    Ties in the backtrack are broken diagonal, then vertical, then
    horizontal, so the returned path is deterministic.
    """
    xv, yv = _series_values(x), _series_values(y)
    b = _check_pair(xv, yv, band)
    code, sig = _div_code(divergence, sigma)
    D = _dp.dtw_cost_matrix(xv, yv, code, sig, b)
    i, j = xv.shape[0] - 1, yv.shape[0] - 1
    rev = [(i + 1, j + 1)]
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            diag, vert, horz = D[i - 1, j - 1], D[i - 1, j], D[i, j - 1]
            best = min(diag, vert, horz)
            if diag == best:
                i, j = i - 1, j - 1
            elif vert == best:
                i -= 1
            else:
                j -= 1
        rev.append((i + 1, j + 1))
    return float(D[-1, -1]), AlignmentPath(tuple(reversed(rev)))


class GaKernelValue(NamedTuple):
    value: float
    log_value: float


def ga_kernel(x, y, sigma: float, divergence: str = "phi_sigma",
              band: int | None = None) -> GaKernelValue:
    """Sum over all alignments of the product of local similarities.

    The recurrence runs in log space (log-sum-exp per cell), so
    ``log_value`` stays finite even when ``value`` underflows to 0.
    """
    if sigma is None or sigma <= 0:
        raise NonPositiveSigma(f"sigma must be > 0, got {sigma}")
    xv, yv = _series_values(x), _series_values(y)
    b = _check_pair(xv, yv, band)
    code, sig = _div_code(divergence, sigma)
    log_value = float(_dp.ga_log_final(xv, yv, code, sig, b))
    return GaKernelValue(math.exp(log_value) if log_value > -745.0 else 0.0, log_value)


def ga_kernel_linear(x, y, sigma: float, divergence: str = "phi_sigma",
                     band: int | None = None) -> float:
    """Linear-space reference route for the all-alignment sum.

    Underflows to 0 for long or distant series; use :func:`ga_kernel` for
    anything but diagnostics.
    """
    if sigma is None or sigma <= 0:
        raise NonPositiveSigma(f"sigma must be > 0, got {sigma}")
    xv, yv = _series_values(x), _series_values(y)
    b = _check_pair(xv, yv, band)
    code, sig = _div_code(divergence, sigma)
    return float(_dp.ga_linear_final(xv, yv, code, sig, b))


# ---------------------------------------------------------------------------
# Gram matrices

@dataclass(frozen=True)
class KernelConfig:
    """Which kernel family to run and with what parameters.

    ``pseudo_dtw`` needs the temperature ``t``; ``global_alignment`` needs
    the bandwidth ``sigma``.  The local divergence defaults to the family's
    usual choice but either may be paired with either family.
    """

    family: str
    t: float | None = None
    sigma: float | None = None
    divergence: str | None = None
    band: int | None = None

    def __post_init__(self):
        if self.family not in ("pseudo_dtw", "global_alignment"):
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.divergence is None:
            default = "sq_euclidean" if self.family == "pseudo_dtw" else "phi_sigma"
            object.__setattr__(self, "divergence", default)
        if self.divergence not in _DIV_CODES:
            raise ValueError(f"unknown divergence {self.divergence!r}")
        if self.family == "pseudo_dtw":
            if self.t is None or self.t <= 0:
                raise NonPositiveT(f"pseudo_dtw needs t > 0, got {self.t}")
        else:
            if self.sigma is None or self.sigma <= 0:
                raise NonPositiveSigma(f"global_alignment needs sigma > 0, got {self.sigma}")
        if self.divergence == "phi_sigma" and (self.sigma is None or self.sigma <= 0):
            raise NonPositiveSigma(f"phi_sigma divergence needs sigma > 0, got {self.sigma}")

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "t": self.t,
            "sigma": self.sigma,
            "divergence": self.divergence,
            "band": self.band,
        }


@dataclass(frozen=True)
class GramMatrix:
    """K x K kernel evaluations plus provenance."""

    values: np.ndarray
    config: KernelConfig
    repaired: bool
    item_ids: tuple[str, ...]

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "item_ids", tuple(self.item_ids))
        if vals.ndim != 2 or vals.shape[0] != vals.shape[1]:
            raise NotSymmetric(f"expected a square matrix, got shape {vals.shape}")
        if len(self.item_ids) != vals.shape[0]:
            raise ValueError(
                f"{len(self.item_ids)} item ids for a {vals.shape[0]}-row matrix"
            )
        scale = np.abs(vals).max() if vals.size else 0.0
        if vals.size and np.abs(vals - vals.T).max() > 1e-12 * max(scale, 1.0):
            raise NotSymmetric("matrix asymmetry exceeds 1e-12 relative tolerance")
        vals.flags.writeable = False

    @property
    def size(self) -> int:
        return self.values.shape[0]


class GramResult(NamedTuple):
    gram: GramMatrix
    distances: np.ndarray | None   # raw warping distances (pseudo_dtw only)
    repair: object | None          # RepairReport (pseudo_dtw only)


def _pair_fn(cfg: KernelConfig):
    code = _DIV_CODES[cfg.divergence]
    sig = float(cfg.sigma) if cfg.sigma is not None else 1.0
    band = -1 if cfg.band is None else int(cfg.band)
    if cfg.family == "global_alignment":
        def fn(xv, yv):
            lv = _dp.ga_log_final(xv, yv, code, sig, band)
            return math.exp(lv) if lv > -745.0 else 0.0
    else:
        def fn(xv, yv):
            return _dp.dtw_final(xv, yv, code, sig, band)
    return fn


def _run_cells(cells, fn, workers: int):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=int(workers)) as pool:
            list(pool.map(fn, cells))
    else:
        for c in cells:
            fn(c)


def pairwise_symmetric(series, fn, workers: int = 1) -> np.ndarray:
    """Evaluate fn on the upper triangle and mirror; order-independent."""
    vals = [_series_values(s) for s in series]
    k = len(vals)
    out = np.zeros((k, k))
    cells = [(i, j) for i in range(k) for j in range(i, k)]

    def run(cell):
        i, j = cell
        out[i, j] = fn(vals[i], vals[j])

    _run_cells(cells, run, workers)
    iu = np.triu_indices(k, 1)
    out[(iu[1], iu[0])] = out[iu]
    return out


def pairwise_rect(series_a, series_b, fn, workers: int = 1) -> np.ndarray:
    vals_a = [_series_values(s) for s in series_a]
    vals_b = [_series_values(s) for s in series_b]
    out = np.zeros((len(vals_a), len(vals_b)))
    cells = [(i, j) for i in range(len(vals_a)) for j in range(len(vals_b))]

    def run(cell):
        i, j = cell
        out[i, j] = fn(vals_a[i], vals_b[j])

    _run_cells(cells, run, workers)
    return out


def dataset_item_ids(ds: LabeledDataset) -> tuple[str, ...]:
    return tuple(f"{k:03d}:{it.label}:{it.subject}" for k, it in enumerate(ds.items))


def gram_matrix(ds: LabeledDataset, cfg: KernelConfig, workers: int = 1,
                repair_mode: str = "exp_then_repair", repair_tol: float = 1e-7,
                repair_max_iter: int = 200) -> GramResult:
    """Build the dataset Gram matrix for ``cfg``.

    ``global_alignment`` entries are kernel values directly.  ``pseudo_dtw``
    first builds the symmetric DTW distance matrix (returned as
    ``distances``), then exponentiates and PSD-repairs it via the psdrepair
    module; the repair report rides along in the result.
    """
    if len(ds) == 0:
        raise EmptyDataset("cannot build a Gram matrix from an empty dataset")
    ids = dataset_item_ids(ds)
    fn = _pair_fn(cfg)
    series = ds.series_list()
    if cfg.family == "global_alignment":
        vals = pairwise_symmetric(series, fn, workers)
        return GramResult(GramMatrix(vals, cfg, False, ids), None, None)
    distances = pairwise_symmetric(series, fn, workers)
    from .psdrepair import dtw_to_kernel

    gram, report = dtw_to_kernel(distances, cfg.t, mode=repair_mode, tol=repair_tol,
                                 max_iter=repair_max_iter, config=cfg, item_ids=ids)
    return GramResult(gram, distances, report)


def kernel_rows(series_test, series_train, cfg: KernelConfig, workers: int = 1) -> np.ndarray:
    """Kernel evaluations between new series (rows) and training series (columns).

    For ``pseudo_dtw`` the rows are ``exp(-D/t)`` without repair; matrix-level
    repair only applies to the symmetric training block.
    """
    fn = _pair_fn(cfg)
    rows = pairwise_rect(series_test, series_train, fn, workers)
    if cfg.family == "pseudo_dtw":
        rows = np.exp(-rows / cfg.t)
    return rows


def export_gram(gram: GramMatrix, csv_path, sidecar_path, repair=None,
                series_lengths=None) -> None:
    """Write a Gram matrix as square row-major CSV plus a JSON sidecar.

    ``series_lengths`` records the per-item frame counts (no length
    normalization is applied anywhere, so readers can judge comparability).
    """
    lines = [",".join(repr(float(v)) for v in row) for row in gram.values]
    atomic_write_text(csv_path, "\n".join(lines) + "\n")
    sidecar = {
        "config": gram.config.to_dict(),
        "repaired": gram.repaired,
        "item_ids": list(gram.item_ids),
        "size": gram.size,
    }
    if series_lengths is not None:
        sidecar["series_lengths"] = [int(n) for n in series_lengths]
    if repair is not None:
        sidecar["repair_report"] = repair.to_dict()
    write_json_atomic(sidecar_path, sidecar)


# ---------------------------------------------------------------------------
# estimator facade

class GlobalAlignmentKernel(BaseEstimator, TransformerMixin):
    """Precomputed-kernel transformer: fit stores the training series, transform
    returns kernel rows against them (feed straight into a precomputed SVM)."""

    def __init__(self, sigma=1.0, divergence="phi_sigma", band=None, workers=1):
        self.sigma = sigma
        self.divergence = divergence
        self.band = band
        self.workers = workers

    def _config(self) -> KernelConfig:
        return KernelConfig("global_alignment", sigma=self.sigma,
                            divergence=self.divergence, band=self.band)

    def fit(self, X, y=None):
        self.train_series_ = [_series_values(x) for x in X]
        return self

    def transform(self, X):
        return kernel_rows(X, self.train_series_, self._config(), self.workers)

    def fit_transform(self, X, y=None, **fit_params):
        self.fit(X)
        return pairwise_symmetric(self.train_series_, _pair_fn(self._config()),
                                  self.workers)


class PseudoDtwKernel(BaseEstimator, TransformerMixin):
    """DTW-distance kernel transformer.

    ``fit_transform`` returns the repaired train x train kernel (and stores
    the repair report); ``transform`` returns raw exp(-D/t) rows against the
    training series.
    """

    def __init__(self, t=1.0, divergence="sq_euclidean", sigma=None, band=None,
                 workers=1, repair_mode="exp_then_repair", repair_tol=1e-7,
                 repair_max_iter=200):
        self.t = t
        self.divergence = divergence
        self.sigma = sigma
        self.band = band
        self.workers = workers
        self.repair_mode = repair_mode
        self.repair_tol = repair_tol
        self.repair_max_iter = repair_max_iter

    def _config(self) -> KernelConfig:
        return KernelConfig("pseudo_dtw", t=self.t, sigma=self.sigma,
                            divergence=self.divergence, band=self.band)

    def fit(self, X, y=None):
        self.train_series_ = [_series_values(x) for x in X]
        return self

    def transform(self, X):
        return kernel_rows(X, self.train_series_, self._config(), self.workers)

    def fit_transform(self, X, y=None, **fit_params):
        self.fit(X)
        distances = pairwise_symmetric(self.train_series_, _pair_fn(self._config()),
                                       self.workers)
        from .psdrepair import dtw_to_kernel

        ids = tuple(str(k) for k in range(len(self.train_series_)))
        gram, report = dtw_to_kernel(distances, self.t, mode=self.repair_mode,
                                     tol=self.repair_tol, max_iter=self.repair_max_iter,
                                     config=self._config(), item_ids=ids)
        self.repair_report_ = report
        return np.array(gram.values)
