"""Numba inner loops for the alignment dynamic programs.

All functions release the GIL so Gram construction can fan pairs out over
a thread pool; each call is a pure function of its inputs, which keeps
threaded results bitwise identical to serial ones.
"""

import math

import numpy as np
from numba import njit

_JIT = {"cache": True, "nogil": True}

SQ_EUCLIDEAN = 0
PHI_SIGMA = 1


@njit(**_JIT)
def _phi(x, y, i, j, code, sigma):
    # local divergence between frame i of x and frame j of y
    r = 0.0
    for k in range(x.shape[1]):
        diff = x[i, k] - y[j, k]
        r += diff * diff
    if code == SQ_EUCLIDEAN:
        return r
    z = r / (2.0 * sigma * sigma)
    # z + log(2 - exp(-z)), kept exact near z = 0
    return z + math.log1p(-math.expm1(-z))


@njit(**_JIT)
def dtw_cost_matrix(x, y, code, sigma, band):
    """Full O(nm) DTW cost matrix; band < 0 disables the Sakoe-Chiba band."""
    n = x.shape[0]
    m = y.shape[0]
    D = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            if band >= 0 and abs(i - j) > band:
                D[i, j] = np.inf
                continue
            c = _phi(x, y, i, j, code, sigma)
            if i == 0 and j == 0:
                D[i, j] = c
            elif i == 0:
                D[i, j] = D[i, j - 1] + c
            elif j == 0:
                D[i, j] = D[i - 1, j] + c
            else:
                best = D[i - 1, j - 1]
                if D[i - 1, j] < best:
                    best = D[i - 1, j]
                if D[i, j - 1] < best:
                    best = D[i, j - 1]
                D[i, j] = best + c
    return D


@njit(**_JIT)
def dtw_final(x, y, code, sigma, band):
    return dtw_cost_matrix(x, y, code, sigma, band)[x.shape[0] - 1, y.shape[0] - 1]


@njit(**_JIT)
def _lse3(a, b, c):
    m = a
    if b > m:
        m = b
    if c > m:
        m = c
    if m == -np.inf:
        return -np.inf
    return m + math.log(math.exp(a - m) + math.exp(b - m) + math.exp(c - m))


@njit(**_JIT)
def ga_log_final(x, y, code, sigma, band):
    """log of the all-alignment kernel sum, via log-sum-exp per DP cell."""
    n = x.shape[0]
    m = y.shape[0]
    L = np.full((n + 1, m + 1), -np.inf)
    L[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            if band >= 0 and abs(i - j) > band:
                continue
            lk = -_phi(x, y, i - 1, j - 1, code, sigma)
            L[i, j] = lk + _lse3(L[i - 1, j - 1], L[i - 1, j], L[i, j - 1])
    return L[n, m]


@njit(**_JIT)
def ga_linear_final(x, y, code, sigma, band):
    """Reference linear-space recurrence; underflows to 0 for long series."""
    n = x.shape[0]
    m = y.shape[0]
    M = np.zeros((n + 1, m + 1))
    M[0, 0] = 1.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            if band >= 0 and abs(i - j) > band:
                continue
            k = math.exp(-_phi(x, y, i - 1, j - 1, code, sigma))
            M[i, j] = k * (M[i - 1, j - 1] + M[i - 1, j] + M[i, j - 1])
    return M[n, m]
