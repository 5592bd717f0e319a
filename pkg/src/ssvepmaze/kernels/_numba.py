"""Numba-compiled kernel implementations (default path).

Contracts match ``_numpy.py``.  All loops are serial so results are
deterministic run to run.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def sosfilt_cascade(sections, x):
    y = x.astype(np.float64)
    n = y.shape[0]
    for s in range(sections.shape[0]):
        b0 = sections[s, 0]
        b1 = sections[s, 1]
        b2 = sections[s, 2]
        a1 = sections[s, 3]
        a2 = sections[s, 4]
        z1 = 0.0
        z2 = 0.0
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            xi = y[i]
            yi = b0 * xi + z1
            z1 = b1 * xi - a1 * yi + z2
            z2 = b2 * xi - a2 * yi
            out[i] = yi
        y = out
    return y


@njit(cache=True)
def fft_radix2(x):
    n = x.shape[0]
    X = np.empty(n, dtype=np.complex128)
    # bit-reversal permutation
    bits = 0
    m = n
    while m > 1:
        bits += 1
        m >>= 1
    for i in range(n):
        r = 0
        for b in range(bits):
            r |= ((i >> b) & 1) << (bits - 1 - b)
        X[r] = x[i]
    if n == 1:
        X[0] = x[0]
        return X
    half = 1
    while half < n:
        step = 2 * half
        ang = -np.pi / half
        for start in range(0, n, step):
            for k in range(half):
                tw = np.exp(1j * ang * k)
                even = X[start + k]
                odd = X[start + k + half] * tw
                X[start + k] = even + odd
                X[start + k + half] = even - odd
        half = step
    return X


@njit(cache=True)
def conv1d_forward(x, w, b):
    B, C, L = x.shape
    F, _, K = w.shape
    Lo = L - K + 1
    y = np.empty((B, F, Lo), dtype=np.float64)
    for bi in range(B):
        for f in range(F):
            for i in range(Lo):
                acc = b[f]
                for c in range(C):
                    for k in range(K):
                        acc += w[f, c, k] * x[bi, c, i + k]
                y[bi, f, i] = acc
    return y


@njit(cache=True)
def conv1d_backward(x, w, dy):
    B, C, L = x.shape
    F, _, K = w.shape
    Lo = L - K + 1
    dx = np.zeros((B, C, L), dtype=np.float64)
    dw = np.zeros((F, C, K), dtype=np.float64)
    db = np.zeros(F, dtype=np.float64)
    for bi in range(B):
        for f in range(F):
            for i in range(Lo):
                g = dy[bi, f, i]
                db[f] += g
                for c in range(C):
                    for k in range(K):
                        dw[f, c, k] += g * x[bi, c, i + k]
                        dx[bi, c, i + k] += g * w[f, c, k]
    return dx, dw, db
