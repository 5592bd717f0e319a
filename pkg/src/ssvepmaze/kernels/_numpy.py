"""Pure-numpy kernel implementations (fallback path).

Same contracts as the numba kernels in ``_numba.py``.  The IIR cascade is
delegated to scipy's direct-form-II-transposed sosfilt (bit-identical math to
the hand-rolled loop, without the per-sample Python overhead).
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import sosfilt as _scipy_sosfilt


def sosfilt_cascade(sections: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Apply a cascade of biquads (b0,b1,b2,a1,a2 rows), zero initial state."""
    sos = np.empty((sections.shape[0], 6), dtype=np.float64)
    sos[:, 0:3] = sections[:, 0:3]
    sos[:, 3] = 1.0
    sos[:, 4:6] = sections[:, 3:5]
    return _scipy_sosfilt(sos, np.asarray(x, dtype=np.float64))


def _bit_reversal_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n, dtype=np.int64)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft_radix2(x: np.ndarray) -> np.ndarray:
    """Iterative radix-2 decimation-in-time FFT; len(x) must be a power of 2."""
    n = x.shape[0]
    if n == 1:
        return x.astype(np.complex128)
    X = np.asarray(x, dtype=np.complex128)[_bit_reversal_indices(n)]
    half = 1
    while half < n:
        tw = np.exp(-1j * np.pi * np.arange(half) / half)
        X = X.reshape(-1, 2 * half)
        even = X[:, :half]
        odd = X[:, half:] * tw
        X = np.concatenate([even + odd, even - odd], axis=1).reshape(-1)
        half *= 2
    return X


def conv1d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Valid cross-correlation: x [B,C,L], w [F,C,K], b [F] -> [B,F,L-K+1]."""
    v = sliding_window_view(x, w.shape[2], axis=2)  # [B,C,Lo,K]
    return np.einsum("bclk,fck->bfl", v, w, optimize=True) + b[None, :, None]


def conv1d_backward(x: np.ndarray, w: np.ndarray, dy: np.ndarray):
    """Gradients of conv1d_forward w.r.t. (x, w, b) given upstream dy."""
    k = w.shape[2]
    v = sliding_window_view(x, k, axis=2)
    dw = np.einsum("bclk,bfl->fck", v, dy, optimize=True)
    db = dy.sum(axis=(0, 2))
    dy_pad = np.pad(dy, ((0, 0), (0, 0), (k - 1, k - 1)))
    vy = sliding_window_view(dy_pad, k, axis=2)  # [B,F,L,K]
    w_flip = w[:, :, ::-1]
    dx = np.einsum("bflk,fck->bcl", vy, w_flip, optimize=True)
    return dx, dw, db
