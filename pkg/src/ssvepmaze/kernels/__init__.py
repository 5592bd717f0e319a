"""Hot numeric kernels with numba/numpy backend selection.

Exports: ``sosfilt_cascade``, ``fft_radix2``, ``conv1d_forward``,
``conv1d_backward``.  Backend is chosen once at import (see
:mod:`ssvepmaze.backend`).
"""

from ..backend import USING_NUMBA, backend_name

if USING_NUMBA:
    from ._numba import (
        conv1d_backward,
        conv1d_forward,
        fft_radix2,
        sosfilt_cascade,
    )
else:
    from ._numpy import (
        conv1d_backward,
        conv1d_forward,
        fft_radix2,
        sosfilt_cascade,
    )

__all__ = [
    "USING_NUMBA",
    "backend_name",
    "sosfilt_cascade",
    "fft_radix2",
    "conv1d_forward",
    "conv1d_backward",
]
