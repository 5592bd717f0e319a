"""Kernel backend selection.

Hot numeric kernels (IIR filtering, radix-2 FFT, 1-D convolutions) exist in
two flavors: a numba-compiled version and a pure-numpy fallback.  Setting the
environment variable ``SSVEP_NO_NUMBA=1`` forces the fallback; otherwise numba
is used when importable.  The choice is made once at import time.
"""

import os

_FLAG = os.environ.get("SSVEP_NO_NUMBA", "").strip().lower()
_DISABLED = _FLAG in ("1", "true", "yes")

if _DISABLED:
    USING_NUMBA = False
else:
    try:
        import numba  # noqa: F401

        USING_NUMBA = True
    except ImportError:
        USING_NUMBA = False


def backend_name() -> str:
    return "numba" if USING_NUMBA else "numpy"
