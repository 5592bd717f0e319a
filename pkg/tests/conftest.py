import numpy as np
import pytest


def naive_dft(x, n_fft):
    """Brute-force O(n^2) DFT oracle on the zero-padded input."""
    buf = np.zeros(n_fft, dtype=np.complex128)
    buf[: len(x)] = x
    k = np.arange(n_fft)
    return np.exp(-2j * np.pi * np.outer(k, k) / n_fft) @ buf


def sos_freq_response(sections, fs_hz, f_hz):
    """Direct transfer-function evaluation of a biquad cascade at f_hz."""
    z = np.exp(2j * np.pi * f_hz / fs_hz)
    h = 1.0 + 0.0j
    for b0, b1, b2, a1, a2 in sections:
        h *= (b0 + b1 / z + b2 / z**2) / (1 + a1 / z + a2 / z**2)
    return h


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
