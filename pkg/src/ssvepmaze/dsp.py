"""Pre-processing and feature extraction.

Pipeline: causal Butterworth band-pass (cascaded biquads), overlapping
windows, zero-padded radix-2 FFT magnitude, band-bin selection, per-window
min-max normalization to [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import butter

from . import kernels
from .eegio import EegRecording, LabeledExample, TrialMarker, label_of_frequency

DEFAULT_BAND = (8.0, 16.0)
DEFAULT_NFFT = 1024
DEFAULT_OFFSET = 16


@dataclass(frozen=True)
class BandpassFilter:
    fs_hz: int
    f_lo: float
    f_hi: float
    sections: np.ndarray  # [n_sections, 5] rows (b0, b1, b2, a1, a2), a0 = 1


@dataclass(frozen=True)
class WindowSpec:
    window_len: int
    offset: int

    def __post_init__(self):
        if self.window_len <= 0:
            raise ValueError("window_len must be positive")
        if not 0 < self.offset <= self.window_len:
            raise ValueError("offset must be in (0, window_len]")


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray  # in [0, 1]
    bin_freqs_hz: np.ndarray
    fs_hz: int
    n_fft: int


def design_bandpass(fs_hz: int, f_lo: float, f_hi: float, order: int) -> BandpassFilter:
    """Butterworth band-pass of the given overall order as biquad cascade.

    Designed from the analog prototype by bilinear transform with frequency
    pre-warping (scipy's butter); order 4 yields two second-order sections.
    """
    if order not in (2, 4, 8):
        raise ValueError(f"order must be one of 2, 4, 8; got {order}")
    if not (0 < f_lo < f_hi < fs_hz / 2):
        raise ValueError(
            f"invalid band edges: need 0 < f_lo < f_hi < fs/2, "
            f"got f_lo={f_lo}, f_hi={f_hi}, fs={fs_hz}"
        )
    sos = butter(order // 2, [f_lo, f_hi], btype="bandpass", fs=fs_hz, output="sos")
    sections = np.empty((sos.shape[0], 5), dtype=np.float64)
    sections[:, 0:3] = sos[:, 0:3] / sos[:, 3:4]
    sections[:, 3:5] = sos[:, 4:6] / sos[:, 3:4]
    for b0, b1, b2, a1, a2 in sections:
        poles = np.roots([1.0, a1, a2])
        if np.any(np.abs(poles) >= 1.0):
            raise ValueError("unstable section in designed filter")
    return BandpassFilter(fs_hz=fs_hz, f_lo=f_lo, f_hi=f_hi, sections=sections)


def filter_apply(filt: BandpassFilter, x: np.ndarray) -> np.ndarray:
    """Causal direct-form-II-transposed cascade, zero initial state."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input to filter")
    return kernels.sosfilt_cascade(filt.sections, x)


def segment_windows(x: np.ndarray, spec: WindowSpec) -> list[np.ndarray]:
    """Overlapping windows starting at 0, offset, 2*offset, ..."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] < spec.window_len:
        raise ValueError(
            f"signal length {x.shape[0]} shorter than window {spec.window_len}"
        )
    count = (x.shape[0] - spec.window_len) // spec.offset + 1
    return [
        x[i * spec.offset : i * spec.offset + spec.window_len].copy()
        for i in range(count)
    ]


def fft_complex(x: np.ndarray, n_fft: int) -> np.ndarray:
    """Zero-padded radix-2 FFT, full complex spectrum of length n_fft."""
    if n_fft <= 0 or n_fft & (n_fft - 1):
        raise ValueError(f"n_fft must be a power of two, got {n_fft}")
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] > n_fft:
        raise ValueError(f"window length {x.shape[0]} exceeds n_fft {n_fft}")
    buf = np.zeros(n_fft, dtype=np.complex128)
    buf[: x.shape[0]] = x
    return kernels.fft_radix2(buf)


def fft_magnitude(window: np.ndarray, n_fft: int) -> np.ndarray:
    """|X[k]| for k = 0 .. n_fft/2 of the zero-padded window."""
    return np.abs(fft_complex(window, n_fft))[: n_fft // 2 + 1]


def band_bins(fs_hz: int, n_fft: int, f_lo: float, f_hi: float) -> np.ndarray:
    """Bin indices k with f_lo <= k*fs/n_fft <= f_hi (inclusive both ends)."""
    k = np.arange(n_fft // 2 + 1)
    freqs = k * fs_hz / n_fft
    mask = (freqs >= f_lo - 1e-12) & (freqs <= f_hi + 1e-12)
    return k[mask]


def extract_features(
    mag: np.ndarray, fs_hz: int, n_fft: int, f_lo: float, f_hi: float
) -> FeatureVector:
    """Band-slice magnitudes, min-max normalized to [0, 1].

    A spectrally flat slice (max == min) maps to all zeros.
    """
    if f_hi > fs_hz / 2:
        raise ValueError("band exceeds Nyquist")
    bins = band_bins(fs_hz, n_fft, f_lo, f_hi)
    if bins.size == 0:
        raise ValueError("empty bin set for requested band")
    sel = np.asarray(mag, dtype=np.float64)[bins]
    lo, hi = sel.min(), sel.max()
    if hi > lo:
        values = (sel - lo) / (hi - lo)
    else:
        values = np.zeros_like(sel)
    return FeatureVector(
        values=values,
        bin_freqs_hz=bins * fs_hz / n_fft,
        fs_hz=fs_hz,
        n_fft=n_fft,
    )


def preprocess_trial(
    rec: EegRecording,
    channel: str,
    trial: TrialMarker,
    spec: WindowSpec,
    filt: BandpassFilter,
    n_fft: int,
    band: tuple[float, float],
    class_freqs,
) -> list[LabeledExample]:
    """Filter one trial segment, window it, and emit labeled feature vectors."""
    x = rec.channel(channel)[
        trial.onset_sample : trial.onset_sample + trial.length_samples
    ]
    y = filter_apply(filt, x)
    label = label_of_frequency(trial.stim_freq_hz, class_freqs)
    out = []
    for w in segment_windows(y, spec):
        mag = fft_magnitude(w, n_fft)
        fv = extract_features(mag, rec.fs_hz, n_fft, band[0], band[1])
        out.append(LabeledExample(features=fv, class_index=label))
    return out


def preprocess_recording(
    rec: EegRecording,
    channel: str,
    spec: WindowSpec,
    filt: BandpassFilter,
    n_fft: int,
    band: tuple[float, float],
    class_freqs,
) -> list[LabeledExample]:
    """Run preprocess_trial over every trial marker, in marker order."""
    out: list[LabeledExample] = []
    for trial in rec.trials:
        out.extend(
            preprocess_trial(rec, channel, trial, spec, filt, n_fft, band, class_freqs)
        )
    return out


def format_sections(filt: BandpassFilter) -> str:
    """Coefficients as text, 17 significant digits, one section per line."""
    lines = []
    for b0, b1, b2, a1, a2 in filt.sections:
        lines.append(
            " ".join(f"{v:.17g}" for v in (b0, b1, b2, a1, a2))
        )
    return "\n".join(lines)
