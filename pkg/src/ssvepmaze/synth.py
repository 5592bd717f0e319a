"""Synthetic SSVEP signal generator.

Each trial is a harmonic stack (amplitude base/h for harmonic h) plus a
50/50-by-power mix of white and 1/f-shaped Gaussian noise, scaled so the
measured in-band SNR hits the requested value exactly.  SNR is defined
against the 8-16 Hz analysis band: power in the strongest bin within +-1 of
the fundamental over the remaining band power.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from .eegio import EegRecording, TrialMarker

SNR_BAND = (8.0, 16.0)


@dataclass(frozen=True)
class SynthConfig:
    stim_freq_hz: float
    fs_hz: int = 256
    duration_s: float = 4.0
    n_harmonics: int = 2
    base_amp_uv: float = 10.0
    phase_rad: float = 0.0
    snr_db: float = 0.0  # math.inf disables noise; -math.inf disables signal
    seed: int = 0

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        if self.stim_freq_hz >= self.fs_hz / 2:
            raise ValueError("stimulus frequency above Nyquist")
        if self.base_amp_uv < 0:
            raise ValueError("base_amp_uv must be non-negative")


def _band_bin_sets(n: int, fs: float, f: float):
    """(fundamental candidate bins, remaining band bins) for an rfft of length n."""
    freqs = np.fft.rfftfreq(n, 1.0 / fs)
    band = np.nonzero((freqs >= SNR_BAND[0] - 1e-12) & (freqs <= SNR_BAND[1] + 1e-12))[0]
    if band.size == 0:
        raise ValueError("band empty at this length/rate")
    k0 = int(round(f * n / fs))
    fund = np.array([k for k in (k0 - 1, k0, k0 + 1) if 0 <= k <= n // 2])
    rest = np.setdiff1d(band, fund)
    return fund, rest


def measure_band_snr(x: np.ndarray, fs_hz: float, f: float) -> float:
    """In-band SNR estimate in dB; +inf when the band outside the tone is empty."""
    if not (SNR_BAND[0] <= f <= SNR_BAND[1]):
        raise ValueError(f"fundamental {f} Hz outside {SNR_BAND} analysis band")
    x = np.asarray(x, dtype=np.float64)
    X = np.fft.rfft(x)
    fund, rest = _band_bin_sets(x.shape[0], fs_hz, f)
    p_fund = float(np.max(np.abs(X[fund]) ** 2)) if fund.size else 0.0
    p_rest = float(np.sum(np.abs(X[rest]) ** 2))
    if p_rest <= 1e-20 * p_fund:
        # rest-of-band power at roundoff level: effectively a pure tone
        return math.inf if p_fund > 0 else -math.inf
    if p_fund <= 0.0:
        return -math.inf
    return 10.0 * math.log10(p_fund / p_rest)


def _clean_signal(cfg: SynthConfig, n: int) -> np.ndarray:
    t = np.arange(n) / cfg.fs_hz
    x = np.zeros(n)
    for h in range(1, cfg.n_harmonics + 1):
        x += (cfg.base_amp_uv / h) * np.sin(
            2 * np.pi * h * cfg.stim_freq_hz * t + cfg.phase_rad
        )
    return x


def _noise(rng: np.random.Generator, n: int, fs: float) -> np.ndarray:
    """White + 1/f Gaussian noise, equal in-band power, unit total in-band power."""
    white = rng.standard_normal(n)
    shaped = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / fs)
    gain = np.zeros_like(freqs)
    gain[1:] = 1.0 / np.sqrt(freqs[1:])
    pink = np.fft.irfft(shaped * gain, n)

    band = (freqs >= SNR_BAND[0] - 1e-12) & (freqs <= SNR_BAND[1] + 1e-12)

    def band_power(sig):
        return float(np.sum(np.abs(np.fft.rfft(sig)[band]) ** 2))

    pw, pp = band_power(white), band_power(pink)
    mix = white / math.sqrt(2 * pw) + pink / math.sqrt(2 * pp)
    return mix / math.sqrt(band_power(mix))


def generate_trial(cfg: SynthConfig) -> np.ndarray:
    """One synthetic trial; deterministic per (config, seed)."""
    n = int(round(cfg.duration_s * cfg.fs_hz))
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    if cfg.base_amp_uv == 0.0 or cfg.snr_db == -math.inf:
        if cfg.base_amp_uv == 0.0 and math.isfinite(cfg.snr_db):
            raise ValueError("unsatisfiable SNR: zero signal amplitude requested")
        noise = _noise(rng, n, cfg.fs_hz)
        return noise * (cfg.base_amp_uv if cfg.base_amp_uv > 0 else 1.0)
    clean = _clean_signal(cfg, n)
    if cfg.snr_db == math.inf:
        return clean
    target = cfg.snr_db

    # a rare noise draw can put the requested SNR below the measurement
    # floor (all the fundamental-bin power is noise); redraw deterministically
    for _attempt in range(20):
        noise = _noise(rng, n, cfg.fs_hz)

        def gap(log_c):
            return measure_band_snr(clean + math.exp(log_c) * noise,
                                    cfg.fs_hz, cfg.stim_freq_hz) - target

        lo, hi = -30.0, 20.0
        if gap(lo) < 0 or gap(hi) > 0:
            continue
        log_c = brentq(gap, lo, hi, xtol=1e-12)
        return clean + math.exp(log_c) * noise
    raise ValueError(f"unsatisfiable SNR {target} dB for this configuration")


def generate_dataset(
    class_freqs, trials_per_class: int, template: SynthConfig
) -> EegRecording:
    """Concatenate trials for every class with markers; per-trial random phase.

    Trial order interleaves classes (class 0 trial 0, class 1 trial 0, ...)
    and each trial gets a sub-seed derived from the template seed, so the
    marker table is independent of the noise realization.
    """
    n = int(round(template.duration_s * template.fs_hz))
    chunks = []
    trials = []
    base = np.random.Generator(np.random.PCG64(template.seed))
    for t in range(trials_per_class):
        for ci, f in enumerate(sorted(class_freqs)):
            phase = base.uniform(0, 2 * np.pi)
            sub_seed = int(base.integers(0, 2**63 - 1))
            cfg = replace(
                template, stim_freq_hz=f, phase_rad=phase, seed=sub_seed
            )
            chunks.append(generate_trial(cfg))
            trials.append(TrialMarker(len(chunks) * n - n, n, f))
    data = np.concatenate(chunks)
    return EegRecording(
        fs_hz=template.fs_hz,
        channel_labels=["Oz"],
        data=data[:, None],
        trials=trials,
    )
