"""Spectral and statistical characterization of simulation logs.

Welch power spectral densities normalized to the input variance (so signals
of different units share one axis), log-log slope fits, spectral flatness,
and moment-based Gaussianity summaries.  All estimators are pure functions.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal, stats

from .errors import ModelError


@dataclass(frozen=True)
class Spectrum:
    """One-sided PSD, DC bin excluded, normalized to unit input variance.

    With this normalization sum(s_norm) * df integrates to ~1 over the
    resolvable band for any input.
    """

    f_hz: np.ndarray
    s_norm: np.ndarray  # 1/Hz
    fs_hz: float
    segment_length: int
    overlap: float

    @property
    def df(self) -> float:
        return self.fs_hz / self.segment_length

    def band(self, f_lo: float, f_hi: float):
        mask = (self.f_hz >= f_lo) & (self.f_hz <= f_hi)
        return self.f_hz[mask], self.s_norm[mask]


def welch_psd(series, fs_hz: float, segment_length: int, overlap: float = 0.5) -> Spectrum:
    """Hann-windowed averaged periodogram, unit-variance normalized.

    Parameters
    ----------
    series : array_like
        Uniformly sampled record, length >= 2 * segment_length.
    fs_hz : float
        Sampling frequency.
    segment_length : int
        Samples per segment (sets the frequency resolution fs / nperseg).
    overlap : float
        Fractional segment overlap in [0, 1).

    The mean is removed per segment, the DC bin is dropped, and the PSD is
    divided by the series variance.  Constant series are rejected.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ValueError("series must be one-dimensional")
    if segment_length < 8:
        raise ValueError("segment_length must be >= 8")
    if not (0.0 <= overlap < 1.0):
        raise ValueError("overlap must be in [0, 1)")
    if x.size < 2 * segment_length:
        raise ModelError(
            f"series too short: {x.size} samples < 2 * segment_length = {2 * segment_length}"
        )
    variance = float(np.var(x))
    if variance == 0.0:
        raise ModelError("constant series has no spectrum to normalize")
    f, pxx = signal.welch(
        x,
        fs=fs_hz,
        window="hann",
        nperseg=segment_length,
        noverlap=int(round(overlap * segment_length)),
        detrend="constant",
        scaling="density",
    )
    return Spectrum(
        f_hz=f[1:],
        s_norm=pxx[1:] / variance,
        fs_hz=fs_hz,
        segment_length=segment_length,
        overlap=overlap,
    )


def loglog_slope(spec: Spectrum, f_lo: float, f_hi: float) -> float:
    """Least-squares slope of log10(S) vs log10(f) inside [f_lo, f_hi]."""
    f, s = spec.band(f_lo, f_hi)
    if f.size < 6:
        raise ModelError(f"need >= 6 bins in [{f_lo:g}, {f_hi:g}] Hz, got {f.size}")
    if np.any(s <= 0.0):
        raise ModelError("PSD values must be positive for a log-log fit")
    slope, _ = np.polyfit(np.log10(f), np.log10(s), 1)
    return float(slope)


def spectral_flatness(spec: Spectrum, f_lo: float, f_hi: float) -> float:
    """Geometric over arithmetic mean of the PSD in a band; 1 for white."""
    _, s = spec.band(f_lo, f_hi)
    if s.size == 0:
        raise ModelError(f"no PSD bins in [{f_lo:g}, {f_hi:g}] Hz")
    if np.any(s <= 0.0):
        raise ModelError("PSD values must be positive for spectral flatness")
    return float(math.exp(np.mean(np.log(s))) / np.mean(s))


@dataclass(frozen=True)
class StatSummary:
    mean: float
    variance: float
    skewness: float
    excess_kurtosis: float
    count: int

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    @property
    def sem(self) -> float:
        """Standard error of the mean."""
        return self.std / math.sqrt(self.count)


def stat_summary(series) -> StatSummary:
    """Standard moment estimators; rejects constant or very short series."""
    x = np.asarray(series, dtype=float)
    if x.size < 8:
        raise ModelError(f"need >= 8 samples, got {x.size}")
    variance = float(np.var(x, ddof=1))
    if variance == 0.0:
        raise ModelError("constant series: moments beyond the mean are undefined")
    return StatSummary(
        mean=float(np.mean(x)),
        variance=variance,
        skewness=float(stats.skew(x)),
        excess_kurtosis=float(stats.kurtosis(x)),
        count=int(x.size),
    )
