"""
Reverberation time estimation and RT60-based cropping.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.signal import butter, sosfiltfilt

from .materials import OCTAVE_BANDS


class DecayError(ValueError):
    pass


@dataclass
class DecayCurve:
    time: np.ndarray
    level: np.ndarray  # dB re total energy, starts at 0
    band: Optional[float] = None  # octave centre in Hz, None for broadband


@dataclass
class DecayFit:
    rt60: float
    slope: float  # dB/s
    intercept: float  # dB
    rms_residual: float  # dB
    fit_range: tuple

    @property
    def non_exponential(self) -> bool:
        return self.rms_residual > 2.0


def octave_filter(x, fs: float, band: float, order: int = 4):
    """Zero-phase Butterworth octave band-pass (edges band/sqrt2, band*sqrt2).

    ``order`` is the analog prototype order; forward-backward application
    doubles the attenuation slope and cancels the phase.
    """
    lo, hi = band / math.sqrt(2), band * math.sqrt(2)
    hi = min(hi, 0.499 * fs)
    if lo >= hi:
        raise ValueError(f"band {band} Hz not representable at fs={fs}")
    sos = butter(order, [lo, hi], btype="bandpass", fs=fs, output="sos")
    return sosfiltfilt(sos, np.asarray(x, dtype=float))


def schroeder_decay(rir, fs: float, band: Optional[float] = None) -> DecayCurve:
    """Backward-integrated energy decay curve of ``rir``."""
    h = np.asarray(rir, dtype=float)
    if h.size == 0 or not np.all(np.isfinite(h)):
        raise DecayError("impulse response must be non-empty and finite")
    if band is not None:
        h = octave_filter(h, fs, band)
    energy = np.cumsum((h ** 2)[::-1])[::-1]
    if energy[0] <= 0:
        raise DecayError("silent impulse response")
    with np.errstate(divide="ignore"):
        level = 10.0 * np.log10(energy / energy[0])
    # cumulative sums can wobble in the last ulp; keep the curve monotone
    level = np.minimum.accumulate(level)
    return DecayCurve(np.arange(h.size) / fs, level, band)


def fit_decay(curve: DecayCurve, upper: float = -5.0, lower: float = -35.0) -> DecayFit:
    """Least-squares line through the decay between ``upper`` and ``lower`` dB."""
    lv = curve.level
    below_upper = np.flatnonzero(lv <= upper)
    below_lower = np.flatnonzero(lv <= lower)
    if below_lower.size == 0 or below_upper.size == 0:
        raise DecayError(f"insufficient decay range: curve never reaches {lower} dB")
    i0, i1 = below_upper[0], below_lower[0]
    t, y = curve.time[i0:i1 + 1], lv[i0:i1 + 1]
    if len(t) < 2:
        raise DecayError("insufficient decay range: too few samples in fit window")
    A = np.column_stack([t, np.ones_like(t)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    if slope >= 0:
        raise DecayError("non-decaying curve")
    resid = y - (slope * t + intercept)
    return DecayFit(-60.0 / slope, float(slope), float(intercept),
                    float(np.sqrt(np.mean(resid ** 2))), (upper, lower))


def estimate_rt60(curve: DecayCurve, upper: float = -5.0, lower: float = -35.0) -> float:
    """RT60 (s) extrapolated from the fitted decay rate (T30 by default)."""
    return fit_decay(curve, upper, lower).rt60


def brir_rt60(brir, band: Optional[float] = None) -> float:
    """Broadband (or band) RT60 of a two-channel BRIR from the summed-channel
    energy decay."""
    data = np.asarray(brir.data)
    if band is not None:
        data = np.stack([octave_filter(ch, brir.sample_rate, band) for ch in data])
    energy = (data ** 2).sum(axis=0)
    curve = schroeder_decay(np.sqrt(energy), brir.sample_rate)
    curve.band = band
    return estimate_rt60(curve)


def band_rt60s(brir, bands=OCTAVE_BANDS) -> dict:
    """RT60 per octave band (NaN where the decay range is insufficient)."""
    out = {}
    for b in bands:
        if b * math.sqrt(2) >= 0.5 * brir.sample_rate:
            out[float(b)] = float("nan")
            continue
        try:
            out[float(b)] = brir_rt60(brir, band=b)
        except DecayError:
            out[float(b)] = float("nan")
    return out


def crop_length(rt60: float, fs: float, margin: float = 0.030) -> int:
    return int(math.ceil(round((rt60 + margin) * fs, 9)))


def crop_brir(brir, rt60: float, margin: float = 0.030):
    """Truncate both channels to ``ceil((rt60 + margin) * fs)`` samples."""
    if not rt60 > 0:
        raise ValueError("rt60 must be positive")
    n = crop_length(rt60, brir.sample_rate, margin)
    annotation = dict(brir.annotation)
    annotation["crop"] = {"rt60": float(rt60), "margin": float(margin),
                          "length": int(min(n, len(brir))), "original_length": len(brir)}
    return replace(brir, data=brir.data[:, :n].copy(), annotation=annotation)
