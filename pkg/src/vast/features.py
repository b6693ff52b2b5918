"""
Binaural localization features.

Two feature types are extracted from a BRIR, both at a 16 kHz analysis rate:

* an integer time difference of arrival (TDOA) from the cross-correlation of
  the first 500 samples of each ear, searched over lags -15..15;
* a D = 1537 interaural spectrum: ILD in dB on the 769 non-negative
  frequency bins of a 1536-point transform, followed by the IPD (principal
  angle, radians) on the 768 bins above DC.

Sign convention: a positive TDOA means the right ear lags, which is the case
for a source on the left (positive azimuth).

Feature and target matrices are stored as::

    offset  size  field
    0       4     magic b"VFEA" (features) or b"VTGT" (targets)
    4       2     format version (uint16, currently 1)
    6       2     reserved, 0
    8       4     rows (uint32)
    12      4     columns (uint32)
    16      ...   rows * columns float32, row-major, little-endian

all integers little-endian.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

ANALYSIS_RATE = 16000
TDOA_WINDOW = 500
TDOA_MAX_LAG = 15
FFT_LENGTH = 1536
N_ILD = FFT_LENGTH // 2 + 1
N_IPD = FFT_LENGTH // 2
FEATURE_DIM = N_ILD + N_IPD
MAGNITUDE_FLOOR = 1e-6  # -120 dB
FEATURE_WINDOW = None  # samples in the spectrum frame, None: the whole frame
FEATURE_LEAD = None  # start the frame this many samples before the energy peak

_HEADER = struct.Struct("<4sHHII")
_FORMAT_VERSION = 1
FEATURE_MAGIC = b"VFEA"
TARGET_MAGIC = b"VTGT"


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class TdoaSample:
    delay: int  # samples at the analysis rate, right-ear lag
    peak: float  # normalized correlation at ``delay``


def resample(x, fs: float, target: float = ANALYSIS_RATE) -> np.ndarray:
    """Polyphase resampling along the last axis; identity when rates match."""
    x = np.asarray(x, dtype=float)
    if int(fs) == int(target):
        return x
    g = math.gcd(int(fs), int(target))
    return resample_poly(x, int(target) // g, int(fs) // g, axis=-1)


def _channels(brir, rate):
    data = np.asarray(brir.data, dtype=float)
    if data.ndim != 2 or data.shape[0] != 2:
        raise FeatureError("expected a two-channel BRIR")
    if rate is None:
        return data
    if brir.sample_rate < rate:
        raise FeatureError(f"sample rate {brir.sample_rate} below analysis rate {rate}")
    return resample(data, brir.sample_rate, rate)


def _fit(x, n):
    out = np.zeros(x.shape[:-1] + (n,))
    m = min(n, x.shape[-1])
    out[..., :m] = x[..., :m]
    return out


def tdoa_from_channels(left, right, window: int = TDOA_WINDOW,
                       max_lag: int = TDOA_MAX_LAG) -> TdoaSample:
    """Integer lag in [-max_lag, max_lag] maximizing the correlation
    ``sum_n left[n] * right[n + lag]`` over the first ``window`` samples.

    Ties go to the smallest ``|lag|`` (then the negative lag).
    """
    x = _fit(np.asarray(left, dtype=float), window)
    y = _fit(np.asarray(right, dtype=float), window)
    ex, ey = float(x @ x), float(y @ y)
    if ex == 0.0 or ey == 0.0:
        raise FeatureError("silent channel in TDOA window")
    lags = np.arange(-max_lag, max_lag + 1)
    corr = np.empty(len(lags))
    for i, k in enumerate(lags):
        if k >= 0:
            corr[i] = x[:window - k] @ y[k:]
        else:
            corr[i] = x[-k:] @ y[:window + k]
    corr /= math.sqrt(ex * ey)
    best = corr.max()
    cand = lags[corr >= best - 1e-12 * max(1.0, abs(best))]
    k = int(min(cand, key=lambda v: (abs(v), v)))
    return TdoaSample(k, float(corr[k + max_lag]))


def estimate_tdoa(brir, rate: int | None = ANALYSIS_RATE, window: int = TDOA_WINDOW,
                  max_lag: int = TDOA_MAX_LAG) -> TdoaSample:
    """TDOA of a BRIR, resampled to ``rate`` first (``None`` keeps the native rate)."""
    data = _channels(brir, rate)
    return tdoa_from_channels(data[0], data[1], window, max_lag)


def interaural_spectrum(left, right, n_fft: int = FFT_LENGTH,
                        floor: float = MAGNITUDE_FLOOR, window: int | None = None,
                        lead: int | None = None) -> np.ndarray:
    """ILD (dB, all rfft bins) followed by IPD (radians, bins 1..n_fft/2).

    The frame starts at sample 0, or ``lead`` samples before the peak of
    ``|left| + |right|`` when ``lead`` is given. Only its first ``window``
    samples (all when None) enter the transform; the rest is zero-padded.
    """
    left = np.asarray(left, dtype=float)
    right = np.asarray(right, dtype=float)
    if lead is not None:
        n = min(left.size, right.size)
        start = max(0, int(np.argmax(np.abs(left[:n]) + np.abs(right[:n]))) - int(lead))
        left, right = left[start:], right[start:]
    w = n_fft if window is None else min(int(window), n_fft)
    L = np.fft.rfft(_fit(left[:w], n_fft))
    R = np.fft.rfft(_fit(right[:w], n_fft))
    ild = 20.0 * np.log10(np.maximum(np.abs(L), floor) / np.maximum(np.abs(R), floor))
    ipd = np.angle(L[1:] * np.conj(R[1:]))
    return np.concatenate([ild, ipd])


def extract_interaural_features(brir, rate: int = ANALYSIS_RATE, n_fft: int = FFT_LENGTH,
                                floor: float = MAGNITUDE_FLOOR,
                                window: int | None = FEATURE_WINDOW,
                                lead: int | None = FEATURE_LEAD) -> np.ndarray:
    """D = n_fft + 1 interaural feature vector.

    By default the frame is the start of the cropped BRIR, truncated or
    zero-padded to ``n_fft`` samples at the analysis rate.
    """
    data = _channels(brir, rate)
    if not np.all(np.isfinite(data)):
        raise FeatureError("non-finite samples in BRIR")
    return interaural_spectrum(data[0], data[1], n_fft, floor, window, lead)


def periodic_mask(n_fft: int = FFT_LENGTH) -> np.ndarray:
    """Boolean mask of the angular (IPD) entries of a feature vector."""
    mask = np.zeros(n_fft + 1, dtype=bool)
    mask[n_fft // 2 + 1:] = True
    return mask


def feature_frequencies(rate: int = ANALYSIS_RATE, n_fft: int = FFT_LENGTH) -> np.ndarray:
    """Frequency (Hz) of every feature entry."""
    f = np.fft.rfftfreq(n_fft, 1.0 / rate)
    return np.concatenate([f, f[1:]])


def save_matrix(path, matrix, magic: bytes = FEATURE_MAGIC) -> Path:
    m = np.ascontiguousarray(matrix, dtype="<f4")
    if m.ndim != 2:
        raise FeatureError("matrix must be two-dimensional")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(magic, _FORMAT_VERSION, 0, m.shape[0], m.shape[1]))
        fh.write(m.tobytes())
    return path


def load_matrix(path, magic: bytes | None = None) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FeatureError(f"{path}: truncated header")
    tag, version, _, rows, cols = _HEADER.unpack_from(raw)
    if tag not in (FEATURE_MAGIC, TARGET_MAGIC) or (magic is not None and tag != magic):
        raise FeatureError(f"{path}: unexpected magic {tag!r}")
    if version != _FORMAT_VERSION:
        raise FeatureError(f"{path}: unsupported version {version}")
    if len(raw) != _HEADER.size + 4 * rows * cols:
        raise FeatureError(f"{path}: size does not match {rows}x{cols} header")
    return np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(rows, cols).astype(float)
