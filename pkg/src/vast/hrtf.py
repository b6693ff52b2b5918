"""
Head-related impulse response sets.

An :class:`HrtfSet` holds one left/right impulse-response pair per measured
direction. Directions use the receiver-frame convention of
:mod:`vast.scene` (positive azimuth to the left). Lookup is nearest
neighbour on the sphere, resolved through a 1-degree raster built once per
set.

On-disk layout (``vast-hrtf/1``)::

    <dir>/index.json   {"schema": "vast-hrtf/1", "sample_rate": 44100,
                        "distance": 1.4,
                        "entries": [{"azimuth": az, "elevation": el,
                                     "file": "relative/path.wav"}, ...]}
    <dir>/*.wav        two-channel (left, right) float32 WAV files, all the
                       same length and sample rate
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

HRTF_SCHEMA = "vast-hrtf/1"
HEAD_RADIUS = 0.0875


class HrtfError(ValueError):
    pass


def _unit_vectors(az_deg, el_deg):
    a, e = np.broadcast_arrays(np.radians(az_deg), np.radians(el_deg))
    return np.stack([np.cos(e) * np.cos(a), np.cos(e) * np.sin(a), np.sin(e)], axis=-1)


@dataclass(eq=False)
class HrtfSet:
    sample_rate: int
    azimuths: np.ndarray
    elevations: np.ndarray
    irs: np.ndarray  # (n, 2, length)
    distance: float = 1.0
    _raster: np.ndarray = field(default=None, repr=False)
    _taps: tuple = field(default=None, repr=False)
    _digest: str = field(default=None, repr=False)

    def __post_init__(self):
        self.azimuths = np.asarray(self.azimuths, dtype=float)
        self.elevations = np.asarray(self.elevations, dtype=float)
        self.irs = np.ascontiguousarray(self.irs, dtype=float)
        n = len(self.azimuths)
        if self.irs.ndim != 3 or self.irs.shape[:2] != (n, 2) or len(self.elevations) != n:
            raise HrtfError("irs must have shape (n_directions, 2, length)")
        if n == 0 or self.sample_rate <= 0:
            raise HrtfError("empty HRTF set or invalid sample rate")

    @property
    def length(self) -> int:
        return self.irs.shape[2]

    def __len__(self):
        return len(self.azimuths)

    def digest(self) -> str:
        if self._digest is not None:
            return self._digest
        h = hashlib.sha256()
        h.update(np.array([self.sample_rate, self.distance], dtype="<f8").tobytes())
        for arr in (self.azimuths, self.elevations, self.irs):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        self._digest = h.hexdigest()
        return self._digest

    def raster(self) -> np.ndarray:
        """(360, 181) table of nearest entry index for integer (az, el)."""
        if self._raster is None:
            az = np.arange(360.0)
            el = np.arange(-90.0, 91.0)
            grid = _unit_vectors(az[:, None], el[None, :]).reshape(-1, 3)
            ref = _unit_vectors(self.azimuths, self.elevations)
            idx = np.empty(len(grid), dtype=np.int32)
            for s in range(0, len(grid), 8192):
                idx[s:s + 8192] = np.argmax(grid[s:s + 8192] @ ref.T, axis=1)
            self._raster = idx.reshape(360, 181)
        return self._raster

    def nearest(self, azimuth, elevation):
        """Index of the nearest measured direction (vectorised)."""
        ai = np.mod(np.rint(np.asarray(azimuth, dtype=float)), 360).astype(int)
        ei = np.clip(np.rint(np.asarray(elevation, dtype=float)), -90, 90).astype(int) + 90
        return self.raster()[ai, ei]

    def max_angular_gap(self, step: float = 2.0) -> float:
        """Largest angle (degrees) between any direction on a test grid and its
        nearest measured direction."""
        az, el = np.meshgrid(np.arange(-180, 180, step), np.arange(-90, 90 + step, step))
        probe = _unit_vectors(az.ravel(), el.ravel())
        ref = _unit_vectors(self.azimuths, self.elevations)
        cos = np.clip((probe @ ref.T).max(axis=1), -1, 1)
        return float(np.degrees(np.arccos(cos)).max())

    def sparse_taps(self):
        """Non-zero taps per entry and ear, padded for the render kernels:
        ``(index[n, 2, m], value[n, 2, m], count[n, 2])``."""
        if self._taps is None:
            nz = np.abs(self.irs) > 0
            m = max(int(nz.sum(axis=2).max()), 1)
            n = len(self)
            index = np.zeros((n, 2, m), dtype=np.int64)
            value = np.zeros((n, 2, m))
            count = nz.sum(axis=2).astype(np.int64)
            for i in range(n):
                for e in range(2):
                    k = np.flatnonzero(nz[i, e])
                    index[i, e, :len(k)] = k
                    value[i, e, :len(k)] = self.irs[i, e, k]
            self._taps = (index, value, count)
        return self._taps


def woodworth_ear_delay(angle_to_ear, head_radius=HEAD_RADIUS, c=343.0):
    """Arrival time (s) at one ear relative to the head centre, for a source
    at ``angle_to_ear`` radians from the ear axis (spherical-head model)."""
    t = np.asarray(angle_to_ear, dtype=float)
    return np.where(t < np.pi / 2, -head_radius / c * np.cos(t),
                    head_radius / c * (t - np.pi / 2))


def head_shadow_gain(angle_to_ear, min_gain=0.1, theta_min=np.radians(150.0)):
    """Frequency-independent head-shadow gain: the high-frequency asymptote
    of the one-pole spherical-head shadow filter, scaled to 1 on-axis."""
    t = np.asarray(angle_to_ear, dtype=float)
    return ((1 + min_gain / 2) + (1 - min_gain / 2) * np.cos(t / theta_min * np.pi)) / 2


def woodworth_itd(azimuth, elevation=0.0, head_radius=HEAD_RADIUS, c=343.0):
    """Interaural time difference (right arrival minus left arrival, s)."""
    d = _unit_vectors(azimuth, elevation)
    left = np.arccos(np.clip(d[..., 1], -1, 1))
    right = np.arccos(np.clip(-d[..., 1], -1, 1))
    return woodworth_ear_delay(right, head_radius, c) - woodworth_ear_delay(left, head_radius, c)


def synthetic_spherical_head_hrtf(sample_rate: int = 44100, step: float = 10.0,
                                  head_radius: float = HEAD_RADIUS, c: float = 343.0,
                                  length: int = 64, onset: int = 16,
                                  min_gain: float = 0.1) -> HrtfSet:
    """Spherical-head HRTF set on a regular ``step``-degree grid.

    Each ear response is a single fractionally delayed, scaled impulse:
    the delay follows the Woodworth spherical-head formula and the gain a
    frequency-independent head-shadow curve. ``onset`` samples of lead-in
    keep every impulse causal.
    """
    az, el = [], []
    for e in np.arange(-90.0, 90.0 + 1e-9, step):
        if abs(abs(e) - 90) < 1e-9:
            az.append(0.0)
            el.append(e)
            continue
        for a in np.arange(-180.0, 180.0, step):
            az.append(a)
            el.append(e)
    az, el = np.array(az), np.array(el)
    d = _unit_vectors(az, el)
    irs = np.zeros((len(az), 2, length))
    for ear, sign in ((0, 1.0), (1, -1.0)):
        theta = np.arccos(np.clip(sign * d[:, 1], -1, 1))
        delay = onset + woodworth_ear_delay(theta, head_radius, c) * sample_rate
        gain = head_shadow_gain(theta, min_gain)
        n0 = np.floor(delay).astype(int)
        frac = delay - n0
        if n0.min() < 0 or n0.max() + 1 >= length:
            raise HrtfError("HRTF length/onset too small for the head delays")
        rows = np.arange(len(az))
        irs[rows, ear, n0] += gain * (1 - frac)
        irs[rows, ear, n0 + 1] += gain * frac
    return HrtfSet(sample_rate, az, el, irs, distance=1.0)


def save_hrtf_dir(hrtf: HrtfSet, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (a, e) in enumerate(zip(hrtf.azimuths, hrtf.elevations)):
        name = f"e{e:+06.1f}_a{a:+07.1f}.wav"
        wavfile.write(directory / name, int(hrtf.sample_rate), hrtf.irs[i].T.astype(np.float32))
        entries.append({"azimuth": float(a), "elevation": float(e), "file": name})
    index = {"schema": HRTF_SCHEMA, "sample_rate": int(hrtf.sample_rate),
             "distance": float(hrtf.distance), "entries": entries}
    (directory / "index.json").write_text(json.dumps(index, indent=1))
    return directory


def _read_wav(path):
    fs, data = wavfile.read(path)
    if data.dtype.kind == "i":
        data = data / float(np.iinfo(data.dtype).max)
    return fs, np.asarray(data, dtype=float)


def load_hrtf_dir(directory) -> HrtfSet:
    directory = Path(directory)
    index = json.loads((directory / "index.json").read_text())
    if index.get("schema") != HRTF_SCHEMA:
        raise HrtfError(f"unsupported HRTF index schema {index.get('schema')!r}")
    fs0 = int(index["sample_rate"])
    az, el, irs = [], [], []
    for entry in index["entries"]:
        fs, data = _read_wav(directory / entry["file"])
        if fs != fs0 or data.ndim != 2 or data.shape[1] != 2:
            raise HrtfError(f"{entry['file']}: expected 2-channel audio at {fs0} Hz")
        az.append(entry["azimuth"])
        el.append(entry["elevation"])
        irs.append(data.T)
    if len({ir.shape for ir in irs}) != 1:
        raise HrtfError("HRTF impulse responses differ in length")
    return HrtfSet(fs0, np.array(az), np.array(el), np.array(irs), float(index.get("distance", 1.0)))


_MIT_NAME = re.compile(r"([LR])(-?\d+)e(\d{3})a\.wav$")


def convert_mit_kemar(source_dir, out_dir) -> HrtfSet:
    """Convert the MIT KEMAR "full" distribution into ``vast-hrtf/1``.

    The full set stores one mono file per ear and direction as
    ``elev<E>/L<E>e<AAA>a.wav`` and ``elev<E>/R<E>e<AAA>a.wav`` with
    azimuths measured clockwise (towards the right ear). They are converted
    to the counter-clockwise convention used here.
    """
    pairs = {}
    for path in sorted(Path(source_dir).rglob("*.wav")):
        m = _MIT_NAME.search(path.name)
        if m is None:
            continue
        ear, elev, azi = m.group(1), int(m.group(2)), int(m.group(3))
        pairs.setdefault((elev, azi), {})[ear] = path
    az, el, irs, fs0 = [], [], [], None
    for (elev, azi), files in sorted(pairs.items()):
        if set(files) != {"L", "R"}:
            continue
        fs, left = _read_wav(files["L"])
        fs_r, right = _read_wav(files["R"])
        if fs != fs_r or (fs0 is not None and fs != fs0):
            raise HrtfError("inconsistent sample rates in MIT KEMAR files")
        fs0 = fs
        az.append(float((-azi + 180) % 360 - 180))
        el.append(float(elev))
        irs.append(np.stack([left, right]))
    if not irs:
        raise HrtfError(f"no MIT KEMAR file pairs found under {source_dir}")
    hrtf = HrtfSet(fs0, np.array(az), np.array(el), np.array(irs), distance=1.4)
    save_hrtf_dir(hrtf, out_dir)
    return hrtf
