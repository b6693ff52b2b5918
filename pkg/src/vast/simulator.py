"""
Binaural room impulse response simulation for shoebox rooms.

The specular part comes from the image-source method, the diffuse part from
a ray-based "rain" diffusion model whose energy histograms are turned into
shaped noise. Both are spatialised through an :class:`~vast.hrtf.HrtfSet`.

Frequency dependence is handled per octave band: contributions are
accumulated separately for each band and the bands are recombined with
log-frequency hat weights (see :func:`vast.materials.band_weights`), i.e.
every per-band gain is piecewise-linearly interpolated over frequency.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import fft as sfft

from . import _kernels
from .hrtf import HrtfSet
from .materials import N_BANDS, RoomConfig, band_weights
from .scene import (GeometryError, ReceiverPose, RoomDimensions, SourcePose,
                    directions_to_spherical)

log = logging.getLogger(__name__)

# ISO 9613-1 air attenuation at 20 degC / 50% RH [dB/km] for the 8 bands.
_AIR_DB_PER_KM = np.array([0.1, 0.4, 1.0, 1.9, 3.7, 9.7, 32.8, 117.0])
AIR_AMPLITUDE_PER_M = _AIR_DB_PER_KM / 1000.0 / (20 * math.log10(math.e))
# 4th-order zero-phase high-pass corner applied to reflected sound only
REFLECTION_HIGHPASS_HZ = 20.0


@dataclass(frozen=True)
class SimulationConfig:
    sample_rate: int = 44100
    speed_of_sound: float = 343.0
    max_image_order: Optional[int] = None
    time_budget: float = 0.5
    ray_count: int = 10000
    histogram_bin: float = 0.001
    rng_seed: int = 0
    air_absorption: bool = False
    diffusion: bool = True
    energy_floor_db: float = -80.0

    def __post_init__(self):
        if self.sample_rate <= 0 or self.ray_count <= 0 or self.histogram_bin <= 0:
            raise ValueError("sample_rate, ray_count and histogram_bin must be positive")
        if self.time_budget <= 0 or self.speed_of_sound <= 0:
            raise ValueError("time_budget and speed_of_sound must be positive")
        if self.max_image_order is not None and self.max_image_order < 0:
            raise ValueError("max_image_order must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(canon).hexdigest()

    @property
    def n_samples(self) -> int:
        return int(math.ceil(self.time_budget * self.sample_rate))


@dataclass
class Brir:
    """Two-channel impulse response with its full annotation."""

    data: np.ndarray  # (2, n) left, right
    sample_rate: int
    annotation: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2 or self.data.shape[0] != 2:
            raise ValueError("BRIR data must have shape (2, n_samples)")

    @property
    def left(self) -> np.ndarray:
        return self.data[0]

    @property
    def right(self) -> np.ndarray:
        return self.data[1]

    def __len__(self):
        return self.data.shape[1]


@dataclass
class ImageSources:
    positions: np.ndarray  # (n, 3)
    gains: np.ndarray  # (n, n_bands)
    wall_hits: np.ndarray  # (n, 6) reflections per surface

    @property
    def orders(self) -> np.ndarray:
        return self.wall_hits.sum(axis=1)

    def __len__(self):
        return len(self.positions)


def _as_room(room) -> tuple:
    """(dimensions, absorption (6,8), diffusion (6,8)) for a room or bare dims."""
    if isinstance(room, RoomConfig):
        return room.dimensions, room.absorption_matrix(), room.diffusion_matrix()
    if isinstance(room, RoomDimensions):
        zero = np.zeros((6, N_BANDS))
        return room, zero, zero.copy()
    raise TypeError(f"expected RoomConfig or RoomDimensions, got {type(room).__name__}")


def image_sources(room, source, max_order: Optional[int] = None,
                  max_distance: Optional[float] = None, center=None,
                  diffusion: bool = True) -> ImageSources:
    """Mirror images of ``source`` in a shoebox room.

    Images are kept up to ``max_order`` reflections and/or within
    ``max_distance`` of ``center`` (defaults to the source). Each image's band
    gain is the product over its reflections of ``sqrt(1 - a)`` and, with
    ``diffusion``, ``sqrt(1 - d)``. A bare :class:`RoomDimensions` is treated
    as perfectly rigid.
    """
    dims, alpha, diff = _as_room(room)
    src = np.asarray(source, dtype=float)
    if not dims.contains(src):
        raise GeometryError("source must lie strictly inside the room")
    if max_order is None and max_distance is None:
        raise ValueError("give max_order and/or max_distance")
    center = src if center is None else np.asarray(center, dtype=float)
    if max_distance is None:
        max_distance = float(np.linalg.norm(2 * (max_order + 1) * dims.as_array())) + 1.0
    beta = np.sqrt(1.0 - alpha)
    if diffusion:
        beta = beta * np.sqrt(1.0 - diff)
    order = -1 if max_order is None else int(max_order)
    args = (dims.as_array(), src, center, float(max_distance), order, beta)
    empty = np.zeros((0, 3)), np.zeros((0, N_BANDS)), np.zeros((0, 6), dtype=np.int64)
    n = _kernels.enumerate_images(*args, *empty, True)
    pos, gain, hits = np.zeros((n, 3)), np.zeros((n, N_BANDS)), np.zeros((n, 6), dtype=np.int64)
    _kernels.enumerate_images(*args, pos, gain, hits, False)
    return ImageSources(pos, gain, hits)


def _air(cfg: SimulationConfig) -> np.ndarray:
    return AIR_AMPLITUDE_PER_M.copy() if cfg.air_absorption else np.zeros(N_BANDS)


def _length(cfg: SimulationConfig, hrtf: HrtfSet) -> int:
    return cfg.n_samples + hrtf.length + 2


def _check_hrtf(hrtf: HrtfSet, cfg: SimulationConfig):
    if int(hrtf.sample_rate) != int(cfg.sample_rate):
        raise ValueError(f"HRTF sample rate {hrtf.sample_rate} != simulation rate {cfg.sample_rate}")


def _combine_bands(acc: np.ndarray, fs: float, direct: Optional[np.ndarray] = None,
                   highpass: float = REFLECTION_HIGHPASS_HZ) -> np.ndarray:
    """Sum band accumulators (n_bands, 2, T) after zero-phase shaping with the
    log-frequency hat weights.

    ``acc`` (reflections) is additionally high-passed to remove the
    sub-audio build-up of summed image impulses; ``direct`` is not.
    """
    T = acc.shape[2]
    nfft = sfft.next_fast_len(T + 8192)
    freqs = np.fft.rfftfreq(nfft, 1.0 / fs)
    weights = band_weights(freqs)
    if highpass:
        with np.errstate(divide="ignore"):
            hp = 1.0 / np.sqrt(1.0 + (highpass / freqs) ** 8)
        total = np.einsum("bef,bf->ef", sfft.rfft(acc, n=nfft, axis=2), weights * hp)
    else:
        total = np.einsum("bef,bf->ef", sfft.rfft(acc, n=nfft, axis=2), weights)
    if direct is not None:
        total += np.einsum("bef,bf->ef", sfft.rfft(direct, n=nfft, axis=2), weights)
    return sfft.irfft(total, n=nfft, axis=1)[:, :T]


def _render_specular(images: ImageSources, receiver: ReceiverPose, hrtf: HrtfSet,
                     cfg: SimulationConfig, acc: np.ndarray) -> int:
    tap_idx, tap_val, tap_cnt = hrtf.sparse_taps()
    skipped = _kernels.render_images(
        np.ascontiguousarray(images.positions), np.ascontiguousarray(images.gains),
        np.asarray(receiver.position), receiver.axes(), _air(cfg), float(cfg.sample_rate),
        float(cfg.speed_of_sound), hrtf.raster(), tap_idx, tap_val, tap_cnt, acc)
    if skipped:
        log.warning("skipped %d image(s) coinciding with the receiver", skipped)
    return skipped


def specular_render(images: ImageSources, receiver: ReceiverPose, hrtf: HrtfSet,
                    cfg: SimulationConfig, length: Optional[int] = None) -> np.ndarray:
    """Render image sources to a (2, n) left/right signal."""
    if len(images) == 0:
        raise ValueError("no image sources to render")
    _check_hrtf(hrtf, cfg)
    T = _length(cfg, hrtf) if length is None else int(length)
    direct, refl = _split_direct(images)
    acc_d = np.zeros((N_BANDS, 2, T))
    acc_r = np.zeros((N_BANDS, 2, T))
    _render_specular(direct, receiver, hrtf, cfg, acc_d)
    _render_specular(refl, receiver, hrtf, cfg, acc_r)
    return _combine_bands(acc_r, cfg.sample_rate, direct=acc_d)


def _split_direct(images: ImageSources):
    first = images.orders == 0
    take = lambda m: ImageSources(images.positions[m], images.gains[m], images.wall_hits[m])
    return take(first), take(~first)


def ray_directions(n: int, seed: int) -> np.ndarray:
    """Uniform unit vectors; row ``i`` depends only on ``(seed, i)``."""
    u = np.random.default_rng([seed, 0x5241]).random((n, 2))
    z = 2.0 * u[:, 0] - 1.0
    phi = 2.0 * np.pi * u[:, 1]
    s = np.sqrt(1.0 - z * z)
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)


def diffuse_histograms(room, source, receiver: ReceiverPose, cfg: SimulationConfig,
                       seed: int):
    """Per-band energy histograms ``(n_bands, n_bins)`` and energy-weighted
    arrival direction sums ``(n_bins, 3)`` of the rain-diffusion model."""
    dims, alpha, diff = _as_room(room)
    n_bins = int(math.ceil(cfg.time_budget / cfg.histogram_bin))
    hist = np.zeros((N_BANDS, n_bins))
    dir_acc = np.zeros((n_bins, 3))
    _kernels.trace_rays(
        dims.as_array(), np.asarray(source, dtype=float), np.asarray(receiver.position),
        alpha, diff, ray_directions(cfg.ray_count, seed), float(cfg.speed_of_sound),
        float(cfg.histogram_bin), n_bins, float(cfg.time_budget), _air(cfg),
        10.0 ** (cfg.energy_floor_db / 10.0), hist, dir_acc)
    return hist, dir_acc


def _render_diffuse(room, source, receiver, hrtf, cfg, seed, acc) -> bool:
    _, _, diff = _as_room(room)
    if not np.any(diff > 0):
        return False
    hist, dir_acc = diffuse_histograms(room, source, receiver, cfg, seed)
    n_bins = hist.shape[1]
    norm = np.linalg.norm(dir_acc, axis=1)
    dir_index = np.full(n_bins, -1, dtype=np.int64)
    live = norm > 0
    if np.any(live):
        az, el, _ = directions_to_spherical(dir_acc[live], receiver)
        dir_index[live] = hrtf.nearest(az, el)
    edges = np.minimum(np.round(np.arange(n_bins + 1) * cfg.histogram_bin * cfg.sample_rate),
                       acc.shape[2]).astype(np.int64)
    noise = np.random.default_rng([seed, 0x4E53]).standard_normal(acc.shape[2])
    tap_idx, tap_val, tap_cnt = hrtf.sparse_taps()
    _kernels.synthesize_diffuse(hist, dir_index, edges, noise, tap_idx, tap_val, tap_cnt, acc)
    return True


def rain_diffusion(room, source, receiver: ReceiverPose, hrtf: HrtfSet,
                   cfg: SimulationConfig, seed: Optional[int] = None) -> np.ndarray:
    """Diffuse (scattered) part of the BRIR as a (2, n) signal.

    Returns silence when no surface diffuses.
    """
    _check_hrtf(hrtf, cfg)
    seed = cfg.rng_seed if seed is None else seed
    acc = np.zeros((N_BANDS, 2, _length(cfg, hrtf)))
    if not _render_diffuse(room, source, receiver, hrtf, cfg, seed, acc):
        return np.zeros((2, acc.shape[2]))
    return _combine_bands(acc, cfg.sample_rate)


def simulate_brir(room: RoomConfig, receiver: ReceiverPose, source: SourcePose,
                  hrtf: HrtfSet, cfg: Optional[SimulationConfig] = None,
                  seed: Optional[int] = None) -> Brir:
    """Full BRIR (specular + diffuse) of one scene, annotated."""
    cfg = cfg or SimulationConfig()
    _check_hrtf(hrtf, cfg)
    seed = cfg.rng_seed if seed is None else int(seed)
    dims = room.dimensions
    src = np.asarray(source.position, dtype=float)
    if not dims.contains(receiver.position) or not dims.contains(src):
        raise GeometryError("source and receiver must lie inside the room")
    max_dist = cfg.speed_of_sound * cfg.time_budget
    if room.anechoic:
        images = image_sources(room, src, max_order=0, center=receiver.position)
    else:
        images = image_sources(room, src, cfg.max_image_order, max_dist,
                               center=receiver.position, diffusion=cfg.diffusion)
    direct, refl = _split_direct(images)
    acc_d = np.zeros((N_BANDS, 2, _length(cfg, hrtf)))
    acc = np.zeros_like(acc_d)
    _render_specular(direct, receiver, hrtf, cfg, acc_d)
    _render_specular(refl, receiver, hrtf, cfg, acc)
    if cfg.diffusion and not room.anechoic:
        _render_diffuse(room, src, receiver, hrtf, cfg, seed, acc)
    data = _combine_bands(acc, cfg.sample_rate, direct=acc_d)
    annotation = {
        "room": room.to_dict(),
        "receiver": {"position": list(receiver.position), "yaw": receiver.yaw},
        "source": {"position": list(source.position), "azimuth": source.azimuth,
                   "elevation": source.elevation, "distance": source.distance},
        "seed": seed,
        "config_hash": cfg.digest(),
        "hrtf_hash": hrtf.digest(),
        "n_images": len(images),
    }
    return Brir(data, cfg.sample_rate, annotation)


def sabine_rt60(room: RoomConfig) -> np.ndarray:
    """Per-band Sabine reverberation time, a cheap sanity reference."""
    d = room.dimensions
    areas = np.array([d.depth * d.height] * 2 + [d.width * d.height] * 2 + [d.width * d.depth] * 2)
    absorption = areas @ room.absorption_matrix()
    return 0.161 * d.width * d.depth * d.height / np.maximum(absorption, 1e-12)
