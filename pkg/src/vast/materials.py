"""
Frequency-dependent surface materials and the room catalog.

Coefficients live on eight octave bands (62.5 Hz to 8 kHz) and are
interpolated piecewise-linearly on a log-frequency axis, with constant
extrapolation outside the outer bands. The numbers themselves are data,
loaded from ``data/catalog.yaml``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .scene import RoomDimensions

OCTAVE_BANDS = np.array([62.5, 125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0])
N_BANDS = len(OCTAVE_BANDS)
CATALOG_SCHEMA = "vast-catalog/1"
WALL_NAMES = ("west", "east", "south", "north")
# surface order used by the simulator: x=0, x=W, y=0, y=D, z=0, z=H
SURFACES = ("west", "east", "south", "north", "floor", "ceiling")


class CatalogError(ValueError):
    pass


@dataclass(frozen=True)
class MaterialProfile:
    name: str
    absorption: tuple
    diffusion: tuple

    def __post_init__(self):
        for kind in ("absorption", "diffusion"):
            v = np.asarray(getattr(self, kind), dtype=float)
            if v.shape != (N_BANDS,):
                raise CatalogError(f"{self.name}: {kind} needs {N_BANDS} band values")
            if np.any(~np.isfinite(v)) or np.any(v < 0) or np.any(v > 1):
                raise CatalogError(f"{self.name}: {kind} coefficients must lie in [0, 1]")
            object.__setattr__(self, kind, tuple(float(x) for x in v))

    def with_diffusion(self, diffusion) -> "MaterialProfile":
        return MaterialProfile(self.name, self.absorption, tuple(diffusion))


@dataclass(frozen=True)
class RoomConfig:
    """A room: shoebox dimensions and one material per surface.

    ``walls`` is ordered (west, east, south, north). ``number`` is the
    catalog number, or ``None`` for randomly drawn rooms.
    """

    number: Optional[int]
    dimensions: RoomDimensions
    floor: MaterialProfile
    ceiling: MaterialProfile
    walls: tuple
    label: str = ""
    anechoic: bool = False
    size: str = ""  # catalog size class (large, small, none) or "random"

    def surfaces(self) -> tuple:
        return tuple(self.walls) + (self.floor, self.ceiling)

    def absorption_matrix(self) -> np.ndarray:
        """(6, 8) absorption per surface (simulator order) and band."""
        return np.array([m.absorption for m in self.surfaces()])

    def diffusion_matrix(self) -> np.ndarray:
        return np.array([m.diffusion for m in self.surfaces()])

    def to_dict(self) -> dict:
        return {
            "number": self.number,
            "label": self.label,
            "dimensions": [self.dimensions.width, self.dimensions.depth, self.dimensions.height],
            "floor": self.floor.name,
            "ceiling": self.ceiling.name,
            "walls": [w.name for w in self.walls],
            "anechoic": self.anechoic,
            "size": self.size,
        }


def interpolate_coefficient(profile: MaterialProfile, frequency, kind: str = "absorption"):
    """Coefficient of ``profile`` at ``frequency`` (Hz, scalar or array)."""
    if kind not in ("absorption", "diffusion"):
        raise ValueError(f"unknown coefficient kind {kind!r}")
    f = np.asarray(frequency, dtype=float)
    if np.any(f <= 0):
        raise ValueError("frequency must be positive")
    values = np.asarray(getattr(profile, kind))
    out = np.interp(np.log2(f), np.log2(OCTAVE_BANDS), values)
    return float(out) if out.ndim == 0 else out


def band_weights(freqs) -> np.ndarray:
    """Triangular interpolation weights (8, len(freqs)) on the log-frequency
    axis; rows sum to one at every frequency, so ``band_weights(f).T @ v``
    is the piecewise-linear interpolation of the band values ``v``."""
    f = np.asarray(freqs, dtype=float)
    logf = np.log2(np.maximum(f, 1e-3))
    eye = np.eye(N_BANDS)
    return np.stack([np.interp(logf, np.log2(OCTAVE_BANDS), eye[b]) for b in range(N_BANDS)])


@dataclass(frozen=True)
class Catalog:
    materials: dict
    diffusion: tuple
    rooms: dict
    version: int
    digest: str

    @property
    def profiles(self) -> list:
        return list(self.materials.values())

    def room(self, number: int) -> RoomConfig:
        try:
            return self.rooms[int(number)]
        except KeyError:
            raise CatalogError(f"no room {number} in catalog") from None

    def material(self, name: str) -> MaterialProfile:
        try:
            return self.materials[name]
        except KeyError:
            raise CatalogError(f"unknown material {name!r}") from None

    def wall_materials(self) -> list:
        names = []
        for r in sorted(self.rooms):
            if not self.rooms[r].anechoic:
                names += [w.name for w in self.rooms[r].walls if w.name not in names]
        return [self.materials[n] for n in names]

    def floor_materials(self) -> list:
        names = []
        for r in sorted(self.rooms):
            room = self.rooms[r]
            if not room.anechoic and room.floor.name not in names:
                names.append(room.floor.name)
        return [self.materials[n] for n in names]

    def room_from_dict(self, d: dict) -> RoomConfig:
        """Rebuild a (possibly non-catalog) room from :meth:`RoomConfig.to_dict`."""
        if d.get("number") is not None and int(d["number"]) in self.rooms:
            return self.rooms[int(d["number"])]
        return RoomConfig(
            None, RoomDimensions(*d["dimensions"]), self.material(d["floor"]),
            self.material(d["ceiling"]), tuple(self.material(w) for w in d["walls"]),
            d.get("label", ""), bool(d.get("anechoic", False)), d.get("size", ""))


def _parse_catalog(raw: dict) -> Catalog:
    if raw.get("schema") != CATALOG_SCHEMA:
        raise CatalogError(f"unsupported catalog schema {raw.get('schema')!r}")
    if not np.allclose(raw["bands"], OCTAVE_BANDS):
        raise CatalogError("catalog bands differ from the supported octave bands")
    diffusion = tuple(float(v) for v in raw["diffusion"]["coefficients"])
    zero = (0.0,) * N_BANDS
    materials = {}
    for name, entry in raw["materials"].items():
        diff = zero if name == "Anechoic" else diffusion
        materials[name] = MaterialProfile(name, tuple(entry["absorption"]), diff)
    rooms = {}
    for entry in raw["rooms"]:
        dims = RoomDimensions(*raw["sizes"][entry["size"]])
        walls = tuple(materials[w] for w in entry["walls"])
        if len(walls) != 4:
            raise CatalogError(f"room {entry['number']}: need 4 walls")
        rooms[int(entry["number"])] = RoomConfig(
            int(entry["number"]), dims, materials[entry["floor"]], materials[entry["ceiling"]],
            walls, entry.get("label", ""), bool(entry.get("anechoic", False)), entry["size"])
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()
    return Catalog(materials, diffusion, rooms, int(raw["version"]),
                   hashlib.sha256(canon).hexdigest())


def load_catalog(path=None) -> Catalog:
    """Load a catalog file; the packaged one when ``path`` is None."""
    if path is None:
        return builtin_catalog()
    with open(Path(path)) as fh:
        return _parse_catalog(yaml.safe_load(fh))


@lru_cache(maxsize=1)
def builtin_catalog() -> Catalog:
    text = resources.files("vast").joinpath("data/catalog.yaml").read_text()
    return _parse_catalog(yaml.safe_load(text))
