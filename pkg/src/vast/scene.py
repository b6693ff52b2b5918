"""
Room, receiver and source geometry.

Frame conventions
-----------------
The room frame is right-handed with its origin at the south-west floor
corner: ``x`` runs along the width (east), ``y`` along the depth (north) and
``z`` is up. A receiver with ``yaw = 0`` faces the north wall (+y); positive
yaw turns the head counter-clockwise when seen from above.

Relative source directions are expressed in the receiver frame as
``(azimuth, elevation, distance)`` in degrees/metres. Azimuth 0 and
elevation 0 is straight ahead, positive azimuth is to the receiver's
*left* (counter-clockwise seen from above), positive elevation is up.
Azimuths are wrapped to ``[-180, 180)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

RECEIVER_HEIGHT = 1.7
WALL_CLEARANCE = 0.5
SOURCE_CLEARANCE = 0.2
MAX_ROOM_SIZE = 100.0


class GeometryError(ValueError):
    """Raised for geometrically invalid rooms, poses or grids."""


@dataclass(frozen=True)
class RoomDimensions:
    width: float
    depth: float
    height: float

    def __post_init__(self):
        for name in ("width", "depth", "height"):
            v = getattr(self, name)
            if not (np.isfinite(v) and 0.0 < v <= MAX_ROOM_SIZE):
                raise GeometryError(f"room {name} must be in (0, {MAX_ROOM_SIZE}] m, got {v}")

    def as_array(self) -> np.ndarray:
        return np.array([self.width, self.depth, self.height], dtype=float)

    def wall_distance(self, point) -> float:
        """Distance from ``point`` to the closest of the six surfaces
        (negative when outside)."""
        p = np.asarray(point, dtype=float)
        dims = self.as_array()
        return float(np.min(np.concatenate([p, dims - p])))

    def contains(self, point, margin: float = 0.0) -> bool:
        return self.wall_distance(point) > margin


@dataclass(frozen=True)
class ReceiverPose:
    position: tuple
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        if len(self.position) != 3:
            raise GeometryError("receiver position must be a 3D point")

    @property
    def height(self) -> float:
        return self.position[2]

    def axes(self) -> np.ndarray:
        """Rows are the receiver's forward, left and up unit vectors in the
        room frame."""
        s, c = np.sin(self.yaw), np.cos(self.yaw)
        return np.array([[-s, c, 0.0], [-c, -s, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class SourcePose:
    position: tuple
    azimuth: float
    elevation: float
    distance: float

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))

    @property
    def spherical(self) -> tuple:
        return (self.azimuth, self.elevation, self.distance)


@dataclass
class SphericalGridSpec:
    """Spherical source grid around a receiver.

    ``equator_offset`` and ``azimuth_offsets`` are drawn from ``rng_seed``
    (independently for every radius) when left as ``None``.
    """

    radii: Sequence[float] = (1.0, 1.5, 2.0, 3.0, 4.0, 6.0)
    angular_step: float = 9.0
    equator_offset: Optional[float] = None
    azimuth_offsets: Optional[Sequence[float]] = None
    rng_seed: int = 0
    clearance: float = SOURCE_CLEARANCE

    def __post_init__(self):
        if not self.angular_step > 0:
            raise GeometryError("angular_step must be positive")
        half = self.angular_step / 2.0
        offsets = [] if self.equator_offset is None else [self.equator_offset]
        offsets += list(self.azimuth_offsets or [])
        if any(abs(o) > half + 1e-12 for o in offsets):
            raise GeometryError(f"grid offsets must lie within +/-{half} degrees")
        if any(r <= 0 for r in self.radii):
            raise GeometryError("grid radii must be positive")


def wrap_degrees(angle):
    """Wrap angles in degrees to ``[-180, 180)``."""
    return (np.asarray(angle, dtype=float) + 180.0) % 360.0 - 180.0


def spherical_to_cartesian(rel, receiver: ReceiverPose) -> np.ndarray:
    """Room-frame point for a receiver-relative ``(az, el, r)`` triple."""
    az, el, r = (float(v) for v in rel)
    if not r > 0:
        raise GeometryError("distance must be positive")
    a, e = np.radians(az), np.radians(el)
    local = r * np.array([np.cos(e) * np.cos(a), np.cos(e) * np.sin(a), np.sin(e)])
    return np.asarray(receiver.position) + local @ receiver.axes()


def cartesian_to_spherical(point, receiver: ReceiverPose) -> tuple:
    """Receiver-relative ``(az, el, r)`` of a room-frame point."""
    d = np.asarray(point, dtype=float) - np.asarray(receiver.position)
    r = float(np.linalg.norm(d))
    if r == 0.0:
        raise GeometryError("zero distance between point and receiver")
    fwd, left, up = receiver.axes() @ d
    el = float(np.degrees(np.arcsin(np.clip(up / r, -1.0, 1.0))))
    horiz = np.hypot(fwd, left)
    az = 0.0 if horiz <= 1e-12 * r else float(np.degrees(np.arctan2(left, fwd)))
    return float(wrap_degrees(az)), el, r


def directions_to_spherical(vectors, receiver: ReceiverPose):
    """Vectorised azimuth/elevation (degrees) of room-frame direction vectors."""
    v = np.atleast_2d(np.asarray(vectors, dtype=float)) @ receiver.axes().T
    r = np.linalg.norm(v, axis=1)
    el = np.degrees(np.arcsin(np.clip(v[:, 2] / r, -1.0, 1.0)))
    az = wrap_degrees(np.degrees(np.arctan2(v[:, 1], v[:, 0])))
    return az, el, r


def training_receiver_positions(room: RoomDimensions) -> list:
    """The nine fixed receiver poses of a training room.

    R1-R4 sit in the corners and R5-R8 near the wall midpoints, all 0.5 m from
    their nearest wall(s); R5-R8 are shifted by 10% of the wall length and R9
    sits near the centre, shifted by (+5%, -5%) of (width, depth), so that no
    configuration is perfectly symmetric.
    """
    w, d, h = room.width, room.depth, room.height
    if min(w, d) <= 2 * WALL_CLEARANCE or h <= RECEIVER_HEIGHT:
        raise GeometryError(f"room {w}x{d}x{h} m too small for the receiver layout")
    m = WALL_CLEARANCE
    xy = [
        (m, m),
        (w - m, m),
        (w - m, d - m),
        (m, d - m),
        (0.6 * w, m),
        (w - m, 0.6 * d),
        (0.6 * w, d - m),
        (m, 0.6 * d),
        (0.55 * w, 0.45 * d),
    ]
    return [ReceiverPose((x, y, RECEIVER_HEIGHT), 0.0) for x, y in xy]


def _elevation_lines(step: float, offset: float) -> np.ndarray:
    n = int(np.floor((90.0 - offset) / step + 1e-9))
    m = int(np.floor((90.0 + offset) / step + 1e-9))
    return offset + step * np.arange(-m, n + 1)


def _sphere_directions(step, equator_offset, line_offsets):
    """Yield ``(line, az, el)`` for one sphere; ``line_offsets`` maps a line
    index to its first-azimuth offset."""
    n_az = int(round(360.0 / step))
    for j, el in enumerate(_elevation_lines(step, equator_offset)):
        if abs(abs(el) - 90.0) < 1e-9:
            yield j, 0.0, float(np.sign(el) * 90.0)
            continue
        off = line_offsets(j)
        for i in range(n_az):
            yield j, float(wrap_degrees(off + i * step)), float(el)


def spherical_source_grid(spec: SphericalGridSpec, receiver: ReceiverPose,
                          room: RoomDimensions, return_index: bool = False):
    """Sources on spheres centred on ``receiver``.

    Sources outside the room or closer than ``spec.clearance`` to a surface
    are dropped. With ``return_index`` the grid coordinates
    ``(radius index, line index, azimuth index)`` of each kept source are
    returned alongside.
    """
    rng = np.random.default_rng(spec.rng_seed)
    half = spec.angular_step / 2.0
    step = spec.angular_step
    sources, index = [], []
    for ri, radius in enumerate(spec.radii):
        # draws happen for every radius so seeds stay aligned across rooms
        eq = rng.uniform(-half, half) if spec.equator_offset is None else spec.equator_offset
        lines = _elevation_lines(step, eq)
        drawn = rng.uniform(-half, half, size=len(lines))
        given = spec.azimuth_offsets

        def line_offset(j):
            if given is None:
                return drawn[j]
            return given[j % len(given)] if len(given) else 0.0

        counters = {}
        for j, az, el in _sphere_directions(step, eq, line_offset):
            k = counters.get(j, 0)
            counters[j] = k + 1
            pos = spherical_to_cartesian((az, el, radius), receiver)
            if room.wall_distance(pos) < spec.clearance:
                continue
            sources.append(SourcePose(pos, az, el, float(radius)))
            index.append((ri, j, k))
    if return_index:
        return sources, index
    return sources


def random_pose_pair(room: RoomDimensions, margin: float = SOURCE_CLEARANCE,
                     fix_yaw: bool = True, rng=None):
    """Uniformly random receiver and source inside the margin-shrunk room.

    The receiver height is pinned to 1.7 m.
    """
    if margin < 0:
        raise GeometryError("margin must be non-negative")
    dims = room.as_array()
    if np.any(dims - 2 * margin <= 0) or not (margin <= RECEIVER_HEIGHT <= room.height - margin):
        raise GeometryError(f"margin {margin} m infeasible for room {tuple(dims)}")
    rng = np.random.default_rng(rng)
    rx, ry = rng.uniform(margin, dims[:2] - margin)
    yaw = 0.0 if fix_yaw else float(rng.uniform(0.0, 2 * np.pi))
    receiver = ReceiverPose((rx, ry, RECEIVER_HEIGHT), yaw)
    while True:
        src = rng.uniform(margin, dims - margin)
        if np.linalg.norm(src - receiver.position) > 1e-6:
            break
    az, el, r = cartesian_to_spherical(src, receiver)
    return receiver, SourcePose(src, az, el, r)
