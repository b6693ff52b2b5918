"""
Dataset generation and the on-disk container.

A dataset is a directory holding ``manifest.json`` and packed binary blobs
(one per catalog room, one shared blob for randomly drawn rooms). Each
record is addressed by (blob, offset, length) and encodes one cropped BRIR:

    offset  size  field (little-endian)
    0       4     magic b"BRIR"
    4       2     record version (uint16, 1)
    6       2     channel count (uint16, 2)
    8       4     samples per channel (uint32)
    12      4     sample rate in Hz (uint32)
    16      4     crop length in samples (uint32)
    20      8     scale (float64); samples are stored divided by it
    28      ...   channels * samples IEEE binary16, channel-major

The scale is the peak absolute value, so stored samples lie in [-1, 1] and
decode as ``float16 * scale``.

The manifest (``vast-dataset/1``) carries the simulation configuration, the
HRTF and catalog hashes, the global seed, one entry per room and one entry
per record with its poses, seed, blob location and the RT60 used for
cropping. Blob SHA-256 digests allow verification. Generation is
deterministic: the bytes depend only on the seed, configuration, catalog
and HRTF, never on the worker count.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import shutil
import struct
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.io import wavfile

from .analysis import DecayError, brir_rt60, crop_brir, crop_length
from .hrtf import HrtfSet, synthetic_spherical_head_hrtf
from .materials import Catalog, RoomConfig, builtin_catalog
from .scene import (RECEIVER_HEIGHT, ReceiverPose, RoomDimensions, SourcePose,
                    SphericalGridSpec, random_pose_pair,
                    spherical_source_grid, spherical_to_cartesian,
                    training_receiver_positions)
from .simulator import Brir, SimulationConfig, simulate_brir

MANIFEST_SCHEMA = "vast-dataset/1"
MANIFEST_NAME = "manifest.json"
RECORD_MAGIC = b"BRIR"
RECORD_VERSION = 1
_RECORD_HEADER = struct.Struct("<4sHHIIId")
CROP_MARGIN = 0.030
RANDOM_WALL_RANGE = (3.0, 10.0)
RANDOM_HEIGHT_RANGE = (2.0, 4.0)


class DatasetError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# record codec

def encode_record(data, sample_rate: int, crop: Optional[int] = None) -> bytes:
    x = np.asarray(data, dtype=float)
    if x.ndim != 2:
        raise DatasetError("record data must be (channels, samples)")
    if not np.all(np.isfinite(x)):
        raise DatasetError("record data must be finite")
    scale = float(np.abs(x).max()) if x.size else 0.0
    norm = x / scale if scale > 0 else np.zeros_like(x)
    crop = x.shape[1] if crop is None else int(crop)
    header = _RECORD_HEADER.pack(RECORD_MAGIC, RECORD_VERSION, x.shape[0], x.shape[1],
                                 int(sample_rate), crop, scale)
    return header + norm.astype("<f2").tobytes()


def decode_record(raw: bytes):
    """Returns ``(data (channels, samples), sample_rate, crop)``."""
    if len(raw) < _RECORD_HEADER.size:
        raise DatasetError("truncated record header")
    magic, version, ch, n, fs, crop, scale = _RECORD_HEADER.unpack_from(raw)
    if magic != RECORD_MAGIC or version != RECORD_VERSION:
        raise DatasetError(f"bad record magic/version {magic!r}/{version}")
    if len(raw) != _RECORD_HEADER.size + 2 * ch * n:
        raise DatasetError("record length does not match header")
    x = np.frombuffer(raw, dtype="<f2", offset=_RECORD_HEADER.size).reshape(ch, n)
    return x.astype(float) * scale, fs, crop


# --------------------------------------------------------------------------
# jobs

@dataclass(frozen=True)
class Job:
    key: str  # room key in the manifest
    room: RoomConfig
    receiver: ReceiverPose
    source: SourcePose
    seed: int
    receiver_index: Optional[int] = None
    extra: tuple = ()  # (name, value) pairs copied into the record entry


def record_seed(*parts) -> int:
    """Per-record simulation seed from the global seed and record coordinates."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


_WORKER = {}


def _init_worker(hrtf, cfg, margin):
    _WORKER.update(hrtf=hrtf, cfg=cfg, margin=margin)


def _crop(brir: Brir, margin: float):
    """Crop at the broadband RT60 plus margin. Responses without a measurable
    decay are cropped after their last non-zero sample plus margin."""
    try:
        rt60 = brir_rt60(brir)
    except DecayError:
        rt60 = None
    if rt60 is None or rt60 <= 0:
        energy = (brir.data ** 2).sum(axis=0)
        last = int(np.flatnonzero(energy > energy.max() * 1e-12)[-1]) if energy.max() > 0 else 0
        n = min(len(brir), last + 1 + crop_length(0.0, brir.sample_rate, margin))
        return Brir(brir.data[:, :n].copy(), brir.sample_rate, dict(brir.annotation)), None, n
    cropped = crop_brir(brir, rt60, margin)
    return cropped, float(rt60), crop_length(rt60, brir.sample_rate, margin)


def _run_job(job: Job):
    try:
        brir = simulate_brir(job.room, job.receiver, job.source, _WORKER["hrtf"],
                             _WORKER["cfg"], seed=job.seed)
        cropped, rt60, n = _crop(brir, _WORKER["margin"])
        return encode_record(cropped.data, cropped.sample_rate, n), rt60, brir.annotation["n_images"], None
    except Exception as exc:  # logged and skipped by the writer
        return None, None, None, f"{type(exc).__name__}: {exc}"


def _log(stream, **event):
    if stream is not None:
        stream.write(json.dumps(event, sort_keys=True) + "\n")
        stream.flush()


def _pose_entry(job: Job) -> dict:
    r, s = job.receiver, job.source
    return {
        "receiver": {"index": job.receiver_index, "position": list(r.position), "yaw": r.yaw},
        "source": {"position": list(s.position), "azimuth": s.azimuth,
                   "elevation": s.elevation, "distance": s.distance},
    }


def _blob_name(key: str) -> str:
    return f"room_{int(key):02d}.bin" if key.isdigit() else "random.bin"


def _preflight(out_dir: Path, n_jobs: int, cfg: SimulationConfig):
    worst = n_jobs * (_RECORD_HEADER.size + 2 * 2 * cfg.n_samples)
    free = shutil.disk_usage(out_dir).free
    if worst > free:
        raise DatasetError(f"insufficient disk space: need up to {worst} bytes, {free} free")


def _write_dataset(out_dir, name: str, jobs: Sequence[Job], cfg: SimulationConfig,
                   hrtf: HrtfSet, catalog: Catalog, seed: int, workers: int,
                   margin: float, extra: dict, log) -> "Dataset":
    out_dir = Path(out_dir)
    if (out_dir / MANIFEST_NAME).exists():
        raise DatasetError(f"{out_dir} already holds a dataset; choose a new directory")
    out_dir.mkdir(parents=True, exist_ok=True)
    _preflight(out_dir, len(jobs), cfg)
    rooms = {}
    for job in jobs:
        rooms.setdefault(job.key, job.room.to_dict())
    blobs, handles, offsets = {}, {}, {}
    records, skipped = [], []
    total = len(jobs)
    every = max(1, total // 20)

    def results():
        if workers <= 1:
            _init_worker(hrtf, cfg, margin)
            for job in jobs:
                yield _run_job(job)
            return
        chunk = max(1, min(32, total // (4 * workers) or 1))
        with ProcessPoolExecutor(workers, initializer=_init_worker,
                                 initargs=(hrtf, cfg, margin)) as pool:
            yield from pool.map(_run_job, jobs, chunksize=chunk)

    try:
        # results arrive in job order whatever the worker count
        for i, (job, (raw, rt60, n_images, err)) in enumerate(zip(jobs, results())):
            if err is not None:
                skipped.append({"job": i, "room": job.key, "reason": err})
                _log(log, event="skip", job=i, room=job.key, reason=err)
            else:
                blob = _blob_name(job.key)
                if blob not in handles:
                    handles[blob] = open(out_dir / blob, "wb")
                    offsets[blob] = 0
                    blobs[blob] = hashlib.sha256()
                handles[blob].write(raw)
                blobs[blob].update(raw)
                entry = {"id": len(records), "job": i, "room": job.key, "blob": blob,
                         "offset": offsets[blob], "length": len(raw), "seed": job.seed,
                         "rt60": rt60, "n_images": n_images}
                entry.update(_pose_entry(job))
                entry.update(dict(job.extra))
                records.append(entry)
                offsets[blob] += len(raw)
            if (i + 1) % every == 0 or i + 1 == total:
                _log(log, event="progress", done=i + 1, total=total, written=len(records))
    finally:
        for fh in handles.values():
            fh.close()
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "name": name,
        "receiver": {"hrtf_hash": hrtf.digest(), "height": RECEIVER_HEIGHT},
        "catalog_hash": catalog.digest,
        "simulation": cfg.to_dict(),
        "config_hash": cfg.digest(),
        "seed": int(seed),
        "crop_margin": margin,
        "generator": extra,
        "rooms": rooms,
        "blobs": {b: {"sha256": h.hexdigest(), "size": offsets[b]} for b, h in sorted(blobs.items())},
        "records": records,
        "skipped": skipped,
    }
    (out_dir / MANIFEST_NAME).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    _log(log, event="summary", name=name, records=len(records), skipped=len(skipped))
    return Dataset.open(out_dir)


def _resolve(hrtf, catalog, cfg):
    return (hrtf if hrtf is not None else synthetic_spherical_head_hrtf(),
            catalog if catalog is not None else builtin_catalog(),
            cfg if cfg is not None else SimulationConfig())


def training_jobs(rooms: Sequence[RoomConfig], grid: SphericalGridSpec, seed: int) -> list:
    jobs = []
    for room in rooms:
        for ri, receiver in enumerate(training_receiver_positions(room.dimensions)):
            sources, index = spherical_source_grid(grid, receiver, room.dimensions, True)
            for si, (src, idx) in enumerate(zip(sources, index)):
                jobs.append(Job(str(room.number), room, receiver, src,
                                record_seed(seed, room.number, ri, si), ri,
                                (("grid_index", list(idx)),)))
    return jobs


def generate_training_set(out_dir, rooms: Sequence, grid: Optional[SphericalGridSpec] = None,
                          cfg: Optional[SimulationConfig] = None, seed: int = 0,
                          workers: int = 1, hrtf: Optional[HrtfSet] = None,
                          catalog: Optional[Catalog] = None, margin: float = CROP_MARGIN,
                          name: str = "training", log=sys.stderr) -> "Dataset":
    """Grid protocol: every room x 9 receivers x spherical source grid."""
    hrtf, catalog, cfg = _resolve(hrtf, catalog, cfg)
    rooms = [catalog.room(r) if not isinstance(r, RoomConfig) else r for r in rooms]
    if not rooms:
        raise DatasetError("no rooms selected")
    grid = grid or SphericalGridSpec(rng_seed=seed)
    jobs = training_jobs(rooms, grid, seed)
    extra = {"kind": "training", "rooms": [r.number for r in rooms],
             "grid": {"radii": list(grid.radii), "angular_step": grid.angular_step,
                      "equator_offset": grid.equator_offset,
                      "azimuth_offsets": None if grid.azimuth_offsets is None
                      else list(grid.azimuth_offsets),
                      "rng_seed": grid.rng_seed, "clearance": grid.clearance}}
    return _write_dataset(out_dir, name, jobs, cfg, hrtf, catalog, seed, workers, margin,
                          extra, log)


def random_room(catalog: Catalog, rng) -> RoomConfig:
    """Random shoebox: wall lengths in [3, 10] m, height in [2, 4] m, each of
    the four walls and the floor drawn from the catalog's wall and floor
    materials; the catalog ceiling is kept."""
    w, d = rng.uniform(*RANDOM_WALL_RANGE, size=2)
    h = rng.uniform(*RANDOM_HEIGHT_RANGE)
    wall_mats = catalog.wall_materials()
    floor_mats = catalog.floor_materials()
    ceiling = catalog.room(1).ceiling
    walls = tuple(wall_mats[i] for i in rng.integers(len(wall_mats), size=4))
    floor = floor_mats[rng.integers(len(floor_mats))]
    return RoomConfig(None, RoomDimensions(float(w), float(d), float(h)), floor, ceiling, walls,
                      "random", size="random")


def frontal_filter(azimuth=(-90.0, 90.0), elevation=(-45.0, 45.0),
                   distance=(1.0, 3.0)) -> Callable:
    """Predicate on record entries (or source poses) keeping frontal,
    moderate-elevation sources within a distance range (inclusive)."""
    def pred(rec) -> bool:
        src = rec["source"] if isinstance(rec, dict) else rec
        az, el, r = ((src["azimuth"], src["elevation"], src["distance"])
                     if isinstance(src, dict) else src.spherical)
        return (azimuth[0] <= az <= azimuth[1] and elevation[0] <= el <= elevation[1]
                and distance[0] <= r <= distance[1])
    return pred


def random_pose_jobs(kind: int, count: int, catalog: Catalog, seed: int, rooms=None,
              accept: Optional[Callable] = None, max_attempts: Optional[int] = None) -> list:
    """Random-pose jobs for test sets 1-4. Catalog rooms (kinds 1, 2) are
    used round-robin; ``accept`` rejects poses before simulation."""
    if kind not in (1, 2, 3, 4):
        raise DatasetError(f"unknown test set kind {kind}")
    if count <= 0:
        raise DatasetError("count must be positive")
    fix_yaw = kind in (1, 3)
    if kind in (1, 2):
        numbers = list(rooms) if rooms else [n for n in sorted(catalog.rooms)
                                              if not catalog.room(n).anechoic]
        pool = [catalog.room(n) for n in numbers]
    max_attempts = max_attempts or 1000 * count
    jobs = []
    attempt = 0
    while len(jobs) < count:
        if attempt >= max_attempts:
            raise DatasetError(f"only {len(jobs)} of {count} poses accepted "
                               f"after {attempt} attempts")
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x7E57, kind, attempt]))
        if kind in (1, 2):
            room = pool[len(jobs) % len(pool)]
            key = str(room.number)
        else:
            room = random_room(catalog, rng)
            key = f"rand-{attempt:06d}"
        receiver, source = random_pose_pair(room.dimensions, fix_yaw=fix_yaw, rng=rng)
        if accept is None or accept(source):
            jobs.append(Job(key, room, receiver, source, record_seed(seed, kind, attempt), None,
                            (("attempt", attempt),)))
        attempt += 1
    return jobs


def generate_test_set(out_dir, kind: int, count: int, cfg: Optional[SimulationConfig] = None,
                      seed: int = 0, workers: int = 1, hrtf: Optional[HrtfSet] = None,
                      catalog: Optional[Catalog] = None, rooms=None,
                      accept: Optional[Callable] = None, margin: float = CROP_MARGIN,
                      name: Optional[str] = None, log=sys.stderr) -> "Dataset":
    """Test set ``kind``: 1 catalog rooms / yaw 0, 2 catalog rooms / random
    yaw, 3 random rooms / yaw 0, 4 random rooms / random yaw."""
    hrtf, catalog, cfg = _resolve(hrtf, catalog, cfg)
    jobs = random_pose_jobs(kind, count, catalog, seed, rooms, accept)
    extra = {"kind": f"test-{kind}", "count": count,
             "rooms": None if rooms is None else [int(r) for r in rooms],
             "filtered": accept is not None}
    return _write_dataset(out_dir, name or f"test-{kind}", jobs, cfg, hrtf, catalog, seed,
                          workers, margin, extra, log)


def generate_pose_set(out_dir, room, receiver: ReceiverPose, spherical: Iterable,
                      cfg: Optional[SimulationConfig] = None, seed: int = 0, workers: int = 1,
                      hrtf: Optional[HrtfSet] = None, catalog: Optional[Catalog] = None,
                      margin: float = CROP_MARGIN, name: str = "poses",
                      log=sys.stderr) -> "Dataset":
    """One record per (azimuth, elevation, distance) around a fixed receiver,
    e.g. the anechoic frontal-azimuth training set."""
    hrtf, catalog, cfg = _resolve(hrtf, catalog, cfg)
    room = catalog.room(room) if not isinstance(room, RoomConfig) else room
    key = str(room.number) if room.number is not None else "custom"
    jobs = []
    for i, (az, el, r) in enumerate(spherical):
        pos = spherical_to_cartesian((az, el, r), receiver)
        jobs.append(Job(key, room, receiver, SourcePose(pos, float(az), float(el), float(r)),
                        record_seed(seed, 0x505, i), 0))
    extra = {"kind": "poses", "room": room.number}
    return _write_dataset(out_dir, name, jobs, cfg, hrtf, catalog, seed, workers, margin,
                          extra, log)


# --------------------------------------------------------------------------
# reading

@dataclass
class Dataset:
    """A dataset directory, or a filtered view of one (shared sample data)."""

    root: Path
    manifest: dict
    records: list = field(default_factory=list)

    @classmethod
    def open(cls, root) -> "Dataset":
        root = Path(root)
        path = root / MANIFEST_NAME
        if not path.exists():
            raise DatasetError(f"no {MANIFEST_NAME} in {root}")
        manifest = json.loads(path.read_text())
        if manifest.get("schema") != MANIFEST_SCHEMA:
            raise DatasetError(f"unsupported manifest schema {manifest.get('schema')!r}")
        return cls(root, manifest, list(manifest["records"]))

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def raw(self, i: int) -> bytes:
        rec = self.records[i]
        with open(self.root / rec["blob"], "rb") as fh:
            fh.seek(rec["offset"])
            return fh.read(rec["length"])

    def brir(self, i: int) -> Brir:
        rec = self.records[i]
        data, fs, crop = decode_record(self.raw(i))
        annotation = {k: v for k, v in rec.items() if k not in ("blob", "offset", "length")}
        annotation["room_config"] = self.manifest["rooms"][rec["room"]]
        annotation["crop_length"] = crop
        return Brir(data, fs, annotation)

    def brirs(self):
        for i in range(len(self)):
            yield self.brir(i)

    def targets(self) -> np.ndarray:
        """(N, 3) azimuth (deg), elevation (deg), distance (m)."""
        return np.array([[r["source"]["azimuth"], r["source"]["elevation"],
                          r["source"]["distance"]] for r in self.records]).reshape(-1, 3)

    def filter(self, predicate: Callable, warn=sys.stderr) -> "Dataset":
        """View of the records whose entry satisfies ``predicate``."""
        kept = [r for r in self.records if predicate(r)]
        if not kept and warn is not None:
            warn.write(json.dumps({"event": "warning", "message": "filter selected no records"}) + "\n")
        return Dataset(self.root, self.manifest, kept)

    def verify(self) -> bool:
        """Check blob digests and that every record lies inside its blob and
        every blob byte belongs to exactly one record."""
        spans = {}
        for rec in self.manifest["records"]:
            spans.setdefault(rec["blob"], []).append((rec["offset"], rec["length"]))
        for blob, info in self.manifest["blobs"].items():
            data = (self.root / blob).read_bytes()
            if len(data) != info["size"] or hashlib.sha256(data).hexdigest() != info["sha256"]:
                raise DatasetError(f"{blob}: size or digest mismatch")
            pos = 0
            for off, length in sorted(spans.get(blob, [])):
                if off != pos:
                    raise DatasetError(f"{blob}: gap or overlap at byte {off}")
                decode_record(data[off:off + length])
                pos = off + length
            if pos != len(data):
                raise DatasetError(f"{blob}: unreferenced trailing bytes")
        if set(spans) - set(self.manifest["blobs"]):
            raise DatasetError("records reference unknown blobs")
        return True


def filter_dataset(dataset: Dataset, predicate: Callable) -> Dataset:
    return dataset.filter(predicate)


def archive_digest(root) -> str:
    """SHA-256 over the manifest and blob files of a dataset directory."""
    root = Path(root)
    h = hashlib.sha256()
    for p in sorted(root.iterdir()):
        if p.name == MANIFEST_NAME or p.suffix == ".bin":
            h.update(p.name.encode())
            h.update(p.read_bytes())
    return h.hexdigest()


# --------------------------------------------------------------------------
# external BRIRs

POSE_COLUMNS = ("file", "azimuth", "elevation", "distance")


def export_dataset(dataset: Dataset, out_dir) -> Path:
    """Write every record as a float32 stereo WAV plus ``poses.csv``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "poses.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(POSE_COLUMNS + ("yaw", "room"))
        for i, rec in enumerate(dataset.records):
            brir = dataset.brir(i)
            name = f"brir_{i:06d}.wav"
            wavfile.write(out_dir / name, brir.sample_rate, brir.data.T.astype(np.float32))
            s = rec["source"]
            writer.writerow([name, repr(s["azimuth"]), repr(s["elevation"]),
                             repr(s["distance"]), repr(rec["receiver"]["yaw"]), rec["room"]])
    return out_dir


def _read_wav(path):
    fs, data = wavfile.read(path)
    if data.dtype.kind == "i":
        data = data / float(np.iinfo(data.dtype).max)
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise DatasetError("expected a two-channel WAV file")
    return fs, data.T


def import_external_brirs(directory, out_dir, descriptor: Optional[dict] = None,
                          name: str = "external", log=sys.stderr) -> Dataset:
    """Wrap recorded BRIRs into the dataset format.

    ``descriptor`` may set ``index`` (CSV file relative to ``directory``,
    default ``poses.csv``) and ``room`` (label used when the index has no
    room column). The index needs the columns ``file, azimuth, elevation,
    distance`` and may add ``yaw`` and ``room``. Rows with a missing file or
    annotation are rejected with a reason; nothing is cropped.
    """
    directory, out_dir = Path(directory), Path(out_dir)
    descriptor = dict(descriptor or {})
    index = directory / descriptor.get("index", "poses.csv")
    if not index.exists():
        raise DatasetError(f"pose index {index} not found")
    if (out_dir / MANIFEST_NAME).exists():
        raise DatasetError(f"{out_dir} already holds a dataset; choose a new directory")
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(index, newline="") as fh:
        rows = list(csv.DictReader(fh))
    records, rejected, rooms = [], [], {}
    blob = "external.bin"
    h = hashlib.sha256()
    offset = 0
    with open(out_dir / blob, "wb") as out:
        for line, row in enumerate(rows, start=2):
            try:
                missing = [c for c in POSE_COLUMNS if not (row.get(c) or "").strip()]
                if missing:
                    raise DatasetError(f"missing annotation {', '.join(missing)}")
                az, el, r = (float(row[c]) for c in POSE_COLUMNS[1:])
                if not all(math.isfinite(v) for v in (az, el, r)) or r <= 0:
                    raise DatasetError("invalid pose values")
                path = directory / row["file"]
                if not path.exists():
                    raise DatasetError(f"file {row['file']} not found")
                fs, data = _read_wav(path)
            except (DatasetError, ValueError) as exc:
                rejected.append({"line": line, "file": row.get("file"), "reason": str(exc)})
                _log(log, event="reject", line=line, file=row.get("file"), reason=str(exc))
                continue
            key = (row.get("room") or descriptor.get("room") or "external").strip()
            rooms.setdefault(key, {"number": None, "label": key})
            raw = encode_record(data, fs)
            out.write(raw)
            h.update(raw)
            yaw = float(row["yaw"]) if (row.get("yaw") or "").strip() else 0.0
            records.append({"id": len(records), "room": key, "blob": blob, "offset": offset,
                            "length": len(raw), "seed": None, "rt60": None,
                            "file": row["file"],
                            "receiver": {"index": None, "position": None, "yaw": yaw},
                            "source": {"position": None, "azimuth": az, "elevation": el,
                                       "distance": r}})
            offset += len(raw)
    manifest = {"schema": MANIFEST_SCHEMA, "name": name,
                "receiver": {"hrtf_hash": None, "height": RECEIVER_HEIGHT},
                "catalog_hash": None, "simulation": None, "config_hash": None, "seed": None,
                "crop_margin": None, "generator": {"kind": "import", "source": str(directory)},
                "rooms": rooms, "blobs": {blob: {"sha256": h.hexdigest(), "size": offset}},
                "records": records, "skipped": rejected}
    (out_dir / MANIFEST_NAME).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return Dataset.open(out_dir)
