import csv
import io
import json

import numpy as np
import pytest
from scipy import stats
from scipy.io import wavfile

from vast.dataset import (DatasetError, Dataset, archive_digest, decode_record, encode_record,
                          export_dataset, frontal_filter, generate_pose_set, generate_test_set,
                          generate_training_set, import_external_brirs, random_pose_jobs,
                          training_jobs)
from vast.materials import builtin_catalog
from vast.scene import (ReceiverPose, RoomDimensions, SphericalGridSpec, spherical_source_grid,
                        training_receiver_positions)
from vast.simulator import SimulationConfig

CAT = builtin_catalog()
FAST = SimulationConfig(time_budget=0.25, ray_count=300)


def test_record_roundtrip():
    x = np.random.default_rng(0).standard_normal((2, 300)) * 0.01
    data, fs, crop = decode_record(encode_record(x, 44100, 250))
    assert (fs, crop) == (44100, 250)
    scale = np.abs(x).max()
    # binary16 keeps 11 significant bits of the peak-normalized samples
    assert np.abs(data - x).max() <= scale * 2.0 ** -11
    with pytest.raises(DatasetError):
        decode_record(encode_record(x, 44100)[:-2])
    with pytest.raises(DatasetError):
        encode_record(np.full((2, 3), np.inf), 44100)


def _oracle_count(room, spec):
    # same grid, laid around a receiver in an unbounded (100 m) room, then
    # filtered by hand
    shift = np.array([50.0, 50.0, 50.0])
    huge = RoomDimensions(100.0, 100.0, 100.0)
    n = 0
    for rcv in training_receiver_positions(room):
        moved = ReceiverPose(tuple(np.asarray(rcv.position) + shift), rcv.yaw)
        for s in spherical_source_grid(spec, moved, huge):
            n += room.wall_distance(np.asarray(s.position) - shift) >= spec.clearance
    return n


def test_training_count_matches_geometry():
    spec = SphericalGridSpec(radii=(1.0, 2.0), angular_step=36.0, rng_seed=5)
    rooms = [CAT.room(1), CAT.room(9)]
    jobs = training_jobs(rooms, spec, seed=5)
    assert len(jobs) == sum(_oracle_count(r.dimensions, spec) for r in rooms)
    assert len({j.seed for j in jobs}) == len(jobs)


@pytest.fixture(scope="module")
def small_training(tmp_path_factory):
    spec = SphericalGridSpec(radii=(1.0,), angular_step=72.0, rng_seed=2)
    out = tmp_path_factory.mktemp("ds") / "train"
    log = io.StringIO()
    ds = generate_training_set(out, [12], spec, FAST, seed=2, log=log)
    return ds, spec, log.getvalue()


def test_training_manifest(small_training):
    ds, spec, log = small_training
    assert len(ds) == len(training_jobs([CAT.room(12)], spec, 2)) > 0
    assert ds.verify()
    m = ds.manifest
    assert m["schema"] == "vast-dataset/1" and list(m["blobs"]) == ["room_12.bin"]
    assert m["rooms"]["12"]["walls"] == ["Thin Plywood Paneling"] * 4
    events = [json.loads(line) for line in log.splitlines()]
    assert events[-1] == {"event": "summary", "name": "training", "records": len(ds), "skipped": 0}
    b = ds.brir(0)
    assert b.data.shape[0] == 2 and b.sample_rate == 44100
    rec = ds.records[0]
    assert len(b) == rec["length"] // 4 - 7  # 28-byte header, 2 x binary16 per sample
    assert ds.targets().shape == (len(ds), 3)


def test_existing_output_refused(small_training):
    ds, spec, _ = small_training
    with pytest.raises(DatasetError, match="already holds"):
        generate_training_set(ds.root, [12], spec, FAST, seed=2, log=None)


def test_corruption_detected(small_training, tmp_path):
    ds, _, _ = small_training
    import shutil
    copy = tmp_path / "copy"
    shutil.copytree(ds.root, copy)
    blob = copy / "room_12.bin"
    raw = bytearray(blob.read_bytes())
    raw[40] ^= 0xFF
    blob.write_bytes(bytes(raw))
    with pytest.raises(DatasetError, match="digest"):
        Dataset.open(copy).verify()


def test_workers_do_not_change_bytes(tmp_path):
    a = generate_test_set(tmp_path / "a", 3, 6, FAST, seed=7, workers=1, log=None)
    b = generate_test_set(tmp_path / "b", 3, 6, FAST, seed=7, workers=2, log=None)
    assert archive_digest(a.root) == archive_digest(b.root)
    c = generate_test_set(tmp_path / "c", 3, 6, FAST, seed=8, workers=1, log=None)
    assert archive_digest(c.root) != archive_digest(a.root)


def test_kind_1_poses():
    jobs = random_pose_jobs(1, 64, CAT, seed=3)
    assert {j.receiver.yaw for j in jobs} == {0.0}
    assert {j.receiver.height for j in jobs} == {1.7}
    assert sorted({int(j.key) for j in jobs}) == list(range(1, 17))


def test_kind_2_yaw_uniform():
    yaws = [j.receiver.yaw for j in random_pose_jobs(2, 2000, CAT, seed=4)]
    assert stats.kstest(yaws, stats.uniform(0, 2 * np.pi).cdf).pvalue > 0.01


def test_kind_3_random_rooms():
    for j in random_pose_jobs(3, 300, CAT, seed=5):
        d = j.room.dimensions
        assert 3 <= d.width <= 10 and 3 <= d.depth <= 10 and 2 <= d.height <= 4
        assert j.room.number is None and j.receiver.yaw == 0.0
    with pytest.raises(DatasetError):
        random_pose_jobs(5, 1, CAT, 0)


def test_accept_rejection_sampling():
    jobs = random_pose_jobs(1, 50, CAT, seed=6, rooms=(1, 9), accept=frontal_filter())
    assert len(jobs) == 50 and all(frontal_filter()(j.source) for j in jobs)
    assert {j.key for j in jobs} == {"1", "9"}


def _pose_dicts(jobs):
    return [{"source": {"azimuth": j.source.azimuth, "elevation": j.source.elevation,
                        "distance": j.source.distance}} for j in jobs]


def test_filters():
    room = RoomDimensions(100.0, 100.0, 100.0)
    rcv = ReceiverPose((50.0, 50.0, 50.0))
    spec = SphericalGridSpec(radii=(1.0, 1.5, 2.0, 3.0), angular_step=9.0, rng_seed=0)
    grid = spherical_source_grid(spec, rcv, room)
    kept = [s for s in grid if frontal_filter()(s)]
    assert 0.2 < len(kept) / len(grid) < 0.3  # about (180/360)(90/180)
    full = spherical_source_grid(SphericalGridSpec(rng_seed=0), rcv, room)
    near = [s for s in full if frontal_filter((-180, 180), (-90, 90), (1, 3))(s)]
    assert {s.distance for s in near} == {1.0, 1.5, 2.0, 3.0}


def test_dataset_filter_views(small_training):
    ds, _, err = small_training
    assert ds.filter(lambda r: True).records == ds.records
    sink = io.StringIO()
    assert len(ds.filter(lambda r: False, warn=sink)) == 0
    assert "no records" in sink.getvalue()


def test_pose_set_and_export_import(tmp_path):
    rcv = ReceiverPose((5.0, 5.0, 1.7))
    poses = [(a, 0.0, 2.0) for a in (-60.0, 0.0, 45.0)]
    ds = generate_pose_set(tmp_path / "an", 0, rcv, poses, FAST, log=None)
    assert ds.records[0]["rt60"] < 0.01  # anechoic: only the head response decays
    out = export_dataset(ds, tmp_path / "wav")
    back = import_external_brirs(out, tmp_path / "imp", log=None)
    assert len(back) == 3
    np.testing.assert_allclose(back.targets(), ds.targets())
    for i in range(3):
        a, b = ds.brir(i).data, back.brir(i).data
        assert np.abs(a - b).max() <= np.abs(a).max() * 2.0 ** -10


def test_import_auditorium_layout(tmp_path):
    src = tmp_path / "aud"
    src.mkdir()
    ir = np.zeros((64, 2), dtype=np.float32)
    ir[3, 0], ir[5, 1] = 1.0, 0.5
    wavfile.write(src / "ir.wav", 44100, ir)
    rows = [("ir.wav", -y, 0.0, d, np.radians(y), "auditorium-3")
            for d in (1.5, 2.0, 3.0) for y in range(-90, 91)]
    rows.append(("missing.wav", 0.0, 0.0, 1.0, 0.0, "auditorium-3"))
    rows.append(("ir.wav", "", 0.0, 1.0, 0.0, "auditorium-3"))
    with open(src / "poses.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["file", "azimuth", "elevation", "distance", "yaw", "room"])
        w.writerows(rows)
    log = io.StringIO()
    ds = import_external_brirs(src, tmp_path / "out", log=log)
    assert len(ds) == 543
    reasons = [s["reason"] for s in ds.manifest["skipped"]]
    assert len(reasons) == 2 and "not found" in reasons[0] and "azimuth" in reasons[1]
    assert ds.verify() and list(ds.manifest["rooms"]) == ["auditorium-3"]
    with pytest.raises(DatasetError):
        import_external_brirs(tmp_path / "nowhere", tmp_path / "x", log=None)
