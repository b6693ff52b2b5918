"""Acceptance criteria, one PASS/FAIL line each (see the terminal summary).

The method-ordering run simulates about 4,700 BRIRs and takes roughly a
quarter of an hour on one core.
"""
import io
import time

import numpy as np
import pytest

from oracles import PlantedAffine, exponential_noise, mirror_lattice, rmse
from vast.analysis import brir_rt60, estimate_rt60, schroeder_decay
from vast.cli import main
from vast.dataset import archive_digest
from vast.experiment import PipelineConfig, run_pipeline
from vast.features import estimate_tdoa
from vast.hrtf import synthetic_spherical_head_hrtf
from vast.localization import EmConfig, fit_affine_tdoa, predict_gllim, train_gllim, wrap_angle
from vast.materials import builtin_catalog
from vast.scene import ReceiverPose, RoomDimensions, SourcePose, spherical_to_cartesian
from vast.simulator import SimulationConfig, image_sources, simulate_brir

CAT = builtin_catalog()
HEAD = synthetic_spherical_head_hrtf()


def test_rt60_oracle(criterion):
    t0 = time.perf_counter()
    errs = []
    for tau in (0.02, 0.05, 0.1):
        rt = estimate_rt60(schroeder_decay(exponential_noise(tau), 44100))
        errs.append(abs(rt / (6.9078 * tau) - 1))
    dt = time.perf_counter() - t0
    ok = max(errs) <= 0.05 and dt < 1.0
    assert criterion("RT60 oracle", ok, f"max relative error {100 * max(errs):.2f}% "
                     f"(limit 5%), {dt:.2f} s")


def test_image_sources_vs_brute_force(criterion):
    t0 = time.perf_counter()
    dims = RoomDimensions(1.0, 1.0, 1.0)
    rng = np.random.default_rng(0)
    ok, n_checked = True, 0
    for src in rng.uniform(0.05, 0.95, (20, 3)):
        ims = image_sources(dims, src, max_order=3)
        got = {tuple(np.round(p, 9)): (int(o), tuple(h))
               for p, o, h in zip(ims.positions, ims.orders, ims.wall_hits)}
        oracle = {k: v[:2] for k, v in mirror_lattice(dims.as_array(), src, 3).items()}
        ok &= got == oracle and len(got) == len(ims)
        ok &= list(np.bincount(ims.orders, minlength=4)) == [1, 6, 18, 38]
        n_checked += 1
    dt = time.perf_counter() - t0
    ok &= dt < 10
    assert criterion("Image-source correctness", ok,
                     f"{n_checked} source positions, orders <= 3 match exactly, {dt:.1f} s")


def test_catalog_rt60_range(criterion):
    t0 = time.perf_counter()
    cfg = SimulationConfig(ray_count=3000, time_budget=1.0)
    rts = {}
    for n in range(1, 17):
        room = CAT.room(n)
        d = room.dimensions
        rcv = ReceiverPose((d.width / 2 - 0.3, d.depth / 2 - 0.4, 1.7))
        pos = spherical_to_cartesian((30.0, 0.0, 1.5), rcv)
        rts[n] = brir_rt60(simulate_brir(room, rcv, SourcePose(pos, 30.0, 0.0, 1.5), HEAD, cfg))
    dt = time.perf_counter() - t0
    lo, hi = min(rts.values()), max(rts.values())
    ok = 0.05 <= lo and hi <= 0.6 and dt < 600
    assert criterion("Catalog RT60 range", ok,
                     f"broadband RT60 {lo:.3f}-{hi:.3f} s over 16 rooms (limit [0.05, 0.6]), "
                     f"{dt:.0f} s")


def _tdoa_sweep(room, receiver, azimuths, dist, cfg):
    out = []
    for az in azimuths:
        p = spherical_to_cartesian((az, 0.0, dist), receiver)
        b = simulate_brir(room, receiver, SourcePose(p, az, 0.0, dist), HEAD, cfg,
                          seed=int(az) + 100)
        out.append(estimate_tdoa(b).delay)
    return np.array(out)


def test_tdoa_linearity_and_wall_outliers(criterion):
    t0 = time.perf_counter()
    cfg = SimulationConfig(time_budget=0.1, ray_count=2000)
    az = np.arange(-90.0, 91.0, 2.0)
    clean = _tdoa_sweep(CAT.room(0), ReceiverPose((5.0, 5.0, 1.7)), az, 1.5, cfg)
    r = np.corrcoef(clean, az)[0, 1]
    line = fit_affine_tdoa(np.column_stack([clean, az]))
    expected = (az - line.intercept) / line.slope  # anechoic line, in samples
    # receiver 0.5 m in front of the south wall of room 1, facing away from it
    wall = _tdoa_sweep(CAT.room(1), ReceiverPose((4.5, 0.5, 1.7)), az, 1.5, cfg)
    frac = float(np.mean(np.abs(wall - expected) > 3))
    dt = time.perf_counter() - t0
    ok = abs(r) > 0.99 and frac >= 0.05 and dt < 300
    assert criterion("TDOA linearity", ok,
                     f"anechoic |r| = {abs(r):.4f} (limit 0.99); near-wall points off the line "
                     f"by > 3 samples: {100 * frac:.1f}% (limit 5%), {dt:.0f} s")


def test_gllim_sanity(criterion):
    t0 = time.perf_counter()
    p = PlantedAffine(D=50, noise=0.5, seed=1)
    X, Y = p.draw(2000)
    Xt, Yt = p.draw(2000)
    model = train_gllim(Y, X, 1, seed=0)
    pred, _ = predict_gllim(model, Yt)
    ratio = rmse(pred, Xt) / rmse(p.posterior_mean(Yt), Xt)
    runs = [model]
    # more runs for the monotonicity check: mixtures and periodic entries
    runs.append(train_gllim(Y, X, 4, seed=1))
    per = np.zeros(50, dtype=bool)
    per[25:] = True
    Yw = Y.copy()
    Yw[:, per] = wrap_angle(3 * Y[:, per])
    for cov in ("diagonal", "tied"):
        runs.append(train_gllim(Yw, X, 3, EmConfig(covariance=cov), seed=2, periodic=per))
    drops = [float(np.min(np.diff(m.log_likelihood), initial=0.0)) for m in runs]
    dt = time.perf_counter() - t0
    ok = np.all(ratio <= 1.5) and min(drops) >= -1e-8 and dt < 60
    assert criterion("GLLiM sanity", ok,
                     f"RMSE / noise floor = {np.round(ratio, 3).tolist()} (limit 1.5); "
                     f"largest log-likelihood drop over {len(runs)} runs {min(drops):.1e}, "
                     f"{dt:.0f} s")


@pytest.fixture(scope="module")
def desk_scale(tmp_path_factory):
    t0 = time.perf_counter()
    cfg = PipelineConfig(simulation=SimulationConfig(ray_count=2000))
    report = run_pipeline(tmp_path_factory.mktemp("pipeline"), cfg, HEAD, log=None)
    return report, time.perf_counter() - t0


def _fmt(s):
    return f"{s['mean']:.2f} ± {s['std']:.2f} ({s['outlier_pct']:.1f}%)"


def test_method_ordering(criterion, desk_scale):
    report, dt = desk_scale
    res = report["results"]["test-1"]
    vast = res["gllim-vast"]["azimuth"]
    others = {m: res[m]["azimuth"] for m in ("tdoa", "gllim-anechoic")}
    better = {m: vast["outlier_pct"] < s["outlier_pct"] and vast["mean"] < s["mean"]
              for m, s in others.items()}
    n = report["n_train"]["vast"]
    ok = all(better.values()) and dt < 3600
    criterion("Method ordering", ok,
              f"GLLiM-VAST {_fmt(vast)} vs TDOA {_fmt(others['tdoa'])} vs GLLiM-anechoic "
              f"{_fmt(others['gllim-anechoic'])}; {n} frontal training records, "
              f"K={report['k_vast']}, {dt:.0f} s")
    assert ok


def test_elevation_distance(criterion, desk_scale):
    report, _ = desk_scale
    res = report["results"]["test-1"]["gllim-vast"]
    el, dist = res["elevation"], res["distance"]
    ok = el["mean"] <= 10.0 and dist["mean"] <= 0.6
    assert criterion("Elevation/distance feasibility", ok,
                     f"elevation {_fmt(el)} (limit 10°), distance {_fmt(dist)} (limit 0.6 m)")


def test_pipeline_determinism(criterion, tmp_path):
    t0 = time.perf_counter()
    conf = tmp_path / "fast.yaml"
    conf.write_text("simulation:\n  ray_count: 1000\ngrid:\n  radii: [1.0, 2.0]\n"
                    "  angular_step: 45.0\n")
    digests = {}
    for kind in ("training", "test-1", "test-4"):
        for workers in (1, 3):
            out = tmp_path / f"{kind}-{workers}"
            argv = ["generate", "--config", str(conf), "--seed", "17", "--workers",
                    str(workers), "--out", str(out)]
            if kind == "training":
                argv += ["--rooms", "2,10"]
            else:
                argv += ["--test-set", kind[-1], "--count", "40"]
            assert main(argv, io.StringIO()) == 0
            digests.setdefault(kind, set()).add(archive_digest(out))
    dt = time.perf_counter() - t0
    ok = all(len(d) == 1 for d in digests.values()) and dt < 300
    assert criterion("Pipeline determinism", ok,
                     f"training, test-1 and test-4 archives byte-identical for 1 and 3 "
                     f"workers: {ok}, {dt:.0f} s")
