"""
Localization comparison: TDOA baseline vs. GLLiM trained on anechoic data
vs. GLLiM trained on simulated reverberant rooms.

The pipeline writes into one output directory::

    anechoic/  training/  test-<k>/     datasets
    features_<set>.f32 / targets_<set>.f32 / tdoa_<set>.tsv
    gllim_anechoic.bin  gllim_vast.bin  models
    table_azimuth.tsv   inlier mean, std and outlier % per test set and method
    table_elev_dist.tsv elevation and distance errors of the GLLiM models
    scatter_<set>.tsv   azimuth vs. TDOA points (plot data)
    report.json         everything above in one machine-readable file
"""
from __future__ import annotations

import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .dataset import (Dataset, frontal_filter, generate_pose_set, generate_test_set,
                      generate_training_set)
from .features import (FEATURE_MAGIC, TARGET_MAGIC, FeatureError, estimate_tdoa,
                       extract_interaural_features, periodic_mask, save_matrix)
from .hrtf import HrtfSet, synthetic_spherical_head_hrtf
from .localization import (EmConfig, evaluate, fit_affine_tdoa, predict_gllim, save_gllim,
                           train_gllim)
from .scene import ReceiverPose, SphericalGridSpec
from .simulator import SimulationConfig

METHODS = ("tdoa", "gllim-anechoic", "gllim-vast")


@dataclass
class PipelineConfig:
    training_rooms: tuple = (3, 4)
    radii: tuple = (1.0, 2.0, 3.0)
    angular_step: float = 18.0
    test_sets: tuple = (1,)
    test_count: int = 500
    test_rooms: Optional[tuple] = None  # None: the training rooms
    anechoic_distance: float = 2.0
    anechoic_step: float = 1.0
    k_anechoic: int = 8
    k_vast: Optional[int] = None  # None: N / 410 clamped to [8, 100]
    feature_window: Optional[int] = None
    feature_lead: Optional[int] = None
    seed: int = 0
    workers: int = 1
    em: EmConfig = field(default_factory=EmConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)

    def k_for(self, n: int) -> int:
        if self.k_vast is not None:
            return int(self.k_vast)
        return int(np.clip(round(n / 410), 8, 100))


def _features_one(args):
    brir, window, lead = args
    try:
        f = extract_interaural_features(brir, window=window, lead=lead)
        return f, estimate_tdoa(brir).delay, None
    except FeatureError as exc:
        return None, None, str(exc)


def dataset_features(ds: Dataset, workers: int = 1, window: Optional[int] = None,
                     lead: Optional[int] = None):
    """Feature matrix, target matrix and TDOAs of every record of ``ds``.

    Records whose features cannot be computed are dropped; the kept record
    indices are returned as well.
    """
    jobs = ((b, window, lead) for b in ds.brirs())
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            out = list(pool.map(_features_one, jobs, chunksize=16))
    else:
        out = [_features_one(j) for j in jobs]
    keep = [i for i, (f, _, _) in enumerate(out) if f is not None]
    F = np.array([out[i][0] for i in keep]).reshape(len(keep), -1)
    tdoa = np.array([out[i][1] for i in keep], dtype=int)
    T = ds.targets()[keep]
    return F, T, tdoa, np.array(keep, dtype=int)


def _log(stream, **event):
    if stream is not None:
        stream.write(json.dumps(event, sort_keys=True) + "\n")
        stream.flush()


def _open_or(path: Path, make):
    if (path / "manifest.json").exists():
        return Dataset.open(path)
    return make(path)


def _write_scatter(path: Path, targets, tdoa, affine):
    with open(path, "w") as fh:
        fh.write("azimuth\televation\tdistance\ttdoa\taffine_line\n")
        for (az, el, r), d in zip(targets, tdoa):
            fh.write(f"{az:.4f}\t{el:.4f}\t{r:.4f}\t{int(d)}\t{affine.predict(d):.4f}\n")


def run_pipeline(out_dir, cfg: Optional[PipelineConfig] = None,
                 hrtf: Optional[HrtfSet] = None, log=sys.stderr) -> dict:
    """Generate (or reuse) the datasets, train the three methods and write
    the comparison tables. Returns the report dictionary."""
    cfg = cfg or PipelineConfig()
    hrtf = hrtf or synthetic_spherical_head_hrtf(cfg.simulation.sample_rate)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sim = cfg.simulation
    front = frontal_filter()

    _log(log, event="stage", stage="anechoic")
    azs = np.arange(-90.0, 90.0 + 1e-9, cfg.anechoic_step)
    receiver = ReceiverPose((5.0, 5.0, 1.7), 0.0)
    anechoic = _open_or(out / "anechoic", lambda p: generate_pose_set(
        p, 0, receiver, [(a, 0.0, cfg.anechoic_distance) for a in azs], sim, cfg.seed,
        cfg.workers, hrtf, name="anechoic", log=log))

    _log(log, event="stage", stage="training")
    grid = SphericalGridSpec(radii=tuple(cfg.radii), angular_step=cfg.angular_step,
                             rng_seed=cfg.seed)
    training = _open_or(out / "training", lambda p: generate_training_set(
        p, list(cfg.training_rooms), grid, sim, cfg.seed, cfg.workers, hrtf, log=log))
    training_front = training.filter(front)

    tests = {}
    for kind in cfg.test_sets:
        _log(log, event="stage", stage=f"test-{kind}")
        tests[kind] = _open_or(out / f"test-{kind}", lambda p, k=kind: generate_test_set(
            p, k, cfg.test_count, sim, cfg.seed + 1000 * k, cfg.workers, hrtf,
            rooms=cfg.test_rooms or cfg.training_rooms, accept=front, log=log))

    _log(log, event="stage", stage="features")
    feats = {}
    for name, ds in [("anechoic", anechoic), ("training", training_front)] + \
            [(f"test-{k}", ds) for k, ds in tests.items()]:
        F, T, tdoa, _ = dataset_features(ds, cfg.workers, cfg.feature_window, cfg.feature_lead)
        feats[name] = (F, T, tdoa)
        save_matrix(out / f"features_{name}.f32", F, FEATURE_MAGIC)
        save_matrix(out / f"targets_{name}.f32", T, TARGET_MAGIC)
        np.savetxt(out / f"tdoa_{name}.tsv", tdoa, fmt="%d")

    _log(log, event="stage", stage="train")
    Fa, Ta, da = feats["anechoic"]
    affine = fit_affine_tdoa(np.column_stack([da, Ta[:, 0]]))
    per = periodic_mask()
    g_an = train_gllim(Fa, Ta, cfg.k_anechoic, cfg.em, cfg.seed, periodic=per)
    Fv, Tv, _ = feats["training"]
    k_vast = cfg.k_for(len(Fv))
    g_vast = train_gllim(Fv, Tv, k_vast, cfg.em, cfg.seed, periodic=per)
    save_gllim(g_an, out / "gllim_anechoic.bin")
    save_gllim(g_vast, out / "gllim_vast.bin")
    _write_scatter(out / "scatter_anechoic.tsv", Ta, da, affine)

    _log(log, event="stage", stage="evaluate")
    report = {"config": {k: v for k, v in asdict(cfg).items() if k not in ("em", "simulation")},
              "em": asdict(cfg.em), "simulation": sim.to_dict(),
              "affine": {"slope": affine.slope, "intercept": affine.intercept},
              "k_anechoic": cfg.k_anechoic, "k_vast": k_vast,
              "n_train": {"anechoic": len(Fa), "vast": len(Fv)},
              "em_iterations": {"anechoic": g_an.n_iter, "vast": g_vast.n_iter},
              "results": {}}
    for kind in tests:
        name = f"test-{kind}"
        F, T, tdoa = feats[name]
        _write_scatter(out / f"scatter_{name}.tsv", T, tdoa, affine)
        az_tdoa = affine.predict(tdoa)
        p_an, _ = predict_gllim(g_an, F)
        p_vast, _ = predict_gllim(g_vast, F)
        res = {
            "tdoa": evaluate(az_tdoa, T[:, 0], names=("azimuth",)),
            "gllim-anechoic": evaluate(p_an, T),
            "gllim-vast": evaluate(p_vast, T),
        }
        report["results"][name] = {
            "n": len(T),
            **{m: {t: asdict(s) for t, s in r.targets.items()} for m, r in res.items()},
        }
    _write_tables(out, report)
    (out / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    _log(log, event="done", out=str(out))
    return report


def _fmt(s: dict) -> str:
    return f"{s['mean']:.2f} ± {s['std']:.2f} ({s['outlier_pct']:.1f}%)"


def _write_tables(out: Path, report: dict):
    with open(out / "table_azimuth.tsv", "w") as fh:
        fh.write("test_set\t" + "\t".join(METHODS) + "\n")
        for name, res in report["results"].items():
            fh.write(name + "\t" + "\t".join(_fmt(res[m]["azimuth"]) for m in METHODS) + "\n")
    with open(out / "table_elev_dist.tsv", "w") as fh:
        fh.write("test_set\tmethod\televation\tdistance\n")
        for name, res in report["results"].items():
            for m in METHODS[1:]:
                fh.write(f"{name}\t{m}\t{_fmt(res[m]['elevation'])}\t{_fmt(res[m]['distance'])}\n")
