"""Command-line entry point (``vast``)."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import DecayError, band_rt60s, brir_rt60
from .config import (ConfigError, em_config, grid_spec, load_config, simulation_config)
from .dataset import (Dataset, DatasetError, frontal_filter, generate_pose_set,
                      generate_test_set, generate_training_set, import_external_brirs)
from .features import (FEATURE_MAGIC, TARGET_MAGIC, FeatureError, load_matrix, periodic_mask,
                       save_matrix)
from .hrtf import load_hrtf_dir, synthetic_spherical_head_hrtf
from .localization import (AffineTdoaModel, LocalizationError, evaluate, fit_affine_tdoa,
                           load_gllim, predict_gllim, save_gllim, train_gllim)
from .materials import OCTAVE_BANDS, CatalogError, load_catalog
from .scene import (GeometryError, ReceiverPose, SourcePose, spherical_to_cartesian,
                    training_receiver_positions)
from .simulator import simulate_brir


def _rooms(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=argparse.SUPPRESS, help="YAML run configuration")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="global seed")
    p.add_argument("--workers", type=int, default=argparse.SUPPRESS,
                   help="parallel processes (output is identical for any value)")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="vast", parents=[common],
                                 description="Simulated binaural room impulse responses "
                                             "and learned sound source localization.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("materials", parents=[common], help="list the material and room catalog")

    g = sub.add_parser("generate", parents=[common], help="generate a dataset")
    g.add_argument("--out", required=True, help="new dataset directory")
    g.add_argument("--rooms", type=_rooms, help="comma-separated catalog rooms")
    g.add_argument("--test-set", type=int, choices=(1, 2, 3, 4),
                   help="random-pose test set instead of the training grid")
    g.add_argument("--count", type=int, help="records of a test set")
    g.add_argument("--anechoic", action="store_true",
                   help="frontal anechoic set (room 0, elevation 0)")

    r = sub.add_parser("rt60", parents=[common],
                       help="per-room, per-band RT60 table (tab-separated)")
    r.add_argument("--rooms", type=_rooms, help="catalog rooms (default 1-16)")
    r.add_argument("--dataset", help="report the RT60 of every record of a dataset instead")

    f = sub.add_parser("features", parents=[common], help="extract features of a dataset")
    f.add_argument("--dataset", required=True)
    f.add_argument("--out", required=True, help="output prefix")
    f.add_argument("--frontal", action="store_true", help="apply the frontal filter first")

    t = sub.add_parser("train", parents=[common], help="train a localization model")
    t.add_argument("--method", choices=("gllim", "tdoa"), default="gllim")
    t.add_argument("--prefix", required=True, help="feature prefix written by `features`")
    t.add_argument("--K", type=int, default=8, help="GLLiM components")
    t.add_argument("--out", required=True)

    e = sub.add_parser("evaluate", parents=[common], help="evaluate a model on features")
    e.add_argument("--model", required=True)
    e.add_argument("--prefix", required=True)
    e.add_argument("--out", help="write the report here instead of standard output")

    pl = sub.add_parser("pipeline", parents=[common],
                        help="full three-method comparison at the configured scale")
    pl.add_argument("--out", required=True)

    im = sub.add_parser("import", parents=[common], help="import recorded BRIRs")
    im.add_argument("--src", required=True, help="directory with WAV files and a pose index")
    im.add_argument("--out", required=True)
    im.add_argument("--index", default="poses.csv")
    im.add_argument("--room", default=None, help="room label for rows without one")
    return ap


def _hrtf(cfg):
    if cfg["hrtf"]:
        return load_hrtf_dir(cfg["hrtf"])
    return synthetic_spherical_head_hrtf(cfg["simulation"]["sample_rate"])


def cmd_materials(cfg, args, out):
    cat = load_catalog(cfg["catalog"])
    out.write(f"# catalog version {cat.version} sha256 {cat.digest}\n")
    out.write("# materials (absorption per octave band "
              + ", ".join(f"{b:g}" for b in OCTAVE_BANDS) + " Hz)\n")
    for m in cat.profiles:
        out.write(f"{m.name}\t" + "\t".join(f"{a:.2f}" for a in m.absorption) + "\n")
    out.write("# diffusion\t" + "\t".join(f"{d:.2f}" for d in cat.diffusion) + "\n")
    out.write("room\tlabel\tsize\tdimensions\tfloor\tceiling\twalls\n")
    for n in sorted(cat.rooms):
        room = cat.room(n)
        d = room.dimensions
        walls = sorted({w.name for w in room.walls})
        out.write(f"{n}\t{room.label or '-'}\t{room.size or '-'}\t{d.width:g}x{d.depth:g}x{d.height:g}\t"
                  f"{room.floor.name}\t{room.ceiling.name}\t{', '.join(walls)}\n")
    return 0


def cmd_generate(cfg, args, out):
    sim = simulation_config(cfg)
    hrtf = _hrtf(cfg)
    cat = load_catalog(cfg["catalog"])
    rooms = args.rooms or None
    common = dict(cfg=sim, seed=cfg["seed"], workers=cfg["workers"], hrtf=hrtf,
                  catalog=cat, margin=cfg["crop_margin"])
    if args.anechoic:
        a = cfg["anechoic"]
        azs = np.arange(-90.0, 90.0 + 1e-9, a["step"])
        ds = generate_pose_set(args.out, 0, ReceiverPose((5.0, 5.0, 1.7), 0.0),
                               [(x, 0.0, a["distance"]) for x in azs], name="anechoic",
                               **common)
    elif args.test_set:
        count = args.count or cfg["test"]["count"]
        accept = frontal_filter() if cfg["test"]["frontal"] else None
        ds = generate_test_set(args.out, args.test_set, count,
                               rooms=rooms or cfg["test"]["rooms"] or cfg["rooms"],
                               accept=accept, **common)
    else:
        ds = generate_training_set(args.out, rooms or cfg["rooms"], grid_spec(cfg), **common)
    out.write(f"{len(ds)} records written to {args.out}\n")
    return 0


def cmd_rt60(cfg, args, out):
    bands = [b for b in OCTAVE_BANDS]
    head = "room\tbroadband\t" + "\t".join(f"{b:g}Hz" for b in bands) + "\n"
    if args.dataset:
        ds = Dataset.open(args.dataset)
        out.write("record\t" + head[len("room\t"):].rstrip("\n") + "\n")
        for i in range(len(ds)):
            _rt60_row(out, str(ds.records[i]["id"]), ds.brir(i), bands)
        return 0
    sim = simulation_config(cfg)
    hrtf = _hrtf(cfg)
    cat = load_catalog(cfg["catalog"])
    numbers = args.rooms or [n for n in sorted(cat.rooms) if not cat.room(n).anechoic]
    out.write(head)
    for n in numbers:
        room = cat.room(n)
        receiver = training_receiver_positions(room.dimensions)[-1]
        pos = spherical_to_cartesian((30.0, 0.0, 2.0), receiver)
        brir = simulate_brir(room, receiver, SourcePose(pos, 30.0, 0.0, 2.0), hrtf, sim)
        _rt60_row(out, str(n), brir, bands)
    return 0


def _rt60_row(out, label, brir, bands):
    try:
        broad = f"{brir_rt60(brir):.4f}"
    except DecayError:
        broad = "nan"
    per = band_rt60s(brir, bands)
    out.write(label + "\t" + broad + "\t" + "\t".join(f"{per[float(b)]:.4f}" for b in bands)
              + "\n")


def cmd_features(cfg, args, out):
    from .experiment import dataset_features
    ds = Dataset.open(args.dataset)
    if args.frontal:
        ds = ds.filter(frontal_filter())
    F, T, tdoa, keep = dataset_features(ds, cfg["workers"], cfg["features"]["window"],
                                        cfg["features"]["lead"])
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    save_matrix(f"{prefix}.features.f32", F, FEATURE_MAGIC)
    save_matrix(f"{prefix}.targets.f32", T, TARGET_MAGIC)
    np.savetxt(f"{prefix}.tdoa.tsv", tdoa, fmt="%d")
    out.write(f"{len(F)} feature vectors (D={F.shape[1] if len(F) else 0}) "
              f"from {len(ds)} records\n")
    return 0


def _load_prefix(prefix):
    F = load_matrix(f"{prefix}.features.f32", FEATURE_MAGIC)
    T = load_matrix(f"{prefix}.targets.f32", TARGET_MAGIC)
    tdoa = np.atleast_1d(np.loadtxt(f"{prefix}.tdoa.tsv", dtype=int))
    return F, T, tdoa


def cmd_train(cfg, args, out):
    F, T, tdoa = _load_prefix(args.prefix)
    if args.method == "tdoa":
        model = fit_affine_tdoa(np.column_stack([tdoa, T[:, 0]]))
        Path(args.out).write_text(json.dumps({"model": "affine-tdoa", "slope": model.slope,
                                              "intercept": model.intercept}) + "\n")
        out.write(f"azimuth = {model.slope:.4f} * tdoa + {model.intercept:.4f}\n")
        return 0
    per = periodic_mask() if F.shape[1] == len(periodic_mask()) else None
    model = train_gllim(F, T, args.K, em_config(cfg), cfg["seed"], periodic=per)
    save_gllim(model, args.out)
    out.write(f"GLLiM K={model.K} D={model.D}: {model.n_iter} EM iterations, "
              f"log-likelihood {model.log_likelihood[-1]:.4f}\n")
    return 0


def cmd_evaluate(cfg, args, out):
    F, T, tdoa = _load_prefix(args.prefix)
    raw = Path(args.model).read_bytes()
    if raw[:4] == b"GLLM":
        pred, _ = predict_gllim(load_gllim(args.model), F)
        report = evaluate(pred, T)
    else:
        spec = json.loads(raw)
        model = AffineTdoaModel(spec["slope"], spec["intercept"])
        report = evaluate(model.predict(tdoa), T[:, 0], names=("azimuth",))
    text = "target\tmean\tstd\toutlier_pct\tthreshold\tn\n" + "".join(
        f"{n}\t{m:.4f}\t{s:.4f}\t{o:.2f}\t{th:g}\t{c}\n" for n, m, s, o, th, c in report.to_rows())
    if args.out:
        Path(args.out).write_text(text)
    else:
        out.write(text)
    return 0


def cmd_pipeline(cfg, args, out):
    from .experiment import PipelineConfig, run_pipeline
    pc = PipelineConfig(
        training_rooms=tuple(cfg["rooms"]), radii=tuple(cfg["grid"]["radii"]),
        angular_step=cfg["grid"]["angular_step"], test_sets=tuple(cfg["test"]["sets"]),
        test_count=cfg["test"]["count"],
        test_rooms=None if cfg["test"]["rooms"] is None else tuple(cfg["test"]["rooms"]),
        anechoic_distance=cfg["anechoic"]["distance"], anechoic_step=cfg["anechoic"]["step"],
        k_anechoic=cfg["gllim"]["k_anechoic"], k_vast=cfg["gllim"]["k_vast"],
        feature_window=cfg["features"]["window"], feature_lead=cfg["features"]["lead"],
        seed=cfg["seed"], workers=cfg["workers"], em=em_config(cfg),
        simulation=simulation_config(cfg))
    run_pipeline(args.out, pc, _hrtf(cfg))
    out.write((Path(args.out) / "table_azimuth.tsv").read_text())
    return 0


def cmd_import(cfg, args, out):
    ds = import_external_brirs(args.src, args.out, {"index": args.index, "room": args.room})
    rejected = len(ds.manifest["skipped"])
    out.write(f"{len(ds)} records imported, {rejected} rejected\n")
    return 0


COMMANDS = {"materials": cmd_materials, "generate": cmd_generate, "rt60": cmd_rt60,
            "features": cmd_features, "train": cmd_train, "evaluate": cmd_evaluate,
            "pipeline": cmd_pipeline, "import": cmd_import}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    overrides = {"seed": getattr(args, "seed", None), "workers": getattr(args, "workers", None)}
    try:
        cfg = load_config(getattr(args, "config", None), overrides)
        return COMMANDS[args.command](cfg, args, out)
    except (ConfigError, CatalogError, DatasetError, FeatureError, LocalizationError,
            GeometryError, DecayError, OSError) as exc:
        sys.stderr.write(f"vast {args.command}: error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
