"""
Run configuration: a YAML file validated against a JSON schema before any
work starts. Unknown keys are rejected at every level. Every key is
optional; missing keys take the defaults below.

Example (all defaults)::

    seed: 0                # global seed for grids, poses and ray tracing
    workers: 1             # parallel processes; never changes output bytes
    catalog: null          # path to a catalog YAML, null for the built-in one
    hrtf: null             # vast-hrtf/1 directory, null for the spherical head
    crop_margin: 0.03      # seconds kept after the RT60
    rooms: [3, 4]          # catalog rooms of the training grid
    simulation:
      sample_rate: 44100
      speed_of_sound: 343.0
      max_image_order: null  # null: limited by time_budget only
      time_budget: 0.5       # seconds of response simulated
      ray_count: 10000
      histogram_bin: 0.001
      air_absorption: false
      diffusion: true
      energy_floor_db: -80.0
    grid:
      radii: [1.0, 2.0, 3.0]
      angular_step: 18.0
      equator_offset: null   # null: drawn from the seed
      azimuth_offsets: null
      clearance: 0.2
    test:
      sets: [1]
      count: 500
      rooms: null            # null: the training rooms above
      frontal: true          # rejection-sample the frontal subset
    anechoic:
      distance: 2.0
      step: 1.0
    features:
      window: null           # samples in the spectrum frame, null: all 1536
      lead: null             # null: frame starts at sample 0; n: n samples before the peak
    gllim:
      k_anechoic: 8
      k_vast: null           # null: training size / 410 within [8, 100]
      tol: 1.0e-5
      max_iter: 200
      restarts: 3
      covariance: diagonal   # diagonal | tied | isotropic
"""
from __future__ import annotations

import copy
from pathlib import Path
from typing import Optional

import jsonschema
import yaml

from .localization import EmConfig
from .scene import SphericalGridSpec
from .simulator import SimulationConfig

_num = {"type": "number"}
_opt_num = {"type": ["number", "null"]}
_int = {"type": "integer"}
_pos_int = {"type": "integer", "minimum": 1}
_room_list = {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1}


def _obj(props: dict) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False}


SCHEMA = _obj({
    "seed": {"type": "integer", "minimum": 0},
    "workers": _pos_int,
    "catalog": {"type": ["string", "null"]},
    "hrtf": {"type": ["string", "null"]},
    "crop_margin": {"type": "number", "minimum": 0},
    "rooms": _room_list,
    "simulation": _obj({
        "sample_rate": _pos_int,
        "speed_of_sound": {"type": "number", "exclusiveMinimum": 0},
        "max_image_order": {"type": ["integer", "null"], "minimum": 0},
        "time_budget": {"type": "number", "exclusiveMinimum": 0},
        "ray_count": _pos_int,
        "histogram_bin": {"type": "number", "exclusiveMinimum": 0},
        "air_absorption": {"type": "boolean"},
        "diffusion": {"type": "boolean"},
        "energy_floor_db": {"type": "number", "maximum": 0},
    }),
    "grid": _obj({
        "radii": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                  "minItems": 1},
        "angular_step": {"type": "number", "exclusiveMinimum": 0},
        "equator_offset": _opt_num,
        "azimuth_offsets": {"type": ["array", "null"], "items": _num},
        "clearance": {"type": "number", "minimum": 0},
    }),
    "test": _obj({
        "sets": {"type": "array", "items": {"enum": [1, 2, 3, 4]}, "minItems": 1},
        "count": _pos_int,
        "rooms": {"oneOf": [_room_list, {"type": "null"}]},
        "frontal": {"type": "boolean"},
    }),
    "anechoic": _obj({
        "distance": {"type": "number", "exclusiveMinimum": 0},
        "step": {"type": "number", "exclusiveMinimum": 0},
    }),
    "features": _obj({
        "window": {"type": ["integer", "null"], "minimum": 1},
        "lead": {"type": ["integer", "null"], "minimum": 0},
    }),
    "gllim": _obj({
        "k_anechoic": _pos_int,
        "k_vast": {"type": ["integer", "null"], "minimum": 1},
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "max_iter": _pos_int,
        "restarts": {"type": "integer", "minimum": 0},
        "covariance": {"enum": ["diagonal", "tied", "isotropic"]},
    }),
})

DEFAULTS = {
    "seed": 0,
    "workers": 1,
    "catalog": None,
    "hrtf": None,
    "crop_margin": 0.03,
    "rooms": [3, 4],
    "simulation": {k: v for k, v in SimulationConfig().to_dict().items() if k != "rng_seed"},
    "grid": {"radii": [1.0, 2.0, 3.0], "angular_step": 18.0, "equator_offset": None,
             "azimuth_offsets": None, "clearance": 0.2},
    "test": {"sets": [1], "count": 500, "rooms": None, "frontal": True},
    "anechoic": {"distance": 2.0, "step": 1.0},
    "features": {"window": None, "lead": None},
    "gllim": {"k_anechoic": 8, "k_vast": None, "tol": 1e-5, "max_iter": 200, "restarts": 3,
              "covariance": "diagonal"},
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def validate(raw: dict) -> dict:
    """Schema-check ``raw`` and return it merged over the defaults."""
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from None
    return _merge(DEFAULTS, raw)


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> dict:
    raw = {}
    if path is not None:
        text = Path(path).read_text()
        raw = yaml.safe_load(text) or {}
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    raw = _merge(raw, {k: v for k, v in (overrides or {}).items() if v is not None})
    return validate(raw)


def simulation_config(cfg: dict) -> SimulationConfig:
    return SimulationConfig(rng_seed=cfg["seed"], **cfg["simulation"])


def grid_spec(cfg: dict) -> SphericalGridSpec:
    g = cfg["grid"]
    return SphericalGridSpec(radii=tuple(g["radii"]), angular_step=g["angular_step"],
                             equator_offset=g["equator_offset"],
                             azimuth_offsets=g["azimuth_offsets"], rng_seed=cfg["seed"],
                             clearance=g["clearance"])


def em_config(cfg: dict) -> EmConfig:
    g = cfg["gllim"]
    return EmConfig(tol=g["tol"], max_iter=g["max_iter"], restarts=g["restarts"],
                    covariance=g["covariance"])
