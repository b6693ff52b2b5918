import math

import numpy as np
import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st

from vast.materials import (OCTAVE_BANDS, CatalogError, MaterialProfile, band_weights,
                            builtin_catalog, interpolate_coefficient, load_catalog)

CARPET = builtin_catalog().material("Thin Carpet")


def test_band_centre_is_node():
    for f, v in zip(OCTAVE_BANDS, CARPET.absorption):
        assert interpolate_coefficient(CARPET, f) == pytest.approx(v)


def test_geometric_mean_is_arithmetic_mean():
    f = math.sqrt(500.0 * 1000.0)
    assert interpolate_coefficient(CARPET, f) == pytest.approx(0.5 * (0.08 + 0.20))


def test_extrapolation_is_constant():
    assert interpolate_coefficient(CARPET, 10.0) == CARPET.absorption[0]
    assert interpolate_coefficient(CARPET, 20000.0) == CARPET.absorption[-1]


@given(st.lists(st.floats(0, 1), min_size=8, max_size=8).map(sorted),
       st.floats(40.0, 12000.0), st.floats(40.0, 12000.0))
def test_monotone_profile_interpolates_monotone(values, f1, f2):
    prof = MaterialProfile("m", tuple(values), (0.0,) * 8)
    lo, hi = sorted([f1, f2])
    assert interpolate_coefficient(prof, lo) <= interpolate_coefficient(prof, hi) + 1e-12


def test_band_weights_match_interpolation():
    f = np.geomspace(30, 15000, 200)
    np.testing.assert_allclose(band_weights(f).sum(axis=0), 1.0)
    np.testing.assert_allclose(band_weights(f).T @ np.array(CARPET.absorption),
                               interpolate_coefficient(CARPET, f))


def test_bad_profiles():
    with pytest.raises(CatalogError):
        MaterialProfile("x", (0.1,) * 7, (0.0,) * 8)
    with pytest.raises(CatalogError):
        MaterialProfile("x", (1.2,) + (0.1,) * 7, (0.0,) * 8)
    with pytest.raises(ValueError):
        interpolate_coefficient(CARPET, 0.0)


def test_catalog_rooms():
    cat = builtin_catalog()
    assert sorted(cat.rooms) == list(range(17))
    for n in range(1, 17):
        room = cat.room(n)
        dims = (room.dimensions.width, room.dimensions.depth, room.dimensions.height)
        assert dims == ((9.0, 6.0, 3.5) if n <= 8 else (3.5, 5.0, 2.5))
        assert room.ceiling.name == "Perforated 27 mm gypsum board"
        assert not room.anechoic
    six = cat.room(6)
    assert six.floor.name == "Linoleum" and six.size == "large"
    assert {w.name for w in six.walls} == {"Gypsum Board with Mineral Filling"}
    twelve = cat.room(12)
    assert twelve.size == "small" and {w.name for w in twelve.walls} == {"Thin Plywood Paneling"}
    assert cat.room(0).anechoic
    with pytest.raises(CatalogError):
        cat.room(42)


def test_catalog_file_roundtrip(tmp_path):
    from importlib import resources
    raw = yaml.safe_load(resources.files("vast").joinpath("data/catalog.yaml").read_text())
    p = tmp_path / "cat.yaml"
    p.write_text(yaml.safe_dump(raw))
    assert load_catalog(p).digest == builtin_catalog().digest
    raw["materials"]["Linoleum"]["absorption"][3] = 0.5
    p.write_text(yaml.safe_dump(raw))
    changed = load_catalog(p)
    assert changed.digest != builtin_catalog().digest
    assert changed.material("Linoleum").absorption[3] == 0.5
    raw["schema"] = "other/9"
    p.write_text(yaml.safe_dump(raw))
    with pytest.raises(CatalogError):
        load_catalog(p)
