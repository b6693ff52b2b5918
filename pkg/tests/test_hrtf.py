import numpy as np
import pytest

from vast.hrtf import (HEAD_RADIUS, HrtfError, HrtfSet, load_hrtf_dir, save_hrtf_dir,
                       synthetic_spherical_head_hrtf, woodworth_itd)


@pytest.fixture(scope="module")
def head():
    return synthetic_spherical_head_hrtf()


def test_itd_symmetry():
    assert woodworth_itd(0.0) == pytest.approx(0.0, abs=1e-15)
    az = np.linspace(-90, 90, 37)
    np.testing.assert_allclose(woodworth_itd(az), -woodworth_itd(-az), atol=1e-15)
    # source on the left: right ear lags
    assert woodworth_itd(45.0) > 0


def test_itd_maximum():
    expected = HEAD_RADIUS * (np.pi / 2 + 1) / 343.0
    assert woodworth_itd(90.0) == pytest.approx(expected)
    az = np.linspace(0, 180, 181)
    assert np.argmax(woodworth_itd(az)) == 90


def test_grid_density(head):
    assert head.max_angular_gap() < 15.0
    assert head.sample_rate == 44100 and head.irs.shape[1] == 2


def test_frontal_entry_is_symmetric(head):
    i = head.nearest(0.0, 0.0)
    np.testing.assert_allclose(head.irs[i, 0], head.irs[i, 1])


def test_nearest_lookup(head):
    i = head.nearest(31.0, 12.0)
    assert (head.azimuths[i], head.elevations[i]) == (30.0, 10.0)
    assert head.elevations[head.nearest(0.0, 89.0)] == 90.0


def test_save_load_roundtrip(tmp_path, head):
    small = HrtfSet(head.sample_rate, head.azimuths[:20], head.elevations[:20], head.irs[:20])
    back = load_hrtf_dir(save_hrtf_dir(small, tmp_path / "h"))
    np.testing.assert_allclose(back.irs, small.irs, atol=1e-7)
    np.testing.assert_array_equal(back.azimuths, small.azimuths)


def test_shape_checks():
    with pytest.raises(HrtfError):
        HrtfSet(44100, [0.0], [0.0], np.zeros((1, 1, 8)))
    with pytest.raises(HrtfError):
        synthetic_spherical_head_hrtf(length=8, onset=1)
