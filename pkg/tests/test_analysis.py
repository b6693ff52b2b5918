import numpy as np
import pytest

from oracles import exponential_noise
from vast.analysis import (DecayError, band_rt60s, crop_brir, crop_length, estimate_rt60,
                           fit_decay, schroeder_decay)
from vast.simulator import Brir

FS = 44100


def test_unit_impulse_decay():
    h = np.zeros(100)
    h[10] = 1.0
    curve = schroeder_decay(h, FS)
    assert np.all(curve.level[:11] == 0.0)
    assert np.all(np.isneginf(curve.level[11:]))


@pytest.mark.parametrize("tau", [0.02, 0.05, 0.1])
def test_rt60_closed_form(tau):
    rt = estimate_rt60(schroeder_decay(exponential_noise(tau), FS))
    assert rt == pytest.approx(3 * tau * np.log(10), rel=0.05)


def test_rt60_example():
    assert estimate_rt60(schroeder_decay(exponential_noise(0.05, seed=3), FS)) == pytest.approx(
        0.345, rel=0.05)


def test_decay_near_linear():
    fit = fit_decay(schroeder_decay(exponential_noise(0.05), FS))
    assert not fit.non_exponential
    assert fit.rms_residual < 0.5


def test_scale_invariance():
    h = exponential_noise(0.03)
    a, b = schroeder_decay(h, FS), schroeder_decay(1e-3 * h, FS)
    np.testing.assert_allclose(a.level, b.level, atol=1e-9)


def test_insufficient_range():
    t = np.arange(2000) / FS
    with pytest.raises(DecayError, match="insufficient decay range"):
        estimate_rt60(schroeder_decay(np.exp(-t / 5.0), FS))
    with pytest.raises(DecayError):
        schroeder_decay(np.zeros(10), FS)


def test_band_rt60():
    h = exponential_noise(0.04, duration=0.6)
    brir = Brir(np.stack([h, h]), FS)
    bands = band_rt60s(brir, bands=[1000.0, 2000.0, 4000.0])
    for v in bands.values():
        assert v == pytest.approx(3 * 0.04 * np.log(10), rel=0.1)


def test_crop_length():
    assert crop_length(0.2, FS, 0.03) == 10143
    brir = Brir(np.ones((2, 20000)), FS)
    cropped = crop_brir(brir, 0.2)
    assert len(cropped) == 10143
    assert cropped.annotation["crop"]["original_length"] == 20000
    same = crop_brir(brir, 1.0, margin=0.0)
    assert np.array_equal(same.data, brir.data)
    with pytest.raises(ValueError):
        crop_brir(brir, 0.0)
