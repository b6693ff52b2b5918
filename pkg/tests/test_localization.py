import numpy as np
import pytest

from oracles import PlantedAffine, rmse
from vast.localization import (EmConfig, LocalizationError, evaluate, fit_affine_tdoa,
                               load_gllim, predict_gllim, save_gllim, train_gllim, wrap_angle)


def monotone(model):
    return np.all(np.diff(model.log_likelihood) >= -1e-9)


@pytest.fixture(scope="module")
def planted():
    p = PlantedAffine()
    X, Y = p.draw(2000)
    Xt, Yt = p.draw(2000)
    return p, X, Y, Xt, Yt


def test_affine_exact_line():
    d = np.arange(-10, 11)
    m = fit_affine_tdoa(np.column_stack([d, 7.5 * d + 1.25]))
    assert m.slope == pytest.approx(7.5) and m.intercept == pytest.approx(1.25)
    assert m.predict(0) == pytest.approx(1.25)


def test_affine_degenerate():
    with pytest.raises(LocalizationError, match="degenerate"):
        fit_affine_tdoa([[2, 10.0], [2, 20.0]])
    with pytest.raises(LocalizationError):
        fit_affine_tdoa([[np.nan, 1.0], [1.0, 2.0]])


def test_planted_single_component(planted):
    p, X, Y, Xt, Yt = planted
    m = train_gllim(Y, X, 1, seed=0)
    assert monotone(m)
    P, w = predict_gllim(m, Yt)
    assert np.allclose(w, 1.0)
    floor = rmse(p.posterior_mean(Yt), Xt)
    assert np.all(rmse(P, Xt) <= 1.5 * floor)
    # recovered slope in position units: A / scale
    A_hat = m.A[0] / m.x_scale
    err = (A_hat - p.A / p.scale) * p.scale
    assert np.abs(err).max() < 6 * p.noise / np.sqrt(2000)


def test_noiseless_inversion():
    p = PlantedAffine(D=20, noise=1e-9, seed=4)
    X, Y = p.draw(500)
    m = train_gllim(Y, X, 1, seed=0, cfg=EmConfig(sigma_floor=1e-16))
    P, _ = predict_gllim(m, Y[:10])
    np.testing.assert_allclose(P, X[:10], atol=1e-6)


def test_two_regimes():
    rng = np.random.default_rng(0)
    D = 30
    A1, A2, b = rng.normal(size=(D, 3)), rng.normal(size=(D, 3)), rng.normal(size=D)
    X1 = rng.uniform(-1, 1, (600, 3))
    X2 = rng.uniform(-1, 1, (600, 3)) + [6, 0, 0]
    Y = np.vstack([X1 @ A1.T + b, X2 @ A2.T - b]) + 0.1 * rng.normal(size=(1200, D))
    m = train_gllim(Y, np.vstack([X1, X2]), 2, seed=3)
    assert monotone(m)
    _, w = predict_gllim(m, Y)
    truth = np.r_[np.zeros(600), np.ones(600)]
    acc = np.mean(w.argmax(axis=1) == truth)
    assert max(acc, 1 - acc) > 0.95


def test_periodic_entries_monotone(planted):
    p, X, Y, Xt, Yt = planted
    per = np.zeros(Y.shape[1], dtype=bool)
    per[25:] = True
    Yw = Y.copy()
    Yw[:, per] = wrap_angle(3 * Y[:, per])
    for cov in ("diagonal", "tied", "isotropic"):
        m = train_gllim(Yw[:800], X[:800], 3, EmConfig(covariance=cov, max_iter=60), seed=1,
                        periodic=per)
        assert monotone(m), cov


def test_permutation_invariance(planted):
    _, X, Y, Xt, Yt = planted
    m = train_gllim(Y[:600], X[:600], 3, EmConfig(max_iter=40), seed=2)
    P, w = predict_gllim(m, Yt[:50])
    order = [2, 0, 1]
    Q, v = predict_gllim(m.permuted(order), Yt[:50])
    np.testing.assert_allclose(P, Q, atol=1e-9)
    np.testing.assert_allclose(w[:, order], v, atol=1e-12)


def test_single_vector_prediction(planted):
    _, X, Y, Xt, Yt = planted
    m = train_gllim(Y[:300], X[:300], 1, seed=0)
    x, w = predict_gllim(m, Yt[0])
    assert x.shape == (3,) and w.shape == (1,)
    with pytest.raises(LocalizationError):
        predict_gllim(m, Yt[0, :10])


def test_save_load(tmp_path, planted):
    _, X, Y, Xt, Yt = planted
    per = np.zeros(Y.shape[1], dtype=bool)
    per[::7] = True
    m = train_gllim(Y[:400], X[:400], 2, EmConfig(max_iter=20), seed=0, periodic=per)
    path = save_gllim(m, tmp_path / "m.bin")
    assert path.read_bytes()[:4] == b"GLLM"
    back = load_gllim(path)
    np.testing.assert_array_equal(back.periodic, per)
    np.testing.assert_array_equal(predict_gllim(back, Yt[:20])[0], predict_gllim(m, Yt[:20])[0])
    (tmp_path / "cut.bin").write_bytes(path.read_bytes()[:-8])
    with pytest.raises(LocalizationError):
        load_gllim(tmp_path / "cut.bin")


def test_training_errors():
    Y = np.ones((10, 4))
    with pytest.raises(LocalizationError):
        train_gllim(Y, np.ones((9, 3)), 1)
    with pytest.raises(LocalizationError):
        train_gllim(Y, np.ones((10, 3)), 10)
    with pytest.raises(LocalizationError):
        EmConfig(covariance="full")


def test_evaluate_exact():
    t = np.array([[10.0, 0.0, 2.0], [-40.0, 5.0, 1.0]])
    r = evaluate(t, t)
    for name in ("azimuth", "elevation", "distance"):
        assert (r[name].mean, r[name].std, r[name].outlier_pct) == (0.0, 0.0, 0.0)


def test_evaluate_single_outlier():
    truth = np.zeros(10)
    pred = truth.copy()
    pred[0] = 31.0
    pred[1] = 4.0
    s = evaluate(pred, truth, names=("azimuth",))["azimuth"]
    assert s.outlier_pct == pytest.approx(10.0)
    assert s.mean == pytest.approx(4.0 / 9) and s.n == 10
    # the threshold itself is an outlier
    assert evaluate(np.array([30.0]), np.array([0.0]), names=("azimuth",))["azimuth"].outlier_pct == 100


def test_evaluate_wraps_azimuth():
    s = evaluate(np.array([179.0]), np.array([-179.0]), names=("azimuth",))["azimuth"]
    assert s.mean == pytest.approx(2.0) and s.outlier_pct == 0.0
