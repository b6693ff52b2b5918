"""
Source localization from binaural features.

Three mappings are provided:

* :class:`AffineTdoaModel`: azimuth as an affine function of the TDOA;
* :func:`train_gllim` / :func:`predict_gllim`: a Gaussian locally linear
  mapping (GLLiM) between low-dimensional positions x (L = 3) and
  high-dimensional features y (D);
* :func:`evaluate`: inlier/outlier error statistics.

GLLiM model
-----------
Positions and features are modeled jointly as a K-component mixture::

    p(x | k)    = N(x; c_k, Gamma_k)
    p(y | x, k) = N(y; A_k x + b_k, Sigma_k),   Sigma_k diagonal

and fitted by EM on the joint log-likelihood. With responsibilities r_nk the
M-step is closed form: pi_k and (c_k, Gamma_k) are weighted moments of x,
(A_k, b_k) a weighted least-squares regression of y on [x, 1] and Sigma_k the
weighted residual variances. Variances are floored (eigenvalues for Gamma_k),
which keeps every update a constrained maximizer, so the likelihood never
decreases.

Feature entries flagged as periodic (phase differences) use wrapped
residuals: for each sample and component the observation is shifted by the
multiple of 2 pi closest to the current prediction before the M-step
regression. Re-selecting the shift can only raise the likelihood, so this is
a minorize-maximize step and monotonicity is preserved.

Prediction inverts the forward model. Given y, component k yields the
Gaussian posterior::

    S_k   = (Gamma_k^-1 + A_k' Sigma_k^-1 A_k)^-1
    m_k   = S_k (A_k' Sigma_k^-1 (y - b_k) + Gamma_k^-1 c_k)

weighted by pi_k N(y; A_k c_k + b_k, Sigma_k + A_k Gamma_k A_k'), evaluated
with the Woodbury identity and the matrix determinant lemma so that only
L x L systems are solved. The estimate is the weighted mean of the m_k.

Model file layout (``vast-gllim``, little-endian)::

    magic b"GLLM" | version u16 | reserved u16 | K u32 | D u32 | L u32
    x_mean f8[L] | x_scale f8[L] | pi f8[K] | c f8[K,L] | Gamma f8[K,L,L]
    A f8[K,D,L] | b f8[K,D] | Sigma f8[K,D] | periodic u1[D]
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.special import logsumexp

TWO_PI = 2.0 * math.pi
LOG_2PI = math.log(TWO_PI)


class LocalizationError(ValueError):
    pass


def wrap_angle(x):
    """Principal value in [-pi, pi)."""
    return np.mod(np.asarray(x) + math.pi, TWO_PI) - math.pi


# --------------------------------------------------------------------------
# TDOA baseline

@dataclass(frozen=True)
class AffineTdoaModel:
    slope: float  # degrees per sample
    intercept: float  # degrees

    def predict(self, delay):
        return self.slope * np.asarray(delay, dtype=float) + self.intercept


def fit_affine_tdoa(pairs) -> AffineTdoaModel:
    """Ordinary least squares azimuth = slope * delay + intercept."""
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or not np.all(np.isfinite(arr)):
        raise LocalizationError("pairs must be finite (delay, azimuth) rows")
    d, az = arr[:, 0], arr[:, 1]
    if np.unique(d).size < 2:
        raise LocalizationError("degenerate fit: need at least two distinct delays")
    A = np.column_stack([d, np.ones_like(d)])
    (slope, intercept), *_ = np.linalg.lstsq(A, az, rcond=None)
    return AffineTdoaModel(float(slope), float(intercept))


# --------------------------------------------------------------------------
# GLLiM

@dataclass(frozen=True)
class EmConfig:
    tol: float = 1e-5
    max_iter: int = 200
    restarts: int = 3
    min_weight: float = 4.0  # effective samples below which a component has collapsed
    sigma_floor: float = 1e-6  # relative to the per-dimension feature variance
    gamma_floor: float = 1e-6  # on standardized positions
    init_feature_weight: float = 1.0
    monotone_tol: float = 1e-8
    covariance: str = "diagonal"  # diagonal | isotropic | tied (diagonal shared by all k)

    def __post_init__(self):
        if self.covariance not in ("diagonal", "isotropic", "tied"):
            raise LocalizationError(f"unknown covariance type {self.covariance!r}")


@dataclass(eq=False)
class GllimModel:
    pi: np.ndarray  # (K,)
    c: np.ndarray  # (K, L), standardized positions
    gamma: np.ndarray  # (K, L, L)
    A: np.ndarray  # (K, D, L)
    b: np.ndarray  # (K, D)
    sigma: np.ndarray  # (K, D) diagonal variances
    x_mean: np.ndarray  # (L,)
    x_scale: np.ndarray  # (L,)
    periodic: np.ndarray  # (D,) bool
    log_likelihood: list = field(default_factory=list)  # per EM iteration (mean per sample)
    n_iter: int = 0
    restarts_used: int = 0

    @property
    def K(self) -> int:
        return len(self.pi)

    @property
    def D(self) -> int:
        return self.A.shape[1]

    @property
    def L(self) -> int:
        return self.A.shape[2]

    def permuted(self, order) -> "GllimModel":
        o = np.asarray(order)
        return GllimModel(self.pi[o], self.c[o], self.gamma[o], self.A[o], self.b[o],
                          self.sigma[o], self.x_mean, self.x_scale, self.periodic,
                          list(self.log_likelihood), self.n_iter, self.restarts_used)


def _unwrapped(Y, pred, periodic):
    """Y shifted on periodic columns by the 2 pi multiple nearest ``pred``."""
    if not periodic.any():
        return Y
    out = Y.copy()
    p = periodic
    out[:, p] = pred[:, p] + wrap_angle(Y[:, p] - pred[:, p])
    return out


def _gauss_logpdf_x(X, c, gamma):
    L = X.shape[1]
    chol = np.linalg.cholesky(gamma)
    z = np.linalg.solve(chol, (X - c).T)
    return -0.5 * (L * LOG_2PI + 2 * np.log(np.diag(chol)).sum() + (z * z).sum(axis=0))


def _log_joint(X, X1, Y, model_params, periodic):
    """(N, K) log pi_k N(x; c_k, Gamma_k) N(y; A_k x + b_k, Sigma_k)."""
    pi, c, gamma, W, sigma = model_params
    N, K = X.shape[0], len(pi)
    D = Y.shape[1]
    out = np.empty((N, K))
    for k in range(K):
        pred = X1 @ W[k]
        r = Y - pred
        if periodic.any():
            r[:, periodic] = wrap_angle(r[:, periodic])
        ly = -0.5 * (D * LOG_2PI + np.log(sigma[k]).sum() + (r * r) @ (1.0 / sigma[k]))
        out[:, k] = math.log(pi[k]) + _gauss_logpdf_x(X, c[k], gamma[k]) + ly
    return out


def _m_step(X, X1, Y, R, prev_W, periodic, sig_floor, gamma_floor, min_weight,
            covariance="diagonal"):
    N, L = X.shape
    D = Y.shape[1]
    K = R.shape[1]
    nk = R.sum(axis=0)
    if np.any(nk < min_weight):
        return None
    pi = nk / N
    c = (R.T @ X) / nk[:, None]
    gamma = np.empty((K, L, L))
    W = np.empty((K, L + 1, D))
    sigma = np.empty((K, D))
    for k in range(K):
        w = R[:, k]
        dx = X - c[k]
        g = (dx * w[:, None]).T @ dx / nk[k]
        evals, evecs = np.linalg.eigh(0.5 * (g + g.T))
        gamma[k] = (evecs * np.maximum(evals, gamma_floor)) @ evecs.T
        Yk = Y if prev_W is None else _unwrapped(Y, X1 @ prev_W[k], periodic)
        sw = np.sqrt(w)[:, None]
        Wk, *_ = np.linalg.lstsq(X1 * sw, Yk * sw, rcond=None)
        W[k] = Wk
        r = Yk - X1 @ Wk
        sigma[k] = (w @ (r * r)) / nk[k]
    if covariance == "tied":
        sigma[:] = (nk @ sigma) / N
    elif covariance == "isotropic":
        sigma[:] = sigma.mean(axis=1, keepdims=True)
    return pi, c, gamma, W, np.maximum(sigma, sig_floor)


def _init_labels(Xs, Y, K, rng, feature_weight):
    """k-means++ on standardized positions joined with the leading feature
    principal components."""
    Z = Xs
    if feature_weight > 0:
        Yc = Y - Y.mean(axis=0)
        sub = Yc[rng.choice(len(Yc), size=min(len(Yc), 2000), replace=False)]
        _, s, vt = np.linalg.svd(sub, full_matrices=False)
        n_pc = min(Xs.shape[1], vt.shape[0])
        proj = Yc @ vt[:n_pc].T
        proj /= proj.std(axis=0) + 1e-12
        Z = np.hstack([Xs, feature_weight * proj])
    seed = int(rng.integers(2 ** 31 - 1))
    _, labels = kmeans2(Z, K, minit="++", seed=seed)
    return labels


def _fit_once(Xs, X1, Y, K, periodic, cfg, rng, sig_floor, callback=None):
    N = len(Xs)
    labels = _init_labels(Xs, Y, K, rng, cfg.init_feature_weight)
    R = np.zeros((N, K))
    R[np.arange(N), labels] = 1.0
    params = _m_step(Xs, X1, Y, R, None, periodic, sig_floor, cfg.gamma_floor, cfg.min_weight,
                     cfg.covariance)
    if params is None:
        return None, []
    history = []
    for it in range(cfg.max_iter):
        lj = _log_joint(Xs, X1, Y, params, periodic)
        norm = logsumexp(lj, axis=1)
        ll = float(norm.mean())
        history.append(ll)
        if callback is not None:
            callback(it, ll)
        if len(history) > 1:
            prev = history[-2]
            if ll < prev - cfg.monotone_tol * max(1.0, abs(prev)):
                raise LocalizationError(f"EM log-likelihood decreased at iteration {it}: "
                                        f"{prev:.10g} -> {ll:.10g}")
            if abs(ll - prev) <= cfg.tol * abs(prev):
                break
        R = np.exp(lj - norm[:, None])
        new = _m_step(Xs, X1, Y, R, params[3], periodic, sig_floor, cfg.gamma_floor,
                      cfg.min_weight, cfg.covariance)
        if new is None:
            return None, history
        params = new
    return params, history


def train_gllim(features, positions, K: int, cfg: Optional[EmConfig] = None, seed: int = 0,
                periodic=None, callback=None) -> GllimModel:
    """Fit a K-component GLLiM to (features N x D, positions N x L).

    ``periodic`` is an optional boolean mask of angular feature entries.
    A run whose component weight falls below ``cfg.min_weight`` is restarted
    with a fresh initialization, up to ``cfg.restarts`` times.
    """
    cfg = cfg or EmConfig()
    Y = np.asarray(features, dtype=float)
    X = np.asarray(positions, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if Y.ndim != 2 or X.ndim != 2 or len(X) != len(Y):
        raise LocalizationError("features and positions must be matrices with equal rows")
    if not (np.all(np.isfinite(Y)) and np.all(np.isfinite(X))):
        raise LocalizationError("non-finite training data")
    N, D = Y.shape
    if not (0 < K < N):
        raise LocalizationError(f"need 0 < K < N (K={K}, N={N})")
    per = np.zeros(D, dtype=bool) if periodic is None else np.asarray(periodic, dtype=bool)
    if per.shape != (D,):
        raise LocalizationError("periodic mask must have one entry per feature")
    x_mean = X.mean(axis=0)
    x_scale = X.std(axis=0)
    x_scale[x_scale == 0] = 1.0
    Xs = (X - x_mean) / x_scale
    X1 = np.hstack([Xs, np.ones((N, 1))])
    yvar = Y.var(axis=0)
    sig_floor = cfg.sigma_floor * np.where(yvar > 0, yvar, 1.0) + 1e-300
    ss = np.random.SeedSequence([int(seed), K])
    for attempt, child in enumerate(ss.spawn(cfg.restarts + 1)):
        params, history = _fit_once(Xs, X1, Y, K, per, cfg, np.random.default_rng(child),
                                    sig_floor, callback)
        if params is not None:
            pi, c, gamma, W, sigma = params
            A = np.ascontiguousarray(np.transpose(W[:, :-1, :], (0, 2, 1)))
            b = np.ascontiguousarray(W[:, -1, :])
            return GllimModel(pi, c, gamma, A, b, sigma, x_mean, x_scale, per,
                              history, len(history), attempt)
    raise LocalizationError(f"GLLiM components collapsed in all {cfg.restarts + 1} attempts")


def _posterior_terms(model: GllimModel, Y, k, yk):
    """Posterior mean (N, L) and log marginal (N,) of component k given the
    (already unwrapped) observations ``yk``."""
    A, b, s, c, g = model.A[k], model.b[k], model.sigma[k], model.c[k], model.gamma[k]
    L, D = model.L, model.D
    g_inv = np.linalg.inv(g)
    AtSi = A.T / s  # (L, D)
    S_inv = g_inv + AtSi @ A
    S = np.linalg.inv(S_inv)
    u = yk - (A @ c + b)
    v = u @ AtSi.T  # (N, L)
    m = c + (v @ S.T)
    quad = (u * u) @ (1.0 / s) - np.einsum("ni,ij,nj->n", v, S, v)
    logdet = (np.log(s).sum() + np.linalg.slogdet(g)[1] + np.linalg.slogdet(S_inv)[1])
    logm = -0.5 * (D * LOG_2PI + logdet + quad) + math.log(model.pi[k])
    return m, logm


def predict_gllim(model: GllimModel, features, refine: int = 2):
    """Posterior-mean positions and component weights.

    Returns ``(positions, weights)`` with shapes (L,), (K,) for a single
    feature vector or (N, L), (N, K) for a matrix.
    """
    Y = np.asarray(features, dtype=float)
    single = Y.ndim == 1
    Y = np.atleast_2d(Y)
    if Y.shape[1] != model.D:
        raise LocalizationError(f"expected {model.D} features, got {Y.shape[1]}")
    if not np.all(np.isfinite(Y)):
        raise LocalizationError("non-finite feature vector")
    N, K = len(Y), model.K
    means = np.empty((K, N, model.L))
    logw = np.empty((N, K))
    per = model.periodic
    for k in range(K):
        anchor = np.broadcast_to(model.A[k] @ model.c[k] + model.b[k], Y.shape)
        for _ in range(1 + (refine if per.any() else 0)):
            yk = _unwrapped(Y, anchor, per)
            m, lw = _posterior_terms(model, Y, k, yk)
            anchor = m @ model.A[k].T + model.b[k]
        means[k], logw[:, k] = m, lw
    w = np.exp(logw - logsumexp(logw, axis=1, keepdims=True))
    xs = np.einsum("nk,knl->nl", w, means)
    x = xs * model.x_scale + model.x_mean
    return (x[0], w[0]) if single else (x, w)


_GLLIM_HEADER = struct.Struct("<4sHHIII")
_GLLIM_VERSION = 1


def save_gllim(model: GllimModel, path) -> Path:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_GLLIM_HEADER.pack(b"GLLM", _GLLIM_VERSION, 0, model.K, model.D, model.L))
        for arr in (model.x_mean, model.x_scale, model.pi, model.c, model.gamma,
                    model.A, model.b, model.sigma):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        fh.write(np.asarray(model.periodic, dtype=np.uint8).tobytes())
    return path


def load_gllim(path) -> GllimModel:
    raw = Path(path).read_bytes()
    magic, version, _, K, D, L = _GLLIM_HEADER.unpack_from(raw)
    if magic != b"GLLM" or version != _GLLIM_VERSION:
        raise LocalizationError(f"{path}: not a version-{_GLLIM_VERSION} GLLiM model file")
    shapes = [(L,), (L,), (K,), (K, L), (K, L, L), (K, D, L), (K, D), (K, D)]
    off = _GLLIM_HEADER.size
    arrays = []
    for shp in shapes:
        n = int(np.prod(shp))
        arrays.append(np.frombuffer(raw, "<f8", n, off).reshape(shp).copy())
        off += 8 * n
    if len(raw) != off + D:
        raise LocalizationError(f"{path}: size does not match header")
    periodic = np.frombuffer(raw, np.uint8, D, off).astype(bool)
    x_mean, x_scale, pi, c, gamma, A, b, sigma = arrays
    return GllimModel(pi, c, gamma, A, b, sigma, x_mean, x_scale, periodic)


# --------------------------------------------------------------------------
# Evaluation

TARGETS = ("azimuth", "elevation", "distance")
DEFAULT_THRESHOLDS = {"azimuth": 30.0, "elevation": 15.0, "distance": 1.0}


@dataclass(frozen=True)
class TargetStats:
    mean: float
    std: float
    outlier_pct: float
    threshold: float
    n: int

    def format(self, unit: str = "") -> str:
        return f"{self.mean:.2f}{unit} ± {self.std:.2f} ({self.outlier_pct:.1f}%)"


@dataclass(frozen=True)
class EvalReport:
    targets: dict  # name -> TargetStats

    def __getitem__(self, name) -> TargetStats:
        return self.targets[name]

    def to_rows(self) -> list:
        return [(name, s.mean, s.std, s.outlier_pct, s.threshold, s.n)
                for name, s in self.targets.items()]


def absolute_errors(predictions, truth, names: Sequence[str] = TARGETS) -> np.ndarray:
    """Absolute error per sample and target; azimuth differences wrap on the circle."""
    p = np.atleast_2d(np.asarray(predictions, dtype=float))
    t = np.atleast_2d(np.asarray(truth, dtype=float))
    if p.shape != t.shape:
        raise LocalizationError("predictions and ground truth differ in shape")
    err = np.abs(p - t)
    for j, name in enumerate(names[:p.shape[1]]):
        if name == "azimuth":
            err[:, j] = np.abs((p[:, j] - t[:, j] + 180.0) % 360.0 - 180.0)
    return err


def evaluate(predictions, truth, thresholds: Optional[dict] = None,
             names: Sequence[str] = TARGETS) -> EvalReport:
    """Mean and standard deviation of inlying absolute errors (error strictly
    below the target threshold) plus the outlier percentage per target.

    ``predictions`` and ``truth`` are (N, n_targets) in the order of
    ``names``; a 1-D input is read as a single target.
    """
    p = np.asarray(predictions, dtype=float)
    t = np.asarray(truth, dtype=float)
    if p.ndim == 1:
        p, t = p[:, None], t[:, None]
    if len(p) == 0:
        raise LocalizationError("nothing to evaluate")
    th = dict(DEFAULT_THRESHOLDS)
    th.update(thresholds or {})
    err = absolute_errors(p, t, names)
    out = {}
    for j in range(p.shape[1]):
        name = names[j]
        e = err[:, j]
        inl = e[e < th[name]]
        mean = float(inl.mean()) if inl.size else float("nan")
        std = float(inl.std()) if inl.size else float("nan")
        out[name] = TargetStats(mean, std, 100.0 * (1 - inl.size / e.size), float(th[name]),
                                int(e.size))
    return EvalReport(out)
