"""Independent reference implementations used by several test modules."""
import numpy as np


def mirror_lattice(dims, source, max_order):
    """Image sources by repeated mirroring across the six wall planes.

    Returns ``{rounded position: (order, hits per surface)}`` where order is
    the smallest number of mirror operations reaching that position.
    """
    dims = np.asarray(dims, dtype=float)
    start = np.asarray(source, dtype=float)
    key = lambda p: tuple(np.round(p, 9))
    found = {key(start): (0, (0,) * 6, start)}
    frontier = [(start, np.zeros(6, dtype=int))]
    for order in range(1, max_order + 1):
        nxt = []
        for p, hits in frontier:
            for axis in range(3):
                for side in range(2):
                    q = p.copy()
                    q[axis] = -q[axis] if side == 0 else 2 * dims[axis] - q[axis]
                    k = key(q)
                    if k in found:
                        continue
                    h = hits.copy()
                    h[2 * axis + side] += 1
                    found[k] = (order, tuple(h), q)
                    nxt.append((q, h))
        frontier = nxt
    return found


def exponential_noise(tau, fs=44100, duration=None, seed=0):
    """Seeded white noise under an e^(-t/tau) envelope."""
    duration = 12 * tau if duration is None else duration
    t = np.arange(int(duration * fs)) / fs
    return np.exp(-t / tau) * np.random.default_rng(seed).standard_normal(t.size)


class PlantedAffine:
    """y = A (x - mu) / scale + b + noise with Gaussian x; exposes the exact
    posterior mean E[x | y] as the Bayes-optimal predictor (the noise floor)."""

    def __init__(self, D=50, L=3, noise=0.5, seed=1):
        self.rng = np.random.default_rng(seed)
        self.A = self.rng.normal(size=(D, L))
        self.b = self.rng.normal(size=D)
        self.mu = np.array([0.0, 0.0, 2.0])[:L]
        self.scale = np.array([30.0, 10.0, 0.7])[:L]
        self.noise = noise

    def draw(self, n):
        X = self.mu + self.scale * self.rng.normal(size=(n, len(self.mu)))
        Y = ((X - self.mu) / self.scale) @ self.A.T + self.b
        return X, Y + self.noise * self.rng.normal(size=Y.shape)

    def posterior_mean(self, Y):
        As = self.A / self.scale
        prec = np.diag(self.scale ** -2.0)
        S = np.linalg.inv(prec + As.T @ As / self.noise ** 2)
        rhs = As.T @ (Y - self.b + As @ self.mu).T / self.noise ** 2 + (prec @ self.mu)[:, None]
        return (S @ rhs).T


def rmse(P, X):
    return np.sqrt(((np.asarray(P) - np.asarray(X)) ** 2).mean(axis=0))
