"""Recursive regularized least squares over random Fourier features.

Baseline residual learner with no notion of the parametric model, so it
cannot be corrected when the parameters move.
"""
from __future__ import annotations

import numpy as np


class RandomFeatureRLS:
    """Multi-output RRLS with ``phi(x) = sqrt(2/D) cos(Omega (x / scale) + b)``.

    Omega is drawn once from N(0, 1 / length_scale^2) and b from U[0, 2 pi).
    The regularized normal equations are solved recursively via
    Sherman-Morrison, starting from ``A^-1 = I / reg``.
    """

    def __init__(self, d_in: int, d_out: int, n_features: int = 400, length_scale: float = 1.0,
                 reg: float = 1e-3, input_scale=None, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.d_in = d_in
        self.d_out = d_out
        self.n_features = n_features
        self.omega = rng.normal(0.0, 1.0 / length_scale, size=(n_features, d_in))
        self.phase = rng.uniform(0.0, 2.0 * np.pi, size=n_features)
        self.input_scale = np.ones(d_in) if input_scale is None else np.asarray(input_scale, dtype=float)
        self.A_inv = np.eye(n_features) / reg
        self.weights = np.zeros((n_features, d_out))
        self.n_seen = 0

    def features(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float)) / self.input_scale
        return np.sqrt(2.0 / self.n_features) * np.cos(X @ self.omega.T + self.phase)

    def update(self, x, y):
        phi = self.features(x)[0]
        y = np.asarray(y, dtype=float).reshape(self.d_out)
        Aphi = self.A_inv @ phi
        k = Aphi / (1.0 + phi @ Aphi)
        self.weights += np.outer(k, y - phi @ self.weights)
        self.A_inv -= np.outer(k, Aphi)
        self.n_seen += 1

    def fit_stream(self, X, Y):
        for x, y in zip(np.asarray(X), np.asarray(Y)):
            self.update(x, y)
        return self

    def predict(self, X) -> np.ndarray:
        out = self.features(X) @ self.weights
        return out[0] if np.ndim(X) == 1 else out


def rrls_baseline_train(X, Y, **kwargs) -> RandomFeatureRLS:
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).reshape(X.shape[0], -1)
    model = RandomFeatureRLS(X.shape[1], Y.shape[1], **kwargs)
    return model.fit_stream(X, Y)


def rrls_baseline_predict(model: RandomFeatureRLS, X) -> np.ndarray:
    return model.predict(X)
