"""Keep a residual mixture consistent with a changed parametric model.

When the parameter estimate moves by ``dpi`` the residual target at state x
moves by ``-Y(x) dpi``.  Each component's output mean is shifted by exactly
that amount at its input mean, and its covariance is pushed through the
local linearization::

    T = [[ I,   0 ],
         [-J,   I ]],   J = d(Y(x) dpi)/dx at the mean,   Sigma' = T Sigma T^T
"""
from __future__ import annotations

import logging

import numpy as np

from .chain import KinematicChain, batch_param_product, batch_param_product_partials
from .errors import DerivativeError
from .mixture import EIG_FLOOR, GaussianComponent, MixtureModel, floor_covariance

log = logging.getLogger(__name__)


class ChainRegressorMap:
    """``Y(q, dq, ddq) @ dpi`` and its state Jacobian for a kinematic chain."""

    def __init__(self, chain: KinematicChain):
        self.chain = chain
        self.d_in = 3 * chain.n_dof
        self.d_out = chain.n_dof

    def product(self, X_in, dpi):
        return batch_param_product(self.chain, X_in, dpi)

    def partials(self, X_in, dpi):
        J = batch_param_product_partials(self.chain, X_in, dpi)
        if not np.all(np.isfinite(J)):
            raise DerivativeError("non-finite regressor derivative")
        return J


class FeatureRegressorMap:
    """Scalar-input surrogate ``y = sum_k pi_k phi_k(x)``, e.g. ``phi = sin``."""

    def __init__(self, features, derivatives):
        self.features = list(features)
        self.derivatives = list(derivatives)
        self.d_in = 1
        self.d_out = 1

    def product(self, X_in, dpi):
        x = np.asarray(X_in, dtype=float).reshape(-1)
        return sum(p * f(x) for p, f in zip(dpi, self.features))[:, None]

    def partials(self, X_in, dpi):
        x = np.asarray(X_in, dtype=float).reshape(-1)
        return sum(p * g(x) for p, g in zip(dpi, self.derivatives))[:, None, None]


def sine_map() -> FeatureRegressorMap:
    return FeatureRegressorMap([np.sin], [np.cos])


def _as_map(regressor_map):
    if isinstance(regressor_map, KinematicChain):
        return ChainRegressorMap(regressor_map)
    return regressor_map


def transform_matrix(J: np.ndarray) -> np.ndarray:
    """Identity except for the ``-J`` block mapping input deviations into the outputs."""
    d_out, d_in = J.shape[-2:]
    d = d_in + d_out
    T = np.broadcast_to(np.eye(d), J.shape[:-2] + (d, d)).copy()
    T[..., d_in:, :d_in] = -J
    return T


def _shift_and_jacobian(X_in, dpi, rmap):
    """``Y(x) dpi`` and its Jacobian at each row of ``X_in``; NaN where evaluation fails."""
    try:
        return rmap.product(X_in, dpi), rmap.partials(X_in, dpi)
    except (DerivativeError, FloatingPointError):
        K = X_in.shape[0]
        return np.full((K, rmap.d_out), np.nan), np.full((K, rmap.d_out, rmap.d_in), np.nan)


def _transform_arrays(means, covs, dpi, rmap):
    """Transformed (means, covs) plus a per-component failure flag."""
    K = means.shape[0]
    flagged = np.zeros(K, dtype=bool)
    if K == 0 or not np.any(dpi):
        return means.copy(), covs.copy(), flagged
    d_in = rmap.d_in
    shift, J = _shift_and_jacobian(means[:, :d_in], dpi, rmap)
    flagged = ~(np.all(np.isfinite(J), axis=(1, 2)) & np.all(np.isfinite(shift), axis=1))
    if np.any(flagged):
        log.warning("%d components left untransformed: derivative failure", int(flagged.sum()))
    good = ~flagged
    new_means = means.copy()
    new_covs = covs.copy()
    new_means[good, d_in:] -= shift[good]
    T = transform_matrix(J[good])
    S = T @ covs[good] @ np.swapaxes(T, 1, 2)
    new_covs[good] = floor_covariance(S, EIG_FLOOR)
    return new_means, new_covs, flagged


def transform_component(comp: GaussianComponent, dpi, regressor_map) -> GaussianComponent:
    """Shift one component's output mean and map its covariance.

    Prior, accumulated mass and age are carried over unchanged.  On
    derivative failure the component is returned untouched.
    """
    rmap = _as_map(regressor_map)
    dpi = np.asarray(dpi, dtype=float)
    m, c, flagged = _transform_arrays(comp.mean[None], comp.cov[None], dpi, rmap)
    out = GaussianComponent(comp.prior, m[0], c[0], comp.sp, comp.age)
    out.flagged = bool(flagged[0])
    return out


def transform_model(model: MixtureModel, dpi, regressor_map, delta_max: float | None = None) -> MixtureModel:
    """New mixture with every component transformed for the parameter change ``dpi``.

    ``delta_max`` clips each entry of ``dpi`` first.  Indices of components
    that could not be transformed are in ``result.flagged``.
    """
    new = model.copy()
    new.flagged = apply_transform(new, dpi, regressor_map, delta_max)
    return new


def apply_transform(model: MixtureModel, dpi, regressor_map, delta_max: float | None = None) -> np.ndarray:
    """In-place variant of :func:`transform_model`; returns the failure mask."""
    rmap = _as_map(regressor_map)
    dpi = np.asarray(dpi, dtype=float)
    if delta_max is not None:
        dpi = np.clip(dpi, -delta_max, delta_max)
    K = len(model)
    if K == 0 or not np.any(dpi):
        return np.zeros(0, dtype=int)
    shift, J = _shift_and_jacobian(model.means[:, :rmap.d_in], dpi, rmap)
    flagged = ~(np.all(np.isfinite(J), axis=(1, 2)) & np.all(np.isfinite(shift), axis=1))
    if np.any(flagged):
        log.warning("%d components left untransformed: derivative failure", int(flagged.sum()))
    good = np.flatnonzero(~flagged)
    model.shear(shift[good], J[good], good)
    return np.flatnonzero(flagged)


def residual_target(tau_meas, tau_param) -> np.ndarray:
    """Training target for the residual learner: measured minus parametric torque."""
    return np.asarray(tau_meas, dtype=float) - np.asarray(tau_param, dtype=float)
