"""Composite adaptive control: resolved rates, regressor filtering,
the composite parameter update and bounded-gain-forgetting adaptation gain.

All continuous-time laws are integrated with explicit Euler at the learning
rate; the control law itself is algebraic.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .errors import AdaptationDivergenceError, ContractError, UnstableFilterError

log = logging.getLogger(__name__)

PD_FLOOR = 1e-12


@dataclass(frozen=True)
class AdaptiveGains:
    Lambda: np.ndarray          # diagonal entries, 1/s
    K_D: np.ndarray             # diagonal entries, N m s / rad
    R: np.ndarray               # n x n prediction-error weight
    lambda0: float = 1.5
    k0: float = 0.1
    filter_pole: float = 20.0   # rad/s

    def __post_init__(self):
        lam = np.asarray(self.Lambda, dtype=float).reshape(-1)
        kd = np.asarray(self.K_D, dtype=float).reshape(-1)
        R = np.asarray(self.R, dtype=float)
        if R.ndim == 1:
            R = np.diag(R)
        if lam.shape != kd.shape or R.shape != (lam.size, lam.size):
            raise ContractError("gain dimensions disagree")
        if np.any(lam <= 0) or np.any(kd <= 0):
            raise ContractError("Lambda and K_D must be strictly positive")
        if np.any(np.linalg.eigvalsh(0.5 * (R + R.T)) <= 0):
            raise ContractError("R must be positive definite")
        if self.lambda0 <= 0 or self.k0 <= 0 or self.filter_pole <= 0:
            raise ContractError("lambda0, k0 and filter_pole must be positive")
        object.__setattr__(self, "Lambda", lam)
        object.__setattr__(self, "K_D", kd)
        object.__setattr__(self, "R", R)

    @property
    def gain_bound(self) -> float:
        """Upper bound on the spectral norm of P."""
        return self.lambda0 / self.k0


@dataclass(frozen=True)
class ResolvedRates:
    dq_r: np.ndarray
    ddq_r: np.ndarray
    s: np.ndarray
    e: np.ndarray | None = None


@dataclass(frozen=True)
class ParametricState:
    """Parameter estimate, adaptation gain and filter memories.

    ``P_inv`` is carried alongside ``P``: the gain is propagated in
    information form so it stays positive definite for any step size.
    ``P_norm`` caches the spectral norm of ``P``.
    """

    pi_hat: np.ndarray
    P: np.ndarray
    y_f: np.ndarray
    W: np.ndarray
    P_inv: np.ndarray | None = None
    P_norm: float | None = None

    def __post_init__(self):
        if self.P_inv is None:
            object.__setattr__(self, "P_inv", np.linalg.inv(self.P))
        if self.P_norm is None:
            object.__setattr__(self, "P_norm", spectral_norm_spd(self.P))

    @classmethod
    def initial(cls, pi_hat, n_dof: int, p0: float = 1.0) -> "ParametricState":
        pi_hat = np.array(pi_hat, dtype=float)
        p = pi_hat.size
        return cls(pi_hat=pi_hat, P=p0 * np.eye(p), y_f=np.zeros(n_dof),
                   W=np.zeros((n_dof, p)), P_inv=np.eye(p) / p0, P_norm=float(p0))


def resolved_rates(q, dq, q_d, dq_d, ddq_d, Lambda) -> ResolvedRates:
    """Reference velocity/acceleration corrected by the tracking error."""
    lam = np.asarray(Lambda, dtype=float)
    if lam.ndim == 2:
        lam = np.diag(lam)
    q, dq = np.asarray(q, dtype=float), np.asarray(dq, dtype=float)
    dq_r = dq_d - lam * (q - q_d)
    ddq_r = ddq_d - lam * (dq - dq_d)
    return ResolvedRates(dq_r=dq_r, ddq_r=ddq_r, s=dq - dq_r)


def filter_step(y_f, W, tau_meas, Y_now, pole: float, dt: float):
    """One step of the first-order low-pass applied to torque and regressor."""
    if dt <= 0 or pole <= 0:
        raise ContractError("dt and pole must be positive")
    a = pole * dt
    if a >= 1.0:
        raise UnstableFilterError(f"filter_pole * dt = {a} must be < 1")
    y_f = y_f + a * (np.asarray(tau_meas, dtype=float) - y_f)
    W = W + a * (np.asarray(Y_now, dtype=float) - W)
    return y_f, W


def prediction_error(W, pi_hat, y_f) -> np.ndarray:
    return W @ pi_hat - y_f


def composite_update(state: ParametricState, Y_direct, W, s, e, R, dt: float):
    """Parameter step driven by tracking error ``s`` and prediction error ``e``.

    Returns ``(new_state, delta_pi)``.
    """
    drive = np.asarray(Y_direct).T @ s + np.asarray(W).T @ (np.asarray(R) @ e)
    dpi = -dt * (state.P @ drive)
    if not np.all(np.isfinite(dpi)):
        raise AdaptationDivergenceError("non-finite parameter update")
    return replace(state, pi_hat=state.pi_hat + dpi), dpi


def spectral_norm_spd(P) -> float:
    return float(np.linalg.eigvalsh(P)[-1])


def forgetting_factor(P_norm: float, lambda0: float, k0: float) -> float:
    return lambda0 * (1.0 - P_norm * k0 / lambda0)


def bgf_gain_update(P, W, R, lambda0: float, k0: float, dt: float, P_inv=None):
    """Bounded-gain-forgetting step for the adaptation gain.

    Continuous law ``dP/dt = lam(t) P - P W^T R W P`` with
    ``lam(t) = lambda0 (1 - ||P|| / (lambda0 / k0))``.  Integrated as the
    equivalent information-form ODE ``d(P^-1)/dt = -lam P^-1 + W^T R W``: the
    forgetting term is integrated exactly and the excitation term with one
    Euler step, so P stays positive definite for any step size.

    Returns ``(P_new, P_inv_new)``.
    """
    P = np.asarray(P, dtype=float)
    if P_inv is None:
        P_inv = np.linalg.inv(P)
    P_new, info, _ = _bgf_step(P_inv, spectral_norm_spd(P), W, R, lambda0, k0, dt)
    return P_new, info


def _bgf_step(P_inv, P_norm, W, R, lambda0, k0, dt):
    # returns (P_new, P_inv_new, ||P_new||); the norm falls out of the eigendecomposition
    lam = forgetting_factor(P_norm, lambda0, k0)
    W = np.asarray(W, dtype=float)
    info = np.exp(-lam * dt) * P_inv + dt * (W.T @ np.asarray(R) @ W)
    info = 0.5 * (info + info.T)
    evals, evecs = np.linalg.eigh(info)
    gains = 1.0 / evals
    if not np.all(np.isfinite(gains)) or np.any(gains < PD_FLOOR):
        log.warning("adaptation gain lost positive definiteness; flooring eigenvalues")
        gains = np.where(np.isfinite(gains), np.maximum(gains, PD_FLOOR), PD_FLOOR)
        evals = 1.0 / gains
        info = (evecs * evals) @ evecs.T
    P_new = (evecs * gains) @ evecs.T
    return 0.5 * (P_new + P_new.T), info, float(gains.max())


def control_law(Y_direct, pi_hat, tau_np, K_D, s) -> np.ndarray:
    """Feedforward from the parametric model plus residual, minus velocity feedback."""
    kd = np.asarray(K_D, dtype=float)
    fb = kd @ s if kd.ndim == 2 else kd * s
    return np.asarray(Y_direct) @ pi_hat + tau_np - fb


def adaptation_step(state: ParametricState, Y_direct, s, gains: AdaptiveGains, dt: float,
                    frozen=None):
    """One learning-rate tick: gain first, then the parameter step with the new gain.

    Because the new gain already contains ``dt W^T R W``, the eigenvalues of
    ``dt P' W^T R W`` lie in [0, 1) and the prediction-error part of the
    explicit parameter step cannot overshoot, whatever the excitation level.
    ``frozen`` masks parameters held fixed.  Returns ``(new_state, delta_pi)``.
    """
    P, P_inv, P_norm = _bgf_step(state.P_inv, state.P_norm, state.W, gains.R,
                                 gains.lambda0, gains.k0, dt)
    state = replace(state, P=P, P_inv=P_inv, P_norm=P_norm)
    e = prediction_error(state.W, state.pi_hat, state.y_f)
    new, dpi = composite_update(state, Y_direct, state.W, s, e, gains.R, dt)
    if frozen is not None and np.any(frozen):
        dpi = np.where(frozen, 0.0, dpi)
        new = replace(state, pi_hat=state.pi_hat + dpi)
    return new, dpi
