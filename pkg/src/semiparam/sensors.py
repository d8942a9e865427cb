"""Joint encoder model with velocity (Kalman) and acceleration (PLL) estimators."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit


@dataclass
class SensorChain:
    """Noisy position measurement followed by per-joint estimators.

    Velocity: per-joint Kalman filter over (position, velocity, acceleration)
    driven by white jerk of variance ``jerk_var``.  Acceleration: third-order phase-locked
    loop on position with all three closed-loop poles at ``-pll_omega``.
    With ``bypass`` the true state passes through untouched.
    """

    n_dof: int
    sigma_q: float = 0.0
    jerk_var: float = 1e4
    pll_omega: float = 150.0
    bypass: bool = False

    def __post_init__(self):
        n = self.n_dof
        self.x = np.zeros((n, 3))
        self.P = np.tile(np.eye(3), (n, 1, 1))
        self.pll = np.zeros((n, 3))
        self.initialized = False

    @property
    def _meas_var(self) -> float:
        return max(self.sigma_q**2, 1e-12)

    @property
    def pll_gains(self):
        w = self.pll_omega
        return 3.0 * w, 3.0 * w**2, w**3

    def reset(self, q, dq=None, ddq=None):
        n = self.n_dof
        dq = np.zeros(n) if dq is None else dq
        ddq = np.zeros(n) if ddq is None else ddq
        self.x = np.column_stack([q, dq, ddq]).astype(float)
        self.P = np.tile(np.diag([self._meas_var, 1e2, 1e4]), (n, 1, 1))
        self.pll = np.column_stack([q, dq, ddq]).astype(float)
        self.initialized = True

    def step(self, q_true, dt: float, rng: np.random.Generator | None = None,
             dq_true=None, ddq_true=None):
        """Return ``(q_meas, dq_est, ddq_est)``."""
        q_true = np.asarray(q_true, dtype=float)
        if self.bypass:
            n = self.n_dof
            return (q_true.copy(),
                    np.zeros(n) if dq_true is None else np.asarray(dq_true, dtype=float).copy(),
                    np.zeros(n) if ddq_true is None else np.asarray(ddq_true, dtype=float).copy())
        if self.sigma_q > 0 and rng is not None:
            q_meas = q_true + self.sigma_q * rng.standard_normal(self.n_dof)
        else:
            q_meas = q_true.copy()
        if not self.initialized:
            self.reset(q_meas)
        dq_est, ddq_est = np.empty(self.n_dof), np.empty(self.n_dof)
        k1, k2, k3 = self.pll_gains
        _estimate(self.x, self.P, self.pll, q_meas, dt, self.jerk_var, self._meas_var,
                  k1, k2, k3, dq_est, ddq_est)
        return q_meas, dq_est, ddq_est


@njit(cache=True)
def _estimate(x, P, pll, z, dt, jerk_var, r, k1, k2, k3, dq_out, ddq_out):
    """Advance every joint's Kalman filter and PLL by one sample, in place."""
    F = np.array([[1.0, dt, 0.5 * dt * dt], [0.0, 1.0, dt], [0.0, 0.0, 1.0]])
    g = np.array([dt**3 / 6.0, dt * dt / 2.0, dt])
    Pj = np.empty((3, 3))
    FP = np.empty((3, 3))
    xj = np.empty(3)
    K = np.empty(3)
    for j in range(x.shape[0]):
        # Kalman predict
        for a in range(3):
            xj[a] = F[a, 0] * x[j, 0] + F[a, 1] * x[j, 1] + F[a, 2] * x[j, 2]
            for b in range(3):
                FP[a, b] = F[a, 0] * P[j, 0, b] + F[a, 1] * P[j, 1, b] + F[a, 2] * P[j, 2, b]
        for a in range(3):
            for b in range(3):
                Pj[a, b] = (FP[a, 0] * F[b, 0] + FP[a, 1] * F[b, 1] + FP[a, 2] * F[b, 2]
                            + jerk_var * g[a] * g[b])
        # correct with the position measurement
        s = Pj[0, 0] + r
        innov = z[j] - xj[0]
        for a in range(3):
            K[a] = Pj[a, 0] / s
            x[j, a] = xj[a] + K[a] * innov
        for a in range(3):
            for b in range(3):
                P[j, a, b] = Pj[a, b] - K[a] * Pj[0, b]
        for a in range(3):
            for b in range(a + 1, 3):
                v = 0.5 * (P[j, a, b] + P[j, b, a])
                P[j, a, b] = v
                P[j, b, a] = v
        dq_out[j] = x[j, 1]
        # PLL
        err = z[j] - pll[j, 0]
        pos = pll[j, 0] + dt * (pll[j, 1] + k1 * err)
        vel = pll[j, 1] + dt * (pll[j, 2] + k2 * err)
        acc = pll[j, 2] + dt * k3 * err
        pll[j, 0], pll[j, 1], pll[j, 2] = pos, vel, acc
        ddq_out[j] = acc


def sensor_step(sc: SensorChain, q_true, dt: float, rng=None, dq_true=None, ddq_true=None):
    return sc.step(q_true, dt, rng, dq_true, ddq_true)
