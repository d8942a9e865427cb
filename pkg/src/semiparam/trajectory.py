"""Cyclic excitation trajectories built from harmonics of one base frequency."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit


@dataclass(frozen=True)
class FourierTrajectory:
    """``q_d(t) = offset + sum_k a_k sin(k w t) + b_k cos(k w t)`` per joint.

    ``a`` and ``b`` are (n_dof, n_harmonics); ``omega`` is the base frequency
    in rad/s shared by all joints, so the trajectory repeats every
    ``2 pi / omega`` seconds.
    """

    omega: float
    a: np.ndarray
    b: np.ndarray
    offset: np.ndarray

    @property
    def period(self) -> float:
        return 2.0 * np.pi / self.omega

    @property
    def n_dof(self) -> int:
        return self.offset.shape[0]

    def __call__(self, t):
        return fourier_eval(self, t)


def fourier_eval(traj: FourierTrajectory, t):
    """Position, velocity and acceleration at time(s) ``t``.

    Scalar ``t`` gives n-vectors; an array of times gives (len(t), n) arrays.
    """
    if np.ndim(t) == 0:
        return _eval_scalar(traj.omega, traj.a, traj.b, traj.offset, float(t))
    t_arr = np.asarray(t, dtype=float)
    k = np.arange(1, traj.a.shape[1] + 1)
    kw = k * traj.omega
    ang = np.multiply.outer(t_arr, kw)          # (..., H)
    s, c = np.sin(ang), np.cos(ang)
    a, b = traj.a, traj.b                       # (n, H)
    q = traj.offset + s @ a.T + c @ b.T
    dq = (c * kw) @ a.T - (s * kw) @ b.T
    ddq = -(s * kw**2) @ a.T - (c * kw**2) @ b.T
    return q, dq, ddq


@njit(cache=True)
def _eval_scalar(omega, a, b, offset, t):
    n, H = a.shape
    q = offset.copy()
    dq = np.zeros(n)
    ddq = np.zeros(n)
    for h in range(H):
        kw = (h + 1) * omega
        s = np.sin(kw * t)
        c = np.cos(kw * t)
        for j in range(n):
            q[j] += a[j, h] * s + b[j, h] * c
            dq[j] += kw * (a[j, h] * c - b[j, h] * s)
            ddq[j] -= kw * kw * (a[j, h] * s + b[j, h] * c)
    return q, dq, ddq


def _project_out(x, C):
    """Remove the components of each row of x that violate ``C x = 0``."""
    return x - (x @ C.T) @ np.linalg.solve(C @ C.T, C)


def random_trajectory(rng: np.random.Generator, n_dof: int, period: float, amplitude,
                      offset, n_harmonics: int = 5, velocity_cap: float | None = None,
                      joint_limits=None, max_tries: int = 100) -> FourierTrajectory:
    """Draw a trajectory that starts and ends at rest at ``offset``.

    Coefficients are constrained so that ``q(0) = offset`` and
    ``dq(0) = ddq(0) = 0``; trajectories from the same offset therefore
    chain together smoothly.  Each joint is scaled to its peak excursion
    ``amplitude`` and the draw is rejected if it breaks the velocity cap or
    joint limits on a 10^4-point grid.
    """
    omega = 2.0 * np.pi / period
    k = np.arange(1, n_harmonics + 1, dtype=float)
    C_a = k[None, :]                            # sum k a_k = 0
    C_b = np.vstack([np.ones_like(k), k**2])    # sum b_k = 0, sum k^2 b_k = 0
    amplitude = np.broadcast_to(np.asarray(amplitude, dtype=float), (n_dof,))
    offset = np.broadcast_to(np.asarray(offset, dtype=float), (n_dof,)).copy()
    grid = np.linspace(0.0, period, 10_000)
    for _ in range(max_tries):
        a = _project_out(rng.normal(size=(n_dof, n_harmonics)) / k, C_a)
        b = _project_out(rng.normal(size=(n_dof, n_harmonics)) / k, C_b)
        traj = FourierTrajectory(omega, a, b, offset)
        q, dq, _ = fourier_eval(traj, grid)
        peak = np.abs(q - offset).max(axis=0)
        scale = amplitude / np.where(peak > 0, peak, 1.0)
        traj = FourierTrajectory(omega, a * scale[:, None], b * scale[:, None], offset)
        q, dq, _ = fourier_eval(traj, grid)
        if velocity_cap is not None and np.abs(dq).max() > velocity_cap:
            continue
        if joint_limits is not None:
            lo, hi = np.asarray(joint_limits, dtype=float)
            if np.any(q < lo) or np.any(q > hi):
                continue
        return traj
    raise RuntimeError("no admissible trajectory found; loosen amplitude or caps")


class TrajectorySequence:
    """Trajectories played back to back, cycling forever."""

    def __init__(self, trajectories: list[FourierTrajectory]):
        self.trajectories = list(trajectories)
        self.starts = np.concatenate([[0.0], np.cumsum([tr.period for tr in self.trajectories])])

    @property
    def cycle(self) -> float:
        return float(self.starts[-1])

    def index_at(self, t: float) -> int:
        tau = t % self.cycle
        return int(np.searchsorted(self.starts, tau, side="right") - 1)

    def __call__(self, t: float):
        tau = t % self.cycle
        i = min(int(np.searchsorted(self.starts, tau, side="right") - 1), len(self.trajectories) - 1)
        return fourier_eval(self.trajectories[i], tau - self.starts[i])
