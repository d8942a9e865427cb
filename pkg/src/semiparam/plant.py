"""Simulated robot: rigid-body chain plus friction the parametric model cannot express."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chain import KinematicChain, forward_dynamics
from .errors import DivergenceError

DIVERGENCE_LIMIT = 1e6


@dataclass(frozen=True)
class UnmodeledForces:
    """Per-joint resisting torque ``alpha tanh(beta dq) + gamma dq^3 + kappa sin(q)``."""

    alpha: np.ndarray = field(default_factory=lambda: np.zeros(1))
    beta: np.ndarray = field(default_factory=lambda: np.zeros(1))
    gamma: np.ndarray = field(default_factory=lambda: np.zeros(1))
    kappa: np.ndarray = field(default_factory=lambda: np.zeros(1))

    def __call__(self, q, dq) -> np.ndarray:
        return (self.alpha * np.tanh(self.beta * dq) + self.gamma * dq**3
                + self.kappa * np.sin(q))

    @classmethod
    def broadcast(cls, n_dof, alpha=0.0, beta=0.0, gamma=0.0, kappa=0.0):
        def arr(x):
            return np.broadcast_to(np.asarray(x, dtype=float), (n_dof,)).copy()
        return cls(arr(alpha), arr(beta), arr(gamma), arr(kappa))


@dataclass
class PlantState:
    q: np.ndarray
    dq: np.ndarray
    ddq: np.ndarray


def plant_step(chain: KinematicChain, pi_true, unmodeled: UnmodeledForces | None,
               state: PlantState, tau_cmd, dt: float) -> PlantState:
    """Semi-implicit Euler: velocity from the current acceleration, then position."""
    tau = np.asarray(tau_cmd, dtype=float)
    if unmodeled is not None:
        tau = tau - unmodeled(state.q, state.dq)
    ddq = forward_dynamics(chain, pi_true, state.q, state.dq, tau)
    dq = state.dq + dt * ddq
    q = state.q + dt * dq
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(dq))) or \
            max(np.abs(q).max(), np.abs(dq).max()) > DIVERGENCE_LIMIT:
        raise DivergenceError("plant state diverged")
    return PlantState(q, dq, ddq)
