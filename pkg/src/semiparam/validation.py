"""Self-checks of the dynamics, the transform and the sine demo against
independent references (a second code path or a closed form)."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .chain import (
    KinematicChain,
    inverse_dynamics,
    mass_matrix,
    regressor,
    regressor_param_product_partials,
)
from .config import ExperimentConfig
from .consistency import ChainRegressorMap, transform_model
from .experiments import run_sine_demo
from .mixture import MixtureModel


@dataclass
class Check:
    name: str
    value: float
    limit: float
    seconds: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.limit)

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag} {self.name}: {self.value:.3e} (limit {self.limit:.1e}, {self.seconds:.2f} s)"


def random_state(rng: np.random.Generator, n: int, scale: float = 2.0):
    return (rng.uniform(-np.pi, np.pi, n), rng.uniform(-scale, scale, n),
            rng.uniform(-scale, scale, n))


def regressor_residual(chain: KinematicChain, draws: int, rng: np.random.Generator) -> float:
    """Worst ``|Y pi - ID| / max(1, |ID|)`` over random states and parameters."""
    worst = 0.0
    for _ in range(draws):
        q, dq, ddq = random_state(rng, chain.n_dof)
        pi = rng.normal(size=chain.n_params)
        tau = inverse_dynamics(chain, pi, q, dq, ddq)
        Y = regressor(chain, q, dq, dq, ddq)
        worst = max(worst, np.linalg.norm(Y @ pi - tau) / max(1.0, np.linalg.norm(tau)))
    return worst


def acceleration_partial_error(chain: KinematicChain, draws: int, rng: np.random.Generator) -> float:
    """Worst relative gap between the ddq Jacobian of ``Y dpi`` and ``M(q; dpi)``."""
    worst = 0.0
    for _ in range(draws):
        q, dq, ddq = random_state(rng, chain.n_dof)
        dpi = chain.pi_reference * rng.uniform(0.5, 1.5, chain.n_params)
        _, _, J_ddq = regressor_param_product_partials(chain, q, dq, ddq, dpi)
        M = mass_matrix(chain, dpi, q)
        worst = max(worst, np.linalg.norm(J_ddq - M) / np.linalg.norm(M))
    return worst


def random_mixture(rng: np.random.Generator, d_in: int, d_out: int, k: int) -> MixtureModel:
    d = d_in + d_out
    A = rng.normal(size=(k, d, d))
    covs = A @ np.swapaxes(A, 1, 2) / d + 0.1 * np.eye(d)
    model = MixtureModel(d_in, d_out, np.eye(d))
    model.set_components(rng.normal(size=(k, d)), covs, rng.uniform(1, 10, k))
    return model


def mean_shift_error(chain: KinematicChain, k: int, rng: np.random.Generator) -> float:
    """Worst gap between transformed output means and ``mu_o - Y(mu_i) dpi``."""
    d_in = 3 * chain.n_dof
    model = random_mixture(rng, d_in, chain.n_dof, k)
    dpi = 0.1 * rng.normal(size=chain.n_params)
    out = transform_model(model, dpi, ChainRegressorMap(chain))
    # the regressor matrix is a separate code path from the Newton-Euler product the transform uses
    n = chain.n_dof
    mu = model.means[:, :d_in]
    expect = model.means[:, d_in:] - np.array([regressor(chain, m[:n], m[n:2 * n], m[n:2 * n], m[2 * n:]) @ dpi
                                               for m in mu])
    return float(np.abs(out.means[:, d_in:] - expect).max())


def zero_transform_difference(chain: KinematicChain, k: int, rng: np.random.Generator) -> float:
    """1 if a zero parameter change alters any bit of the mixture, else 0."""
    model = random_mixture(rng, 3 * chain.n_dof, chain.n_dof, k)
    out = transform_model(model, np.zeros(chain.n_params), ChainRegressorMap(chain))
    same = (np.array_equal(out.means, model.means) and np.array_equal(out.covs, model.covs)
            and np.array_equal(out.sp, model.sp))
    return 0.0 if same else 1.0


def run_checks(chains: dict[str, KinematicChain], cfg: ExperimentConfig, seed: int = 0,
               draws: int = 200) -> list[Check]:
    rng = np.random.default_rng(seed)
    checks = []

    def timed(name, fn, limit):
        t0 = time.perf_counter()
        value = float(fn())
        checks.append(Check(name, value, limit, time.perf_counter() - t0))

    for label, chain in chains.items():
        timed(f"{label} regressor vs inverse dynamics", lambda: regressor_residual(chain, draws, rng), 1e-8)
        timed(f"{label} acceleration partials vs mass matrix",
              lambda: acceleration_partial_error(chain, min(draws, 50), rng), 1e-6)
        timed(f"{label} zero transform changes nothing", lambda: zero_transform_difference(chain, 20, rng), 0.0)
        timed(f"{label} transformed means", lambda: mean_shift_error(chain, 50, rng), 1e-10)
    rep = run_sine_demo(cfg)
    checks.append(Check("sine demo transformed nMSE", rep.nmse_transformed, 1e-2, 0.0))
    checks.append(Check("sine demo transformed / untransformed nMSE",
                        rep.nmse_transformed / rep.nmse_untransformed, 0.1, 0.0))
    return checks
