"""Runnable experiments: sine consistency demo, offline parameter switch,
the four-phase closed-loop run and a parametric-only adaptation check."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .adaptive import (
    AdaptiveGains,
    ParametricState,
    adaptation_step,
    filter_step,
    prediction_error,
    resolved_rates,
)
from .chain import (
    PARAMS_PER_LINK,
    KinematicChain,
    batch_param_product,
    inverse_dynamics,
    load_chain,
    reference_torque,
    regressor,
)
from .config import ExperimentConfig, Phase, as_vector, default_phases, validate_phases
from .consistency import ChainRegressorMap, apply_transform, sine_map, transform_model
from .errors import DivergenceError
from .metrics import nmse
from .mixture import MixtureModel, warmup_sigma
from .plant import PlantState, UnmodeledForces, plant_step
from .records import joint_columns, write_csv
from .rrls import RandomFeatureRLS
from .sensors import SensorChain
from .trajectory import TrajectorySequence, fourier_eval, random_trajectory

log = logging.getLogger(__name__)


# -- shared construction -------------------------------------------------------


def build_unmodeled(cfg: ExperimentConfig, n: int) -> UnmodeledForces:
    u = cfg.unmodeled
    return UnmodeledForces(as_vector(u.alpha, n), as_vector(u.beta, n),
                           as_vector(u.gamma, n), as_vector(u.kappa, n))


def build_gains(cfg: ExperimentConfig, n: int) -> AdaptiveGains:
    g = cfg.gains
    return AdaptiveGains(Lambda=as_vector(g.Lambda, n), K_D=as_vector(g.K_D, n),
                         R=np.diag(as_vector(g.R, n)), lambda0=g.lambda0, k0=g.k0,
                         filter_pole=g.filter_pole)


def build_trajectories(cfg: ExperimentConfig, n: int, count: int | None = None):
    tc = cfg.trajectory
    rng = np.random.default_rng(tc.seed)
    count = tc.count if count is None else count
    return [random_trajectory(rng, n, tc.period, as_vector(tc.amplitude, n), as_vector(tc.offset, n),
                              n_harmonics=tc.harmonics, velocity_cap=tc.velocity_cap)
            for _ in range(count)]


def new_mixture(cfg: ExperimentConfig, samples: np.ndarray, d_in: int) -> MixtureModel:
    """Mixture whose initial covariance and regularizer are scaled from warm-up samples."""
    g = cfg.gmm
    sigma = warmup_sigma(samples, g.warmup_scale)
    reg = g.reg_frac * np.diag(sigma) / g.warmup_scale
    return MixtureModel(d_in, samples.shape[1] - d_in, sigma, novelty=g.novelty,
                        sp_min=g.sp_min, age_min=g.age_min, reg=reg)


def friction_mask(n_dof: int) -> np.ndarray:
    """True on the two friction entries of every link's parameter block."""
    mask = np.zeros(n_dof * PARAMS_PER_LINK, dtype=bool)
    mask[PARAMS_PER_LINK - 2::PARAMS_PER_LINK] = True
    mask[PARAMS_PER_LINK - 1::PARAMS_PER_LINK] = True
    return mask


# -- sine demo -------------------------------------------------------------------


@dataclass
class SineReport:
    x: np.ndarray
    target_before: np.ndarray
    target_after: np.ndarray
    fit: np.ndarray
    mean_only: np.ndarray
    full: np.ndarray
    nmse_fit: float
    nmse_untransformed: float
    nmse_mean_only: float
    nmse_transformed: float
    models: dict = field(default_factory=dict)


def run_sine_demo(cfg: ExperimentConfig, out_dir: str | Path | None = None,
                  transform: bool = True) -> SineReport:
    """Fit ``sin(x)`` as the residual of a zero parametric model, then move
    the parameter so the true residual becomes ``0.2 sin(x)``.

    The parametric part is ``pi * sin(x)``; moving ``pi`` from 0 to
    ``param_change`` leaves the residual ``(1 - param_change) sin(x)``.
    """
    sc = cfg.sine
    rng = np.random.default_rng(cfg.seed)
    xs = rng.uniform(sc.x_min, sc.x_max, sc.n_samples)
    data = np.column_stack([xs, np.sin(xs)])
    model = new_mixture(cfg, data, 1)
    for _ in range(sc.passes):
        for row in data[rng.permutation(len(data))]:
            model.update(row)
            model.prune()

    dpi = np.array([sc.param_change])
    rmap = sine_map()
    mean_only = model.copy()
    mean_only.means[:, 1] -= rmap.product(mean_only.means[:, :1], dpi)[:, 0]
    mean_only._dirty = True
    full = transform_model(model, dpi, rmap) if transform else model.copy()

    grid = np.linspace(sc.x_min, sc.x_max, sc.grid_points)
    before = np.sin(grid)
    after = (1.0 - sc.param_change) * np.sin(grid)
    fit = model.predict_many(grid[:, None])[:, 0]
    mo = mean_only.predict_many(grid[:, None])[:, 0]
    fu = full.predict_many(grid[:, None])[:, 0]
    rep = SineReport(grid, before, after, fit, mo, fu,
                     nmse_fit=float(nmse(fit, before)), nmse_untransformed=float(nmse(fit, after)),
                     nmse_mean_only=float(nmse(mo, after)), nmse_transformed=float(nmse(fu, after)),
                     models={"fit": model, "mean_only": mean_only, "full": full})
    if out_dir is not None:
        out = Path(out_dir)
        write_csv(out / "run.csv", ["x", "target_before", "target_after", "gmr_fit",
                                    "gmr_mean_only", "gmr_transformed"],
                  zip(grid, before, after, fit, mo, fu))
        write_csv(out / "summary.csv", ["condition", "nmse"],
                  [("fit_vs_original", rep.nmse_fit), ("untransformed_vs_new", rep.nmse_untransformed),
                   ("mean_only_vs_new", rep.nmse_mean_only), ("transformed_vs_new", rep.nmse_transformed)])
        write_csv(out / "plotdata" / "sine_curves.csv",
                  ["x", "target_before", "target_after", "gmr_fit", "gmr_mean_only", "gmr_transformed"],
                  zip(grid, before, after, fit, mo, fu))
        write_csv(out / "plotdata" / "sine_samples.csv", ["x", "y"], data)
        rows = []
        for panel, m in rep.models.items():
            for k, (p, mu, S) in enumerate(zip(m.priors, m.means, m.covs)):
                rows.append((panel, k, p, mu[0], mu[1], S[0, 0], S[0, 1], S[1, 1]))
        write_csv(out / "plotdata" / "sine_components.csv",
                  ["panel", "component", "prior", "mu_x", "mu_y", "s_xx", "s_xy", "s_yy"], rows)
        full.save(out / "mixture.ckpt")
    return rep


# -- offline parameter switch ----------------------------------------------------


@dataclass
class VirtualReport:
    baseline_before: np.ndarray
    baseline_after: np.ndarray
    gmm_before: np.ndarray
    gmm_untransformed_after: np.ndarray
    gmm_transformed_after: np.ndarray
    n_components: int
    n_train: int
    seconds: float

    def rows(self):
        n = self.baseline_before.size
        return [(j + 1, self.baseline_before[j], self.baseline_after[j], self.gmm_before[j],
                 self.gmm_untransformed_after[j], self.gmm_transformed_after[j]) for j in range(n)]


VIRTUAL_HEADER = ["joint", "baseline_before", "baseline_after", "gmm_before",
                  "gmm_untransformed_after", "gmm_transformed_after"]


def virtual_dataset(cfg: ExperimentConfig, chain: KinematicChain, count: int = 7):
    """Desired-state samples and measured torques along ``count`` trajectories.

    The plant is assumed to track perfectly, so the torque at each sample is
    the true rigid-body torque plus the unmodeled forces.
    """
    n = chain.n_dof
    unmodeled = build_unmodeled(cfg, n)
    dt = cfg.rates.dt
    X, tau = [], []
    for traj in build_trajectories(cfg, n, count):
        t = np.arange(0.0, traj.period, dt)
        q, dq, ddq = fourier_eval(traj, t)
        X.append(np.hstack([q, dq, ddq]))
        tau.append(np.array([inverse_dynamics(chain, chain.pi_reference, a, b, c) for a, b, c in zip(q, dq, ddq)])
                   + unmodeled(q, dq))
    return np.vstack(X), np.vstack(tau)


def run_virtual_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None,
                           switch_scale: float | None = None,
                           include_friction: bool = False) -> VirtualReport:
    """Train on the residual of a zero parametric model, then switch the
    inertial parameters to ``switch_scale * pi_true`` and compare the
    residual learners.

    Friction entries stay at zero on both sides of the switch unless
    ``include_friction`` is set.
    """
    t0 = time.perf_counter()
    chain = load_chain(cfg.chain_path())
    n = chain.n_dof
    scale = cfg.init_scale if switch_scale is None else switch_scale
    X, tau = virtual_dataset(cfg, chain)
    dec = cfg.gmm.decimation
    train = slice(0, None, dec)
    test = slice(1, None, dec)
    Xtr, Xte = X[train], X[test]
    pi_before = np.zeros(chain.n_params)
    pi_after = scale * chain.pi_reference
    if not include_friction:
        pi_after[friction_mask(n)] = 0.0
    dpi = pi_after - pi_before
    target_tr = tau[train] - batch_param_product(chain, Xtr, pi_before)
    before = tau[test] - batch_param_product(chain, Xte, pi_before)
    after = tau[test] - batch_param_product(chain, Xte, pi_after)

    data = np.hstack([Xtr, target_tr])
    n_warm = max(int(cfg.gmm.warmup_seconds / (cfg.rates.dt * dec)), 2)
    gmm = new_mixture(cfg, data[:n_warm], 3 * n)
    for row in data:
        gmm.update(row)
        gmm.prune()
    rr = cfg.rrls
    baseline = RandomFeatureRLS(3 * n, n, n_features=rr.n_features, length_scale=rr.length_scale,
                                reg=rr.reg, input_scale=Xtr.std(axis=0) + 1e-9, seed=cfg.seed)
    baseline.fit_stream(Xtr, target_tr)
    gmm_t = transform_model(gmm, dpi, ChainRegressorMap(chain), cfg.delta_max)

    lo, hi = tau[test].min(axis=0), tau[test].max(axis=0)
    p_base = baseline.predict(Xte)
    p_gmm = gmm.predict_many(Xte[:, :3 * n])
    p_gmm_t = gmm_t.predict_many(Xte[:, :3 * n])
    rep = VirtualReport(
        baseline_before=nmse(p_base, before, lo, hi), baseline_after=nmse(p_base, after, lo, hi),
        gmm_before=nmse(p_gmm, before, lo, hi), gmm_untransformed_after=nmse(p_gmm, after, lo, hi),
        gmm_transformed_after=nmse(p_gmm_t, after, lo, hi),
        n_components=len(gmm), n_train=len(Xtr), seconds=time.perf_counter() - t0)
    if out_dir is not None:
        out = Path(out_dir)
        t = np.arange(len(Xte)) * cfg.rates.dt * dec
        header = (["t"] + joint_columns("tau_meas", n) + joint_columns("target_after", n)
                  + joint_columns("baseline", n) + joint_columns("gmm", n) + joint_columns("gmm_transformed", n))
        write_csv(out / "run.csv", header, np.column_stack([t, tau[test], after, p_base, p_gmm, p_gmm_t]))
        write_csv(out / "summary.csv", VIRTUAL_HEADER, rep.rows())
        write_csv(out / "plotdata" / "virtual_bars.csv", VIRTUAL_HEADER, rep.rows())
        gmm_t.save(out / "mixture.ckpt")
    return rep


# -- parametric-only adaptation check -------------------------------------------


@dataclass
class AdaptationTrace:
    t: np.ndarray
    e_norm: np.ndarray
    P_norm: np.ndarray
    P_min_eig: np.ndarray
    pi_hat: np.ndarray


def run_adaptation_check(cfg: ExperimentConfig, duration: float = 60.0) -> AdaptationTrace:
    """Closed loop with the parametric controller alone and exact state feedback.

    Records the filtered prediction-error norm and the spectrum of P at the
    learning rate.
    """
    chain = load_chain(cfg.chain_path())
    n = chain.n_dof
    gains = build_gains(cfg, n)
    seq = TrajectorySequence(build_trajectories(cfg, n))
    dt = cfg.rates.dt
    every = cfg.rates.learn_every
    dt_learn = every * dt
    pi_true = chain.pi_reference
    state = ParametricState.initial(cfg.init_scale * pi_true, n, cfg.gains.p0)
    q0, dq0, ddq0 = seq(0.0)
    plant = PlantState(q0.copy(), dq0.copy(), ddq0.copy())
    ts, es, pn, pm, pis = [], [], [], [], []
    steps = int(round(duration / dt))
    for k in range(steps):
        t = k * dt
        q_d, dq_d, ddq_d = seq(t)
        rr = resolved_rates(plant.q, plant.dq, q_d, dq_d, ddq_d, gains.Lambda)
        tau = reference_torque(chain, state.pi_hat, plant.q, plant.dq, rr.dq_r, rr.ddq_r) - gains.K_D * rr.s
        if k % every == 0 and k > 0:
            e = prediction_error(state.W, state.pi_hat, state.y_f)
            Y_dir = regressor(chain, plant.q, plant.dq, rr.dq_r, rr.ddq_r)
            state, _ = adaptation_step(state, Y_dir, rr.s, gains, dt_learn)
            P = state.P
            ev = np.linalg.eigvalsh(P)
            ts.append(t)
            es.append(float(np.linalg.norm(e)))
            pn.append(float(ev[-1]))
            pm.append(float(ev[0]))
            pis.append(state.pi_hat.copy())
        prev = plant
        plant = plant_step(chain, pi_true, None, plant, tau, dt)
        # the acceleration just produced pairs with the state it started from
        Y_meas = regressor(chain, prev.q, prev.dq, prev.dq, plant.ddq)
        y_f, W = filter_step(state.y_f, state.W, tau, Y_meas, gains.filter_pole, dt)
        state = replace(state, y_f=y_f, W=W)
    return AdaptationTrace(np.array(ts), np.array(es), np.array(pn), np.array(pm), np.array(pis))


# -- four-phase closed-loop run --------------------------------------------------


@dataclass
class PhasedReport:
    transform: bool
    phases: list
    nmse: dict                  # window label -> {"q"|"dq"|"tau": per-joint array}
    created: dict               # window label -> components created in that window
    n_components: int
    aborted: str | None
    seconds: float
    run_header: list
    run_rows: list

    def ratio(self, window: str, metric: str, ref: str = "2") -> np.ndarray:
        return self.nmse[window][metric] / self.nmse[ref][metric]


METRICS = ("q", "dq", "tau")


def phase_index(phases: list[Phase], t: float) -> int:
    for i, p in enumerate(phases):
        if p.start <= t < p.end:
            return i
    return len(phases) - 1


def run_header(n: int) -> list[str]:
    cols = ["t", "phase"]
    for name in ("q", "q_d", "dq", "dq_d", "tau_meas", "tau_param", "tau_np", "tau_fb", "tau_model"):
        cols += joint_columns(name, n)
    return cols + ["n_components"]


def window_nmse(rows: np.ndarray, n: int, mask: np.ndarray) -> dict:
    """Per-joint nMSE of q, dq against their desired values and of the model
    torque against the measured torque, over the rows selected by ``mask``."""
    col = {name: 2 + i * n for i, name in enumerate(
        ("q", "q_d", "dq", "dq_d", "tau_meas", "tau_param", "tau_np", "tau_fb", "tau_model"))}
    r = rows[mask]

    def block(name):
        return r[:, col[name]:col[name] + n]
    return {"q": nmse(block("q"), block("q_d")),
            "dq": nmse(block("dq"), block("dq_d")),
            "tau": nmse(block("tau_model"), block("tau_meas"))}


def phase_windows(phases: list[Phase]) -> dict:
    """Window label -> list of phase numbers (1-based); adds the joint ``3+4`` window."""
    wins = {str(i + 1): [i + 1] for i in range(len(phases))}
    if len(phases) >= 4:
        wins["3+4"] = [3, 4]
    return wins


def summarize_log(rows: np.ndarray, n: int, phases: list[Phase]) -> dict:
    out = {}
    for label, members in phase_windows(phases).items():
        mask = np.isin(rows[:, 1], members)
        if mask.sum() >= 2:
            out[label] = window_nmse(rows, n, mask)
    return out


def run_phased_experiment(cfg: ExperimentConfig, transform: bool = True,
                          out_dir: str | Path | None = None,
                          duration: float | None = None) -> PhasedReport:
    """Four-phase closed-loop run on the simulated plant.

    Each control step: estimate the state, form the resolved rates, command
    the parametric reference torque plus the mixture's prediction at the
    desired state minus velocity feedback, and integrate the plant.  The
    mixture ingests ``[q, dq, ddq, tau_meas - Y pi_hat]`` every few steps.
    At the learning rate the parameters and gain are updated and, when the
    phase asks for it, the mixture is transformed by the parameter change.
    """
    t_start = time.perf_counter()
    chain = load_chain(cfg.chain_path())
    n = chain.n_dof
    phases = cfg.phases or default_phases(transform)
    validate_phases(phases)
    if duration is None:
        duration = phases[-1].end
    gains = build_gains(cfg, n)
    unmodeled = build_unmodeled(cfg, n)
    seq = TrajectorySequence(build_trajectories(cfg, n))
    sc = cfg.sensors
    sensors = SensorChain(n, sigma_q=sc.sigma_q, jerk_var=sc.jerk_var, pll_omega=sc.pll_omega,
                          bypass=sc.bypass)
    rng = np.random.default_rng(cfg.seed)
    rmap = ChainRegressorMap(chain)
    r = cfg.rates
    dt = r.dt
    dt_learn = r.learn_every * dt
    dec = cfg.gmm.decimation
    n_warm = max(int(round(cfg.gmm.warmup_seconds / (dt * dec))), 2)
    pi_true = chain.pi_reference
    limit = None if cfg.torque_limit is None else as_vector(cfg.torque_limit, n)
    fixed = friction_mask(n) if not cfg.gains.adapt_friction else np.zeros(chain.n_params, dtype=bool)

    state = ParametricState.initial(cfg.init_scale * pi_true, n, cfg.gains.p0)
    q0, dq0, ddq0 = seq(0.0)
    plant = PlantState(q0.copy(), dq0.copy(), ddq0.copy())
    sensors.reset(q0, dq0, ddq0)
    gmm: MixtureModel | None = None
    warm: list[np.ndarray] = []
    zeros = np.zeros(n)
    rows: list[np.ndarray] = []
    created_at: list[tuple[int, int]] = []
    header = run_header(n)
    params_rows = []
    aborted = None

    steps = int(round(duration / dt))
    try:
        for k in range(steps):
            t = k * dt
            ph_i = phase_index(phases, t)
            ph = phases[ph_i]
            q_m, dq_e, ddq_e = sensors.step(plant.q, dt, rng, plant.dq, plant.ddq)
            q_d, dq_d, ddq_d = seq(t)
            rr = resolved_rates(q_m, dq_e, q_d, dq_d, ddq_d, gains.Lambda)
            tau_param = reference_torque(chain, state.pi_hat, q_m, dq_e, rr.dq_r, rr.ddq_r)
            x_d = np.concatenate([q_d, dq_d, ddq_d])
            tau_np = gmm.predict(x_d)[0] if (ph.np_output and gmm is not None) else zeros
            tau_fb = gains.K_D * rr.s
            tau_cmd = tau_param + tau_np - tau_fb
            if limit is not None:
                tau_cmd = np.clip(tau_cmd, -limit, limit)
            q_true, dq_true = plant.q, plant.dq
            plant = plant_step(chain, pi_true, unmodeled, plant, tau_cmd, dt)
            tau_meas = tau_cmd

            x_m = np.concatenate([q_m, dq_e, ddq_e])
            Y_meas = regressor(chain, q_m, dq_e, dq_e, ddq_e)
            tau_id = Y_meas @ state.pi_hat
            y_f, W = filter_step(state.y_f, state.W, tau_meas, Y_meas, gains.filter_pole, dt)
            state = replace(state, y_f=y_f, W=W)

            if k % r.log_every == 0:
                tau_model = tau_id + (gmm.predict(x_m)[0] if (ph.np_output and gmm is not None) else zeros)
                rows.append(np.concatenate([[t, ph_i + 1], q_true, q_d, dq_true, dq_d, tau_meas, tau_param,
                                            tau_np, tau_fb, tau_model, [len(gmm) if gmm else 0]]))

            if ph.np_learn and k % dec == 0:
                sample = np.concatenate([x_m, tau_meas - tau_id])
                if gmm is None:
                    warm.append(sample)
                    if len(warm) >= n_warm:
                        gmm = new_mixture(cfg, np.array(warm), 3 * n)
                        for s_ in warm:
                            gmm.update(s_)
                        gmm.prune()
                        created_at.append((ph_i + 1, gmm.created))
                        warm = []
                else:
                    before = gmm.created
                    gmm.update(sample)
                    gmm.prune()
                    if gmm.created != before:
                        created_at.append((ph_i + 1, gmm.created - before))

            if ph.p_learn and k % r.learn_every == 0:
                Y_dir = regressor(chain, q_m, dq_e, rr.dq_r, rr.ddq_r)
                state, dpi = adaptation_step(state, Y_dir, rr.s, gains, dt_learn, fixed)
                if ph.transform and gmm is not None:
                    apply_transform(gmm, dpi, rmap, cfg.delta_max)

            if r.params_log_every and k % r.params_log_every == 0:
                params_rows.append(np.concatenate([[t, state.P_norm], state.pi_hat]))
    except DivergenceError as exc:
        aborted = f"diverged at t={k * dt:.3f}: {exc}"
        log.error(aborted)

    data = np.array(rows)
    summary = summarize_log(data, n, phases) if len(rows) else {}
    created = {}
    for label, members in phase_windows(phases).items():
        created[label] = int(sum(c for p, c in created_at if p in members))
    rep = PhasedReport(transform, phases, summary, created, len(gmm) if gmm else 0, aborted,
                       time.perf_counter() - t_start, header, rows)
    if out_dir is not None:
        out = Path(out_dir)
        write_csv(out / "run.csv", header, rows)
        srows = []
        for label, res in summary.items():
            for j in range(n):
                srows.append((label, j + 1, res["q"][j], res["dq"][j], res["tau"][j], created[label]))
        write_csv(out / "summary.csv", ["window", "joint", "nmse_q", "nmse_dq", "nmse_tau",
                                        "components_created"], srows)
        write_csv(out / "plotdata" / "params.csv",
                  ["t", "P_norm"] + [f"pi_{i + 1}" for i in range(chain.n_params)], params_rows)
        write_csv(out / "plotdata" / "phase_nmse.csv",
                  ["window", "metric"] + [f"joint_{j + 1}" for j in range(n)],
                  [(label, m, *res[m]) for label, res in summary.items() for m in METRICS])
        write_csv(out / "plotdata" / "torque_contributions.csv",
                  ["t"] + joint_columns("tau_param", n) + joint_columns("tau_np", n)
                  + joint_columns("tau_fb", n),
                  [np.concatenate([row[:1], row[2 + 5 * n:2 + 8 * n]]) for row in rows])
        if gmm is not None:
            gmm.save(out / "mixture.ckpt")
    return rep
