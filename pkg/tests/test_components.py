"""Trajectories, plant, sensors, metrics, records and the RRLS baseline."""
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from semiparam.chain import inverse_dynamics
from semiparam.errors import ContractError, DegenerateNormalizerError, DivergenceError
from semiparam.metrics import nmse
from semiparam.plant import PlantState, UnmodeledForces, plant_step
from semiparam.records import fmt, joint_columns, read_csv, write_csv
from semiparam.rrls import RandomFeatureRLS, rrls_baseline_predict, rrls_baseline_train
from semiparam.sensors import SensorChain
from semiparam.trajectory import FourierTrajectory, TrajectorySequence, fourier_eval, random_trajectory

seeds = st.integers(0, 2**32 - 1)


# -- trajectories ------------------------------------------------------------------


def test_fourier_derivatives_match_finite_differences(rng):
    traj = FourierTrajectory(1.3, rng.normal(size=(2, 3)), rng.normal(size=(2, 3)), np.zeros(2))
    t, h = 0.7, 1e-5
    q, dq, ddq = fourier_eval(traj, t)
    qp, dqp, _ = fourier_eval(traj, t + h)
    qm, dqm, _ = fourier_eval(traj, t - h)
    np.testing.assert_allclose(dq, (qp - qm) / (2 * h), atol=1e-8)
    np.testing.assert_allclose(ddq, (dqp - dqm) / (2 * h), atol=1e-7)


def test_fourier_vectorized_matches_scalar(rng):
    traj = FourierTrajectory(2.0, rng.normal(size=(3, 2)), rng.normal(size=(3, 2)), np.ones(3))
    ts = np.linspace(0, 3, 7)
    Q, dQ, ddQ = traj(ts)
    for i, t in enumerate(ts):
        q, dq, ddq = traj(t)
        np.testing.assert_allclose(Q[i], q)
        np.testing.assert_allclose(ddQ[i], ddq)


@given(seeds)
def test_random_trajectory_starts_at_rest_and_respects_caps(seed):
    rng = np.random.default_rng(seed)
    offset = np.array([0.2, -0.4])
    traj = random_trajectory(rng, 2, 4.0, [0.5, 0.3], offset, velocity_cap=3.0,
                             joint_limits=[[-1, -1], [1, 1]])
    q, dq, ddq = traj(0.0)
    np.testing.assert_allclose(q, offset, atol=1e-12)
    np.testing.assert_allclose(dq, 0.0, atol=1e-12)
    np.testing.assert_allclose(ddq, 0.0, atol=1e-10)
    Q, dQ, _ = traj(np.linspace(0, 4, 2000))
    np.testing.assert_allclose(np.abs(Q - offset).max(axis=0), [0.5, 0.3], rtol=1e-3)
    assert np.abs(dQ).max() <= 3.0
    np.testing.assert_allclose(traj(4.0)[0], offset, atol=1e-9)


def test_sequence_cycles_and_is_continuous(rng):
    trajs = [random_trajectory(rng, 1, p, 0.4, 0.0) for p in (2.0, 3.0)]
    seq = TrajectorySequence(trajs)
    assert seq.cycle == pytest.approx(5.0)
    assert seq.index_at(1.0) == 0 and seq.index_at(2.5) == 1 and seq.index_at(6.0) == 0
    for t in (2.0, 5.0):
        a, b = seq(t - 1e-7), seq(t + 1e-7)
        np.testing.assert_allclose(a[0], b[0], atol=1e-6)
        np.testing.assert_allclose(a[1], b[1], atol=1e-5)


def test_impossible_caps_raise(rng):
    with pytest.raises(RuntimeError):
        random_trajectory(rng, 1, 1.0, 2.0, 0.0, velocity_cap=1e-3, max_tries=3)


# -- plant -------------------------------------------------------------------------


def test_plant_follows_computed_torque(planar2):
    pi = planar2.pi_reference
    traj = FourierTrajectory(2.0, np.array([[0.3], [0.2]]), np.zeros((2, 1)), np.array([0.1, -0.2]))
    dt = 1e-4
    q, dq, _ = traj(0.0)
    state = PlantState(q, dq, np.zeros(2))
    for i in range(5000):
        qd, dqd, ddqd = traj(i * dt)
        tau = inverse_dynamics(planar2, pi, state.q, state.dq, ddqd + 100 * (qd - state.q) + 20 * (dqd - state.dq))
        state = plant_step(planar2, pi, None, state, tau, dt)
    np.testing.assert_allclose(state.q, traj(5000 * dt)[0], atol=1e-3)


def test_unmodeled_forces_formula():
    f = UnmodeledForces.broadcast(2, alpha=1.0, beta=2.0, gamma=0.5, kappa=0.3)
    q, dq = np.array([0.4, -1.0]), np.array([1.0, -2.0])
    np.testing.assert_allclose(f(q, dq), np.tanh(2 * dq) + 0.5 * dq**3 + 0.3 * np.sin(q))


def test_unmodeled_forces_resist_motion(pendulum):
    pi = np.zeros(12)
    pi[9] = 1.0
    f = UnmodeledForces.broadcast(1, gamma=1.0)
    s = plant_step(pendulum.without_gravity(), pi, f, PlantState(np.zeros(1), np.ones(1), np.zeros(1)),
                   np.zeros(1), 1e-3)
    assert s.ddq[0] == pytest.approx(-1.0)


def test_plant_divergence_detected(pendulum):
    pi = np.zeros(12)
    pi[9] = 1.0
    with pytest.raises(DivergenceError):
        plant_step(pendulum, pi, None, PlantState(np.zeros(1), np.zeros(1), np.zeros(1)),
                   np.array([1e12]), 1e-3)


# -- sensors -----------------------------------------------------------------------


def test_bypass_passes_truth():
    sc = SensorChain(2, sigma_q=1.0, bypass=True)
    q, dq, ddq = sc.step([1.0, 2.0], 1e-3, np.random.default_rng(0), [3.0, 4.0], [5.0, 6.0])
    np.testing.assert_array_equal(np.concatenate([q, dq, ddq]), [1, 2, 3, 4, 5, 6])


def test_estimators_track_smooth_motion():
    sc = SensorChain(1, sigma_q=1e-5, jerk_var=1e4, pll_omega=150.0)
    rng = np.random.default_rng(0)
    dt = 1e-3
    w = 2.0
    errs_v, errs_a = [], []
    for i in range(4000):
        t = i * dt
        _, dq, ddq = sc.step([np.sin(w * t)], dt, rng)
        if t > 1.0:
            errs_v.append(dq[0] - w * np.cos(w * t))
            errs_a.append(ddq[0] + w * w * np.sin(w * t))
    assert np.sqrt(np.mean(np.square(errs_v))) < 0.02
    assert np.sqrt(np.mean(np.square(errs_a))) < 0.2


def test_pll_poles_are_triple():
    sc = SensorChain(1, pll_omega=10.0)
    k1, k2, k3 = sc.pll_gains
    # characteristic polynomial s^3 + k1 s^2 + k2 s + k3 == (s + w)^3
    np.testing.assert_allclose(np.roots([1, k1, k2, k3]), [-10, -10, -10], atol=1e-3)


# -- metrics and records -----------------------------------------------------------


def test_nmse_definition():
    ref = np.array([[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]])
    meas = ref + np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 2.0]])
    np.testing.assert_allclose(nmse(meas, ref), [1.0 / 4.0, (4.0 / 3.0) / 4.0])
    assert nmse([1.0, 2.0], [0.0, 2.0]) == pytest.approx(0.25)
    assert nmse([1.0, 2.0], [0.0, 2.0], normalizer_min=-1, normalizer_max=1) == pytest.approx(0.25)


def test_nmse_errors():
    with pytest.raises(DegenerateNormalizerError):
        nmse([1.0, 2.0], [1.0, 1.0])
    with pytest.raises(ContractError):
        nmse([1.0], [1.0, 2.0])


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_fmt_round_trips(x):
    assert float(fmt(x)) == x


def test_csv_round_trip(tmp_path):
    path = write_csv(tmp_path / "a" / "x.csv", ["t", "ok", "v"], [(0.1, True, 3), (1e-17, False, -2)])
    header, rows = read_csv(path)
    assert header == ["t", "ok", "v"]
    assert rows == [["0.1", "1", "3"], ["1e-17", "0", "-2"]]
    with pytest.raises(ValueError):
        write_csv(tmp_path / "y.csv", ["a"], [(1, 2)])
    assert joint_columns("q", 2) == ["q_1", "q_2"]


# -- random-feature RLS ------------------------------------------------------------


def test_rrls_recursive_equals_batch_ridge(rng):
    model = RandomFeatureRLS(2, 1, n_features=30, length_scale=1.0, reg=0.1, seed=3)
    X = rng.uniform(-1, 1, (100, 2))
    Y = np.sin(X[:, :1]) + X[:, 1:] ** 2
    model.fit_stream(X, Y)
    Phi = model.features(X)
    w = np.linalg.solve(Phi.T @ Phi + 0.1 * np.eye(30), Phi.T @ Y)
    np.testing.assert_allclose(model.weights, w, rtol=1e-6, atol=1e-8)


def test_rrls_learns_smooth_function(rng):
    X = rng.uniform(-2, 2, (1500, 1))
    Y = np.sin(2 * X)
    model = rrls_baseline_train(X, Y, n_features=200, length_scale=0.5, reg=1e-3, seed=0)
    Xt = np.linspace(-1.8, 1.8, 50)[:, None]
    assert np.mean((rrls_baseline_predict(model, Xt) - np.sin(2 * Xt)) ** 2) < 1e-3
    assert model.predict(Xt[0]).shape == (1,)
