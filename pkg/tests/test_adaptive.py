import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from semiparam.adaptive import (
    AdaptiveGains,
    ParametricState,
    adaptation_step,
    bgf_gain_update,
    composite_update,
    control_law,
    filter_step,
    forgetting_factor,
    prediction_error,
    resolved_rates,
    spectral_norm_spd,
)
from semiparam.errors import AdaptationDivergenceError, ContractError, UnstableFilterError

seeds = st.integers(0, 2**32 - 1)


def gains(n=2, **kw):
    return AdaptiveGains(Lambda=np.full(n, 20.0), K_D=np.full(n, 5.0), R=np.ones(n), **kw)


def test_gain_bound_and_contracts():
    g = gains(lambda0=2.0, k0=0.5)
    assert g.gain_bound == 4.0
    assert g.R.shape == (2, 2)
    with pytest.raises(ContractError):
        AdaptiveGains(Lambda=[1.0, -1.0], K_D=[1.0, 1.0], R=[1.0, 1.0])
    with pytest.raises(ContractError):
        AdaptiveGains(Lambda=[1.0], K_D=[1.0, 1.0], R=[1.0])
    with pytest.raises(ContractError):
        AdaptiveGains(Lambda=[1.0], K_D=[1.0], R=[[-1.0]])
    with pytest.raises(ContractError):
        gains(k0=0.0)


def test_resolved_rates_definitions():
    q, dq = np.array([0.1, 0.2]), np.array([1.0, -1.0])
    q_d, dq_d, ddq_d = np.array([0.0, 0.3]), np.array([0.5, 0.5]), np.array([2.0, 0.0])
    r = resolved_rates(q, dq, q_d, dq_d, ddq_d, np.diag([10.0, 20.0]))
    np.testing.assert_allclose(r.dq_r, [0.5 - 1.0, 0.5 + 2.0])
    np.testing.assert_allclose(r.ddq_r, [2.0 - 5.0, 0.0 + 30.0])
    # s = de + Lambda e
    np.testing.assert_allclose(r.s, (dq - dq_d) + np.array([10.0, 20.0]) * (q - q_d))


def test_filter_converges_to_constant_input():
    y_f, W = np.zeros(2), np.zeros((2, 3))
    Y = np.arange(6.0).reshape(2, 3)
    for _ in range(2000):
        y_f, W = filter_step(y_f, W, [1.0, -2.0], Y, pole=20.0, dt=1e-3)
    np.testing.assert_allclose(y_f, [1.0, -2.0], atol=1e-12)
    np.testing.assert_allclose(W, Y, atol=1e-12)


def test_filter_step_is_discrete_first_order_lag():
    y_f, _ = filter_step(np.zeros(1), np.zeros((1, 1)), [1.0], [[1.0]], pole=20.0, dt=1e-3)
    assert y_f[0] == pytest.approx(0.02)


def test_unstable_filter_rejected():
    with pytest.raises(UnstableFilterError):
        filter_step(np.zeros(1), np.zeros((1, 1)), [1.0], [[1.0]], pole=2000.0, dt=1e-3)
    with pytest.raises(ContractError):
        filter_step(np.zeros(1), np.zeros((1, 1)), [1.0], [[1.0]], pole=20.0, dt=0.0)


def test_prediction_error_and_control_law():
    W = np.array([[1.0, 2.0], [0.0, 1.0]])
    pi = np.array([1.0, 1.0])
    np.testing.assert_allclose(prediction_error(W, pi, [3.0, 0.0]), [0.0, 1.0])
    tau = control_law(W, pi, np.array([0.5, 0.5]), np.array([2.0, 4.0]), np.array([1.0, -1.0]))
    np.testing.assert_allclose(tau, [3.0 + 0.5 - 2.0, 1.0 + 0.5 + 4.0])
    tau_m = control_law(W, pi, np.zeros(2), np.diag([2.0, 4.0]), np.array([1.0, -1.0]))
    np.testing.assert_allclose(tau_m, [1.0, 5.0])


def test_composite_update_direction():
    st_ = ParametricState.initial(np.zeros(2), 1, p0=2.0)
    Y = np.array([[1.0, 0.0]])
    W = np.array([[0.0, 1.0]])
    new, dpi = composite_update(st_, Y, W, np.array([0.5]), np.array([3.0]), np.eye(1), dt=0.1)
    np.testing.assert_allclose(dpi, [-0.1 * 2.0 * 0.5, -0.1 * 2.0 * 3.0])
    np.testing.assert_allclose(new.pi_hat, dpi)


def test_composite_update_rejects_nonfinite():
    st_ = ParametricState.initial(np.zeros(1), 1)
    with pytest.raises(AdaptationDivergenceError):
        composite_update(st_, np.array([[np.inf]]), np.zeros((1, 1)), np.ones(1), np.zeros(1),
                         np.eye(1), 1e-2)


def test_forgetting_factor_vanishes_at_bound():
    assert forgetting_factor(0.0, 1.5, 0.1) == 1.5
    assert forgetting_factor(15.0, 1.5, 0.1) == pytest.approx(0.0)
    assert forgetting_factor(20.0, 1.5, 0.1) < 0.0


def test_spectral_norm_matches_svd(rng):
    A = rng.normal(size=(6, 6))
    P = A @ A.T + np.eye(6)
    assert spectral_norm_spd(P) == pytest.approx(np.linalg.norm(P, 2))


@given(seeds)
def test_bgf_step_matches_covariance_form_to_first_order(seed):
    # information-form Euler and covariance-form Euler agree up to O(dt^2)
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(4, 4))
    P = A @ A.T / 4 + 0.5 * np.eye(4)
    W = rng.normal(size=(2, 4))
    R = np.diag([1.0, 2.0])
    lam = forgetting_factor(np.linalg.norm(P, 2), 1.5, 0.1)
    slope = lam * P - P @ W.T @ R @ W @ P
    errs = []
    for dt in (1e-4, 5e-5):
        P_new, _ = bgf_gain_update(P, W, R, 1.5, 0.1, dt)
        errs.append(np.linalg.norm(P_new - (P + dt * slope)))
    assert errs[1] <= 0.3 * errs[0] + 1e-13


@given(seeds, st.floats(1e-4, 1.0))
def test_bgf_step_keeps_gain_spd_for_any_step(seed, dt):
    rng = np.random.default_rng(seed)
    P = np.eye(5)
    P_inv = np.eye(5)
    for _ in range(20):
        W = 10.0 * rng.normal(size=(3, 5))
        P, P_inv = bgf_gain_update(P, W, np.eye(3), 1.5, 0.1, dt, P_inv)
        assert np.allclose(P, P.T)
        assert np.linalg.eigvalsh(P)[0] > 0
        np.testing.assert_allclose(P @ P_inv, np.eye(5), atol=1e-8)


def test_bgf_gain_saturates_at_bound_without_excitation():
    P = 0.01 * np.eye(3)
    P_inv = 100.0 * np.eye(3)
    W = np.zeros((1, 3))
    for _ in range(20000):
        P, P_inv = bgf_gain_update(P, W, np.eye(1), 1.5, 0.1, 1e-2, P_inv)
    assert spectral_norm_spd(P) == pytest.approx(15.0, rel=1e-6)
    assert spectral_norm_spd(P) <= 15.0 + 1e-6


def test_adaptation_step_respects_frozen_mask():
    st_ = ParametricState.initial(np.zeros(3), 1, p0=1.0)
    st_ = ParametricState(st_.pi_hat, st_.P, np.array([1.0]), np.array([[1.0, 1.0, 1.0]]), st_.P_inv)
    g = AdaptiveGains(Lambda=[1.0], K_D=[1.0], R=[1.0])
    new, dpi = adaptation_step(st_, np.array([[1.0, 1.0, 1.0]]), np.array([2.0]), g, 1e-2,
                               frozen=np.array([False, True, False]))
    assert dpi[1] == 0.0 and new.pi_hat[1] == 0.0
    assert dpi[0] != 0.0 and dpi[2] != 0.0


def test_adaptation_identifies_static_parameters():
    # constant-excitation linear regression: the composite law converges to the truth
    rng = np.random.default_rng(0)
    truth = np.array([1.0, -2.0, 0.5])
    g = AdaptiveGains(Lambda=[1.0, 1.0], K_D=[1.0, 1.0], R=[10.0, 10.0])
    st_ = ParametricState.initial(np.zeros(3), 2, p0=1.0)
    dt = 1e-2
    for _ in range(5000):
        Y = rng.normal(size=(2, 3))
        y_f, W = filter_step(st_.y_f, st_.W, Y @ truth, Y, g.filter_pole, dt)
        st_ = ParametricState(st_.pi_hat, st_.P, y_f, W, st_.P_inv)
        st_, _ = adaptation_step(st_, Y, np.zeros(2), g, dt)
    np.testing.assert_allclose(st_.pi_hat, truth, atol=1e-3)
    assert spectral_norm_spd(st_.P) <= g.gain_bound + 1e-6


def test_cached_gain_norm_tracks_gain(rng):
    g = AdaptiveGains(Lambda=[1.0, 1.0], K_D=[1.0, 1.0], R=[1.0, 1.0])
    st_ = ParametricState.initial(np.zeros(4), 2, p0=3.0)
    for _ in range(5):
        st_ = ParametricState(st_.pi_hat, st_.P, st_.y_f, rng.normal(size=(2, 4)), st_.P_inv, st_.P_norm)
        st_, _ = adaptation_step(st_, rng.normal(size=(2, 4)), rng.normal(size=2), g, 0.05)
        assert st_.P_norm == pytest.approx(spectral_norm_spd(st_.P), rel=1e-12)
