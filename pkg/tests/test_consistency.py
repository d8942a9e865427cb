import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from semiparam.chain import inverse_dynamics, regressor
from semiparam.consistency import (
    ChainRegressorMap,
    apply_transform,
    residual_target,
    sine_map,
    transform_component,
    transform_matrix,
    transform_model,
)
from semiparam.errors import DerivativeError
from semiparam.mixture import GaussianComponent
from semiparam.validation import random_mixture

seeds = st.integers(0, 2**32 - 1)


def fd_jacobian(chain, dpi, x, h=1e-6):
    """Central differences of ``ID(x; dpi)``; inverse dynamics is linear in the parameters."""
    n = chain.n_dof

    def f(x):
        return inverse_dynamics(chain, dpi, x[:n], x[n:2 * n], x[2 * n:])
    J = np.zeros((n, 3 * n))
    for k in range(3 * n):
        e = np.zeros(3 * n)
        e[k] = h
        J[:, k] = (f(x + e) - f(x - e)) / (2 * h)
    return J


def smooth_dpi(chain, rng):
    # keep Coulomb terms at zero so central differences stay accurate near dq = 0
    dpi = 0.1 * chain.pi_reference * rng.uniform(-1, 1, chain.n_params)
    dpi[10::12] = 0.0
    return dpi


@given(seeds)
def test_transformed_mean_is_regressor_product(lwr7, seed):
    rng = np.random.default_rng(seed)
    model = random_mixture(rng, 21, 7, 5)
    dpi = 0.1 * rng.normal(size=lwr7.n_params)
    out = transform_model(model, dpi, lwr7)
    for k in range(5):
        x = model.means[k, :21]
        expect = model.means[k, 21:] - regressor(lwr7, x[:7], x[7:14], x[7:14], x[14:]) @ dpi
        np.testing.assert_allclose(out.means[k, 21:], expect, rtol=0, atol=1e-10)
    np.testing.assert_array_equal(out.means[:, :21], model.means[:, :21])


@pytest.mark.parametrize("name", ["planar2", "lwr7"])
def test_transformed_covariance_matches_congruence(name, request):
    chain = request.getfixturevalue(name)
    rng = np.random.default_rng(7)
    n = chain.n_dof
    model = random_mixture(rng, 3 * n, n, 3)
    dpi = smooth_dpi(chain, rng)
    out = transform_model(model, dpi, chain)
    for k in range(3):
        J = fd_jacobian(chain, dpi, model.means[k, :3 * n])
        ref = oracles.transform_covariance(model.covs[k], J)
        assert np.abs(out.covs[k] - ref).max() <= 1e-6 * max(1.0, np.abs(ref).max())


def test_input_marginal_and_bookkeeping_unchanged(lwr7, rng):
    model = random_mixture(rng, 21, 7, 4)
    model.age[:] = 9
    out = transform_model(model, 0.1 * rng.normal(size=84), lwr7)
    np.testing.assert_array_equal(out.covs[:, :21, :21], model.covs[:, :21, :21])
    np.testing.assert_array_equal(out.sp, model.sp)
    np.testing.assert_array_equal(out.age, model.age)
    np.testing.assert_array_equal(out.priors, model.priors)
    assert len(out.flagged) == 0


def test_zero_change_is_bit_identical(lwr7, rng):
    model = random_mixture(rng, 21, 7, 50)
    out = transform_model(model, np.zeros(84), lwr7)
    assert np.array_equal(out.means, model.means)
    assert np.array_equal(out.covs, model.covs)
    x = rng.normal(size=21)
    assert np.array_equal(out.predict(x)[0], model.predict(x)[0])


def test_transform_does_not_touch_source(planar2, rng):
    model = random_mixture(rng, 6, 2, 3)
    means, covs = model.means.copy(), model.covs.copy()
    transform_model(model, rng.normal(size=24), planar2)
    assert np.array_equal(model.means, means) and np.array_equal(model.covs, covs)


def test_in_place_equals_copying_variant(planar2, rng):
    model = random_mixture(rng, 6, 2, 4)
    dpi = smooth_dpi(planar2, rng)
    out = transform_model(model, dpi, ChainRegressorMap(planar2))
    apply_transform(model, dpi, planar2)
    np.testing.assert_array_equal(model.means, out.means)
    np.testing.assert_allclose(model.covs, out.covs, atol=1e-15)


def test_transform_matrix_layout():
    J = np.array([[1.0, 2.0]])
    np.testing.assert_array_equal(transform_matrix(J), [[1, 0, 0], [0, 1, 0], [-1, -2, 1]])


@given(st.floats(-1.0, 7.0), st.floats(-1.0, 1.0))
def test_sine_component_closed_form(mu_x, dpi):
    S = np.array([[0.3, 0.1], [0.1, 0.2]])
    comp = GaussianComponent(0.5, np.array([mu_x, 0.7]), S, sp=2.0, age=4)
    out = transform_component(comp, [dpi], sine_map())
    j = dpi * np.cos(mu_x)
    assert out.mean[0] == mu_x
    assert out.mean[1] == pytest.approx(0.7 - dpi * np.sin(mu_x), abs=1e-15)
    assert out.cov[0, 1] == pytest.approx(0.1 - j * 0.3, abs=1e-15)
    assert out.cov[1, 1] == pytest.approx(0.2 - 2 * j * 0.1 + j * j * 0.3, abs=1e-14)
    assert (out.prior, out.sp, out.age) == (0.5, 2.0, 4)
    assert not out.flagged


def test_delta_max_clips_parameter_change():
    model = random_mixture(np.random.default_rng(1), 1, 1, 2)
    a = transform_model(model, [5.0], sine_map(), delta_max=0.5)
    b = transform_model(model, [0.5], sine_map())
    np.testing.assert_array_equal(a.means, b.means)


class FailingMap:
    d_in = 1
    d_out = 1

    def product(self, X, dpi):
        return np.zeros((X.shape[0], 1))

    def partials(self, X, dpi):
        raise DerivativeError("no derivative here")


def test_derivative_failure_leaves_components_untouched():
    model = random_mixture(np.random.default_rng(2), 1, 1, 3)
    out = transform_model(model, [1.0], FailingMap())
    np.testing.assert_array_equal(out.flagged, [0, 1, 2])
    assert np.array_equal(out.covs, model.covs) and np.array_equal(out.means, model.means)


def test_transform_removes_parameter_change_from_residual(pendulum):
    # a mixture fitted to tau_true - Y pi_old, once transformed, predicts tau_true - Y pi_new
    from semiparam.mixture import MixtureModel
    rng = np.random.default_rng(0)
    pi_true = pendulum.pi_reference
    pi_old = 0.5 * pi_true
    pi_new = 0.8 * pi_true
    pi_old[10], pi_new[10] = pi_true[10], pi_true[10]
    X = np.column_stack([rng.uniform(-1, 1, 4000), rng.uniform(0.5, 1.5, 4000), rng.uniform(-1, 1, 4000)])
    res = np.array([inverse_dynamics(pendulum, pi_true - pi_old, x[:1], x[1:2], x[2:]) for x in X])
    model = MixtureModel(3, 1, np.diag([0.02, 0.02, 0.02, 0.05]), novelty=0.01)
    for x, r in zip(X, res):
        model.update(np.append(x, r))
    out = transform_model(model, pi_new - pi_old, pendulum)
    test = X[:200]
    want = np.array([inverse_dynamics(pendulum, pi_true - pi_new, x[:1], x[1:2], x[2:]) for x in test])
    before = np.mean((model.predict_many(test) - want) ** 2)
    after = np.mean((out.predict_many(test) - want) ** 2)
    assert after < 0.1 * before


def test_residual_target():
    np.testing.assert_array_equal(residual_target([3.0, 1.0], [1.0, 1.5]), [2.0, -0.5])
