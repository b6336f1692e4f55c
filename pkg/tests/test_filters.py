import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from invfilter.filters import (
    KALMAN,
    THREEDVAR,
    VARIANT,
    AlphaSchedule,
    contraction_gap,
    contraction_norm,
    effective_dimension,
    initial_state,
    kalman_cov_closed_form,
    kalman_gain,
    kalman_step,
    product_operator_spectrum,
    run,
    scalar_kalman_recursion,
    spectral_filter_functions,
    step,
    threedvar_covariance,
    threedvar_gain,
    threedvar_step,
    variant_step,
)
from invfilter.spectral import Basis2D, GridField, build_neumann_laplacian_inverse

spectra = st.lists(st.floats(1e-3, 10.0), min_size=1, max_size=20)


def test_scalar_kalman_known_values():
    # c0 = 1, kappa = 1, gamma = 1: c_n = 1 / (1 + n)
    for n in range(6):
        assert scalar_kalman_recursion(1.0, 1.0, 1.0, n) == pytest.approx(1 / (1 + n))
    assert kalman_gain(np.array([1.0]), np.array([1.0]), 1.0)[0] == 0.5


@settings(max_examples=60, deadline=None)
@given(lam=spectra, alpha=st.floats(0.01, 100), gamma=st.floats(1e-3, 10),
       n=st.integers(0, 60), seed=st.integers(0, 1000))
def test_kalman_covariance_matches_closed_form(lam, alpha, gamma, n, seed):
    lam = np.array(lam)
    kappa = np.random.default_rng(seed).uniform(1e-3, 3, lam.size)
    state = initial_state(KALMAN, lam, alpha, gamma)
    for _ in range(n):
        state = kalman_step(state, np.zeros(lam.size), kappa)
    np.testing.assert_allclose(state.cov_spectrum,
                               kalman_cov_closed_form(lam, kappa, alpha, gamma, n),
                               rtol=1e-10)


@settings(max_examples=40, deadline=None)
@given(lam=spectra, alpha=st.floats(0.01, 100), n=st.integers(1, 50))
def test_homogeneous_error_is_product_operator(lam, alpha, n):
    lam = np.array(lam)
    kappa = np.sqrt(lam)
    e0 = np.linspace(1, 2, lam.size)
    state = initial_state(KALMAN, lam, alpha, 0.7, mean0=e0)
    state, _ = run(state, [np.zeros(lam.size)] * n, kappa)
    np.testing.assert_allclose(state.mean, product_operator_spectrum(lam, kappa, alpha, n) * e0,
                               rtol=1e-10)


@settings(max_examples=40, deadline=None)
@given(lam=spectra, alpha=st.floats(0.01, 100), n=st.integers(1, 40))
def test_bias_factors_monotone_in_n(lam, alpha, n):
    lam = np.array(lam)
    r1 = product_operator_spectrum(lam, lam, alpha, n)
    r2 = product_operator_spectrum(lam, lam, alpha, n + 1)
    assert np.all(r2 <= r1) and np.all(r1 <= 1)
    rho = alpha / (alpha + lam ** 3)
    assert np.all(rho ** (n + 1) <= rho ** n)


def test_kalman_mean_does_not_depend_on_gamma():
    lam, kappa = np.array([1.0, 0.3]), np.array([0.5, 2.0])
    ys = np.random.default_rng(0).standard_normal((10, 2))
    means = []
    for gamma in (1e-3, 1.0, 50.0):
        state, _ = run(initial_state(KALMAN, lam, 2.0, gamma), ys, kappa)
        means.append(state.mean)
    np.testing.assert_allclose(means[0], means[1], rtol=1e-10)
    np.testing.assert_allclose(means[0], means[2], rtol=1e-10)


def test_kalman_rejects_zero_gamma():
    with pytest.raises(ValueError):
        kalman_gain(np.ones(2), np.ones(2), 0.0)
    state = initial_state(KALMAN, np.ones(2), 1.0, 0.0)
    with pytest.raises(ValueError):
        kalman_step(state, np.zeros(2), np.ones(2))


def test_threedvar_gain_and_geometric_decay():
    lam, kappa, alpha = np.array([2.0, 0.5]), np.array([1.0, 0.2]), 3.0
    np.testing.assert_allclose(threedvar_gain(lam, kappa, alpha),
                               lam * kappa / (lam * kappa ** 2 + alpha))
    state = initial_state(THREEDVAR, lam, alpha, 1.0, mean0=np.ones(2))
    cov0 = state.cov_spectrum.copy()
    for _ in range(7):
        state = threedvar_step(state, np.zeros(2), kappa)
    np.testing.assert_allclose(state.mean, (alpha / (alpha + lam * kappa ** 2)) ** 7)
    np.testing.assert_array_equal(state.cov_spectrum, cov0)
    np.testing.assert_allclose(threedvar_covariance(lam, kappa, alpha, 2.0),
                               4 / alpha * lam * alpha / (lam * kappa ** 2 + alpha))


def test_one_step_kalman_equals_threedvar():
    lam, kappa = np.array([1.0, 4.0]), np.array([0.5, 0.1])
    y = np.array([0.3, -1.0])
    k = step(initial_state(KALMAN, lam, 2.0, 0.5), y, kappa)
    t = step(initial_state(THREEDVAR, lam, 2.0, 0.5), y, kappa)
    np.testing.assert_allclose(k.mean, t.mean, rtol=1e-14)


def test_schedules():
    g = AlphaSchedule.geometric(2.0, 0.5)
    assert [g.alpha_at(n) for n in (1, 2, 3)] == [2.0, 1.0, 0.5]
    assert g.sigma(3) == pytest.approx(0.5 + 1 + 2)
    assert all(g.admissible(n) for n in range(1, 30))
    assert AlphaSchedule.constant(4.0).sigma(3) == 0.75
    c = AlphaSchedule.custom([1.0, 1.0, 1e-3], c_tilde=1.0)
    assert c.admissible(2) and not c.admissible(3)
    with pytest.raises(IndexError):
        c.alpha_at(4)
    for q in (0.0, 1.0, 1.5):
        with pytest.raises(ValueError):
            AlphaSchedule.geometric(1.0, q)
    with pytest.raises(ValueError):
        g.alpha_at(0)


def test_variant_step_tracks_sigma_and_covariance():
    lam, kappa = np.array([1.0, 0.5]), np.array([1.0, 2.0])
    sched = AlphaSchedule.geometric(1.0, 0.5)
    state = initial_state(VARIANT, lam, 1.0, 0.1, schedule=sched)
    for _ in range(5):
        state = variant_step(state, np.zeros(2), kappa)
    assert state.sigma == pytest.approx(sched.sigma(5))
    a5 = sched.alpha_at(5)
    np.testing.assert_allclose(state.cov_spectrum,
                               0.01 / a5 * a5 / (lam * kappa ** 2 + a5) * lam)


def test_variant_with_constant_schedule_is_threedvar():
    lam, kappa = np.array([1.0, 0.5]), np.array([1.0, 2.0])
    ys = np.random.default_rng(2).standard_normal((6, 2))
    v, _ = run(initial_state(VARIANT, lam, 1.5, 0.1), ys, kappa)
    t, _ = run(initial_state(THREEDVAR, lam, 1.5, 0.1), ys, kappa)
    np.testing.assert_allclose(v.mean, t.mean, rtol=1e-14)


def test_variant_rejects_inadmissible_schedule():
    sched = AlphaSchedule.custom([1.0, 1.0, 1e-3], c_tilde=1.0)
    state = initial_state(VARIANT, np.ones(1), 1.0, 0.1, schedule=sched)
    state = step(step(state, np.zeros(1), np.ones(1)), np.zeros(1), np.ones(1))
    with pytest.raises(ValueError):
        step(state, np.zeros(1), np.ones(1))


def test_steps_check_shapes_and_kinds():
    state = initial_state(KALMAN, np.ones(3), 1.0, 1.0)
    with pytest.raises(ValueError):
        step(state, np.zeros(2), np.ones(3))
    with pytest.raises(ValueError):
        threedvar_step(state, np.zeros(3), np.ones(3))
    with pytest.raises(ValueError):
        initial_state("enkf", np.ones(3), 1.0, 1.0)


def test_batched_means_run_independently():
    lam, kappa = np.array([1.0, 0.5, 0.1]), np.array([1.0, 0.4, 0.2])
    ys = np.random.default_rng(3).standard_normal((8, 4, 3))
    batch, _ = run(initial_state(KALMAN, lam, 1.0, 0.3, batch_shape=(4,)), ys, kappa)
    for r in range(4):
        single, _ = run(initial_state(KALMAN, lam, 1.0, 0.3), ys[:, r], kappa)
        np.testing.assert_allclose(batch.mean[r], single.mean, rtol=1e-14)


def test_run_accepts_gridfields_and_reports_errors():
    b = Basis2D(4, 4.0)
    A = build_neumann_laplacian_inverse(b)
    prior = A @ A
    truth = np.random.default_rng(4).standard_normal(b.n_modes)
    y = GridField(b, A.eigenvalues * truth, "spectral").to_nodal()
    state, errors = run(initial_state(KALMAN, prior, 1.0, 1e-3), [y] * 20, A, truth=truth)
    assert errors.shape == (20,)
    assert np.all(np.diff(errors) <= 1e-12)


def test_run_flags_nonfinite_state():
    state = initial_state(THREEDVAR, np.ones(2), 1.0, 1.0)
    with pytest.raises(FloatingPointError):
        run(state, [np.array([np.nan, 0.0])], np.ones(2))


def test_contraction_norm_and_gap():
    gain, kappa = np.array([0.5, 1e-20]), np.array([1.0, 1.0])
    assert contraction_norm(gain, kappa) == 1.0
    assert contraction_gap(gain, kappa) == 1e-20
    assert effective_dimension(gain, kappa) == 1


def test_spectral_filter_functions():
    lam = np.array([1e-3, 1.0, 1e3])
    r1, rn, qn = spectral_filter_functions(lam, 2.0, 4)
    np.testing.assert_allclose(r1, 2 / (2 + 4 * lam))
    np.testing.assert_allclose(rn, (2 / (2 + lam)) ** 4)
    np.testing.assert_allclose(qn, (1 - rn) / lam)
    with pytest.raises(ValueError):
        spectral_filter_functions(np.array([0.0]), 1.0, 1)
