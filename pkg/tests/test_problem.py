import numpy as np
import pytest

from invfilter import problem
from invfilter.problem import (
    DM1,
    DM2,
    DataStream,
    ProblemSpec,
    average_observations,
    calibrate_gamma,
    generate_data,
    restrict_to_coarse,
    restricted_noise,
    sample_truth,
)
from invfilter.spectral import Basis2D, GridField


def small_spec(**kw):
    base = dict(coarse_n=8, fine_n=16, s=1.0, a=1.0)
    base.update(kw)
    return ProblemSpec(**base)


def test_defaults_and_length():
    spec = ProblemSpec()
    assert (spec.coarse_n, spec.fine_n, spec.data_model) == (60, 120, DM2)
    assert spec.length == 60.0
    assert spec.coarse_basis.cell_width == 1.0
    assert spec.fine_basis.cell_width == 0.5
    assert small_spec(domain_length=1.0).coarse_basis.length == 1.0


@pytest.mark.parametrize("kw", [
    dict(gamma=0.1),                                   # both gamma and noise_level
    dict(noise_level=None),                             # neither
    dict(noise_level=1.2),
    dict(data_model="DM3"),
    dict(alpha_rule="fixed"),
    dict(alpha_rule="variant_geometric", alpha=1.0, q=1.0),
    dict(fine_n=8),
    dict(n_iter=0),
])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        small_spec(**kw)


def test_spec_warns_outside_source_range():
    assert small_spec(s=4.0).warnings()
    assert not small_spec(s=3.0).warnings()
    with pytest.warns(UserWarning):
        problem.warn_spec(small_spec(s=4.0))


def test_operators():
    b = Basis2D(6, 6.0)
    A = problem.forward_operator(b)
    np.testing.assert_allclose(problem.prior_covariance(b).eigenvalues, A.eigenvalues ** 2)
    sig = problem.truth_covariance(b, 1.5)
    np.testing.assert_allclose(sig.eigenvalues, (b.laplacian_eigenvalues + 0.1) ** -4.0)


def test_truth_is_deterministic_and_batch_invariant():
    spec = small_spec()
    t1 = sample_truth(spec, 3)
    t2 = sample_truth(spec, 3)
    batch = sample_truth(spec, [1, 3])
    np.testing.assert_array_equal(t1.fine_field.data, t2.fine_field.data)
    np.testing.assert_array_equal(batch.fine_field.data[1], t1.fine_field.data)
    np.testing.assert_allclose(batch.coarse_projection.data[1], t1.coarse_projection.data,
                               atol=1e-14)
    assert not np.allclose(batch.fine_field.data[0], t1.fine_field.data)


def test_truth_variance_follows_karhunen_loeve():
    spec = small_spec()
    u = sample_truth(spec, np.arange(4000)).fine_field.data
    sig = problem.truth_covariance(spec.fine_basis, spec.s).eigenvalues
    ratio = u.var(axis=0) / sig
    assert abs(ratio[:20].mean() - 1) < 0.05


def test_restriction_reproduces_smooth_cosines():
    L = 30.0
    fine, coarse = Basis2D(60, L), Basis2D(30, L)
    f = lambda x, y: np.cos(2 * np.pi * x / L) * np.cos(np.pi * y / L)
    got = restrict_to_coarse(GridField.from_function(fine, f), coarse)
    want = GridField.from_function(coarse, f)
    assert np.max(np.abs(got.data - want.data)) < 1e-6


def test_restriction_checks_grids():
    with pytest.raises(ValueError):
        restrict_to_coarse(GridField(Basis2D(6), np.zeros((6, 6))), Basis2D(4))
    with pytest.raises(ValueError):
        restrict_to_coarse(GridField(Basis2D(6), np.zeros((6, 6))), Basis2D(3, 2.0))
    out = restrict_to_coarse(GridField(Basis2D(6), np.ones((6, 6))))
    assert out.basis == Basis2D(3) and np.allclose(out.data, 0)


def test_restriction_on_tiny_grid():
    out = restrict_to_coarse(GridField(Basis2D(4, 2.0), np.arange(16.0).reshape(4, 4)))
    assert out.data.shape == (2, 2)


def test_noise_level_formula():
    assert problem.noise_std_for_level(10.0, 0.05, 100) == pytest.approx(0.05)
    spec = small_spec()
    truth = sample_truth(spec)
    A = problem.forward_operator(spec.fine_basis)
    g = calibrate_gamma(truth, A, 0.05)
    signal = np.linalg.norm(A.eigenvalues * truth.fine_field.data)
    assert g == pytest.approx(0.05 * signal / np.sqrt(63))
    with pytest.raises(ValueError):
        calibrate_gamma(truth, A, 1.0)
    zero = problem.TruthSample(GridField(spec.fine_basis, np.zeros(255), "spectral"),
                               truth.coarse_projection)
    with pytest.raises(ValueError):
        calibrate_gamma(zero, A, 0.1)


def test_noise_streams_are_keyed():
    fine, coarse = Basis2D(8, 4.0), Basis2D(4, 4.0)
    a = restricted_noise(fine, coarse, 1.0, 0, 0, [1, 2])
    b = restricted_noise(fine, coarse, 1.0, 0, 0, [2])
    np.testing.assert_array_equal(a[1], b[0])
    c = restricted_noise(fine, coarse, 2.0, 0, 0, [2])
    np.testing.assert_allclose(c, 2 * b)
    assert not np.allclose(a[0], a[1])


def test_data_models():
    spec1, spec2 = small_spec(data_model=DM1, gamma=0.1, noise_level=None), small_spec()
    truth = sample_truth(spec1)
    A = problem.forward_operator(spec1.fine_basis)
    s1 = generate_data(spec1, truth, A, 0.1)
    s2 = generate_data(spec2, truth, A, 0.1)
    assert not np.allclose(s1.coefficients(1), s1.coefficients(2))
    np.testing.assert_array_equal(s2.coefficients(1), s2.coefficients(7))
    np.testing.assert_array_equal(s1.block(2, 3)[0], s1.coefficients(2))
    assert s2.block(1, 4).shape == (3, 63)
    with pytest.raises(IndexError):
        s1.coefficients(0)
    with pytest.raises(ValueError):
        generate_data(spec1, truth, problem.forward_operator(spec1.coarse_basis), 0.1)


def test_noiseless_data_is_restricted_clean_signal():
    spec = small_spec(data_model=DM1, gamma=0.0, noise_level=None)
    truth = sample_truth(spec)
    A = problem.forward_operator(spec.fine_basis)
    stream = generate_data(spec, truth, A, 0.0)
    np.testing.assert_array_equal(stream.coefficients(1), stream.coefficients(5))
    np.testing.assert_array_equal(stream.coefficients(1), stream.clean)


def test_average_observations():
    fine, coarse = Basis2D(8, 4.0), Basis2D(4, 4.0)
    stream = DataStream(DM1, 1.0, np.zeros(15), fine, coarse)
    ybar, scale = average_observations(stream, 4)
    np.testing.assert_allclose(ybar.coefficients, stream.block(1, 5).mean(axis=0))
    assert scale == 0.5
    with pytest.raises(ValueError):
        average_observations(DataStream(DM2, 1.0, np.zeros(15), fine, coarse), 3)
