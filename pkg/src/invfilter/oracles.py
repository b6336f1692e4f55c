"""Independent reference checks behind ``invfilter oracle``.

Each oracle compares a library routine against a formula evaluated another
way (plain loops, dense matrices, explicit sums), so a shared bug cannot make
both sides agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import problem
from .analysis import (
    DM1,
    DiagonalModel,
    RateParams,
    empirical_mse_diagonal,
    kalman_dm1_expected,
    select_alpha,
    stopping_n_dm2,
    threedvar_dm1_expected,
)
from .filters import (
    KALMAN,
    THREEDVAR,
    initial_state,
    kalman_cov_closed_form,
    product_operator_spectrum,
    scalar_kalman_recursion,
    spectral_filter_functions,
    step,
    threedvar_gain,
)
from .spectral import NODAL, Basis2D, GridField, transform_to_nodal, transform_to_spectral


@dataclass(frozen=True)
class OracleResult:
    name: str
    passed: bool
    detail: str


def _rel(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))


def dense_cosine_matrix(n, length=1.0):
    """Normalised Neumann cosine vectors as columns, built from their formula."""
    h = length / n
    x = (np.arange(n) + 0.5) * h
    cols = []
    for j in range(n):
        norm = math.sqrt(1.0 / length) if j == 0 else math.sqrt(2.0 / length)
        cols.append(norm * np.cos(j * np.pi * x / length))
    return np.array(cols).T


def oracle_transform():
    n, L = 6, 2.5
    rng = np.random.default_rng(1)
    v = rng.standard_normal((n, n))
    v -= v.mean()
    basis = Basis2D(n, L)
    c = transform_to_spectral(GridField(basis, v, NODAL)).data
    E = dense_cosine_matrix(n, L)
    h = L / n
    dense = (E.T @ v @ E * h * h).ravel()[1:]
    back = transform_to_nodal(GridField.from_coefficients(basis, c)).data
    err = max(_rel(c, dense), float(np.max(np.abs(back - v))))
    return OracleResult("dct_vs_dense_cosine", err < 1e-12, f"max error {err:.2e}")


def oracle_kalman_closed_form():
    rng = np.random.default_rng(2)
    lam, kappa = rng.uniform(0.01, 2, 50), rng.uniform(0.01, 2, 50)
    alpha, gamma, n = 1.7, 0.3, 120
    state = initial_state(KALMAN, lam, alpha, gamma)
    for _ in range(n):
        state = step(state, np.zeros(50), kappa)
    loop = np.array([scalar_kalman_recursion(gamma ** 2 * l / alpha, k, gamma, n)
                     for l, k in zip(lam, kappa)])
    err = max(_rel(state.cov_spectrum, kalman_cov_closed_form(lam, kappa, alpha, gamma, n)),
              _rel(loop, kalman_cov_closed_form(lam, kappa, alpha, gamma, n)))
    return OracleResult("kalman_covariance_closed_form", err < 1e-10, f"rel error {err:.2e}")


def oracle_product_operator():
    rng = np.random.default_rng(3)
    lam, kappa = rng.uniform(0.01, 2, 40), rng.uniform(0.01, 2, 40)
    alpha, gamma, n = 0.8, 0.5, 90
    prod = np.ones(40)
    c = gamma ** 2 / alpha * lam
    for _ in range(n):
        k = c * kappa / (c * kappa ** 2 + gamma ** 2)
        prod *= 1 - k * kappa
        c = (1 - k * kappa) * c
    err = _rel(prod, product_operator_spectrum(lam, kappa, alpha, n))
    return OracleResult("kalman_product_operator", err < 1e-10, f"rel error {err:.2e}")


def oracle_threedvar_geometric():
    lam, kappa, alpha, n = np.array([0.5, 2.0]), np.array([1.0, 0.1]), 3.0, 25
    state = initial_state(THREEDVAR, lam, alpha, 1.0, mean0=np.ones(2))
    for _ in range(n):
        state = step(state, np.zeros(2), kappa)
    expected = (alpha / (alpha + lam * kappa ** 2)) ** n
    err = _rel(state.mean, expected)
    return OracleResult("threedvar_homogeneous_decay", err < 1e-12, f"rel error {err:.2e}")


def oracle_scalar_decomposition():
    model = DiagonalModel(np.ones(1), np.ones(1), np.zeros(1), np.ones(1))
    worst = 0.0
    for n in (1, 5, 20):
        bias, var = kalman_dm1_expected(model, 1.0, 1.0, n)
        worst = max(worst, _rel(bias, (1 / (1 + n)) ** 2), _rel(var, n / (1 + n) ** 2))
    return OracleResult("scalar_bias_variance", worst < 1e-14, f"rel error {worst:.2e}")


def oracle_monte_carlo_decomposition():
    model = DiagonalModel.assumption2(1.0, 0.5, 1.0, 30)
    params = RateParams.assumption2(1.0, 0.5, 1.0, DM1)
    ok, detail = True, []
    for kind, expected in ((KALMAN, kalman_dm1_expected), (THREEDVAR, threedvar_dm1_expected)):
        rec = empirical_mse_diagonal(model, kind, [20], 400, 0.2, params, seed=5)[0]
        bias, var = expected(model, select_alpha(params, 20, kind), 0.2, 20)
        ok &= abs(rec.bias_sq - bias) <= 1e-10 * bias
        ok &= abs(rec.variance - var) <= 0.15 * var
        detail.append(f"{kind}: var {rec.variance:.3e} vs {var:.3e}")
    return OracleResult("monte_carlo_vs_closed_form", bool(ok), "; ".join(detail))


def oracle_link_condition():
    basis = Basis2D(12, 12.0)
    A = problem.forward_operator(basis)
    prior = problem.prior_covariance(basis)
    x = np.random.default_rng(4).standard_normal(basis.n_modes)
    lhs = np.linalg.norm(A.eigenvalues * x)
    rhs = np.linalg.norm(np.sqrt(prior.eigenvalues) * x)
    err = abs(lhs - rhs) / rhs
    return OracleResult("link_condition_a1", bool(err < 1e-12), f"rel error {err:.2e}")


def oracle_filter_functions():
    lam = np.logspace(-6, 3, 200)
    try:
        r1, rn, qn = spectral_filter_functions(lam, 2.0, 15)
    except ArithmeticError as exc:
        return OracleResult("spectral_filter_inequality", False, str(exc))
    ok = np.all(r1 <= 1) and np.all(rn <= 1) and np.all(qn > 0)
    return OracleResult("spectral_filter_inequality", bool(ok), "t in [0, 1]")


def oracle_parameter_rules():
    a = select_alpha(RateParams.assumption1(1, 1, DM1), 3000)
    N = stopping_n_dm2(0.1, 1, 1)
    ok = abs(a - 3000 ** (1 / 3)) < 1e-12 and N == 22
    return OracleResult("parameter_rules", ok, f"alpha={a:.6f}, N={N}")


def oracle_restriction():
    L = 16.0
    fine, coarse = Basis2D(32, L), Basis2D(16, L)
    f = lambda x, y: np.cos(np.pi * x / L) * np.cos(2 * np.pi * y / L)
    got = problem.restrict_to_coarse(GridField.from_function(fine, f), coarse).data
    want = GridField.from_function(coarse, f).data
    err = float(np.max(np.abs(got - want)))
    return OracleResult("spline_restriction", err < 1e-4, f"max error {err:.2e}")


def oracle_gain_bound():
    lam, kappa = np.logspace(-4, 1, 30), np.logspace(-3, 0, 30)
    gain = threedvar_gain(lam, kappa, 0.5)
    x = gain * kappa
    ok = np.all((x > 0) & (x < 1))
    return OracleResult("threedvar_contraction_in_unit_interval", bool(ok), "")


ORACLES = (oracle_transform, oracle_kalman_closed_form, oracle_product_operator,
           oracle_threedvar_geometric, oracle_scalar_decomposition,
           oracle_monte_carlo_decomposition, oracle_link_condition,
           oracle_filter_functions, oracle_parameter_rules, oracle_restriction,
           oracle_gain_bound)


def run_oracles():
    return [fn() for fn in ORACLES]
