"""Kalman, 3DVAR and variant-3DVAR iterations in a shared eigenbasis.

All operators are per-mode spectra: ``prior`` holds the eigenvalues
``lambda_i`` of Sigma_0 and ``A`` the singular values ``kappa_i`` of the
forward map. Either may be passed as a :class:`~invfilter.spectral.SpectralOperator`
or a plain array. Means and observations are coefficient vectors and may carry
leading batch axes (independent replicates run in lockstep).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ._validation import check_finite_state, check_positive
from .spectral import GridField, SpectralOperator

KALMAN = "kalman"
THREEDVAR = "threedvar"
VARIANT = "variant"
FILTER_KINDS = (KALMAN, THREEDVAR, VARIANT)


def _spectrum(op):
    if isinstance(op, SpectralOperator):
        return op.eigenvalues
    return np.asarray(op, dtype=float)


def _coefficients(y):
    if isinstance(y, GridField):
        return y.coefficients
    return np.asarray(y, dtype=float)


@dataclass(frozen=True)
class AlphaSchedule:
    """Regularisation sequence ``alpha_n`` for the variant scheme.

    ``constant``: ``alpha_n = alpha``. ``geometric``: ``alpha_n = alpha q^(n-1)``
    with ``0 < q < 1``, admissible with ``c_tilde = 1/q``. ``custom``: explicit
    values, checked step by step against ``c_tilde``.
    """

    kind: str
    alpha: float
    q: float = 1.0
    values: tuple = ()
    c_tilde: float = 1.0

    @classmethod
    def constant(cls, alpha):
        return cls("constant", check_positive(alpha, "alpha"))

    @classmethod
    def geometric(cls, alpha, q):
        alpha = check_positive(alpha, "alpha")
        if not 0 < q < 1:
            raise ValueError(f"geometric schedule needs 0 < q < 1, got q={q}")
        return cls("geometric", alpha, float(q), c_tilde=1.0 / q)

    @classmethod
    def custom(cls, values, c_tilde):
        values = tuple(check_positive(v, "alpha_n") for v in values)
        if not values:
            raise ValueError("custom schedule needs at least one value")
        return cls("custom", values[0], values=values,
                   c_tilde=check_positive(c_tilde, "c_tilde"))

    def alpha_at(self, n):
        if n < 1:
            raise ValueError(f"schedule is indexed from 1, got {n}")
        if self.kind == "constant":
            return self.alpha
        if self.kind == "geometric":
            return self.alpha * self.q ** (n - 1)
        if n > len(self.values):
            raise IndexError(f"custom schedule has only {len(self.values)} values")
        return self.values[n - 1]

    def sigma(self, n):
        """``sigma_n = sum_{j<=n} 1/alpha_j``."""
        if n <= 0:
            return 0.0
        if self.kind == "constant":
            return n / self.alpha
        if self.kind == "geometric":
            return self.q ** (1 - n) * (1 - self.q ** n) / (self.alpha * (1 - self.q))
        return float(sum(1.0 / v for v in self.values[:n]))

    def admissible(self, n, sigma_prev=None):
        """Check ``1/alpha_n <= c_tilde * sigma_{n-1}`` (vacuous for ``n = 1``)."""
        if n < 2:
            return True
        if sigma_prev is None:
            sigma_prev = self.sigma(n - 1)
        return 1.0 / self.alpha_at(n) <= self.c_tilde * sigma_prev * (1 + 1e-12)


@dataclass(frozen=True, eq=False)
class FilterState:
    """Mean, covariance spectrum and step counter of one filter (or a batch).

    ``cov_spectrum`` is ``C_n`` for Kalman, the fixed ``(gamma^2/alpha) Sigma_0``
    for 3DVAR and ``C_n`` of the variant scheme after each step.
    """

    kind: str
    mean: np.ndarray
    cov_spectrum: np.ndarray
    prior: np.ndarray
    alpha: float
    gamma: float
    step: int = 0
    schedule: AlphaSchedule | None = None
    sigma: float = 0.0


def initial_state(kind, prior, alpha, gamma, mean0=None, schedule=None, batch_shape=()):
    """State at ``n = 0`` with ``C_0 = (gamma^2/alpha) Sigma_0``."""
    if kind not in FILTER_KINDS:
        raise ValueError(f"unknown filter kind {kind!r}")
    lam = _spectrum(prior)
    gamma = check_positive(gamma, "gamma", allow_zero=True)
    if kind == VARIANT:
        if schedule is None:
            schedule = AlphaSchedule.constant(alpha)
        alpha = schedule.alpha
    alpha = check_positive(alpha, "alpha")
    if mean0 is None:
        mean = np.zeros(tuple(batch_shape) + lam.shape)
    else:
        mean = np.array(_coefficients(mean0), dtype=float)
    return FilterState(kind, mean, gamma ** 2 / alpha * lam, lam, alpha, gamma,
                       schedule=schedule)


def kalman_gain(cov_spectrum, A, gamma):
    """Per-mode Kalman gain ``c kappa / (c kappa^2 + gamma^2)``."""
    gamma = float(gamma)
    if gamma <= 0:
        raise ValueError("the Kalman gain needs gamma > 0")
    c = _spectrum(cov_spectrum)
    kappa = _spectrum(A)
    return c * kappa / (c * kappa ** 2 + gamma ** 2)


def kalman_step(state, y, A):
    """One Kalman update of the mean and covariance."""
    if state.kind != KALMAN:
        raise ValueError(f"kalman_step on a {state.kind} state")
    kappa = _spectrum(A)
    y = _coefficients(y)
    if kappa.shape != state.prior.shape or y.shape[-1] != kappa.shape[-1]:
        raise ValueError("basis mismatch between state, observation and operator")
    c = state.cov_spectrum
    gamma2 = state.gamma ** 2
    if gamma2 <= 0:
        raise ValueError("the Kalman gain needs gamma > 0")
    denom = c * kappa ** 2 + gamma2
    gain = c * kappa / denom
    mean = state.mean + gain * (y - kappa * state.mean)
    # 1 - k kappa written without cancellation
    cov = c * (gamma2 / denom)
    return replace(state, mean=mean, cov_spectrum=cov, step=state.step + 1)


def kalman_cov_closed_form(prior, A, alpha, gamma, n):
    """``C_n`` from the precision recursion ``C_n^{-1} = C_0^{-1} + n A*A / gamma^2``."""
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    lam = _spectrum(prior)
    kappa = _spectrum(A)
    return gamma ** 2 * lam / (alpha + n * lam * kappa ** 2)


def product_operator_spectrum(prior, A, alpha, n):
    """Per-mode ``prod_{j<=n} (1 - k_j kappa) = alpha / (alpha + n lambda kappa^2)``."""
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    lam = _spectrum(prior)
    kappa = _spectrum(A)
    return alpha / (alpha + n * lam * kappa ** 2)


def threedvar_gain(prior, A, alpha):
    """Per-mode 3DVAR gain ``lambda kappa / (lambda kappa^2 + alpha)``."""
    alpha = check_positive(alpha, "alpha")
    lam = _spectrum(prior)
    kappa = _spectrum(A)
    return lam * kappa / (lam * kappa ** 2 + alpha)


def threedvar_covariance(prior, A, alpha, gamma):
    """Analysis covariance ``(gamma^2/alpha)(I - K A) Sigma_0`` of 3DVAR."""
    lam = _spectrum(prior)
    kappa = _spectrum(A)
    return gamma ** 2 / alpha * (alpha / (lam * kappa ** 2 + alpha)) * lam


def threedvar_step(state, y, A):
    """One 3DVAR mean update; the covariance is never updated."""
    if state.kind != THREEDVAR:
        raise ValueError(f"threedvar_step on a {state.kind} state")
    kappa = _spectrum(A)
    y = _coefficients(y)
    if kappa.shape != state.prior.shape or y.shape[-1] != kappa.shape[-1]:
        raise ValueError("basis mismatch between state, observation and operator")
    gain = threedvar_gain(state.prior, kappa, state.alpha)
    mean = state.mean + gain * (y - kappa * state.mean)
    return replace(state, mean=mean, step=state.step + 1)


def variant_step(state, y, A, schedule=None):
    """One step of 3DVAR with the step-dependent regularisation ``alpha_n``."""
    if state.kind != VARIANT:
        raise ValueError(f"variant_step on a {state.kind} state")
    schedule = schedule or state.schedule
    kappa = _spectrum(A)
    y = _coefficients(y)
    if kappa.shape != state.prior.shape or y.shape[-1] != kappa.shape[-1]:
        raise ValueError("basis mismatch between state, observation and operator")
    n = state.step + 1
    if not schedule.admissible(n, state.sigma):
        raise ValueError(
            f"schedule violates 1/alpha_n <= c_tilde * sigma_(n-1) at n={n}")
    alpha_n = schedule.alpha_at(n)
    lam = state.prior
    s = lam * kappa ** 2
    gain = lam * kappa / (s + alpha_n)
    mean = state.mean + gain * (y - kappa * state.mean)
    cov = state.gamma ** 2 / alpha_n * (alpha_n / (s + alpha_n)) * lam
    return replace(state, mean=mean, cov_spectrum=cov, step=n,
                   sigma=state.sigma + 1.0 / alpha_n, schedule=schedule)


_STEPS = {KALMAN: kalman_step, THREEDVAR: threedvar_step, VARIANT: variant_step}


def step(state, y, A):
    """Dispatch to the update rule of ``state.kind``."""
    return _STEPS[state.kind](state, y, A)


def contraction_norm(gain, A):
    """``||I - K A|| = sup_i |1 - k_i kappa_i|``."""
    return float(np.max(np.abs(1.0 - _spectrum(gain) * _spectrum(A))))


def contraction_gap(gain, A):
    """``1 - ||I - K A||`` evaluated without cancellation.

    Near 1 the norm itself is not representable in double precision; the gap
    ``min_i min(x_i, 2 - x_i)`` with ``x_i = k_i kappa_i`` stays accurate.
    """
    x = _spectrum(gain) * _spectrum(A)
    return float(np.min(np.minimum(x, 2.0 - x)))


def spectral_filter_functions(lam, alpha, n):
    """Return ``(r_{1,alpha/n}, r_{n,alpha}, q_{n,alpha})`` evaluated at ``lam``.

    ``r_{1,alpha/n} = alpha/(alpha + n lam)``, ``r_{n,alpha} = (alpha/(alpha+lam))^n``
    and ``q_{n,alpha} = (1 - r_{n,alpha}) / lam``. Also checks
    ``lam^t r_{1,alpha/n} <= (alpha/n)^t`` on a grid of ``t`` in ``[0, 1]``.
    """
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0) or alpha <= 0 or n < 1:
        raise ValueError("need lam > 0, alpha > 0 and n >= 1")
    r1 = alpha / (alpha + n * lam)
    log_rn = -n * np.log1p(lam / alpha)
    rn = np.exp(log_rn)
    qn = -np.expm1(log_rn) / lam
    for t in np.linspace(0.0, 1.0, 11):
        lhs = lam ** t * r1
        if np.any(lhs > (alpha / n) ** t * (1 + 1e-12)):
            raise ArithmeticError(f"filter-function inequality fails at t={t}")
    return r1, rn, qn


def run(state, observations, A, *, truth=None, check=True):
    """Iterate ``state`` over ``observations`` (an iterable of coefficient arrays).

    Returns the final state and, when ``truth`` is given, the array of errors
    ``||mean_n - truth||`` for ``n = 1, 2, ...``.
    """
    errors = []
    for y in observations:
        state = step(state, y, A)
        if check:
            check_finite_state(state.mean, state.cov_spectrum, f"step {state.step}")
        if truth is not None:
            errors.append(np.linalg.norm(state.mean - truth, axis=-1))
    return state, (np.asarray(errors) if truth is not None else None)


def scalar_kalman_recursion(c0, kappa, gamma, n):
    """Covariance after ``n`` scalar Kalman steps, by plain iteration."""
    c = c0
    for _ in range(n):
        k = c * kappa / (c * kappa * kappa + gamma * gamma)
        c = (1.0 - k * kappa) * c
    return c


def effective_dimension(gain, A, tol=1e-3):
    """Number of modes whose contraction factor ``|1 - k kappa|`` is below ``1 - tol``."""
    x = np.abs(1.0 - _spectrum(gain) * _spectrum(A))
    return int(np.count_nonzero(x < 1.0 - tol))

