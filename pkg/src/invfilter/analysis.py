"""Parameter rules, rate predictions and Monte-Carlo bias-variance estimates."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import problem
from .filters import (
    KALMAN,
    THREEDVAR,
    VARIANT,
    AlphaSchedule,
    initial_state,
    step,
)
from ._validation import check_finite_state
from .problem import DM1, DM2, stream_rng
from .spectral import apply, transform_to_nodal, transform_to_spectral

ASSUMPTION1 = "assumption1"
ASSUMPTION2 = "assumption2"


@dataclass(frozen=True)
class RateParams:
    """Smoothness regime and data model that fix the convergence rate.

    ``assumption1`` uses the source exponent ``s`` and link exponent ``a``;
    ``assumption2`` the sequence-space exponents ``beta``, ``eps`` and ``p``
    (``lambda_i = i^{-1-2 eps}``, ``kappa_i ~ i^{-p}``).
    """

    regime: str = ASSUMPTION1
    data_model: str = DM1
    s: float | None = None
    a: float | None = None
    beta: float | None = None
    eps: float | None = None
    p: float | None = None

    def __post_init__(self):
        if self.data_model not in (DM1, DM2):
            raise ValueError(f"unknown data model {self.data_model!r}")
        if self.regime == ASSUMPTION1:
            if self.s is None or self.a is None:
                raise ValueError("assumption1 needs s and a")
            if self.s < 0 or self.a <= 0:
                raise ValueError("assumption1 needs s >= 0 and a > 0")
        elif self.regime == ASSUMPTION2:
            if None in (self.beta, self.eps, self.p):
                raise ValueError("assumption2 needs beta, eps and p")
            if min(self.beta, self.eps, self.p) <= 0:
                raise ValueError("assumption2 needs beta, eps, p > 0")
        else:
            raise ValueError(f"unknown regime {self.regime!r}")

    @classmethod
    def assumption1(cls, s, a, data_model=DM1):
        return cls(ASSUMPTION1, data_model, s=s, a=a)

    @classmethod
    def assumption2(cls, beta, eps, p, data_model=DM1):
        return cls(ASSUMPTION2, data_model, beta=beta, eps=eps, p=p)

    def identified(self):
        """The equivalent ``(s, a)`` of an assumption2 regime."""
        if self.regime == ASSUMPTION1:
            return self.s, self.a
        return 2 * self.beta / (1 + 2 * self.eps), 2 * self.p / (1 + 2 * self.eps)

    def warnings(self):
        if self.regime == ASSUMPTION1 and self.s > self.a + 2:
            return [f"s={self.s} > a+2={self.a + 2}: outside the source-condition range"]
        return []


class RatePrediction(NamedTuple):
    exponent: float
    log_factor: bool
    alternative: float | None = None


def select_alpha(params, N, kind=KALMAN):
    """Regularisation parameter for a run stopped at ``n = N``."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if params.data_model == DM2:
        return 1.0
    if params.regime == ASSUMPTION1:
        return float(N) ** (params.s / (params.s + params.a + 1))
    b, e, p = params.beta, params.eps, params.p
    if kind == KALMAN:
        return float(N) ** (2 * (b - e) / (1 + 2 * b + 2 * p))
    if kind == THREEDVAR:
        return float(N) ** (2 * b / (1 + 2 * e + 2 * b + 2 * p))
    raise ValueError(f"no alpha rule for {kind} under {params.regime}")


def stopping_n_dm2(gamma, s, a):
    """Stopping index ``round(gamma^{-2(a+1)/(a+s+1)})`` for single-observation data."""
    if gamma <= 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    if gamma >= 1:
        warnings.warn(f"gamma={gamma} >= 1 gives a stopping index <= 1", stacklevel=2)
    value = gamma ** (-2 * (a + 1) / (a + s + 1))
    return int(math.floor(value + 0.5))


def predicted_exponent(params, kind=KALMAN):
    """Algebraic exponent of ``N`` in the MSE bound at the tuned ``alpha``."""
    dm, reg = params.data_model, params.regime
    if reg == ASSUMPTION1:
        s, a = params.s, params.a
        if dm == DM1 and kind in (KALMAN, THREEDVAR):
            return RatePrediction(-s / (s + a + 1), kind == THREEDVAR)
        if dm == DM2 and kind in (KALMAN, THREEDVAR):
            return RatePrediction(-s / (a + 1), False)
    else:
        b, e, p = params.beta, params.eps, params.p
        if dm == DM1 and kind == KALMAN:
            return RatePrediction(-2 * b / (1 + 2 * b + 2 * p), False)
        if dm == DM2 and kind == KALMAN:
            return RatePrediction(-2 * b / (1 + 2 * e + 2 * p), False)
        if dm == DM1 and kind == THREEDVAR:
            # a competing derivation puts 2p in the numerator instead of 2 beta
            denom = 1 + 2 * e + 2 * b + 2 * p
            return RatePrediction(-2 * b / denom, True, alternative=-2 * p / denom)
    raise ValueError(f"no rate for {kind} with {reg}/{dm}")


def theoretical_bounds(params, n, alpha, gamma, trace_prior, kind=KALMAN, C=1.0,
                       sigma=None):
    """Shapes of the bias and variance bounds at step ``n``.

    ``C`` multiplies the terms whose constant is left unspecified; the
    explicit-constant variance bounds of the Kalman filter are returned as is.
    The variant scheme needs the running ``sigma = sum 1/alpha_j``.
    """
    dm = params.data_model
    g2 = gamma ** 2
    if params.regime == ASSUMPTION1:
        s, a = params.s, params.a
        if kind == VARIANT:
            if sigma is None:
                raise ValueError("the variant bound needs sigma")
            return C * sigma ** (-s / (a + 1)), C * g2 * trace_prior * sigma
        bias = C * (alpha / n) ** (s / (a + 1))
        if kind == KALMAN:
            var = g2 / alpha * trace_prior * (1 if dm == DM1 else n)
        elif kind == THREEDVAR:
            var = (C * g2 * math.log(n) / alpha * trace_prior if dm == DM1
                   else n * g2 / alpha * trace_prior)
        else:
            raise ValueError(f"unknown filter kind {kind!r}")
        return bias, var
    b, e, p = params.beta, params.eps, params.p
    d = 1 + 2 * e + 2 * p
    bias = C * (alpha / n) ** (2 * b / d)
    if kind == KALMAN and dm == DM1:
        return bias, g2 * n ** (-2 * e / d) * alpha ** (-(1 + 2 * p) / d)
    if kind == KALMAN and dm == DM2:
        return bias, g2 * (n / alpha) ** ((1 + 2 * p) / d)
    if kind == THREEDVAR and dm == DM1:
        return bias, C * g2 * alpha ** (-(1 + 2 * p) / d)
    raise ValueError(f"no bound for {kind} with assumption2/{dm}")


@dataclass(frozen=True)
class DecompositionRecord:
    """Monte-Carlo bias-variance split of the squared error at step ``n``."""

    n: int
    error: float
    bias_sq: float
    variance: float
    mse: float
    stderr: float

    @classmethod
    def from_samples(cls, n, sq_err, bias_sq, variance):
        sq_err = np.asarray(sq_err, dtype=float)
        m = sq_err.size
        stderr = float(sq_err.std(ddof=1) / np.sqrt(m)) if m > 1 else float("nan")
        return cls(int(n), float(np.sqrt(sq_err).mean()), float(np.mean(bias_sq)),
                   float(np.mean(variance)), float(sq_err.mean()), stderr)

    def as_row(self):
        return [self.n, self.error, self.bias_sq, self.variance, self.mse, self.stderr]


@dataclass(frozen=True)
class SlopeFit:
    log_n: np.ndarray
    log_mse: np.ndarray
    slope: float
    intercept: float
    residual: float


def fit_slope(records, mse=None):
    """Least-squares line through ``(ln N, ln mse)``.

    Pass either a sequence of :class:`DecompositionRecord` or the arrays
    ``N`` and ``mse``.
    """
    if mse is None:
        n = np.array([r.n for r in records], dtype=float)
        mse = np.array([r.mse for r in records], dtype=float)
    else:
        n = np.asarray(records, dtype=float)
        mse = np.asarray(mse, dtype=float)
    if n.size < 4:
        raise ValueError(f"need at least 4 points for a slope, got {n.size}")
    if np.any(mse <= 0) or np.any(n <= 0):
        raise ValueError("slope fitting needs positive N and mse")
    x, y = np.log(n), np.log(mse)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return SlopeFit(x, y, float(slope), float(intercept),
                    float(np.sqrt(np.mean(resid ** 2))))


def simulate(kind, prior, A, truth, clean, noise, alphas, gammas, stops, *,
             schedules=None, trajectory=False, data_scale=None, mean0=None):
    """Run ``K = len(alphas)`` filters over ``M`` replicates in lockstep.

    ``truth`` and ``clean`` have shape ``(M, d)`` (reference solution and
    noise-free data); ``noise(n, k)`` returns the unit-std noise rows for step
    ``n`` of configuration ``k``. Data are ``clean + data_scale[k] * noise``,
    with ``data_scale`` defaulting to ``gammas``. A noiseless companion run
    gives the bias; the variance is the spread of the noisy run around it.

    Returns, per configuration, ``(sq_err, bias_sq, variance)`` arrays of shape
    ``(M,)`` at its stop, or ``(stop, M)`` when ``trajectory`` is set.
    """
    K = len(alphas)
    data_scale = gammas if data_scale is None else data_scale
    schedules = schedules or [None] * K
    M = truth.shape[0]
    start = None if mean0 is None else np.broadcast_to(mean0, truth.shape)
    noisy = [initial_state(kind, prior, alphas[k], gammas[k], mean0=start,
                           schedule=schedules[k], batch_shape=(M,)) for k in range(K)]
    quiet = list(noisy)
    out = [[] for _ in range(K)]
    n_max = int(max(stops))
    for n in range(1, n_max + 1):
        for k in range(K):
            if n > stops[k]:
                continue
            y = clean + data_scale[k] * noise(n, k)
            noisy[k] = step(noisy[k], y, A)
            quiet[k] = step(quiet[k], clean, A)
            check_finite_state(noisy[k].mean, noisy[k].cov_spectrum, f"step {n}")
            if trajectory or n == stops[k]:
                out[k].append((
                    np.sum((noisy[k].mean - truth) ** 2, axis=-1),
                    np.sum((quiet[k].mean - truth) ** 2, axis=-1),
                    np.sum((noisy[k].mean - quiet[k].mean) ** 2, axis=-1),
                ))
    result = []
    for rows in out:
        arr = np.asarray(rows)  # (steps, 3, M)
        parts = tuple(arr[:, i, :] for i in range(3))
        result.append(parts if trajectory else tuple(p[-1] for p in parts))
    return result


def records_from_trajectory(parts):
    sq, bias, var = parts
    return [DecompositionRecord.from_samples(n + 1, sq[n], bias[n], var[n])
            for n in range(sq.shape[0])]


@dataclass(frozen=True)
class DiagonalModel:
    """Sequence-space problem with per-mode ``lambda``, ``kappa`` and truth."""

    prior: np.ndarray
    forward: np.ndarray
    truth: np.ndarray
    initial_mean: np.ndarray | None = None

    @classmethod
    def assumption2(cls, beta, eps, p, n_modes=1000):
        """``lambda_i = i^{-1-2eps}``, ``kappa_i = i^{-p}``, truth ``u_i = i^{-beta-1/2}``.

        The truth sits on the edge of the smoothness class, so the minimax
        exponent is attained rather than beaten.
        """
        i = np.arange(1, n_modes + 1, dtype=float)
        return cls(i ** (-1 - 2 * eps), i ** (-p), i ** (-beta - 0.5))

    @property
    def n_modes(self):
        return self.prior.size

    @property
    def start(self):
        return np.zeros_like(self.truth) if self.initial_mean is None else self.initial_mean


def empirical_mse_diagonal(model, kind, N_list, replicates, gamma, params, *,
                           seed=0, schedule=None, trajectory=False):
    """Bias-variance records for a :class:`DiagonalModel` with white noise.

    ``params`` (a :class:`RateParams`) supplies the data model and the alpha
    rule; with ``trajectory`` only ``N_list[0]`` is used and every step is
    recorded. Noise for step ``n`` comes from the stream ``(seed, n)``.
    """
    if replicates < 2:
        raise ValueError("need at least 2 replicates")
    N_list = [int(N) for N in N_list]
    if trajectory:
        N_list = N_list[:1]
    d = model.n_modes
    truth = np.broadcast_to(model.truth, (replicates, d))
    clean = np.broadcast_to(model.forward * model.truth, (replicates, d))
    if kind == VARIANT:
        alphas = [schedule.alpha] * len(N_list)
        schedules = [schedule] * len(N_list)
    else:
        alphas = [select_alpha(params, N, kind) for N in N_list]
        schedules = None
    fixed = stream_rng(seed, 1, 0).standard_normal((replicates, d))

    def noise(n, k):
        if params.data_model == DM2:
            return fixed
        return stream_rng(seed, 1, n).standard_normal((replicates, d))

    parts = simulate(kind, model.prior, model.forward, truth, clean, noise, alphas,
                     [gamma] * len(N_list), N_list, schedules=schedules,
                     trajectory=trajectory, mean0=model.start)
    if trajectory:
        return records_from_trajectory(parts[0])
    return [DecompositionRecord.from_samples(N, *p) for N, p in zip(N_list, parts)]


def kalman_dm1_expected(model, alpha, gamma, n):
    """Closed-form ``(||J1||^2, E||J2||^2)`` of the Kalman filter under DM1."""
    s = model.prior * model.forward ** 2
    r = alpha / (alpha + n * s)
    err0 = model.start - model.truth
    bias = float(np.sum((r * err0) ** 2))
    variance = float(np.sum((1 - r) ** 2 * gamma ** 2 / (n * model.forward ** 2)))
    return bias, variance


def threedvar_dm1_expected(model, alpha, gamma, n):
    """Closed-form ``(||I1||^2, E||I2||^2)`` of 3DVAR under DM1 (geometric sums)."""
    s = model.prior * model.forward ** 2
    rho = alpha / (alpha + s)            # per-step contraction 1 - k kappa
    k = model.prior * model.forward / (s + alpha)
    err0 = model.start - model.truth
    bias = float(np.sum((rho ** n * err0) ** 2))
    geom = -np.expm1(2 * n * np.log(rho)) / -np.expm1(2 * np.log(rho))
    variance = float(np.sum(gamma ** 2 * k ** 2 * geom))
    return bias, variance


class PDEBatch(NamedTuple):
    """Replicate batch of the PDE experiment on the inversion grid."""

    truth: np.ndarray       # (M, d) coarse coefficients of the projected truth
    clean: np.ndarray       # (M, d) restricted noise-free data
    signal_norm: np.ndarray  # (M,) ||A u|| on the fine grid
    prior: np.ndarray
    forward: np.ndarray


def pde_batch(spec, replicates):
    """Truths and clean data for replicates ``0 .. replicates-1``."""
    reps = np.arange(replicates)
    truth = problem.sample_truth(spec, reps)
    A_fine = problem.forward_operator(spec.fine_basis)
    Au = apply(A_fine, truth.fine_field)
    clean = problem.restrict_to_coarse(transform_to_nodal(Au), spec.coarse_basis)
    coarse = spec.coarse_basis
    return PDEBatch(truth.coarse_projection.data,
                    transform_to_spectral(clean).data,
                    np.linalg.norm(Au.data, axis=-1),
                    problem.prior_covariance(coarse).eigenvalues,
                    problem.forward_operator(coarse).eigenvalues)


def pde_noise(spec, replicates):
    """``noise(n)`` returning restricted unit fine-grid noise for all replicates."""
    fine, coarse = spec.fine_basis, spec.coarse_basis

    def noise(n):
        rows = [problem.restricted_noise(fine, coarse, 1.0, spec.seed, r, [n])[0]
                for r in range(replicates)]
        return np.stack(rows)
    return noise


def empirical_mse(spec, kind, N_list, replicates, *, gamma=None, trajectory=False):
    """Bias-variance records of the PDE experiment described by ``spec``.

    Each replicate has its own truth. For DM1 every step draws fresh noise
    (shared by all ``N``), with ``alpha = N^{s/(s+a+1)}``. For DM2 each ``N``
    uses ``alpha = 1`` and, unless ``gamma`` or ``spec.gamma`` fixes it, the
    noise level ``gamma = N^{-(a+s+1)/(2(a+1))}``. A ``noise_level`` spec is
    calibrated on replicate 0. Errors are measured against the projected truth.
    """
    if replicates < (1 if trajectory else 2):
        raise ValueError("need at least 2 replicates")
    N_list = [int(N) for N in N_list]
    if trajectory:
        N_list = N_list[:1]
    batch = pde_batch(spec, replicates)
    params = RateParams.assumption1(spec.s, spec.a, spec.data_model)
    K = len(N_list)
    if gamma is None:
        gamma = spec.gamma
    if gamma is None and spec.noise_level is not None and (
            spec.data_model == DM1 or trajectory):
        gamma = problem.noise_std_for_level(batch.signal_norm[0], spec.noise_level,
                                            spec.coarse_basis.n_modes)
    if gamma is None:
        gammas = [N ** (-(spec.a + spec.s + 1) / (2 * (spec.a + 1))) for N in N_list]
    else:
        gammas = [float(gamma)] * K
    schedules = None
    if kind == VARIANT:
        sched = AlphaSchedule.geometric(spec.alpha, spec.q)
        schedules = [sched] * K
        alphas = [sched.alpha] * K
    elif spec.alpha_rule == "fixed":
        alphas = [spec.alpha] * K
    else:
        alphas = [select_alpha(params, N, kind) for N in N_list]
    unit = pde_noise(spec, replicates)
    cache = {}

    def noise(n, k):
        idx = 0 if spec.data_model == DM2 else n
        if idx not in cache:
            cache.clear()
            cache[idx] = unit(idx)
        return cache[idx]

    # the filter sees gamma_k; a zero gamma runs as a near-noiseless Kalman filter
    filt_gammas = [g if g > 0 else 1e-12 for g in gammas]
    parts = simulate(kind, batch.prior, batch.forward, batch.truth, batch.clean, noise,
                     alphas, filt_gammas, N_list, schedules=schedules,
                     trajectory=trajectory, data_scale=gammas)
    if trajectory:
        return records_from_trajectory(parts[0])
    return [DecompositionRecord.from_samples(N, *p) for N, p in zip(N_list, parts)]
