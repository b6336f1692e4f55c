"""Experiment setup: truth sampling, synthetic data and noise calibration.

Data are always produced on a grid twice as fine as the inversion grid and
brought down with spline interpolation, so the forward map used to make the
data never coincides with the one used to invert it.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, fields
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline

from ._validation import check_positive
from .spectral import (
    NODAL,
    SPECTRAL,
    Basis2D,
    GridField,
    apply,
    build_neumann_laplacian_inverse,
    build_shifted_laplacian,
    operator_power,
    transform_to_nodal,
    transform_to_spectral,
)

DM1 = "DM1"
DM2 = "DM2"
DATA_MODELS = (DM1, DM2)
ALPHA_RULES = ("rate_tuned", "fixed", "variant_geometric")

TRUTH_SHIFT = 0.1

# spawn-key tags that keep the truth and noise streams independent
_TRUTH_STREAM = 0
_NOISE_STREAM = 1


def stream_rng(seed, *key):
    """Generator that depends only on ``seed`` and the integer ``key``."""
    return np.random.default_rng(
        np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


@dataclass(frozen=True)
class ProblemSpec:
    """Complete description of one synthetic inverse-problem experiment.

    ``domain_length`` is the side of the square domain; ``None`` measures it
    in coarse cells (``domain_length == coarse_n``). Exactly one of ``gamma``
    (noise std) and ``noise_level`` (noise norm relative to ``||A u||``) is set.
    """

    coarse_n: int = 60
    fine_n: int = 120
    s: float = 1.0
    a: float = 1.0
    data_model: str = DM2
    gamma: float | None = None
    noise_level: float | None = 0.05
    n_iter: int | None = None
    alpha_rule: str = "rate_tuned"
    alpha: float | None = None
    q: float | None = None
    seed: int = 0
    domain_length: float | None = None

    def __post_init__(self):
        if self.coarse_n < 2 or self.fine_n <= self.coarse_n:
            raise ValueError(
                f"need 2 <= coarse_n < fine_n, got {self.coarse_n}, {self.fine_n}")
        check_positive(self.s, "s")
        check_positive(self.a, "a")
        if self.data_model not in DATA_MODELS:
            raise ValueError(f"data_model must be one of {DATA_MODELS}")
        if (self.gamma is None) == (self.noise_level is None):
            raise ValueError("set exactly one of gamma and noise_level")
        if self.gamma is not None:
            check_positive(self.gamma, "gamma", allow_zero=True)
        if self.noise_level is not None and not 0 <= self.noise_level < 1:
            raise ValueError(f"noise_level must lie in [0, 1), got {self.noise_level}")
        if self.n_iter is not None and self.n_iter < 1:
            raise ValueError(f"n_iter must be >= 1, got {self.n_iter}")
        if self.alpha_rule not in ALPHA_RULES:
            raise ValueError(f"alpha_rule must be one of {ALPHA_RULES}")
        if self.alpha_rule in ("fixed", "variant_geometric"):
            if self.alpha is None:
                raise ValueError(f"alpha_rule {self.alpha_rule!r} needs alpha")
            check_positive(self.alpha, "alpha")
        if self.alpha_rule == "variant_geometric":
            if self.q is None or not 0 < self.q < 1:
                raise ValueError(f"geometric schedule needs 0 < q < 1, got q={self.q}")
        if self.domain_length is not None:
            check_positive(self.domain_length, "domain_length")

    @property
    def length(self):
        return float(self.coarse_n if self.domain_length is None else self.domain_length)

    @property
    def coarse_basis(self):
        return Basis2D(self.coarse_n, self.length)

    @property
    def fine_basis(self):
        return Basis2D(self.fine_n, self.length)

    def warnings(self):
        out = []
        if self.s > self.a + 2:
            out.append(f"s={self.s} exceeds a+2={self.a + 2}: source condition "
                       "outside the range covered by the rate theory")
        return out

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def forward_operator(basis):
    """``A = (-Laplacian)^{-1}``."""
    return build_neumann_laplacian_inverse(basis)


def prior_covariance(basis):
    """``Sigma_0 = A^2`` (link condition with ``a = 1`` and ``C = 1``)."""
    return operator_power(forward_operator(basis), 2.0)


def truth_covariance(basis, s):
    """``(-Laplacian + 0.1 I)^{-(2s+1)}``."""
    return operator_power(build_shifted_laplacian(basis, TRUTH_SHIFT), -(2 * s + 1))


@dataclass(frozen=True, eq=False)
class TruthSample:
    fine_field: GridField
    coarse_projection: GridField


def sample_truth(spec, replicate=0):
    """Draw ``u ~ N(0, Sigma)`` on the fine grid by Karhunen-Loeve expansion.

    ``replicate`` may be an int or a sequence of ints; each replicate has its
    own random stream, so batching never changes the samples.
    """
    fine = spec.fine_basis
    reps = np.atleast_1d(np.asarray(replicate, dtype=int))
    std = np.sqrt(truth_covariance(fine, spec.s).eigenvalues)
    xi = np.stack([stream_rng(spec.seed, _TRUTH_STREAM, r).standard_normal(fine.n_modes)
                   for r in reps])
    coeffs = xi * std
    if np.ndim(replicate) == 0:
        coeffs = coeffs[0]
    fine_field = GridField(fine, coeffs, SPECTRAL)
    coarse = restrict_to_coarse(transform_to_nodal(fine_field), spec.coarse_basis)
    return TruthSample(fine_field, transform_to_spectral(coarse))


@lru_cache(maxsize=32)
def _restriction_matrix(fine_n, coarse_n, length, pad=8):
    """1D natural-spline interpolation from fine to coarse cell centres.

    The fine samples are first extended by even reflection across the
    boundary, which matches the Neumann condition of the basis.
    """
    h = length / fine_n
    pad = min(pad, fine_n)
    pos = np.arange(-pad, fine_n + pad)
    src = np.where(pos < 0, -1 - pos, np.where(pos >= fine_n, 2 * fine_n - 1 - pos, pos))
    extension = np.eye(fine_n)[src]
    spline = CubicSpline((pos + 0.5) * h, extension, bc_type="natural", axis=0)
    R = spline((np.arange(coarse_n) + 0.5) * length / coarse_n)
    R.setflags(write=False)
    return R


def restrict_to_coarse(x, coarse_basis=None):
    """Spline-interpolate a fine-grid field to a grid of half the resolution."""
    fine = x.basis
    if coarse_basis is None:
        if fine.grid_size % 2:
            raise ValueError(f"fine grid size {fine.grid_size} is not even")
        coarse_basis = Basis2D(fine.grid_size // 2, fine.length)
    if fine.grid_size != 2 * coarse_basis.grid_size:
        raise ValueError(
            f"fine grid {fine.grid_size} must be twice the coarse grid "
            f"{coarse_basis.grid_size}")
    if not np.isclose(fine.length, coarse_basis.length):
        raise ValueError("fine and coarse grids cover different domains")
    R = _restriction_matrix(fine.grid_size, coarse_basis.grid_size, fine.length)
    values = R @ transform_to_nodal(x).data @ R.T
    values = values - values.mean(axis=(-2, -1), keepdims=True)
    return GridField(coarse_basis, values, NODAL)


def noise_std_for_level(signal_norm, rho, dim):
    """Per-component std giving ``E||eta|| ~ rho * signal_norm`` in ``dim`` dims."""
    return float(rho) * float(signal_norm) / np.sqrt(dim)


def calibrate_gamma(truth, A, rho):
    """Noise std for a relative noise level ``rho`` of the clean data ``A u``."""
    if not 0 <= rho < 1:
        raise ValueError(f"relative noise level must lie in [0, 1), got {rho}")
    signal = float(np.linalg.norm(apply(A, truth.fine_field).data))
    if signal == 0.0:
        raise ValueError("cannot calibrate noise against a zero truth")
    return noise_std_for_level(signal, rho, truth.coarse_projection.basis.n_modes)


def restricted_noise(fine_basis, coarse_basis, gamma, seed, replicate, indices):
    """Coarse coefficients of restricted fine-grid white noise, one row per index.

    Every fine-grid node receives independent ``N(0, gamma^2)`` noise drawn from
    the stream keyed by ``(seed, replicate, index)``.
    """
    n = fine_basis.grid_size
    indices = np.atleast_1d(indices)
    eta = np.empty((len(indices), n, n))
    for row, idx in enumerate(indices):
        eta[row] = stream_rng(seed, _NOISE_STREAM, replicate, idx).standard_normal((n, n))
    eta *= gamma
    coarse = restrict_to_coarse(GridField(fine_basis, eta, NODAL), coarse_basis)
    return transform_to_spectral(coarse).data


@dataclass(frozen=True, eq=False)
class DataStream:
    """Observations ``y_n`` on the inversion grid, as coarse coefficients.

    DM1 draws fresh noise for every index ``n``; DM2 reuses one draw forever.
    """

    model: str
    gamma: float
    clean: np.ndarray
    fine_basis: Basis2D
    coarse_basis: Basis2D
    seed: int = 0
    replicate: int = 0
    _fixed: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.model == DM2 and self._fixed is None:
            noise = restricted_noise(self.fine_basis, self.coarse_basis, self.gamma,
                                     self.seed, self.replicate, [0])[0]
            object.__setattr__(self, "_fixed", self.clean + noise)

    def coefficients(self, n):
        if n < 1:
            raise IndexError(f"observations are indexed from 1, got {n}")
        if self.model == DM2:
            return self._fixed.copy()
        return self.block(n, n + 1)[0]

    def block(self, start, stop):
        """Observations ``start, ..., stop - 1`` stacked as rows."""
        idx = np.arange(start, stop)
        if self.model == DM2:
            return np.tile(self._fixed, (len(idx), 1))
        noise = restricted_noise(self.fine_basis, self.coarse_basis, self.gamma,
                                 self.seed, self.replicate, idx)
        return self.clean + noise

    def observation(self, n):
        return GridField(self.coarse_basis, self.coefficients(n), SPECTRAL)


def generate_data(spec, truth, A, gamma, replicate=0):
    """Build the data stream for ``truth``.

    ``A u`` is evaluated with the fine-grid operator ``A``, noise is added per
    fine-grid node and the sum is restricted to the inversion grid.
    """
    gamma = check_positive(gamma, "gamma", allow_zero=True)
    if A.basis != truth.fine_field.basis:
        raise ValueError("A must act on the fine (data-generation) grid")
    clean_fine = transform_to_nodal(apply(A, truth.fine_field))
    clean = transform_to_spectral(restrict_to_coarse(clean_fine, spec.coarse_basis)).data
    return DataStream(spec.data_model, gamma, clean, spec.fine_basis,
                      spec.coarse_basis, spec.seed, replicate)


def average_observations(stream, n):
    """Running average of ``y_1..y_n`` and its predicted noise-std scale ``1/sqrt(n)``."""
    if stream.model != DM1:
        raise ValueError("observation averaging needs a DM1 (repeated data) stream")
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    ybar = stream.block(1, n + 1).mean(axis=0)
    return GridField(stream.coarse_basis, ybar, SPECTRAL), 1.0 / np.sqrt(n)


def warn_spec(spec):
    for msg in spec.warnings():
        warnings.warn(msg, stacklevel=2)
