"""Operator calculus on the two-dimensional Neumann cosine basis.

Every operator used by the filters (the forward map, prior and truth
covariances) is diagonal in the cosine eigenbasis of the Neumann Laplacian on
``[0, L]^2``. Fields are stored either as nodal values on the ``n x n``
cell-centred grid or as coefficients on the modes ``(j, k) != (0, 0)``.

Coefficients are taken against the L2-normalised eigenfunctions, so the
coefficient l2 norm equals the midpoint-rule L2 norm of the nodal values and a
given mode has the same coefficient on every grid that resolves it.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import fft

from ._validation import check_positive

NODAL = "nodal"
SPECTRAL = "spectral"


@dataclass(frozen=True)
class Basis2D:
    """Cosine modes ``cos(j pi x / L) cos(k pi y / L)`` on an ``n x n`` grid.

    Mode ``(0, 0)`` is excluded (mean-zero constraint), so there are
    ``n**2 - 1`` modes, flattened row-major over ``(j, k)``.
    """

    grid_size: int
    length: float = 1.0

    def __post_init__(self):
        if isinstance(self.grid_size, bool) or int(self.grid_size) != self.grid_size:
            raise TypeError(f"grid_size must be an integer, got {self.grid_size!r}")
        if self.grid_size < 2:
            raise ValueError(f"grid_size must be >= 2, got {self.grid_size}")
        object.__setattr__(self, "grid_size", int(self.grid_size))
        object.__setattr__(self, "length", check_positive(self.length, "length"))

    @property
    def n_modes(self):
        return self.grid_size ** 2 - 1

    @property
    def cell_width(self):
        return self.length / self.grid_size

    @cached_property
    def modes(self):
        """``(j, k)`` index arrays of shape ``(n_modes,)``."""
        j, k = np.meshgrid(np.arange(self.grid_size), np.arange(self.grid_size),
                           indexing="ij")
        return j.ravel()[1:], k.ravel()[1:]

    @cached_property
    def laplacian_eigenvalues(self):
        """Continuum eigenvalues ``pi^2 (j^2 + k^2) / L^2`` of ``-Laplacian``."""
        j, k = self.modes
        out = np.pi ** 2 * (j ** 2 + k ** 2) / self.length ** 2
        out.setflags(write=False)
        return out

    @cached_property
    def nodes(self):
        """1D cell-centre coordinates; the grid is their tensor product."""
        return (np.arange(self.grid_size) + 0.5) * self.cell_width

    def mode_index(self, j, k):
        """Position of mode ``(j, k)`` in the flattened coefficient vector."""
        if not (0 <= j < self.grid_size and 0 <= k < self.grid_size):
            raise IndexError(f"mode ({j}, {k}) outside a {self.grid_size}-grid")
        if j == 0 and k == 0:
            raise IndexError("mode (0, 0) is excluded from the basis")
        return j * self.grid_size + k - 1


@dataclass(frozen=True, eq=False)
class GridField:
    """A real field on a :class:`Basis2D` grid, nodal or spectral.

    ``data`` may carry leading batch axes: nodal data has shape
    ``(..., n, n)``, spectral data ``(..., n_modes)``.
    """

    basis: Basis2D
    data: np.ndarray
    representation: str = NODAL

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        n = self.basis.grid_size
        if self.representation == NODAL:
            if data.shape[-2:] != (n, n):
                raise ValueError(f"nodal data must end in ({n}, {n}), got {data.shape}")
        elif self.representation == SPECTRAL:
            if data.ndim < 1 or data.shape[-1] != self.basis.n_modes:
                raise ValueError(
                    f"spectral data must end in {self.basis.n_modes} modes, got {data.shape}")
        else:
            raise ValueError(f"unknown representation {self.representation!r}")
        object.__setattr__(self, "data", data)

    @classmethod
    def from_function(cls, basis, func):
        """Sample ``func(x, y)`` at the cell centres."""
        x, y = np.meshgrid(basis.nodes, basis.nodes, indexing="ij")
        return cls(basis, np.asarray(func(x, y), dtype=float), NODAL)

    @classmethod
    def from_coefficients(cls, basis, coefficients):
        return cls(basis, coefficients, SPECTRAL)

    @property
    def coefficients(self):
        return transform_to_spectral(self).data

    @property
    def values(self):
        return transform_to_nodal(self).data

    def to_spectral(self):
        return transform_to_spectral(self)

    def to_nodal(self):
        return transform_to_nodal(self)

    def norm(self):
        """L2 norm over the domain (per batch entry)."""
        return np.linalg.norm(self.coefficients, axis=-1)

    def _like(self, data):
        return GridField(self.basis, data, self.representation)

    def __add__(self, other):
        _check_same_basis(self.basis, other.basis)
        if other.representation != self.representation:
            other = (transform_to_nodal(other) if self.representation == NODAL
                     else transform_to_spectral(other))
        return self._like(self.data + other.data)

    def __sub__(self, other):
        return self + (-1.0) * other

    def __mul__(self, scalar):
        return self._like(float(scalar) * self.data)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class SpectralOperator:
    """Self-adjoint operator stored by its eigenvalue on each basis mode."""

    basis: Basis2D
    eigenvalues: np.ndarray

    def __post_init__(self):
        ev = np.array(self.eigenvalues, dtype=float)
        if ev.shape != (self.basis.n_modes,):
            raise ValueError(
                f"expected {self.basis.n_modes} eigenvalues, got shape {ev.shape}")
        ev.setflags(write=False)
        object.__setattr__(self, "eigenvalues", ev)

    def trace(self):
        return float(self.eigenvalues.sum())

    def __call__(self, x):
        return apply(self, x)

    def __matmul__(self, other):
        if isinstance(other, SpectralOperator):
            _check_same_basis(self.basis, other.basis)
            return SpectralOperator(self.basis, self.eigenvalues * other.eigenvalues)
        return apply(self, other)


def _check_same_basis(a, b):
    if a != b:
        raise ValueError(f"basis mismatch: {a} vs {b}")


def transform_to_spectral(x):
    """Nodal values -> coefficients; the mean (mode (0, 0)) is dropped."""
    if x.representation == SPECTRAL:
        return x
    basis = x.basis
    full = fft.dctn(x.data, type=2, norm="ortho", axes=(-2, -1)) * basis.cell_width
    flat = full.reshape(full.shape[:-2] + (basis.grid_size ** 2,))
    return GridField(basis, flat[..., 1:], SPECTRAL)


def transform_to_nodal(x):
    """Coefficients -> nodal values; the mean is restored as zero."""
    if x.representation == NODAL:
        return x
    basis = x.basis
    n = basis.grid_size
    flat = np.zeros(x.data.shape[:-1] + (n * n,))
    flat[..., 1:] = x.data
    full = flat.reshape(x.data.shape[:-1] + (n, n))
    values = fft.idctn(full, type=2, norm="ortho", axes=(-2, -1)) / basis.cell_width
    return GridField(basis, values, NODAL)


def identity(basis):
    return SpectralOperator(basis, np.ones(basis.n_modes))


def build_neumann_laplacian_inverse(basis):
    """``A = (-Laplacian)^{-1}`` with eigenvalue ``L^2 / (pi^2 (j^2 + k^2))``."""
    return SpectralOperator(basis, 1.0 / basis.laplacian_eigenvalues)


def build_shifted_laplacian(basis, shift):
    """``-Laplacian + shift * I`` on the mean-zero subspace."""
    return SpectralOperator(basis, basis.laplacian_eigenvalues + shift)


def operator_power(op, exponent):
    """Raise every eigenvalue of ``op`` to ``exponent``."""
    exponent = float(exponent)
    ev = op.eigenvalues
    if exponent == 0.0:
        return identity(op.basis)
    if np.any(ev <= 0) and (exponent < 0 or not exponent.is_integer()):
        raise ValueError(
            "negative or fractional power of an operator with nonpositive eigenvalues")
    return SpectralOperator(op.basis, ev ** exponent)


def apply(op, x):
    """Apply a diagonal operator to a field, preserving its representation."""
    _check_same_basis(op.basis, x.basis)
    coeffs = transform_to_spectral(x).data * op.eigenvalues
    out = GridField(op.basis, coeffs, SPECTRAL)
    return out if x.representation == SPECTRAL else transform_to_nodal(out)


def link_condition_check(A, prior, a):
    """Extreme per-mode ratios ``kappa / lambda^{a/2}``.

    They are the tightest constants with
    ``C_lower ||prior^{a/2} x|| <= ||A x|| <= C_upper ||prior^{a/2} x||``.
    """
    _check_same_basis(A.basis, prior.basis)
    ratio = A.eigenvalues / prior.eigenvalues ** (a / 2.0)
    return float(ratio.min()), float(ratio.max())
