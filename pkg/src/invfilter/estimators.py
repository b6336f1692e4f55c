"""scikit-learn style wrappers around the filters.

The estimators consume a sequence of observations (one row per step, in
coefficient space) and keep the running filter state, so ``partial_fit``
continues an iteration exactly where ``fit`` stopped.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_finite_state, check_observations, check_spectrum
from .filters import KALMAN, THREEDVAR, VARIANT, AlphaSchedule, initial_state, step


class _FilterInversion(BaseEstimator):
    _kind = None

    def __init__(self, forward, prior, alpha=1.0, gamma=1.0, mean0=None, store_path=False):
        self.forward = forward
        self.prior = prior
        self.alpha = alpha
        self.gamma = gamma
        self.mean0 = mean0
        self.store_path = store_path

    def _schedule(self):
        return None

    def _start(self):
        kappa = check_spectrum(self.forward, "forward")
        lam = check_spectrum(self.prior, "prior")
        if kappa.shape != lam.shape:
            raise ValueError("forward and prior spectra differ in length")
        self.kappa_ = kappa
        self.state_ = initial_state(self._kind, lam, self.alpha, self.gamma,
                                    mean0=self.mean0, schedule=self._schedule())
        self.path_ = [] if self.store_path else None

    def _advance(self, Y):
        for y in Y:
            self.state_ = step(self.state_, y, self.kappa_)
            check_finite_state(self.state_.mean, self.state_.cov_spectrum,
                               f"step {self.state_.step}")
            if self.store_path:
                self.path_.append(self.state_.mean.copy())
        self.n_iter_ = self.state_.step
        return self

    def fit(self, Y, y=None):
        """Run one filter step per row of ``Y`` from the initial state."""
        self._start()
        return self._advance(check_observations(Y, self.kappa_.size))

    def partial_fit(self, Y, y=None):
        """Continue the iteration with further observations."""
        if not hasattr(self, "state_"):
            self._start()
        return self._advance(check_observations(Y, self.kappa_.size))

    @property
    def mean_(self):
        check_is_fitted(self, "state_")
        return self.state_.mean

    @property
    def cov_spectrum_(self):
        check_is_fitted(self, "state_")
        return self.state_.cov_spectrum

    def predict(self, X=None):
        """Predicted clean data ``A m_n``."""
        check_is_fitted(self, "state_")
        return self.kappa_ * self.state_.mean

    def score(self, u_true, y=None):
        """Negative squared error of the current mean against ``u_true``."""
        check_is_fitted(self, "state_")
        return -float(np.sum((self.state_.mean - np.asarray(u_true, float)) ** 2))


class KalmanInversion(_FilterInversion):
    """Kalman filter on the static model ``u_{n+1} = u_n``; covariance is updated."""

    _kind = KALMAN


class ThreeDVarInversion(_FilterInversion):
    """3DVAR with the fixed covariance ``(gamma^2/alpha) Sigma_0``."""

    _kind = THREEDVAR


class VariantThreeDVarInversion(_FilterInversion):
    """3DVAR with ``alpha_n = alpha q^{n-1}``; ``q = 1`` keeps ``alpha`` fixed."""

    _kind = VARIANT

    def __init__(self, forward, prior, alpha=1.0, gamma=1.0, q=0.5, mean0=None,
                 store_path=False):
        super().__init__(forward, prior, alpha, gamma, mean0, store_path)
        self.q = q

    def _schedule(self):
        if self.q == 1:
            return AlphaSchedule.constant(self.alpha)
        return AlphaSchedule.geometric(self.alpha, self.q)
