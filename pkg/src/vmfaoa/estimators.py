"""Scikit-learn style wrappers around the measurement models and filters.

These give the fit/predict/get_params surface so the models can be tuned or
composed with the wider ecosystem; the functional API in the other modules
does the actual work.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .directional import to_angles, wrap_angle
from .filters import FilterConfig, GaussianBelief, StateSpaceModel, run_filter
from .sensors import AeNoiseParams, Anchor, Measurements, build_adaptive_table, fit_ae_ml


def _split_angles(X, n_anchors: int | None = None):
    """Accept ``(N, 2)`` / ``(N, 2 n_s)`` interleaved or ``(N, n_s, 2)`` angle arrays."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 3:
        if X.shape[-1] != 2:
            raise ValueError("3-D angle arrays must have a trailing dimension of 2")
        az, el = X[..., 0], X[..., 1]
    else:
        X = check_array(X, ensure_min_samples=0)
        if X.shape[1] % 2:
            raise ValueError("angle arrays need interleaved (azimuth, elevation) columns")
        az, el = X[:, 0::2], X[:, 1::2]
    if n_anchors is not None and az.shape[-1] != n_anchors:
        raise ValueError(f"expected angles for {n_anchors} anchors, got {az.shape[-1]}")
    if not (np.all(np.isfinite(az)) and np.all(np.isfinite(el))):
        raise ValueError("angles must be finite")
    return az, el


class AeNoiseModel(BaseEstimator):
    """Maximum-likelihood azimuth/elevation normal noise model.

    Parameters
    ----------
    floor : float
        Lower bound on the fitted standard deviations (rad).

    Attributes
    ----------
    sigma_azi_, sigma_ele_ : float
        Fitted standard deviations (rad).
    """

    def __init__(self, floor=1e-9):
        self.floor = floor

    def fit(self, X, y):
        """Fit from true directions ``X`` (N, 3) and measured angles ``y`` (N, 2)."""
        X = check_array(X)
        if X.shape[1] != 3:
            raise ValueError("X must hold 3-D directions")
        az, el = _split_angles(y, 1)
        self.params_ = fit_ae_ml(X, az[:, 0], el[:, 0], floor=self.floor)
        self.sigma_azi_ = self.params_.sigma_azi
        self.sigma_ele_ = self.params_.sigma_ele
        self.n_features_in_ = 3
        return self

    def score(self, X, y):
        """Mean Gaussian log-likelihood of the residuals (azimuth wrapped)."""
        check_is_fitted(self, "params_")
        X = check_array(X)
        az, el = _split_angles(y, 1)
        ta, te = to_angles(X / np.linalg.norm(X, axis=1, keepdims=True))
        ra = wrap_angle(az[:, 0] - ta) / self.sigma_azi_
        re = (el[:, 0] - te) / self.sigma_ele_
        ll = -0.5 * (ra**2 + re**2) - np.log(2 * np.pi * self.sigma_azi_ * self.sigma_ele_)
        return float(np.mean(ll))


class AdaptiveStdModel(BaseEstimator):
    """Elevation-dependent standard deviations of the folded normal model.

    ``fit`` runs the Monte Carlo tabulation; ``predict`` maps elevations (rad)
    to ``(sigma_azi, sigma_ele)`` rows.
    """

    def __init__(self, sigma_azi=np.deg2rad(10.0), sigma_ele=np.deg2rad(10.0), grid_step_deg=1.0,
                 n_mc=100_000, random_state=None):
        self.sigma_azi = sigma_azi
        self.sigma_ele = sigma_ele
        self.grid_step_deg = grid_step_deg
        self.n_mc = n_mc
        self.random_state = random_state

    def fit(self, X=None, y=None):
        base = AeNoiseParams(self.sigma_azi, self.sigma_ele)
        self.table_ = build_adaptive_table(base, self.grid_step_deg, self.n_mc, self.random_state)
        return self

    def predict(self, X):
        check_is_fitted(self, "table_")
        el = np.asarray(X, dtype=float).ravel()
        sa, se = self.table_.sigmas(el)
        return np.column_stack([sa, se])


class AoaPositioningFilter(BaseEstimator):
    """Bayesian position filter driven by per-epoch AOA measurements.

    Parameters
    ----------
    variant : str
        One of :data:`vmfaoa.filters.VARIANTS`.
    anchors : list of Anchor
    kappa : float, optional
        Concentration for ``*-vmf`` variants.
    noise : AeNoiseParams or AdaptiveStdTable, optional
        Noise model for ``*-ae`` and ``*-ae-adaptive`` variants.
    transition, process_noise : ndarray, optional
        Random walk with zero process noise when omitted.
    prior_mean, prior_cov : ndarray
        Gaussian prior of the initial state.

    ``predict`` takes measurements of shape ``(K, 2 n_s)`` with interleaved
    azimuth/elevation columns (or ``(K, n_s, 2)``) and returns ``(K, n_x)``
    state estimates.
    """

    def __init__(self, variant="pf-vmf", anchors=None, kappa=None, noise=None, transition=None,
                 process_noise=None, position_indices=(0, 1, 2), prior_mean=None, prior_cov=None,
                 n_particles=2000, ukf_lambda=0.5, resample_fraction=0.1, random_state=None):
        self.variant = variant
        self.anchors = anchors
        self.kappa = kappa
        self.noise = noise
        self.transition = transition
        self.process_noise = process_noise
        self.position_indices = position_indices
        self.prior_mean = prior_mean
        self.prior_cov = prior_cov
        self.n_particles = n_particles
        self.ukf_lambda = ukf_lambda
        self.resample_fraction = resample_fraction
        self.random_state = random_state

    def fit(self, X=None, y=None):
        """Validate the configuration; there is nothing to learn from data."""
        if not self.anchors:
            raise ValueError("at least one anchor is required")
        self.anchors_ = [a if isinstance(a, Anchor) else Anchor.from_dict(a) for a in self.anchors]
        if self.prior_mean is None or self.prior_cov is None:
            raise ValueError("prior_mean and prior_cov are required")
        self.prior_ = GaussianBelief(self.prior_mean, self.prior_cov)
        n_x = self.prior_.mean.size
        A = np.eye(n_x) if self.transition is None else self.transition
        Q = np.zeros((n_x, n_x)) if self.process_noise is None else self.process_noise
        self.model_ = StateSpaceModel(A, Q, self.position_indices)
        self.config_ = FilterConfig(self.variant, kappa=self.kappa, noise=self.noise, n_particles=self.n_particles,
                                    ukf_lambda=self.ukf_lambda, resample_fraction=self.resample_fraction)
        self.n_anchors_ = len(self.anchors_)
        return self

    def predict(self, X):
        check_is_fitted(self, "config_")
        az, el = _split_angles(X, self.n_anchors_)
        return run_filter(self.config_, self.model_, self.prior_, Measurements(az, el), self.anchors_,
                          self.random_state)
