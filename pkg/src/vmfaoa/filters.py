"""Particle, extended Kalman and unscented Kalman filters for AOA positioning.

Two measurement models are supported. The VMF model compares measured
anchor-frame unit vectors with predicted directions (the EKF/UKF treat the
unit vector as Gaussian with covariance ``I / kappa``). The AE model treats
azimuth and elevation as independent normals, optionally with
elevation-dependent standard deviations from an :class:`AdaptiveStdTable`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from ._validation import (
    DegenerateWeightsError,
    FilterError,
    NumericalFailureError,
    check_finite,
    check_positive,
)
from .directional import circular_mean, to_angles, to_unit_vector, wrap_angle
from .sensors import (
    AdaptiveStdTable,
    AeNoiseParams,
    Anchor,
    Measurements,
    _ae_jacobian_rows,
    measurement_function_and_jacobian,
)

VARIANTS = (
    "pf-vmf", "pf-ae", "pf-ae-adaptive",
    "ekf-vmf", "ekf-ae", "ekf-ae-adaptive",
    "ukf-vmf", "ukf-ae", "ukf-ae-adaptive",
)
HORIZONTAL_TOL = 1e-9
_TINY = 1e-300


@dataclass(frozen=True)
class StateSpaceModel:
    """Linear-Gaussian transition ``x_k = A x_{k-1} + w``, ``w ~ N(0, Q)``.

    ``transition`` and ``process_noise`` are either a single matrix or a
    stack of per-step matrices indexed by ``k - 1``.
    """

    transition: np.ndarray
    process_noise: np.ndarray
    position_indices: tuple = (0, 1, 2)

    def __post_init__(self):
        A = check_finite(self.transition, "transition")
        Q = check_finite(self.process_noise, "process_noise")
        if A.shape != Q.shape or A.shape[-1] != A.shape[-2]:
            raise ValueError("transition and process_noise must be square with equal shapes")
        if not np.allclose(Q, np.swapaxes(Q, -1, -2), atol=1e-12):
            raise ValueError("process_noise must be symmetric")
        if np.min(np.linalg.eigvalsh(Q)) < -1e-12:
            raise ValueError("process_noise must be positive semidefinite")
        idx = tuple(int(i) for i in self.position_indices)
        if len(idx) != 3 or len(set(idx)) != 3 or min(idx) < 0 or max(idx) >= A.shape[-1]:
            raise ValueError("position_indices must be 3 distinct in-range indices")
        object.__setattr__(self, "transition", A)
        object.__setattr__(self, "process_noise", Q)
        object.__setattr__(self, "position_indices", idx)

    @property
    def n_x(self) -> int:
        return self.transition.shape[-1]

    def at(self, k: int):
        """Matrices used to propagate from epoch ``k - 1`` to ``k`` (``k >= 1``)."""
        A, Q = self.transition, self.process_noise
        if A.ndim == 3:
            return A[k - 1], Q[k - 1]
        return A, Q


@dataclass(frozen=True)
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        m = check_finite(self.mean, "mean").ravel()
        P = check_finite(self.cov, "cov")
        if P.shape != (m.size, m.size):
            raise ValueError("covariance shape does not match the mean")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov", P)


@dataclass(frozen=True)
class ParticleSet:
    states: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.states, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if x.ndim != 2 or w.shape != (x.shape[0],) or x.shape[0] < 1:
            raise ValueError("states must be (N, n_x) with N >= 1 weights")
        object.__setattr__(self, "states", x)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_gaussian(cls, belief: GaussianBelief, n_particles: int, random_state=None) -> "ParticleSet":
        rng = np.random.default_rng(random_state)
        states = rng.multivariate_normal(belief.mean, belief.cov, size=int(n_particles), method="cholesky")
        return cls(states, np.full(int(n_particles), 1.0 / n_particles))

    @property
    def n_particles(self) -> int:
        return self.weights.size

    def mean(self) -> np.ndarray:
        return self.weights @ self.states


@dataclass(frozen=True)
class FilterConfig:
    """Filter variant plus the measurement-model parameters it needs.

    ``noise`` is an :class:`AeNoiseParams` for ``*-ae`` variants and an
    :class:`AdaptiveStdTable` for ``*-ae-adaptive``; ``kappa`` is used by
    ``*-vmf`` variants.
    """

    variant: str
    kappa: float | None = None
    noise: AeNoiseParams | AdaptiveStdTable | None = None
    n_particles: int = 2000
    ukf_lambda: float = 0.5
    resample_fraction: float = 0.1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {', '.join(VARIANTS)}")
        if self.family == "vmf":
            if self.kappa is None:
                raise ValueError(f"{self.variant} requires kappa")
            check_positive(self.kappa, "kappa", allow_zero=True)
        elif self.family == "ae-adaptive":
            if not isinstance(self.noise, AdaptiveStdTable):
                raise ValueError(f"{self.variant} requires an AdaptiveStdTable")
        elif not isinstance(self.noise, AeNoiseParams):
            raise ValueError(f"{self.variant} requires AeNoiseParams")
        if self.kind == "pf" and self.n_particles < 10:
            raise ValueError("particle filters need at least 10 particles")
        if not 0.0 <= self.resample_fraction <= 1.0:
            raise ValueError("resample_fraction must lie in [0, 1]")

    @property
    def kind(self) -> str:
        return self.variant.split("-", 1)[0]

    @property
    def family(self) -> str:
        return self.variant.split("-", 1)[1]


# ---------------------------------------------------------------- time update


def predict(state, transition, process_noise, random_state=None):
    """Propagate a Gaussian belief or a particle set through the linear model."""
    A = check_finite(transition, "transition")
    Q = check_finite(process_noise, "process_noise")
    if isinstance(state, GaussianBelief):
        n = state.mean.size
        if A.shape != (n, n) or Q.shape != (n, n):
            raise ValueError("model matrices do not match the state dimension")
        return GaussianBelief(A @ state.mean, _symmetrize(A @ state.cov @ A.T + Q))
    if isinstance(state, ParticleSet):
        n = state.states.shape[1]
        if A.shape != (n, n) or Q.shape != (n, n):
            raise ValueError("model matrices do not match the state dimension")
        rng = np.random.default_rng(random_state)
        states = state.states @ A.T
        if np.any(Q):
            # eigh tolerates singular Q (e.g. no noise on some components)
            w, V = np.linalg.eigh(Q)
            L = V * np.sqrt(np.clip(w, 0.0, None))
            states = states + rng.standard_normal(states.shape) @ L.T
        return ParticleSet(states, state.weights)
    raise TypeError("state must be a GaussianBelief or ParticleSet")


# ---------------------------------------------------------------- particles


def effective_sample_size(weights) -> float:
    w = np.asarray(weights, dtype=float)
    return 1.0 / np.sum(w * w)


def resample(particles: ParticleSet, random_state=None) -> ParticleSet:
    """Systematic resampling with a single uniform offset."""
    rng = np.random.default_rng(random_state)
    n = particles.n_particles
    positions = (rng.random() + np.arange(n)) / n
    cdf = np.cumsum(particles.weights)
    cdf[-1] = 1.0
    idx = np.searchsorted(cdf, positions, side="right")
    return ParticleSet(particles.states[idx], np.full(n, 1.0 / n))


def maybe_resample(particles: ParticleSet, fraction: float = 0.1, random_state=None):
    """Resample when ESS < ``fraction * N``; returns ``(particles, resampled)``."""
    if effective_sample_size(particles.weights) < fraction * particles.n_particles:
        return resample(particles, random_state), True
    return particles, False


def _reweight(particles: ParticleSet, loglik: np.ndarray) -> ParticleSet:
    with np.errstate(divide="ignore"):
        logw = np.log(particles.weights) + loglik
    top = np.max(logw)
    if not np.isfinite(top):
        raise DegenerateWeightsError("all particle weights are zero")
    w = np.exp(logw - top)
    total = w.sum()
    if not np.isfinite(total) or total <= 0:
        raise DegenerateWeightsError("particle weights cannot be normalized")
    return ParticleSet(particles.states, w / total)


def _particle_offsets(states: np.ndarray, pos_idx, anchor: Anchor) -> np.ndarray:
    return (states[:, list(pos_idx)] - anchor.position) @ anchor.orientation.T


def _unit(delta: np.ndarray) -> np.ndarray:
    return delta / np.maximum(np.linalg.norm(delta, axis=-1, keepdims=True), _TINY)


def vmf_loglik(states, measurements: Measurements, anchors: Sequence[Anchor], kappa: float,
               position_indices=(0, 1, 2)) -> np.ndarray:
    """Unnormalized VMF log-likelihood ``kappa sum_j u_j^T R_j d_j`` per state row."""
    u = to_unit_vector(measurements.azimuth, measurements.elevation)
    total = np.zeros(states.shape[0])
    for j, anchor in enumerate(anchors):
        total += _unit(_particle_offsets(states, position_indices, anchor)) @ u[j]
    return kappa * total


def ae_loglik(states, measurements: Measurements, anchors: Sequence[Anchor], noise,
              position_indices=(0, 1, 2)) -> np.ndarray:
    """Normal azimuth/elevation log-likelihood per state row (wrapped azimuth residual).

    ``noise`` is an :class:`AeNoiseParams` or :class:`AdaptiveStdTable`; the
    latter is evaluated at each row's predicted elevation.
    """
    total = np.zeros(states.shape[0])
    for j, anchor in enumerate(anchors):
        pa, pe = to_angles(_particle_offsets(states, position_indices, anchor))
        sa, se = noise.sigmas(pe)
        ra = wrap_angle(measurements.azimuth[j] - pa) / sa
        re = (measurements.elevation[j] - pe) / se
        total -= 0.5 * (ra * ra + re * re) + np.log(sa) + np.log(se)
    return total


def pf_update_vmf(particles: ParticleSet, measurements: Measurements, anchors, kappa: float,
                  position_indices=(0, 1, 2), resample_fraction=None, random_state=None) -> ParticleSet:
    """Multiply weights by the VMF likelihood and renormalize.

    Resampling happens only when ``resample_fraction`` is given.
    """
    check_positive(kappa, "kappa", allow_zero=True)
    out = _reweight(particles, vmf_loglik(particles.states, measurements, anchors, kappa, position_indices))
    if resample_fraction is not None:
        out, _ = maybe_resample(out, resample_fraction, random_state)
    return out


def pf_update_ae(particles: ParticleSet, measurements: Measurements, anchors, noise,
                 position_indices=(0, 1, 2), resample_fraction=None, random_state=None) -> ParticleSet:
    """Multiply weights by the azimuth/elevation normal likelihood and renormalize."""
    out = _reweight(particles, ae_loglik(particles.states, measurements, anchors, noise, position_indices))
    if resample_fraction is not None:
        out, _ = maybe_resample(out, resample_fraction, random_state)
    return out


# ---------------------------------------------------------------- Kalman cores


def _symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def _floor_psd(P: np.ndarray) -> np.ndarray:
    P = _symmetrize(P)
    w, V = np.linalg.eigh(P)
    if w.min() < 0:
        P = _symmetrize((V * np.clip(w, 0.0, None)) @ V.T)
    return P


def _solve_spd(S: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Return ``B S^-1`` for symmetric positive definite ``S``."""
    try:
        factor = linalg.cho_factor(S)
    except linalg.LinAlgError as exc:
        raise NumericalFailureError("innovation covariance is not positive definite") from exc
    return linalg.cho_solve(factor, B.T).T


def kalman_update(belief: GaussianBelief, innovation, H, R) -> GaussianBelief:
    """Linearized Kalman measurement update (Joseph form)."""
    P = belief.cov
    H = np.atleast_2d(H)
    S = _symmetrize(H @ P @ H.T + R)
    K = _solve_spd(S, P @ H.T)
    I_KH = np.eye(P.shape[0]) - K @ H
    P_new = I_KH @ P @ I_KH.T + K @ R @ K.T
    return GaussianBelief(belief.mean + K @ innovation, _floor_psd(P_new))


def sigma_points(belief: GaussianBelief, lam: float):
    """``2n + 1`` symmetric sigma points and their weights.

    The centre weight is ``lam / (n + lam)`` and the others ``1 / (2 (n + lam))``.
    """
    n = belief.mean.size
    try:
        L = linalg.cholesky((n + lam) * belief.cov, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalFailureError("covariance is not positive definite") from exc
    X = np.vstack([belief.mean, belief.mean + L.T, belief.mean - L.T])
    w = np.full(2 * n + 1, 1.0 / (2.0 * (n + lam)))
    w[0] = lam / (n + lam)
    return X, w


def unscented_update(belief: GaussianBelief, z, h: Callable, R, lam: float = 0.5,
                     mean_fn: Callable | None = None, residual_fn: Callable | None = None) -> GaussianBelief:
    """Unscented measurement update with additive noise.

    Parameters
    ----------
    h : callable
        Maps an array of sigma points ``(2n+1, n_x)`` to ``(2n+1, n_z)``.
    R : ndarray or callable
        Measurement covariance, or a function of ``(Z, weights)`` returning it.
    mean_fn : callable, optional
        ``mean_fn(Z, weights)``; defaults to the weighted arithmetic mean.
    residual_fn : callable, optional
        ``residual_fn(a, b)`` for ``a - b``; defaults to subtraction.
    """
    X, w = sigma_points(belief, lam)
    Z = np.atleast_2d(h(X))
    z_hat = mean_fn(Z, w) if mean_fn is not None else w @ Z
    dZ = residual_fn(Z, z_hat) if residual_fn is not None else Z - z_hat
    dX = X - belief.mean
    Rm = R(Z, w) if callable(R) else R
    S = _symmetrize((dZ * w[:, None]).T @ dZ + Rm)
    C = (dX * w[:, None]).T @ dZ
    K = _solve_spd(S, C)
    nu = residual_fn(np.asarray(z, float), z_hat) if residual_fn is not None else np.asarray(z, float) - z_hat
    return GaussianBelief(belief.mean + K @ nu, _floor_psd(belief.cov - K @ S @ K.T))


# ---------------------------------------------------------------- VMF Kalman updates


def _stacked_unit_vectors(measurements: Measurements) -> np.ndarray:
    return to_unit_vector(measurements.azimuth, measurements.elevation).ravel()


def ekf_update_vmf(belief: GaussianBelief, measurements: Measurements, anchors, kappa: float,
                   position_indices=(0, 1, 2)) -> GaussianBelief:
    """EKF update treating measured unit vectors as ``N(R_j d_j, I / kappa)``."""
    kappa = check_positive(kappa, "kappa", allow_zero=True)
    if kappa == 0:
        return belief
    z = _stacked_unit_vectors(measurements)
    h, H = measurement_function_and_jacobian(belief.mean, anchors, position_indices)
    return kalman_update(belief, z - h, H, np.eye(z.size) / kappa)


def _direction_function(anchors, position_indices):
    def h(X):
        return np.hstack([_unit(_particle_offsets(X, position_indices, a)) for a in anchors])
    return h


def ukf_update_vmf(belief: GaussianBelief, measurements: Measurements, anchors, kappa: float,
                   lam: float = 0.5, position_indices=(0, 1, 2)) -> GaussianBelief:
    """UKF update for the Gaussian approximation of the VMF unit-vector model."""
    kappa = check_positive(kappa, "kappa", allow_zero=True)
    if kappa == 0:
        return belief
    z = _stacked_unit_vectors(measurements)
    return unscented_update(belief, z, _direction_function(anchors, position_indices),
                            np.eye(z.size) / kappa, lam)


# ---------------------------------------------------------------- AE Kalman updates


def _interleave(az, el) -> np.ndarray:
    out = np.empty(az.shape[:-1] + (2 * az.shape[-1],))
    out[..., 0::2] = az
    out[..., 1::2] = el
    return out


def _ae_residual(a, b):
    d = np.asarray(a, float) - b
    d[..., 0::2] = wrap_angle(d[..., 0::2])
    return d


def _ae_mean(Z, w):
    return _interleave(circular_mean(Z[:, 0::2], w[:, None], axis=0),
                       circular_mean(Z[:, 1::2], w[:, None], axis=0))


def ekf_update_ae(belief: GaussianBelief, measurements: Measurements, anchors, noise,
                  position_indices=(0, 1, 2)) -> GaussianBelief:
    """EKF update for the azimuth/elevation model with wrapped azimuth innovations.

    Anchors whose anchor-frame horizontal range at the mean is below 1e-9
    contribute only their elevation row.
    """
    x = belief.mean
    pos_idx = list(position_indices)
    rows, innov, var = [], [], []
    for j, anchor in enumerate(anchors):
        delta = anchor.orientation @ (x[pos_idx] - anchor.position)
        if np.linalg.norm(delta) < 1e-12:
            raise NumericalFailureError(f"filter mean coincides with anchor {j}")
        pa, pe = to_angles(delta)
        sa, se = noise.sigmas(pe)
        d_az, d_el = _ae_jacobian_rows(delta)
        if np.hypot(delta[0], delta[1]) >= HORIZONTAL_TOL:
            row = np.zeros(x.size)
            row[pos_idx] = d_az @ anchor.orientation
            rows.append(row)
            innov.append(wrap_angle(measurements.azimuth[j] - pa))
            var.append(float(sa) ** 2)
        row = np.zeros(x.size)
        row[pos_idx] = d_el @ anchor.orientation
        rows.append(row)
        innov.append(measurements.elevation[j] - pe)
        var.append(float(se) ** 2)
    return kalman_update(belief, np.asarray(innov, float), np.vstack(rows), np.diag(var))


def ukf_update_ae(belief: GaussianBelief, measurements: Measurements, anchors, noise,
                  lam: float = 0.5, position_indices=(0, 1, 2)) -> GaussianBelief:
    """UKF update for the azimuth/elevation model.

    Predicted angles are circular means over the sigma points. With an
    adaptive table, per-sigma-point variances are averaged with the UT weights.
    """
    def h(X):
        az, el = zip(*(to_angles(_particle_offsets(X, position_indices, a)) for a in anchors))
        return _interleave(np.stack(az, axis=-1), np.stack(el, axis=-1))

    def R(Z, w):
        sa, se = noise.sigmas(Z[:, 1::2])
        return np.diag(_interleave(w @ (sa * sa), w @ (se * se)))

    z = _interleave(np.asarray(measurements.azimuth, float), np.asarray(measurements.elevation, float))
    return unscented_update(belief, z, h, R, lam, mean_fn=_ae_mean, residual_fn=_ae_residual)


# ---------------------------------------------------------------- driver


def _update(config: FilterConfig, state, meas: Measurements, anchors, pos_idx):
    kind, family = config.kind, config.family
    if kind == "pf":
        if family == "vmf":
            return pf_update_vmf(state, meas, anchors, config.kappa, pos_idx)
        return pf_update_ae(state, meas, anchors, config.noise, pos_idx)
    if kind == "ekf":
        if family == "vmf":
            return ekf_update_vmf(state, meas, anchors, config.kappa, pos_idx)
        return ekf_update_ae(state, meas, anchors, config.noise, pos_idx)
    if family == "vmf":
        return ukf_update_vmf(state, meas, anchors, config.kappa, config.ukf_lambda, pos_idx)
    return ukf_update_ae(state, meas, anchors, config.noise, config.ukf_lambda, pos_idx)


def run_filter(config: FilterConfig, model: StateSpaceModel, prior: GaussianBelief,
               measurements: Measurements, anchors: Sequence[Anchor], random_state=None) -> np.ndarray:
    """Filter a sequence of epochs and return the estimates ``x_{k|k}``.

    Parameters
    ----------
    measurements : Measurements
        Azimuth and elevation arrays of shape ``(K, n_anchors)``.

    Returns
    -------
    ndarray, shape (K, n_x)
        Posterior means (Kalman variants) or weighted particle means taken
        before resampling (particle variants).
    """
    az = np.asarray(measurements.azimuth, dtype=float)
    el = np.asarray(measurements.elevation, dtype=float)
    if az.shape != el.shape or (az.ndim != 2 and az.size):
        raise ValueError("measurement arrays must both have shape (K, n_anchors)")
    n_epochs = az.shape[0] if az.size else 0
    if n_epochs and az.shape[1] != len(anchors):
        raise ValueError("measurement columns must match the number of anchors")
    if model.transition.ndim == 3 and model.transition.shape[0] < n_epochs:
        raise ValueError("fewer transition matrices than epochs")
    if prior.mean.size != model.n_x:
        raise ValueError("prior dimension does not match the model")
    rng = np.random.default_rng(random_state)
    pos_idx = model.position_indices
    estimates = np.empty((n_epochs, model.n_x))
    if config.kind == "pf":
        state = ParticleSet.from_gaussian(prior, config.n_particles, rng)
    else:
        state = prior
    for k in range(n_epochs):
        meas = Measurements(az[k], el[k])
        try:
            state = predict(state, *model.at(k + 1), random_state=rng)
            state = _update(config, state, meas, anchors, pos_idx)
            if config.kind == "pf":
                estimates[k] = state.mean()
                state, _ = maybe_resample(state, config.resample_fraction, rng)
            else:
                estimates[k] = state.mean
        except FilterError as exc:
            exc.epoch = k + 1
            raise
    return estimates
