"""Von Mises-Fisher distribution on the 2-sphere and azimuth/elevation geometry.

Angles are in radians. Canonical azimuth lies in (-pi, pi], canonical
elevation in [-pi/2, pi/2]. All functions broadcast over leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import check_finite, check_positive, check_rotation, check_unit_vectors

LOG_4PI = np.log(4.0 * np.pi)
POLE_TOL = 1e-14


def wrap_angle(angle):
    """Wrap angle(s) to the half-open interval (-pi, pi].

    Angles already in range are returned unchanged (bit for bit).
    """
    angle = np.asarray(angle, dtype=float)
    inside = (angle > -np.pi) & (angle <= np.pi)
    out = np.where(inside, angle, np.pi - np.mod(np.pi - angle, 2.0 * np.pi))
    return out[()] if out.ndim == 0 else out


def circular_mean(angles, weights=None, axis=-1):
    """Weighted circular mean of ``angles`` along ``axis``, in (-pi, pi].

    Parameters
    ----------
    angles : array_like
        Angles in radians.
    weights : array_like, optional
        Weights broadcastable against ``angles``. They need not be positive
        (unscented-transform centre weights can be negative).

    Examples
    --------
    >>> float(circular_mean([np.pi - 0.1, -np.pi + 0.1]))
    3.141592653589793
    """
    angles = np.asarray(angles, dtype=float)
    if weights is None:
        weights = np.ones_like(angles)
    weights = np.broadcast_to(np.asarray(weights, dtype=float), angles.shape)
    s = np.sum(weights * np.sin(angles), axis=axis)
    c = np.sum(weights * np.cos(angles), axis=axis)
    return wrap_angle(np.arctan2(s, c))


def to_unit_vector(azimuth, elevation) -> np.ndarray:
    """Map azimuth/elevation to a unit vector ``[cos a cos e, sin a cos e, sin e]``.

    Raw (non-canonical) angles are accepted.
    """
    a = check_finite(azimuth, "azimuth")
    e = check_finite(elevation, "elevation")
    a, e = np.broadcast_arrays(a, e)
    ce = np.cos(e)
    return np.stack([np.cos(a) * ce, np.sin(a) * ce, np.sin(e)], axis=-1)


def to_angles(u):
    """Inverse of :func:`to_unit_vector`.

    Returns ``(azimuth, elevation)``. At the poles (horizontal norm below
    1e-14) the azimuth is reported as 0.
    """
    u = np.asarray(u, dtype=float)
    horiz = np.hypot(u[..., 0], u[..., 1])
    az = np.where(horiz < POLE_TOL, 0.0, np.arctan2(u[..., 1], u[..., 0]))
    el = np.arctan2(u[..., 2], horiz)
    return wrap_angle(az), el


def canonicalize(azimuth, elevation):
    """Fold a raw angle pair into its canonical representation.

    Elevations beyond a pole are reflected back into [-pi/2, pi/2] and the
    azimuth is shifted by pi, so the represented direction is unchanged.
    """
    a = check_finite(azimuth, "azimuth")
    e = wrap_angle(check_finite(elevation, "elevation"))
    a, e = np.broadcast_arrays(a, e)
    over = e > np.pi / 2
    under = e < -np.pi / 2
    flipped = over | under
    e = np.where(over, np.pi - e, np.where(under, -np.pi - e, e))
    a = np.where(flipped, a + np.pi, a)
    return wrap_angle(a), e


def vmf_log_normalizer(kappa):
    """Logarithm of the 3-D VMF normalizing constant ``kappa / (4 pi sinh kappa)``.

    Evaluated as ``log k - log 4pi - k - log((1 - exp(-2k)) / 2)`` so that
    large concentrations do not overflow; ``kappa == 0`` gives ``-log 4pi``.
    """
    k = np.asarray(kappa, dtype=float)
    if np.any(~np.isfinite(k)) or np.any(k < 0):
        raise ValueError("kappa must be finite and non-negative")
    with np.errstate(divide="ignore", invalid="ignore"):
        pos = np.log(k) - LOG_4PI - k - np.log(-np.expm1(-2.0 * k) / 2.0)
    out = np.where(k > 0, pos, -LOG_4PI)
    return out[()] if out.ndim == 0 else out


def vmf_normalizer(kappa):
    """The normalizing constant ``C_kappa`` (``1 / 4pi`` at ``kappa == 0``)."""
    return np.exp(vmf_log_normalizer(kappa))


def _orthonormal_complement(mu: np.ndarray):
    """Two unit vectors spanning the plane orthogonal to each row of ``mu``."""
    # pick the coordinate axis least aligned with mu as a helper
    idx = np.argmin(np.abs(mu), axis=-1)
    helper = np.zeros_like(mu)
    np.put_along_axis(helper, idx[..., None], 1.0, axis=-1)
    b1 = np.cross(mu, helper)
    b1 /= np.linalg.norm(b1, axis=-1, keepdims=True)
    b2 = np.cross(mu, b1)
    return b1, b2


def sample_vmf(mean_direction, kappa, size=None, random_state=None) -> np.ndarray:
    """Draw unit vectors from VMF(``mean_direction``, ``kappa``).

    The cosine ``w = mu^T x`` is drawn by exact inversion of its CDF, which in
    three dimensions is ``w = 1 + log(u + (1 - u) exp(-2 kappa)) / kappa``;
    the tangential part is uniform on the circle orthogonal to ``mu``.

    Parameters
    ----------
    mean_direction : array_like, shape (..., 3)
        Unit mean direction(s). Several directions draw one sample each.
    kappa : float
        Non-negative concentration.
    size : int, optional
        Number of draws when a single mean direction is given.
    random_state : None, int or numpy.random.Generator

    Returns
    -------
    ndarray, shape (size, 3) or mean_direction.shape
    """
    rng = np.random.default_rng(random_state)
    mu = check_unit_vectors(mean_direction, "mean_direction")
    kappa = check_positive(kappa, "kappa", allow_zero=True)
    if size is not None:
        if mu.ndim != 1:
            raise ValueError("size is only valid with a single mean direction")
        mu = np.broadcast_to(mu, (int(size), 3))
    shape = mu.shape[:-1]
    u = rng.random(shape)
    if kappa > 0:
        w = 1.0 + np.log1p((1.0 - u) * np.expm1(-2.0 * kappa)) / kappa
    else:
        w = 2.0 * u - 1.0
    w = np.clip(w, -1.0, 1.0)
    phi = rng.uniform(0.0, 2.0 * np.pi, shape)
    b1, b2 = _orthonormal_complement(mu)
    r = np.sqrt(np.maximum(0.0, 1.0 - w * w))[..., None]
    x = w[..., None] * mu + r * (np.cos(phi)[..., None] * b1 + np.sin(phi)[..., None] * b2)
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def sample_uniform_sphere(n: int, random_state=None) -> np.ndarray:
    rng = np.random.default_rng(random_state)
    x = rng.standard_normal((int(n), 3))
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def mean_resultant_length(kappa):
    """Expected ``mu^T x`` under VMF, ``coth k - 1/k`` (0 at ``k == 0``)."""
    k = np.asarray(kappa, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 1.0 / np.tanh(k) - 1.0 / k
    small = k < 1e-4
    out = np.where(small, k / 3.0, out)
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class VonMisesFisher:
    """VMF distribution on the unit sphere in R^3.

    ``concentration == 0`` is the uniform distribution.
    """

    mean_direction: np.ndarray
    concentration: float

    def __post_init__(self):
        mu = check_vectors_norm(self.mean_direction)
        object.__setattr__(self, "mean_direction", mu)
        object.__setattr__(
            self, "concentration", check_positive(self.concentration, "concentration", allow_zero=True)
        )

    def log_pdf(self, x):
        return vmf_log_pdf(self.mean_direction, self.concentration, x)

    def pdf(self, x):
        return np.exp(self.log_pdf(x))

    def sample(self, size=None, random_state=None):
        return sample_vmf(self.mean_direction, self.concentration, size=size, random_state=random_state)

    def rotate(self, R) -> "VonMisesFisher":
        return VonMisesFisher(rotate(R, self.mean_direction), self.concentration)


def check_vectors_norm(mu) -> np.ndarray:
    mu = check_unit_vectors(mu, "mean_direction", atol=1e-9)
    return mu / np.linalg.norm(mu, axis=-1, keepdims=True)


def vmf_log_pdf(mean_direction, kappa, x):
    """``log C_kappa + kappa mu^T x`` for unit vector(s) ``x``."""
    x = check_unit_vectors(x, "x")
    mu = np.asarray(mean_direction, dtype=float)
    return vmf_log_normalizer(kappa) + float(kappa) * np.sum(mu * x, axis=-1)


def rotate(R, x) -> np.ndarray:
    """Apply rotation matrix ``R`` to vector(s) ``x`` (row-vector convention)."""
    R = check_rotation(R)
    return np.asarray(x, dtype=float) @ R.T


def rotation_matrix(axis, angle) -> np.ndarray:
    """Rotation by ``angle`` about ``axis`` (Rodrigues' formula)."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    K = np.array([[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def random_rotation(random_state=None) -> np.ndarray:
    from scipy.spatial.transform import Rotation

    rng = np.random.default_rng(random_state)
    return Rotation.random(random_state=rng).as_matrix()


def sigma_to_kappa(sigma_azi, sigma_ele) -> float:
    """Concentration matching azimuth/elevation noise: ``1 / max(sa^2, se^2)``."""
    sa = check_positive(sigma_azi, "sigma_azi")
    se = check_positive(sigma_ele, "sigma_ele")
    return 1.0 / max(sa * sa, se * se)


def kappa_to_sigma(kappa):
    """Azimuth and elevation standard deviations matching ``kappa``: both ``sqrt(1/kappa)``."""
    k = check_positive(kappa, "kappa")
    s = np.sqrt(1.0 / k)
    return s, s
