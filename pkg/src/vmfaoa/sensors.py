"""AOA measurement models: generation, prediction, Jacobians and noise fitting.

Measured directions live in the anchor frame: an anchor with orientation
``R`` reports the direction ``R (theta - s) / ||theta - s||``. Arrays of
per-epoch measurements have shape ``(..., n_anchors)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from ._validation import (
    DegenerateGeometryError,
    PoleSingularityError,
    check_finite,
    check_positive,
    check_rotation,
    check_vectors3,
)
from .directional import canonicalize, sample_vmf, to_angles, wrap_angle

RANGE_TOL = 1e-12


@dataclass(frozen=True)
class Anchor:
    """Receiver site with position (m) and orientation (global -> anchor frame)."""

    position: np.ndarray
    orientation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        pos = check_vectors3(self.position, "anchor position")
        if pos.shape != (3,):
            raise ValueError("anchor position must be a 3-vector")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "orientation", check_rotation(self.orientation, "anchor orientation"))

    def to_dict(self) -> dict:
        return {"position": self.position.tolist(), "orientation": self.orientation.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Anchor":
        return cls(np.asarray(d["position"], float), np.asarray(d.get("orientation", np.eye(3)), float))


@dataclass(frozen=True)
class AeNoiseParams:
    """Standard deviations (rad) of the azimuth/elevation normal model."""

    sigma_azi: float
    sigma_ele: float

    def __post_init__(self):
        object.__setattr__(self, "sigma_azi", check_positive(self.sigma_azi, "sigma_azi"))
        object.__setattr__(self, "sigma_ele", check_positive(self.sigma_ele, "sigma_ele"))

    @classmethod
    def from_degrees(cls, sigma_azi_deg: float, sigma_ele_deg: float) -> "AeNoiseParams":
        return cls(np.deg2rad(sigma_azi_deg), np.deg2rad(sigma_ele_deg))

    def sigmas(self, elevation):
        """Per-measurement standard deviations; constant for this model."""
        shape = np.shape(elevation)
        return np.full(shape, self.sigma_azi), np.full(shape, self.sigma_ele)


class Measurements(NamedTuple):
    """Canonical azimuth and elevation arrays of identical shape."""

    azimuth: np.ndarray
    elevation: np.ndarray


def _offsets(theta, anchor: Anchor) -> np.ndarray:
    """``R (theta - s)`` for position(s) ``theta``."""
    theta = check_vectors3(theta, "theta")
    return (theta - anchor.position) @ anchor.orientation.T


def true_direction(theta, anchor: Anchor) -> np.ndarray:
    """Unit vector from the anchor to ``theta`` in the global frame."""
    delta = check_vectors3(theta, "theta") - anchor.position
    rng = np.linalg.norm(delta, axis=-1, keepdims=True)
    if np.any(rng < RANGE_TOL):
        raise DegenerateGeometryError("user position coincides with the anchor")
    return delta / rng


def ae_predict(theta, anchor: Anchor):
    """Noise-free azimuth and elevation of ``theta`` as seen by ``anchor``."""
    delta = _offsets(theta, anchor)
    horiz = np.hypot(delta[..., 0], delta[..., 1])
    if np.any(np.hypot(horiz, delta[..., 2]) < RANGE_TOL):
        raise DegenerateGeometryError("user position coincides with the anchor")
    return to_angles(delta / np.linalg.norm(delta, axis=-1, keepdims=True))


def _predict_all(theta, anchors: Sequence[Anchor]):
    az, el = zip(*(ae_predict(theta, a) for a in anchors))
    return np.stack(az, axis=-1), np.stack(el, axis=-1)


def generate_model1(theta, anchors: Sequence[Anchor], params: AeNoiseParams, random_state=None) -> Measurements:
    """Normal azimuth/elevation noise followed by folding into canonical form.

    ``theta`` may be a single position or an array of positions ``(K, 3)``;
    the result then has shape ``(K, n_anchors)``.
    """
    rng = np.random.default_rng(random_state)
    az, el = _predict_all(theta, anchors)
    noise = rng.standard_normal((2,) + az.shape)
    return Measurements(*canonicalize(az + params.sigma_azi * noise[0], el + params.sigma_ele * noise[1]))


def generate_model2(theta, anchors: Sequence[Anchor], kappa: float, random_state=None) -> Measurements:
    """VMF unit-vector noise around the true anchor-frame direction."""
    rng = np.random.default_rng(random_state)
    dirs = np.stack(
        [true_direction(theta, a) @ a.orientation.T for a in anchors], axis=-2
    )
    u = sample_vmf(dirs, kappa, random_state=rng)
    return Measurements(*canonicalize(*to_angles(u)))


def measurement_function_and_jacobian(theta, anchors: Sequence[Anchor], position_indices=(0, 1, 2), n_x=None):
    """Stacked anchor-frame unit vectors and their Jacobian with respect to the state.

    Parameters
    ----------
    theta : array_like, shape (n_x,)
        State vector; the position is ``theta[position_indices]``.
    anchors : sequence of Anchor
    position_indices : sequence of 3 ints
    n_x : int, optional
        State dimension, defaults to ``len(theta)``.

    Returns
    -------
    value : ndarray, shape (3 n_s,)
        ``R_j d_j`` for each anchor, ``d_j = (theta - s_j) / ||theta - s_j||``.
    jacobian : ndarray, shape (3 n_s, n_x)
        ``R_j (I - d_j d_j^T) / ||theta - s_j||`` in the position columns.
    """
    x = check_finite(theta, "theta")
    n_x = x.size if n_x is None else n_x
    pos_idx = list(position_indices)
    pos = x[pos_idx]
    value = np.empty(3 * len(anchors))
    jac = np.zeros((3 * len(anchors), n_x))
    for j, anchor in enumerate(anchors):
        delta = pos - anchor.position
        r = np.linalg.norm(delta)
        if r < RANGE_TOL:
            raise DegenerateGeometryError(f"state position coincides with anchor {j}")
        d = delta / r
        value[3 * j : 3 * j + 3] = anchor.orientation @ d
        jac[3 * j : 3 * j + 3, pos_idx] = anchor.orientation @ (np.eye(3) - np.outer(d, d)) / r
    return value, jac


def _ae_jacobian_rows(delta: np.ndarray):
    """Derivatives of azimuth and elevation w.r.t. the anchor-frame offset.

    At an exact pole the elevation row falls back to zero horizontal entries.
    """
    h2 = delta[0] ** 2 + delta[1] ** 2
    h = np.sqrt(h2)
    r2 = h2 + delta[2] ** 2
    if h2 > 0:
        d_az = np.array([-delta[1], delta[0], 0.0]) / h2
        d_el = np.array([-delta[0] * delta[2], -delta[1] * delta[2], h2]) / (r2 * h)
    else:
        d_az = np.zeros(3)
        d_el = np.zeros(3)
    return d_az, d_el


def ae_jacobian(theta, anchor: Anchor, position_indices=(0, 1, 2), n_x=None) -> np.ndarray:
    """Jacobian (2 x n_x) of ``ae_predict`` with respect to the state.

    Raises
    ------
    PoleSingularityError
        If the horizontal range in the anchor frame is below 1e-12.
    """
    x = check_finite(theta, "theta")
    n_x = x.size if n_x is None else n_x
    pos_idx = list(position_indices)
    delta = anchor.orientation @ (x[pos_idx] - anchor.position)
    if np.linalg.norm(delta) < RANGE_TOL:
        raise DegenerateGeometryError("state position coincides with the anchor")
    if np.hypot(delta[0], delta[1]) < RANGE_TOL:
        raise PoleSingularityError("azimuth is not differentiable at the pole")
    d_az, d_el = _ae_jacobian_rows(delta)
    out = np.zeros((2, n_x))
    out[0, pos_idx] = d_az @ anchor.orientation
    out[1, pos_idx] = d_el @ anchor.orientation
    return out


@dataclass(frozen=True)
class AdaptiveStdTable:
    """Elevation-dependent standard deviations of the folded normal model.

    ``elevation_deg`` is a regular grid over [-90, 90]; lookups use the
    nearest node, ties resolved toward the node closer to zero elevation.
    """

    elevation_deg: np.ndarray
    sigma_azi: np.ndarray
    sigma_ele: np.ndarray
    base: AeNoiseParams | None = None

    def __post_init__(self):
        grid = np.asarray(self.elevation_deg, dtype=float)
        sa = np.asarray(self.sigma_azi, dtype=float)
        se = np.asarray(self.sigma_ele, dtype=float)
        if grid.ndim != 1 or grid.shape != sa.shape or grid.shape != se.shape or grid.size < 2:
            raise ValueError("table columns must be 1-D arrays of equal length >= 2")
        step = np.diff(grid)
        if not np.allclose(step, step[0]) or step[0] <= 0:
            raise ValueError("elevation grid must be regular and increasing")
        object.__setattr__(self, "elevation_deg", grid)
        object.__setattr__(self, "sigma_azi", sa)
        object.__setattr__(self, "sigma_ele", se)

    @property
    def step_deg(self) -> float:
        return float(self.elevation_deg[1] - self.elevation_deg[0])

    def node_index(self, elevation):
        el = np.asarray(elevation, dtype=float)
        if np.any(~np.isfinite(el)) or np.any(np.abs(el) > np.pi / 2 + 1e-12):
            raise ValueError("elevation must lie in [-pi/2, pi/2]")
        x = (np.rad2deg(el) - self.elevation_deg[0]) / self.step_deg
        zero = -self.elevation_deg[0] / self.step_deg
        rel = x - zero
        # round half toward the zero-elevation node
        nearest = np.sign(rel) * np.ceil(np.abs(rel) - 0.5) + zero
        return np.clip(np.rint(nearest).astype(int), 0, self.elevation_deg.size - 1)

    def sigmas(self, elevation):
        idx = self.node_index(elevation)
        return self.sigma_azi[idx], self.sigma_ele[idx]

    def lookup(self, elevation: float) -> AeNoiseParams:
        sa, se = self.sigmas(elevation)
        return AeNoiseParams(float(sa), float(se))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["elevation_deg", "sigma_azi_rad", "sigma_ele_rad"])
            for row in zip(self.elevation_deg, self.sigma_azi, self.sigma_ele):
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "AdaptiveStdTable":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1], data[:, 2])


def _rms(x, axis=None):
    return np.sqrt(np.mean(np.square(x), axis=axis))


def build_adaptive_table(base: AeNoiseParams, grid_step_deg: float = 1.0, n_mc: int = 100_000,
                         random_state=None) -> AdaptiveStdTable:
    """Monte Carlo standard deviations of folded normal noise per true elevation.

    Every grid node reuses the same noise draws (common random numbers), so
    the table is smooth in elevation and independent of evaluation order.
    Azimuth residuals are wrapped before taking the sample standard deviation.
    """
    if n_mc < 1:
        raise ValueError("n_mc must be positive")
    n_half = int(round(90.0 / grid_step_deg))
    if not np.isclose(n_half * grid_step_deg, 90.0):
        raise ValueError("grid_step_deg must divide 90")
    grid = np.linspace(-90.0, 90.0, 2 * n_half + 1)
    rng = np.random.default_rng(random_state)
    e_azi = base.sigma_azi * rng.standard_normal(int(n_mc))
    e_ele = base.sigma_ele * rng.standard_normal(int(n_mc))
    sa = np.empty(grid.size)
    se = np.empty(grid.size)
    for i, g in enumerate(np.deg2rad(grid)):
        ya, ye = canonicalize(e_azi, g + e_ele)
        sa[i] = np.std(wrap_angle(ya))
        se[i] = np.std(ye - g)
    return AdaptiveStdTable(grid, sa, se, base=base)


def fit_ae_ml(true_directions, azimuth, elevation, floor: float = 1e-9) -> AeNoiseParams:
    """Zero-mean maximum-likelihood fit of the azimuth/elevation normal model.

    Parameters
    ----------
    true_directions : array_like, shape (N, 3)
        True directions in the measurement frame (need not be normalized).
    azimuth, elevation : array_like, shape (N,)
        Measured canonical angles.

    Returns
    -------
    AeNoiseParams
        RMS of wrapped azimuth residuals and of elevation residuals, floored
        at ``floor``.
    """
    dirs = check_vectors3(true_directions, "true_directions").reshape(-1, 3)
    az = check_finite(azimuth, "azimuth").ravel()
    el = check_finite(elevation, "elevation").ravel()
    if dirs.shape[0] == 0:
        raise ValueError("fit_ae_ml needs at least one sample")
    if not (dirs.shape[0] == az.size == el.size):
        raise ValueError("sample arrays must have equal length")
    ta, te = to_angles(dirs / np.linalg.norm(dirs, axis=-1, keepdims=True))
    return AeNoiseParams(max(_rms(wrap_angle(az - ta)), floor), max(_rms(el - te), floor))
