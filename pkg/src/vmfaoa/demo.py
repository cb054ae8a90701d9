"""One measurement update near the down pole, run through all six filters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .directional import canonicalize, to_angles, to_unit_vector
from .filters import (
    GaussianBelief,
    ParticleSet,
    ekf_update_ae,
    ekf_update_vmf,
    pf_update_ae,
    pf_update_vmf,
    ukf_update_ae,
    ukf_update_vmf,
    vmf_loglik,
)
from .sensors import AeNoiseParams, Anchor, Measurements

PRIOR_MEAN = np.array([0.3, -0.3, -2.0])
PRIOR_STD = 0.75
# Published measurement, given as (azimuth, polar angle from +z). In the
# canonical convention this is azimuth 0, elevation -9 pi / 20: nine degrees
# from the down pole, where the prior mean (about 12 degrees off) also sits.
RAW_AZIMUTH = -np.pi
RAW_POLAR = -19 * np.pi / 20
SIGMA = np.deg2rad(5.0)
KAPPA = (180.0 / (5.0 * np.pi)) ** 2
UKF_LAMBDA = 0.5

DEMO_FILTERS = ("ekf-ae", "ukf-ae", "pf-ae", "ekf-vmf", "ukf-vmf", "pf-vmf")


@dataclass(frozen=True)
class DemoRow:
    filter: str
    prior_mean: np.ndarray
    posterior_mean: np.ndarray
    angular_error_deg: float


def angle_between(a, b) -> float:
    """Angle (rad) between two non-zero vectors, robust near 0 and pi."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    return float(np.arctan2(np.linalg.norm(np.cross(a, b)), np.dot(a, b)))


def from_polar(azimuth, polar):
    """Canonical (azimuth, elevation) of a direction given by azimuth and polar angle."""
    s = np.sin(polar)
    u = np.stack([s * np.cos(azimuth), s * np.sin(azimuth), np.cos(polar) * np.ones_like(s)], axis=-1)
    return to_angles(u)


def demo_measurement(azimuth=None, elevation=None) -> Measurements:
    """The demo measurement; explicit canonical-convention angles override it."""
    if azimuth is None and elevation is None:
        az, el = from_polar(RAW_AZIMUTH, RAW_POLAR)
    else:
        az, el = canonicalize(azimuth, elevation)
    return Measurements(np.atleast_1d(az), np.atleast_1d(el))


def demo_setup(azimuth=None, elevation=None):
    anchors = [Anchor(np.zeros(3))]
    prior = GaussianBelief(PRIOR_MEAN.copy(), PRIOR_STD**2 * np.eye(3))
    return anchors, prior, demo_measurement(azimuth, elevation)


def measured_direction(meas: Measurements) -> np.ndarray:
    return to_unit_vector(meas.azimuth[0], meas.elevation[0])


def importance_posterior_mean(n_samples: int = 1_000_000, random_state=None,
                              azimuth=None, elevation=None) -> np.ndarray:
    """Exact VMF posterior mean by self-normalized importance sampling from the prior."""
    anchors, prior, meas = demo_setup(azimuth, elevation)
    rng = np.random.default_rng(random_state)
    x = rng.multivariate_normal(prior.mean, prior.cov, size=int(n_samples), method="cholesky")
    logw = vmf_loglik(x, meas, anchors, KAPPA)
    w = np.exp(logw - logw.max())
    return (w / w.sum()) @ x


def single_update_demo(n_particles: int = 100_000, random_state=None,
                       azimuth=None, elevation=None) -> list[DemoRow]:
    """Apply one update of each filter to the same prior and measurement.

    The angular error is measured between the posterior mean (seen from the
    anchor at the origin) and the measured direction.
    """
    anchors, prior, meas = demo_setup(azimuth, elevation)
    rng = np.random.default_rng(random_state)
    noise = AeNoiseParams(SIGMA, SIGMA)
    particles = ParticleSet.from_gaussian(prior, n_particles, rng)
    posts = {
        "ekf-ae": ekf_update_ae(prior, meas, anchors, noise).mean,
        "ukf-ae": ukf_update_ae(prior, meas, anchors, noise, UKF_LAMBDA).mean,
        "pf-ae": pf_update_ae(particles, meas, anchors, noise).mean(),
        "ekf-vmf": ekf_update_vmf(prior, meas, anchors, KAPPA).mean,
        "ukf-vmf": ukf_update_vmf(prior, meas, anchors, KAPPA, UKF_LAMBDA).mean,
        "pf-vmf": pf_update_vmf(particles, meas, anchors, KAPPA).mean(),
    }
    u = measured_direction(meas)
    return [
        DemoRow(name, prior.mean.copy(), posts[name], np.rad2deg(angle_between(posts[name], u)))
        for name in DEMO_FILTERS
    ]
