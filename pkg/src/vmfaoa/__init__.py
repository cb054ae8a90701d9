"""Von Mises-Fisher modelling of 3-D angle-of-arrival measurements and the
particle, extended and unscented Kalman filters built on it."""

from ._validation import (
    DegenerateGeometryError,
    DegenerateWeightsError,
    FilterError,
    NumericalFailureError,
    PoleSingularityError,
)
from .directional import (
    VonMisesFisher,
    canonicalize,
    kappa_to_sigma,
    rotate,
    sample_vmf,
    sigma_to_kappa,
    to_angles,
    to_unit_vector,
    vmf_log_normalizer,
    vmf_log_pdf,
    vmf_normalizer,
    wrap_angle,
)
from .estimators import AdaptiveStdModel, AeNoiseModel, AoaPositioningFilter
from .filters import FilterConfig, GaussianBelief, ParticleSet, StateSpaceModel, run_filter
from .sensors import AdaptiveStdTable, AeNoiseParams, Anchor, Measurements

__version__ = "0.1.0"

__all__ = [
    "AdaptiveStdModel", "AdaptiveStdTable", "AeNoiseModel", "AeNoiseParams", "Anchor",
    "AoaPositioningFilter", "DegenerateGeometryError", "DegenerateWeightsError", "FilterConfig",
    "FilterError", "GaussianBelief", "Measurements", "NumericalFailureError", "ParticleSet",
    "PoleSingularityError", "StateSpaceModel", "VonMisesFisher", "canonicalize", "kappa_to_sigma",
    "rotate", "run_filter", "sample_vmf", "sigma_to_kappa", "to_angles", "to_unit_vector",
    "vmf_log_normalizer", "vmf_log_pdf", "vmf_normalizer", "wrap_angle",
]
