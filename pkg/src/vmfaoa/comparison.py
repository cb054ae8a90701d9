"""Expected log-likelihood comparison of the AE and VMF measurement models.

True directions are uniform on the unit sphere and measurements come from a
:class:`~vmfaoa.simulation.NoiseSpec` generator. Both scores are expected
log-densities with respect to area in (azimuth, elevation) coordinates, so
they are directly comparable; ``exp`` of them is normalized across models.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import ndtr

from .directional import sample_uniform_sphere, to_angles, to_unit_vector, vmf_log_normalizer, wrap_angle
from .sensors import AdaptiveStdTable, AeNoiseParams
from .simulation import FilterModels, NoiseSpec, filter_models

MODEL_NAMES = ("AE-nominal", "AE-fitted", "AE-adaptive", "VMF")
_HALF_PI = np.pi / 2
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)
COS_FLOOR = 1e-12


class ComparisonSample(NamedTuple):
    directions: np.ndarray
    azimuth: np.ndarray
    elevation: np.ndarray
    true_azimuth: np.ndarray
    true_elevation: np.ndarray


class MonteCarloEstimate(NamedTuple):
    value: float
    stderr: float
    n_clamped: int = 0


def draw_comparison_sample(noise: NoiseSpec, n: int, random_state=None) -> ComparisonSample:
    rng = np.random.default_rng(random_state)
    dirs = sample_uniform_sphere(n, rng)
    az, el = noise.generate_directions(dirs, rng)
    ta, te = to_angles(dirs)
    return ComparisonSample(dirs, az, el, ta, te)


def _log_truncnorm(x, mean, sigma, lo, hi):
    """Log density of N(mean, sigma^2) truncated to [lo, hi], evaluated at x."""
    z = (x - mean) / sigma
    mass = ndtr((hi - mean) / sigma) - ndtr((lo - mean) / sigma)
    return -0.5 * z * z - _LOG_SQRT_2PI - np.log(sigma) - np.log(mass)


def normal_loglik_terms(sample: ComparisonSample, model: AeNoiseParams | AdaptiveStdTable) -> np.ndarray:
    """Per-sample log-density of the AE model.

    The wrapped azimuth residual uses a normal truncated to [-pi, pi]; the
    elevation uses a normal centred at the true elevation truncated to the
    elevation support [-pi/2, pi/2]. Adaptive tables are evaluated at the
    true elevation.
    """
    sa, se = model.sigmas(sample.true_elevation)
    ra = wrap_angle(sample.azimuth - sample.true_azimuth)
    log_az = _log_truncnorm(ra, 0.0, sa, -np.pi, np.pi)
    log_el = _log_truncnorm(sample.elevation, sample.true_elevation, se, -_HALF_PI, _HALF_PI)
    return log_az + log_el


def vmf_loglik_terms(sample: ComparisonSample, kappa: float):
    """Per-sample VMF log-density plus the spherical area element ``log cos(elevation)``.

    Returns the terms and the number of samples whose cosine was clamped.
    """
    u = to_unit_vector(sample.azimuth, sample.elevation)
    cos_el = np.cos(sample.elevation)
    clamped = cos_el < COS_FLOOR
    terms = (vmf_log_normalizer(kappa) + kappa * np.sum(u * sample.directions, axis=-1)
             + np.log(np.maximum(cos_el, COS_FLOOR)))
    return terms, int(clamped.sum())


def _estimate(terms, n_clamped: int = 0) -> MonteCarloEstimate:
    return MonteCarloEstimate(float(np.mean(terms)), float(np.std(terms, ddof=1) / np.sqrt(terms.size)), n_clamped)


def expected_loglik_normal(noise: NoiseSpec, params, n_mc: int = 100_000, random_state=None) -> MonteCarloEstimate:
    """Monte Carlo expected AE log-likelihood under the ``noise`` generator."""
    return _estimate(normal_loglik_terms(draw_comparison_sample(noise, n_mc, random_state), params))


def expected_loglik_vmf(noise: NoiseSpec, kappa: float, n_mc: int = 100_000, random_state=None) -> MonteCarloEstimate:
    """Monte Carlo expected VMF log-likelihood (with area element) under ``noise``."""
    terms, n_clamped = vmf_loglik_terms(draw_comparison_sample(noise, n_mc, random_state), kappa)
    return _estimate(terms, n_clamped)


def normalized_scores(logliks) -> np.ndarray:
    """``exp(L)`` normalized to sum to one (shift invariant)."""
    L = np.asarray(logliks, dtype=float)
    e = np.exp(L - L.max())
    return e / e.sum()


@dataclass
class GeneratorComparison:
    generator: dict
    parameters: dict
    logliks: dict
    stderr: dict
    scores: dict
    n_clamped: int = 0


@dataclass
class ModelComparisonReport:
    n_mc: int
    columns: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_mc": self.n_mc,
            "models": list(MODEL_NAMES),
            "generators": {
                key: {
                    "generator": c.generator, "parameters": c.parameters, "expected_loglik": c.logliks,
                    "stderr": c.stderr, "normalized_exp_loglik": c.scores, "n_clamped": c.n_clamped,
                }
                for key, c in self.columns.items()
            },
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def compare_generator(noise: NoiseSpec, models: FilterModels, n_mc: int = 100_000,
                      random_state=None) -> GeneratorComparison:
    """Score the four filter models on one shared Monte Carlo sample."""
    sample = draw_comparison_sample(noise, n_mc, random_state)
    vmf_terms, n_clamped = vmf_loglik_terms(sample, models.kappa)
    terms = {
        "AE-nominal": normal_loglik_terms(sample, models.nominal),
        "AE-fitted": normal_loglik_terms(sample, models.fitted),
        "AE-adaptive": normal_loglik_terms(sample, models.table),
        "VMF": vmf_terms,
    }
    est = {k: _estimate(v) for k, v in terms.items()}
    scores = normalized_scores([est[k].value for k in MODEL_NAMES])
    deg = np.rad2deg
    params = {
        "AE-nominal": {"sigma_azi_deg": float(deg(models.nominal.sigma_azi)),
                       "sigma_ele_deg": float(deg(models.nominal.sigma_ele))},
        "AE-fitted": {"sigma_azi_deg": float(deg(models.fitted.sigma_azi)),
                      "sigma_ele_deg": float(deg(models.fitted.sigma_ele))},
        "AE-adaptive": {"grid_step_deg": models.table.step_deg},
        "VMF": {"kappa": float(models.kappa)},
    }
    return GeneratorComparison(
        generator=noise.to_dict(), parameters=params,
        logliks={k: est[k].value for k in MODEL_NAMES},
        stderr={k: est[k].stderr for k in MODEL_NAMES},
        scores={k: float(s) for k, s in zip(MODEL_NAMES, scores)},
        n_clamped=n_clamped,
    )


def model_comparison(noises: Sequence[NoiseSpec] | None = None, n_mc: int = 100_000,
                     random_state=None, n_table: int = 100_000) -> ModelComparisonReport:
    """Normalized model-comparison scores for each generator (Model I and II by default)."""
    if noises is None:
        noises = (NoiseSpec.model1(10.0), NoiseSpec.model2(33.0))
    seq = np.random.SeedSequence(np.random.default_rng(random_state).integers(2**63))
    report = ModelComparisonReport(n_mc=int(n_mc))
    for noise, child in zip(noises, seq.spawn(len(noises))):
        fit_ss, sample_ss = child.spawn(2)
        models = filter_models(noise, n_fit=n_mc, n_table=n_table, random_state=np.random.default_rng(fit_ss))
        report.columns[f"Model {noise.model}"] = compare_generator(noise, models, n_mc, np.random.default_rng(sample_ss))
    return report
