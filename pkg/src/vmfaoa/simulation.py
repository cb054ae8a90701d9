"""Square-track positioning campaign: track generation, data and RMSE reporting."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._validation import FilterError, check_positive
from .directional import kappa_to_sigma, sample_uniform_sphere, sigma_to_kappa
from .filters import FilterConfig, GaussianBelief, StateSpaceModel, run_filter
from .sensors import (
    AdaptiveStdTable,
    AeNoiseParams,
    Anchor,
    Measurements,
    build_adaptive_table,
    fit_ae_ml,
    generate_model1,
    generate_model2,
)

# anchor frame whose pole (z axis) points along global +x
POLE_ALONG_X = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])

FILTER_NAMES = tuple(
    f"{kind}-{model}" for kind in ("pf", "ekf", "ukf")
    for model in ("vmf", "ae-nominal", "ae-fitted", "ae-adaptive")
)
BASELINE = "pf-vmf"
QUANTILES = (5, 25, 50, 75, 95)
_PARAM_STREAM = 2**32 - 1


def default_anchors(side: float = 5.0, offset: float = 2.0) -> list[Anchor]:
    """Four in-plane anchors for the square track ``[0, side]^2``.

    Two anchors have their frame pole along the x axis and sit on the
    extensions of the bottom and top sides, so the user is exactly in a pole
    direction (elevation +-90 deg in that anchor frame) along those two
    sides. The other two use the global frame and see the whole track at
    elevation zero.
    """
    return [
        Anchor(np.array([-offset, 0.0, 0.0]), POLE_ALONG_X),
        Anchor(np.array([side + offset, side, 0.0]), POLE_ALONG_X),
        Anchor(np.array([side + offset, -offset, 0.0])),
        Anchor(np.array([-offset, side + offset, 0.0])),
    ]


@dataclass
class TrackScenario:
    """Generative description of the square-track campaign.

    Distances in m, ``dt`` in s, ``q_xy``/``q_z`` in m/s^(1/2).
    """

    side: float = 5.0
    anchors: list = field(default_factory=default_anchors)
    dt: float = 0.25
    q_xy: float = 0.5
    q_z: float = 0.1
    n_epochs: int = 64
    n_replications: int = 200
    prior_std: float = 1.0
    n_particles: int = 2000
    ukf_lambda: float = 0.5
    seed: int = 0

    def __post_init__(self):
        check_positive(self.dt, "dt")
        check_positive(self.side, "side")
        check_positive(self.q_xy, "q_xy", allow_zero=True)
        check_positive(self.q_z, "q_z", allow_zero=True)
        check_positive(self.prior_std, "prior_std")
        if self.n_epochs < 0 or self.n_replications < 1:
            raise ValueError("n_epochs must be >= 0 and n_replications >= 1")
        self.anchors = [a if isinstance(a, Anchor) else Anchor.from_dict(a) for a in self.anchors]

    @classmethod
    def paper_fidelity(cls, **kwargs) -> "TrackScenario":
        kwargs.setdefault("n_replications", 10_000)
        kwargs.setdefault("n_particles", 10_000)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {
            "side": self.side, "anchors": [a.to_dict() for a in self.anchors], "dt": self.dt,
            "q_xy": self.q_xy, "q_z": self.q_z, "n_epochs": self.n_epochs,
            "n_replications": self.n_replications, "prior_std": self.prior_std,
            "n_particles": self.n_particles, "ukf_lambda": self.ukf_lambda, "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrackScenario":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class NoiseSpec:
    """Measurement generator: Model I (folded normal angles) or Model II (VMF)."""

    model: str
    sigma: AeNoiseParams | None = None
    kappa: float | None = None

    def __post_init__(self):
        if self.model == "I":
            if self.sigma is None or self.kappa is not None:
                raise ValueError("Model I needs sigma and no kappa")
        elif self.model == "II":
            if self.kappa is None or self.sigma is not None:
                raise ValueError("Model II needs kappa and no sigma")
            check_positive(self.kappa, "kappa", allow_zero=True)
        else:
            raise ValueError("model must be 'I' or 'II'")

    @classmethod
    def model1(cls, sigma_deg: float = 10.0) -> "NoiseSpec":
        return cls("I", sigma=AeNoiseParams.from_degrees(sigma_deg, sigma_deg))

    @classmethod
    def model2(cls, kappa: float | None = None) -> "NoiseSpec":
        """Model II; the default concentration corresponds to a 10 degree spread."""
        if kappa is None:
            kappa = (180.0 / (10.0 * np.pi)) ** 2
        return cls("II", kappa=float(kappa))

    def generate(self, theta, anchors: Sequence[Anchor], random_state=None) -> Measurements:
        if self.model == "I":
            return generate_model1(theta, anchors, self.sigma, random_state)
        return generate_model2(theta, anchors, self.kappa, random_state)

    def generate_directions(self, directions, random_state=None):
        """Measured angles for true unit ``directions`` (anchor at origin, R = I)."""
        anchor = [Anchor(np.zeros(3))]
        m = self.generate(directions, anchor, random_state)
        return m.azimuth[..., 0], m.elevation[..., 0]

    def nominal_ae(self) -> AeNoiseParams:
        if self.model == "I":
            return self.sigma
        return AeNoiseParams(*kappa_to_sigma(self.kappa))

    def nominal_kappa(self) -> float:
        if self.model == "II":
            return self.kappa
        return sigma_to_kappa(self.sigma.sigma_azi, self.sigma.sigma_ele)

    def to_dict(self) -> dict:
        if self.model == "I":
            return {"model": "I", "sigma_azi": self.sigma.sigma_azi, "sigma_ele": self.sigma.sigma_ele}
        return {"model": "II", "kappa": self.kappa}


def fit_ae_to_generator(noise: NoiseSpec, n_samples: int = 100_000, random_state=None) -> AeNoiseParams:
    """ML azimuth/elevation parameters for ``noise`` over uniformly random directions."""
    rng = np.random.default_rng(random_state)
    dirs = sample_uniform_sphere(n_samples, rng)
    az, el = noise.generate_directions(dirs, rng)
    return fit_ae_ml(dirs, az, el)


@dataclass(frozen=True)
class FilterModels:
    """Parameters for the four filter models of a campaign."""

    kappa: float
    nominal: AeNoiseParams
    fitted: AeNoiseParams
    table: AdaptiveStdTable

    def config(self, name: str, n_particles: int, ukf_lambda: float) -> FilterConfig:
        if name not in FILTER_NAMES:
            raise ValueError(f"unknown filter {name!r}; valid names: {', '.join(FILTER_NAMES)}")
        kind, model = name.split("-", 1)
        common = dict(n_particles=n_particles, ukf_lambda=ukf_lambda)
        if model == "vmf":
            return FilterConfig(f"{kind}-vmf", kappa=self.kappa, **common)
        if model == "ae-adaptive":
            return FilterConfig(f"{kind}-ae-adaptive", noise=self.table, **common)
        noise = self.nominal if model == "ae-nominal" else self.fitted
        return FilterConfig(f"{kind}-ae", noise=noise, **common)


def filter_models(noise: NoiseSpec, n_fit: int = 100_000, n_table: int = 100_000,
                  random_state=None) -> FilterModels:
    """Derive every filter model's parameters from the generator.

    Cross-family parameters use the sigma/kappa conversion rules; the fitted
    model is an ML fit to ``n_fit`` simulated measurements; the adaptive
    table is built from the nominal azimuth/elevation parameters.
    """
    rng = np.random.default_rng(random_state)
    nominal = noise.nominal_ae()
    return FilterModels(
        kappa=noise.nominal_kappa(),
        nominal=nominal,
        fitted=fit_ae_to_generator(noise, n_fit, rng),
        table=build_adaptive_table(nominal, 1.0, n_table, rng),
    )


def step_length_moments(q_xy: float, dt: float):
    """Mean and variance of the per-step travelled distance (chi-2 moments)."""
    g = math.gamma(1.5)
    return q_xy * math.sqrt(2.0 * dt) * g, 2.0 * q_xy**2 * dt * (1.0 - g * g)


def perimeter_point(distance, side: float) -> np.ndarray:
    """Position after travelling ``distance`` counter-clockwise from the origin."""
    p = np.mod(np.asarray(distance, dtype=float), 4.0 * side)
    leg = np.minimum(np.floor(p / side), 3).astype(int)
    t = p - leg * side
    x = np.choose(leg, [t, np.full_like(t, side), side - t, np.zeros_like(t)])
    y = np.choose(leg, [np.zeros_like(t), t, np.full_like(t, side), side - t])
    return np.stack([x, y, np.zeros_like(t)], axis=-1)


def generate_track(scenario: TrackScenario, random_state=None, return_negative_count: bool = False):
    """True positions ``theta_1..theta_K`` along the square perimeter.

    Step lengths are normal with the chi-2 moments; a negative draw is used
    by its absolute value.
    """
    rng = np.random.default_rng(random_state)
    mean, var = step_length_moments(scenario.q_xy, scenario.dt)
    steps = rng.normal(mean, math.sqrt(var), size=scenario.n_epochs)
    n_negative = int(np.sum(steps < 0))
    positions = perimeter_point(np.cumsum(np.abs(steps)), scenario.side)
    positions = positions.reshape(scenario.n_epochs, 3)
    if return_negative_count:
        return positions, n_negative
    return positions


def build_state_model(scenario: TrackScenario) -> StateSpaceModel:
    """Random-walk position model with ``Q = dt diag(q_xy^2, q_xy^2, q_z^2)``."""
    Q = scenario.dt * np.diag([scenario.q_xy**2, scenario.q_xy**2, scenario.q_z**2])
    return StateSpaceModel(np.eye(3), Q, (0, 1, 2))


def rmse(estimates, truth) -> float:
    """Root-mean-square 3-D position error over epochs."""
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if est.shape != tru.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {tru.shape}")
    if est.shape[0] == 0:
        return 0.0
    return float(np.sqrt(np.mean(np.sum((est - tru) ** 2, axis=-1))))


@dataclass
class CampaignReport:
    """Per-replication RMSE for each filter and differences against PF-VMF."""

    filters: list
    rows: list = field(default_factory=list)
    negative_steps: int = 0

    def values(self, name: str, key: str = "pct_diff_vs_pf_vmf") -> np.ndarray:
        return np.array([r[key] for r in self.rows if r["filter"] == name], dtype=float)

    def divergences(self, name: str) -> int:
        return int(sum(r["diverged"] for r in self.rows if r["filter"] == name))

    @property
    def n_replications(self) -> int:
        return len({r["replication"] for r in self.rows})

    def summary(self) -> dict:
        out = {"n_replications": self.n_replications, "negative_steps": self.negative_steps, "filters": {}}
        for name in self.filters:
            pct = self.values(name)
            err = self.values(name, "rmse_m")
            ok = np.isfinite(pct)
            out["filters"][name] = {
                "pct_diff_quantiles": {
                    str(q): (float(np.percentile(pct[ok], q)) if ok.any() else None) for q in QUANTILES
                },
                "pct_diff_min": float(pct[ok].min()) if ok.any() else None,
                "pct_diff_max": float(pct[ok].max()) if ok.any() else None,
                "median_rmse_m": float(np.nanmedian(err)) if np.isfinite(err).any() else None,
                "diverged": self.divergences(name),
            }
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["replication", "filter", "rmse_m", "pct_diff_vs_pf_vmf", "diverged"])
            for r in self.rows:
                writer.writerow([r["replication"], r["filter"], repr(r["rmse_m"]),
                                 repr(r["pct_diff_vs_pf_vmf"]), int(r["diverged"])])

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def simulate_replication(scenario: TrackScenario, noise: NoiseSpec, replication: int):
    """Track, negative-step count and measurements of one replication."""
    truth, n_neg = generate_track(scenario, _stream(scenario.seed, replication, 0), return_negative_count=True)
    if scenario.n_epochs:
        meas = noise.generate(truth, scenario.anchors, _stream(scenario.seed, replication, 1))
    else:
        empty = np.empty((0, len(scenario.anchors)))
        meas = Measurements(empty, empty.copy())
    return truth, n_neg, meas


def run_campaign(scenario: TrackScenario, noise: NoiseSpec, filters: Sequence[str] = FILTER_NAMES,
                 models: FilterModels | None = None, progress=None) -> CampaignReport:
    """Run every filter on identical simulated data for each replication.

    Each replication and each filter draws from its own stream derived from
    ``(scenario.seed, replication, filter)``, so results do not depend on the
    order of ``filters``. PF-VMF is always run as the baseline.
    """
    unknown = [f for f in filters if f not in FILTER_NAMES]
    if unknown:
        raise ValueError(f"unknown filters {unknown}; valid names: {', '.join(FILTER_NAMES)}")
    names = [n for n in FILTER_NAMES if n in set(filters) | {BASELINE}]
    if models is None:
        models = filter_models(noise, random_state=_stream(scenario.seed, _PARAM_STREAM))
    configs = {n: models.config(n, scenario.n_particles, scenario.ukf_lambda) for n in names}
    state_model = build_state_model(scenario)
    report = CampaignReport(filters=names)
    for r in range(scenario.n_replications):
        truth, n_neg, meas = simulate_replication(scenario, noise, r)
        report.negative_steps += n_neg
        prior = GaussianBelief(np.zeros(3), scenario.prior_std**2 * np.eye(3))
        errors = {}
        for name in names:
            rng = _stream(scenario.seed, r, 2, FILTER_NAMES.index(name))
            try:
                est = run_filter(configs[name], state_model, prior, meas, scenario.anchors, rng)
                errors[name] = rmse(est, truth) if np.all(np.isfinite(est)) else math.nan
            except FilterError:
                errors[name] = math.nan
        base = errors[BASELINE]
        for name in names:
            if base > 0:
                pct = 100.0 * (errors[name] - base) / base
            else:
                pct = 0.0 if errors[name] == base else math.nan
            report.rows.append({
                "replication": r, "filter": name, "rmse_m": errors[name],
                "pct_diff_vs_pf_vmf": pct, "diverged": not math.isfinite(errors[name]),
            })
        if progress is not None:
            progress(r)
    return report
