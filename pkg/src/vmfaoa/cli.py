"""Command-line simulator for VMF and azimuth/elevation AOA positioning.

All angles written to files are radians and all distances meters.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path


from .comparison import model_comparison
from .demo import single_update_demo
from .sensors import AeNoiseParams, build_adaptive_table
from .simulation import FILTER_NAMES, NoiseSpec, TrackScenario, run_campaign, simulate_replication

log = logging.getLogger("vmfaoa")

FIDELITY = {
    "desk": {"n_replications": 200, "n_particles": 2000, "n_mc": 100_000, "demo_particles": 100_000},
    "paper": {"n_replications": 10_000, "n_particles": 10_000, "n_mc": 100_000, "demo_particles": 1_000_000},
}


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _filters(text: str) -> list[str]:
    names = [t.strip() for t in text.split(",") if t.strip()]
    bad = [n for n in names if n not in FILTER_NAMES]
    if bad or not names:
        raise argparse.ArgumentTypeError(
            f"unknown filter(s) {', '.join(bad) or '(none)'}; valid names: {', '.join(FILTER_NAMES)}"
        )
    return names


def load_config(path) -> dict:
    """Read a JSON run configuration.

    Recognised top-level keys: ``scenario`` (TrackScenario fields),
    ``noise`` (``{"model": "I", "sigma_deg": 10}`` or
    ``{"model": "II", "kappa": 33}``), ``filters`` (list of names),
    ``n_mc``, ``sigma_azi_deg``/``sigma_ele_deg`` (adaptive table) and
    ``replication`` (which replication ``simulate`` writes).
    """
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError("config must be a JSON object")
    return cfg


def noise_from_config(cfg: dict | None) -> NoiseSpec:
    cfg = dict(cfg or {"model": "I"})
    model = str(cfg.pop("model", "I"))
    if model == "I":
        sa = cfg.get("sigma_azi_deg", cfg.get("sigma_deg", 10.0))
        se = cfg.get("sigma_ele_deg", cfg.get("sigma_deg", 10.0))
        return NoiseSpec("I", sigma=AeNoiseParams.from_degrees(sa, se))
    if model == "II":
        return NoiseSpec.model2(cfg.get("kappa"))
    raise ValueError(f"noise model must be 'I' or 'II', got {model!r}")


def _scenario(args, cfg) -> TrackScenario:
    fid = FIDELITY[args.fidelity]
    data = {"n_replications": fid["n_replications"], "n_particles": fid["n_particles"]}
    data.update(cfg.get("scenario", {}))
    data["seed"] = args.seed
    return TrackScenario.from_dict(data)


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def cmd_simulate(args, cfg) -> int:
    scenario = _scenario(args, cfg)
    noise = noise_from_config(cfg.get("noise"))
    truth, _, meas = simulate_replication(scenario, noise, int(cfg.get("replication", 0)))
    out = _out_dir(args)
    with open(out / "track.csv", "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["epoch", "x_m", "y_m", "z_m"])
        for k, p in enumerate(truth, start=1):
            w.writerow([k] + [repr(float(v)) for v in p])
    with open(out / "measurements.csv", "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["epoch", "anchor", "azimuth_rad", "elevation_rad"])
        for k in range(truth.shape[0]):
            for j in range(len(scenario.anchors)):
                w.writerow([k + 1, j + 1, repr(float(meas.azimuth[k, j])), repr(float(meas.elevation[k, j]))])
    with open(out / "scenario.json", "w") as fh:
        json.dump({"scenario": scenario.to_dict(), "noise": noise.to_dict()}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("wrote %s", out)
    return 0


def cmd_run(args, cfg) -> int:
    scenario = _scenario(args, cfg)
    noise = noise_from_config(cfg.get("noise"))
    filters = args.filters or cfg.get("filters") or list(FILTER_NAMES)
    filters = _filters(",".join(filters))
    report = run_campaign(scenario, noise, filters)
    out = _out_dir(args)
    report.to_csv(out / "campaign.csv")
    report.to_json(out / "summary.json")
    n = report.n_replications
    worst = {name: report.divergences(name) for name in report.filters}
    failing = [name for name, d in worst.items() if d > 0.5 * n]
    for name in report.filters:
        q = report.summary()["filters"][name]["pct_diff_quantiles"]["50"]
        log.info("%-16s median pct diff %s, diverged %d/%d", name, q, worst[name], n)
    if failing:
        log.error("filters diverged on more than half of the replications: %s", ", ".join(failing))
        return 3
    return 0


def cmd_compare_models(args, cfg) -> int:
    n_mc = int(cfg.get("n_mc", FIDELITY[args.fidelity]["n_mc"]))
    noises = cfg.get("generators")
    specs = [noise_from_config(g) for g in noises] if noises else None
    report = model_comparison(specs, n_mc=n_mc, random_state=args.seed)
    out = _out_dir(args)
    report.to_json(out / "model_comparison.json")
    for key, col in report.columns.items():
        log.info("%s: %s", key, {k: round(v, 3) for k, v in col.scores.items()})
    return 0


def _xyz(v) -> str:
    return " ".join(repr(float(x)) for x in v)


def cmd_demo_single_update(args, cfg) -> int:
    n = int(cfg.get("n_particles", FIDELITY[args.fidelity]["demo_particles"]))
    rows = single_update_demo(n_particles=n, random_state=args.seed)
    out = _out_dir(args)
    with open(out / "demo.csv", "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["filter", "prior_mean_xyz", "posterior_mean_xyz", "angular_error_deg"])
        for r in rows:
            w.writerow([r.filter, _xyz(r.prior_mean), _xyz(r.posterior_mean), repr(float(r.angular_error_deg))])
    return 0


def cmd_build_adaptive_table(args, cfg) -> int:
    sa = args.sigma_azi_deg if args.sigma_azi_deg is not None else cfg.get("sigma_azi_deg", 10.0)
    se = args.sigma_ele_deg if args.sigma_ele_deg is not None else cfg.get("sigma_ele_deg", 10.0)
    n_mc = int(cfg.get("n_mc", FIDELITY[args.fidelity]["n_mc"]))
    table = build_adaptive_table(AeNoiseParams.from_degrees(sa, se), 1.0, n_mc, args.seed)
    out = _out_dir(args)
    table.to_csv(out / "adaptive_table.csv")
    return 0


COMMANDS = {
    "simulate": (cmd_simulate, "simulate one track and its measurements (track.csv, measurements.csv)"),
    "run": (cmd_run, "Monte Carlo positioning campaign (campaign.csv, summary.json)"),
    "compare-models": (cmd_compare_models, "expected log-likelihood model comparison (model_comparison.json)"),
    "demo-single-update": (cmd_demo_single_update, "single measurement update of all six filters (demo.csv)"),
    "build-adaptive-table": (cmd_build_adaptive_table, "elevation-dependent std table (adaptive_table.csv)"),
}


def _common(suppress: bool) -> argparse.ArgumentParser:
    """Global flags; the subcommand copy must not override values given before it."""
    def default(value):
        return argparse.SUPPRESS if suppress else value

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=default(None), help="JSON run configuration")
    common.add_argument("--seed", type=_seed, default=default(0), help="unsigned 64-bit seed (default 0)")
    common.add_argument("--out", default=default("."), help="output directory (default: current)")
    common.add_argument("--fidelity", choices=sorted(FIDELITY), default=default("desk"),
                        help="desk: 200 replications / 2000 particles; paper: 10^4 / 10^4")
    common.add_argument("--filters", type=_filters, default=default(None),
                        help="comma-separated filter names: " + ", ".join(FILTER_NAMES))
    common.add_argument("-v", "--verbose", action="store_true", default=default(False))
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vmfaoa", description=__doc__, parents=[_common(False)],
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text, parents=[_common(True)])
        if name == "build-adaptive-table":
            p.add_argument("--sigma-azi-deg", type=float, default=None)
            p.add_argument("--sigma-ele-deg", type=float, default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        func = COMMANDS[args.command][0]
        return func(args, cfg)
    except (OSError, ValueError) as exc:
        print(f"vmfaoa: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
