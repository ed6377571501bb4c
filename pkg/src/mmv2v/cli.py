"""Command line front end: sweeps, curves and plots as versioned CSV/SVG.

Exit codes: 0 success, 2 config/validation, 3 numeric convergence, 4 I/O.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass

import numpy as np
import yaml

from mmv2v import __version__, analysis, blockage, sim
from mmv2v.errors import ConfigError, MmV2VError, SchemaError, ValidationError
from mmv2v.plot import read_table, render_svg, write_table
from mmv2v.scenario import (
    CONFIG_ENV_VAR,
    DENSITY_ROWS,
    Scenario,
    apply_overrides,
    scenario_from_dict,
    scenario_to_dict,
)

EXIT_IO = 4

SWEEP_PARAMETERS = {
    # parameter -> (dotted config key, default values)
    "beamwidth": ("antenna.beamwidth_deg", "10:360:10"),
    "carrier_sense_range": ("radio.carrier_sense_range", "10:150:10"),
    "sinr_threshold": ("radio.sinr_threshold", "5:35:5"),
    "density_row": ("road.lane_densities", "low,intermediate,high"),
}


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple
    engine: str = "analytic"
    output_path: str = "-"

    def __post_init__(self):
        if self.parameter not in SWEEP_PARAMETERS:
            raise ValidationError("parameter", f"unknown sweep parameter '{self.parameter}'")
        if not self.values:
            raise ValidationError("values", "sweep needs at least one value")
        if self.engine not in ("analytic", "simulation", "both"):
            raise ValidationError("engine", f"unknown engine '{self.engine}'")


def parse_values(text: str, numeric: bool = True) -> tuple:
    """``start:stop:step`` (stop included) or a comma-separated list."""
    text = text.strip()
    if not text:
        raise ValidationError("values", "empty value list")
    if not numeric:
        items = tuple(v.strip() for v in text.split(",") if v.strip())
        if not items:
            raise ValidationError("values", "empty value list")
        return items
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) != 3:
                raise ValidationError("values", f"range must be start:stop:step, got '{text}'")
            start, stop, step = parts
            if not step > 0:
                raise ValidationError("values", f"step must be > 0, got {step:g}")
            if stop < start:
                raise ValidationError("values", "stop must be >= start")
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            return tuple(round(start + i * step, 12) for i in range(n))
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError("values", f"not a number list: '{text}'") from None


# -- scenario resolution -----------------------------------------------------

def resolve_scenario(args) -> Scenario:
    path = args.config or os.environ.get(CONFIG_ENV_VAR) or None
    data = {}
    if path:
        with open(path, encoding="utf-8") as fh:
            try:
                data = yaml.safe_load(fh.read()) or {}
            except yaml.YAMLError as exc:
                raise ConfigError(f"malformed config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config document must be a mapping of sections")
    return scenario_from_dict(apply_overrides(data, args.set or []))


def _meta(scenario: Scenario, **extra) -> dict:
    meta = {"generator": f"mmv2v {__version__}"}
    meta.update({k: v for k, v in extra.items() if v is not None})
    meta["scenario"] = scenario_to_dict(scenario)
    return meta


def _trials(scenario: Scenario, args) -> int:
    trials = scenario.sim.trials if args.trials is None else args.trials
    if trials < 1:
        raise ValidationError("trials", "must be >= 1")
    return trials


def _with_row(scenario: Scenario, row: str) -> Scenario:
    if row not in DENSITY_ROWS:
        raise ValidationError("density_row", f"unknown row '{row}' (choose from {', '.join(DENSITY_ROWS)})")
    return scenario.replace(**{"road.lane_densities": list(DENSITY_ROWS[row])})


# -- commands ------------------------------------------------------------------

def cmd_blockage_curve(scenario: Scenario, distances, tx_lane: int = 1, rx_lane: int = 1):
    """Rows of (distance, extra loss k=1, extra loss k=2, P_b0, P_b1)."""
    d = np.asarray(distances, dtype=float)
    if d.size == 0 or np.any(d <= 0):
        raise ValidationError("distances", "grid must be non-empty and positive")
    pl = scenario.path_loss
    base = pl.loss_db(0, d)
    d1, d2 = pl.loss_db(1, d) - base, pl.loss_db(2, d) - base
    mean = blockage.blocker_mean(scenario, tx_lane, rx_lane, d)
    pb0, pb1 = blockage.link_probabilities(scenario.road.tall_fraction, mean)
    header = ["distance_m", "delta_k1_db", "delta_k2_db", "p_b0", "p_b1"]
    rows = [list(map(float, r)) for r in zip(d, d1, d2, pb0, pb1)]
    return header, rows


def _sim_columns(res: sim.CampaignResult) -> list:
    return [res.mean, res.stderr, res.ci95, res.trials]


def cmd_coverage_sweep(scenario: Scenario, spec: SweepSpec, rows=("low", "intermediate", "high"),
                       trials: int = 1000, seed: int = 0, workers: int = 1):
    """One output row per (value, density row), in that nested order."""
    key = SWEEP_PARAMETERS[spec.parameter][0]
    header = ["value", "density_row"]
    if spec.engine in ("analytic", "both"):
        header += ["analytic_receivers"]
    if spec.engine in ("simulation", "both"):
        header += ["sim_mean", "sim_stderr", "sim_ci95", "sim_trials"]
    if spec.parameter == "density_row":
        pairs = [(v, v) for v in spec.values]
    else:
        pairs = [(v, r) for v in spec.values for r in rows]
    sim_cache = {}
    if spec.engine != "analytic" and spec.parameter == "beamwidth":
        # common drops across beamwidths, one campaign per density row
        for r in dict.fromkeys(r for _, r in pairs):
            res = sim.run_beamwidth_campaign(_with_row(scenario, r), spec.values, trials, None, seed, workers)
            for v in spec.values:
                sim_cache[(v, r)] = res[float(v)]
    out = []
    for v, r in pairs:
        sc = _with_row(scenario, r)
        if spec.parameter != "density_row":
            sc = sc.replace(**{key: v})
        row = [v, r]
        if spec.engine in ("analytic", "both"):
            row.append(analysis.expected_coverage(sc).expected_receivers)
        if spec.engine in ("simulation", "both"):
            res = sim_cache[(v, r)] if (v, r) in sim_cache else sim.run_campaign(sc, trials, None, seed, workers)
            row += _sim_columns(res)
        out.append(row)
    return header, out


def cmd_sinr_cdf(scenario: Scenario, beamwidths, grid, trials: int = 1000, seed: int = 0, workers: int = 1):
    """Pooled top-100 SINR CDF per beamwidth on a fixed dB grid."""
    grid = np.asarray(grid, dtype=float)
    res = sim.run_beamwidth_campaign(scenario, beamwidths, trials, None, seed, workers)
    rows = []
    for a in beamwidths:
        cdf = res[float(a)].cdf(grid)
        rows += [[float(a), float(g), float(c)] for g, c in zip(grid, cdf)]
    return ["beamwidth_deg", "sinr_db", "cdf"], rows


def cmd_cs_sweep(scenario: Scenario, ranges, engine: str = "analytic", trials: int = 1000,
                 seed: int = 0, workers: int = 1):
    """Per-broadcast coverage, transmitter density and their product per r_E."""
    if any(not r > 0 for r in ranges):
        raise ValidationError("values", "carrier sensing ranges must be > 0")
    header = ["carrier_sense_range_m"]
    if engine in ("analytic", "both"):
        header += ["analytic_coverage", "analytic_tx_per_km", "analytic_aggregate_per_km"]
    if engine in ("simulation", "both"):
        header += ["sim_coverage", "sim_stderr", "sim_tx_per_km", "sim_aggregate_per_km", "sim_trials"]
    rows = []
    for r_e in ranges:
        sc = scenario.replace(**{"radio.carrier_sense_range": r_e})
        row = [r_e]
        if engine in ("analytic", "both"):
            cov = analysis.expected_coverage(sc).expected_receivers
            dens = analysis.transmitter_density(sc) * 1000.0
            row += [cov, dens, cov * dens]
        if engine in ("simulation", "both"):
            res = sim.run_campaign(sc, trials, None, seed, workers)
            dens = res.mean_transmitter_density * 1000.0
            row += [res.mean, res.stderr, dens, res.mean * dens, res.trials]
        rows.append(row)
    return header, rows


def cmd_simulate(scenario: Scenario, trials: int, seed: int = 0, workers: int = 1, records=None):
    res = sim.run_campaign(scenario, trials, None, seed, workers, records)
    header = ["trial", "seed", "covered", "transmitter_density_per_km"]
    rows = [[i, int(s), int(c), float(t) * 1000.0]
            for i, (s, c, t) in enumerate(zip(res.seeds, res.covered, res.transmitter_density))]
    summary = {"mean": res.mean, "stderr": res.stderr, "ci95": res.ci95, "trials": res.trials}
    return header, rows, summary


def cmd_plot(csv_path, out_path=None, kind: str | None = None) -> str:
    table = read_table(csv_path)
    if kind is not None and kind != table.schema:
        raise SchemaError(f"plot kind '{kind}' does not match CSV schema '{table.schema}'")
    svg = render_svg(table)
    if out_path is None:
        out_path = os.path.splitext(os.fspath(csv_path))[0] + ".svg"
    if out_path == "-":
        sys.stdout.write(svg)
    else:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(svg)
    return svg


# -- argument parsing ----------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("scenario and run control")
    g.add_argument("--config", help=f"YAML scenario file (default: ${CONFIG_ENV_VAR}, else built-in defaults)")
    g.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override one config value; repeatable")
    g.add_argument("--seed", type=int, default=0, help="base seed for simulation trials")
    g.add_argument("--trials", type=int, help="simulation trials per point (default: sim.trials)")
    g.add_argument("--engine", choices=("analytic", "simulation", "both"), help="evaluation engine")
    g.add_argument("--out", default="-", help="output file ('-' for stdout)")
    g.add_argument("--workers", type=int, default=1, help="worker processes for simulation trials")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="mmv2v", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mmv2v {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("blockage-curve", parents=[common], help="extra loss per blocker and blockage probabilities")
    p.add_argument("--distances", default="10:100:10", help="distance grid in metres")
    p.add_argument("--tx-lane", type=int, default=1)
    p.add_argument("--rx-lane", type=int, default=1)

    p = sub.add_parser("coverage-sweep", parents=[common], help="expected coverage over a parameter grid")
    p.add_argument("--param", choices=tuple(SWEEP_PARAMETERS), default="beamwidth")
    p.add_argument("--values", help="list or start:stop:step (default depends on --param)")
    p.add_argument("--rows", default="low,intermediate,high", help="density rows to sweep over")

    p = sub.add_parser("sinr-cdf", parents=[common], help="pooled top-100 SINR CDF per beamwidth")
    p.add_argument("--beamwidths", default="10,20,30,40,60,90")
    p.add_argument("--grid", default="-20:80:0.5", help="SINR grid in dB")

    p = sub.add_parser("cs-sweep", parents=[common], help="coverage and aggregate throughput over r_E")
    p.add_argument("--values", default="10:150:10", help="carrier sensing ranges in metres")

    p = sub.add_parser("simulate", parents=[common], help="one Monte-Carlo campaign, one row per trial")
    p.add_argument("--records", help="also write per-trial JSON lines here")

    p = sub.add_parser("plot", help="render a CSV produced by another command as SVG")
    p.add_argument("csv", help="input CSV")
    p.add_argument("--kind", choices=("blockage-curve", "coverage-sweep", "sinr-cdf", "cs-sweep", "simulate"),
                   help="expected schema (default: read from the CSV)")
    p.add_argument("--out", help="SVG path (default: CSV path with .svg)")
    return parser


def _run(args) -> None:
    if args.command == "plot":
        cmd_plot(args.csv, args.out, args.kind)
        return
    scenario = resolve_scenario(args)
    workers = max(1, args.workers)
    if args.command == "blockage-curve":
        header, rows = cmd_blockage_curve(scenario, parse_values(args.distances), args.tx_lane, args.rx_lane)
        meta = _meta(scenario, tx_lane=str(args.tx_lane), rx_lane=str(args.rx_lane))
        _emit(args.out, "blockage-curve", meta, header, rows)
        return
    if args.command == "coverage-sweep":
        engine = args.engine or "analytic"
        values = parse_values(args.values or SWEEP_PARAMETERS[args.param][1], args.param != "density_row")
        spec = SweepSpec(args.param, values, engine, args.out)
        rows_sel = parse_values(args.rows, numeric=False)
        trials = _trials(scenario, args) if engine != "analytic" else None
        header, rows = cmd_coverage_sweep(scenario, spec, rows_sel, trials or 1, args.seed, workers)
        meta = _meta(scenario, parameter=args.param, engine=engine,
                     seed=str(args.seed) if trials else None, trials=str(trials) if trials else None)
        _emit(args.out, "coverage-sweep", meta, header, rows)
        return
    if args.command == "sinr-cdf":
        if args.engine == "analytic":
            raise ValidationError("engine", "sinr-cdf is simulation only")
        trials = _trials(scenario, args)
        header, rows = cmd_sinr_cdf(scenario, parse_values(args.beamwidths), parse_values(args.grid),
                                    trials, args.seed, workers)
        meta = _meta(scenario, engine="simulation", seed=str(args.seed), trials=str(trials))
        _emit(args.out, "sinr-cdf", meta, header, rows)
        return
    if args.command == "cs-sweep":
        engine = args.engine or "analytic"
        trials = _trials(scenario, args) if engine != "analytic" else None
        header, rows = cmd_cs_sweep(scenario, parse_values(args.values), engine, trials or 1, args.seed, workers)
        meta = _meta(scenario, engine=engine,
                     seed=str(args.seed) if trials else None, trials=str(trials) if trials else None)
        _emit(args.out, "cs-sweep", meta, header, rows)
        return
    if args.command == "simulate":
        if args.engine == "analytic":
            raise ValidationError("engine", "simulate is simulation only")
        trials = _trials(scenario, args)
        header, rows, summary = cmd_simulate(scenario, trials, args.seed, workers, args.records)
        meta = _meta(scenario, engine="simulation", seed=str(args.seed), trials=str(trials), summary=summary)
        _emit(args.out, "simulate", meta, header, rows)
        return
    raise ConfigError(f"unknown command '{args.command}'")  # pragma: no cover


def _emit(out, schema, meta, header, rows) -> None:
    text = write_table(out, schema, meta, header, rows)
    if out in (None, "-"):
        sys.stdout.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _run(args)
    except MmV2VError as exc:
        print(f"mmv2v: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"mmv2v: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
