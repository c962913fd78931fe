"""Experiment driver: Monte-Carlo sweeps comparing the adaptive scheme
against the fixed-mode and non-cooperative baselines, with CSV and
plot-series emission.

Power convention: the x-axis knob "snr_db" is the per-subcarrier peak
power in dB over unit noise at the 1-km reference gain, so a node's
total budget is N * 10^(snr_db/10).  The absolute noise normalization
(bandwidth and noise figure) is folded into `DEFAULT_NOISE_VARIANCE`;
results are self-describing because the config echo is written next to
every CSV.
"""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import (assign_ftm_modes, solve_ftm, solve_noncoop,
                        solve_proposed)
from .channel import generate_instance
from .dual import SolverOptions
from .model import ScenarioConfig

# Folds the unspecified bandwidth / noise-figure constants into one
# normalization so that desk-scale sweeps operate where the PU rate
# constraints genuinely bind (see README).
DEFAULT_NOISE_VARIANCE = 2000.0

CSV_COLUMNS = ("sweep_var", "sweep_value", "scheme", "realizations",
               "mean_sum_rate", "std_sum_rate", "mean_dual_gap_pct",
               "infeasible_count", "mean_iters", "mean_seconds")

SCHEMES = ("proposed", "ftm", "noncoop")

ENV_PREFIX = "CRNALLOC_"


class ConfigError(ValueError):
    """Invalid experiment configuration (named-key diagnostics)."""


@dataclass
class ExperimentConfig:
    """One reproducible experiment: scenario + sweep + solver budgets."""

    scenario: ScenarioConfig = field(default_factory=lambda: ScenarioConfig(
        noise_variance=DEFAULT_NOISE_VARIANCE))
    sweep_var: str = "snr_db"           # "snr_db" or "rate_req"
    sweep_values: tuple = (0, 2, 4, 6, 8, 10, 12, 14)
    snr_db: float = 10.0                # fixed SNR when sweeping rate_req
    realizations: int = 100
    seed: int = 0
    schemes: tuple = SCHEMES
    parallel: int = 1
    solver_max_iters: int = 3000
    solver_inner_tol: float = 1e-6
    solver_inner_max_iters: int = 120
    solver_tol_abs: float = 1e-4
    solver_tol_rel: float = 1e-6
    # wall-clock timing is inherently nondeterministic; disable it to get
    # byte-identical CSVs across repeat runs
    record_timing: bool = True

    def solver_options(self) -> SolverOptions:
        return SolverOptions(max_iters=self.solver_max_iters,
                             inner_tol=self.solver_inner_tol,
                             inner_max_iters=self.solver_inner_max_iters,
                             tol_abs=self.solver_tol_abs,
                             tol_rel=self.solver_tol_rel)

    def validate(self) -> None:
        if self.sweep_var not in ("snr_db", "rate_req"):
            raise ConfigError(f"sweep_var: unknown value {self.sweep_var!r} "
                              "(expected 'snr_db' or 'rate_req')")
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown:
            raise ConfigError(f"schemes: unknown scheme(s) {sorted(unknown)}")
        if self.realizations < 0:
            raise ConfigError("realizations: must be >= 0")
        if self.parallel < 1:
            raise ConfigError("parallel: must be >= 1")


def peak_power_from_snr(snr_db: float, num_subcarriers: int) -> float:
    """Total per-node power budget for a per-subcarrier SNR in dB."""
    return num_subcarriers * 10.0 ** (snr_db / 10.0)


def config_to_dict(config: ExperimentConfig) -> dict:
    d = dataclasses.asdict(config)
    d["scenario"] = dataclasses.asdict(config.scenario)
    return d


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    scen_data = data.pop("scenario", {})
    scen_fields = {f.name for f in dataclasses.fields(ScenarioConfig)}
    bad = set(scen_data) - scen_fields
    if bad:
        raise ConfigError(f"scenario: unknown key(s) {sorted(bad)}")
    scen_defaults = {"noise_variance": DEFAULT_NOISE_VARIANCE}
    scen_defaults.update(scen_data)
    if "su_weights" in scen_defaults and scen_defaults["su_weights"] is not None:
        scen_defaults["su_weights"] = tuple(scen_defaults["su_weights"])
    scenario = ScenarioConfig(**scen_defaults)
    exp_fields = {f.name for f in dataclasses.fields(ExperimentConfig)}
    bad = set(data) - exp_fields
    if bad:
        raise ConfigError(f"unknown config key(s) {sorted(bad)}")
    for key in ("sweep_values", "schemes"):
        if key in data:
            data[key] = tuple(data[key])
    config = ExperimentConfig(scenario=scenario, **data)
    config.validate()
    return config


def load_config(path, overrides=(), env=None) -> ExperimentConfig:
    """Read a JSON config, then apply dotted-path overrides and
    CRNALLOC_-prefixed environment variables (dots become double
    underscores, e.g. CRNALLOC_SCENARIO__NUM_SUBCARRIERS=32)."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path}: invalid JSON ({exc})") from exc
    if env is None:
        env = os.environ
    env_overrides = []
    for key, value in sorted(env.items()):
        if key.startswith(ENV_PREFIX):
            dotted = key[len(ENV_PREFIX):].lower().replace("__", ".")
            env_overrides.append(f"{dotted}={value}")
    for item in list(env_overrides) + list(overrides):
        _apply_override(data, item)
    return config_from_dict(data)


def _apply_override(data: dict, item: str) -> None:
    if "=" not in item:
        raise ConfigError(f"override {item!r}: expected key=value")
    dotted, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw  # bare strings allowed
    node = data
    parts = dotted.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {dotted!r}: {part!r} is not a table")
    node[parts[-1]] = value


# ---------------------------------------------------------------------------
# per-realization work

def _realization_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _scenario_at(config: ExperimentConfig, sweep_value) -> ScenarioConfig:
    scen = config.scenario
    if config.sweep_var == "snr_db":
        snr = float(sweep_value)
        rate = scen.pu_rate_requirement
    else:
        snr = config.snr_db
        rate = float(sweep_value)
    peak = peak_power_from_snr(snr, scen.num_subcarriers)
    return dataclasses.replace(scen, peak_power_per_user=peak,
                               pu_rate_requirement=rate)


def _run_one(config_dict: dict, sweep_value, index: int) -> dict:
    """One channel realization, all schemes.  Module-level so process
    pools can pickle it."""
    config = config_from_dict(config_dict)
    scen = _scenario_at(config, sweep_value)
    inst_seed = _realization_seed(config.seed, index)
    instance, layout = generate_instance(scen, seed=inst_seed)
    opts = config.solver_options()
    out = {"index": index}
    for scheme in config.schemes:
        t0 = time.perf_counter()
        if scheme == "proposed":
            _, report = solve_proposed(instance, opts=opts)
        elif scheme == "noncoop":
            _, report = solve_noncoop(instance, opts=opts)
        else:
            assignment = assign_ftm_modes(layout, instance)
            _, report = solve_ftm(instance, assignment, opts=opts)
        seconds = (time.perf_counter() - t0) if config.record_timing else 0.0
        gap = 0.0
        if report.dual_bound > 0:
            gap = max(0.0, (report.dual_bound - report.primal_sum_rate)
                      / report.dual_bound * 100.0)
        out[scheme] = {"sum_rate": report.primal_sum_rate,
                       "gap_pct": gap,
                       "feasible": bool(report.feasible),
                       "iters": report.iterations,
                       "seconds": seconds}
    return out


def _aggregate(config: ExperimentConfig, sweep_value, records) -> list:
    """One CSV row per scheme; feasible realizations only enter the
    means, infeasible ones are counted."""
    rows = []
    records = sorted(records, key=lambda r: r["index"])
    for scheme in config.schemes:
        feas = [r[scheme] for r in records if r[scheme]["feasible"]]
        infeas = sum(1 for r in records if not r[scheme]["feasible"])
        rates = np.array([f["sum_rate"] for f in feas])
        rows.append({
            "sweep_var": config.sweep_var,
            "sweep_value": _fmt(float(sweep_value)),
            "scheme": scheme,
            "realizations": len(records),
            "mean_sum_rate": _fmt(rates.mean() if rates.size else 0.0),
            "std_sum_rate": _fmt(rates.std() if rates.size else 0.0),
            "mean_dual_gap_pct": _fmt(
                float(np.mean([f["gap_pct"] for f in feas])) if feas else 0.0),
            "infeasible_count": infeas,
            "mean_iters": _fmt(
                float(np.mean([f["iters"] for f in feas])) if feas else 0.0),
            "mean_seconds": _fmt(
                float(np.mean([f["seconds"] for f in feas])) if feas else 0.0),
        })
    return rows


def _fmt(x: float) -> str:
    return format(float(x), ".10g")


def run_experiment(config: ExperimentConfig, out_dir,
                   csv_name: str = "results.csv") -> Path:
    """Run the configured sweep and write aggregated rows incrementally.

    Returns the CSV path.  A config echo (JSON) is written alongside so
    every results file is reproducible on its own.
    """
    config.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / csv_name
    with open(out_dir / "config.json", "w") as fh:
        json.dump(config_to_dict(config), fh, indent=2, sort_keys=True)
        fh.write("\n")
    config_dict = config_to_dict(config)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        fh.flush()
        for sweep_value in config.sweep_values:
            records = _collect(config, config_dict, sweep_value)
            if not records:  # zero realizations: header-only output
                continue
            for row in _aggregate(config, sweep_value, records):
                writer.writerow(row)
            fh.flush()
    return csv_path


def _collect(config: ExperimentConfig, config_dict: dict, sweep_value):
    indices = range(config.realizations)
    if config.parallel <= 1 or config.realizations <= 1:
        return [_run_one(config_dict, sweep_value, i) for i in indices]
    with concurrent.futures.ProcessPoolExecutor(config.parallel) as pool:
        futures = [pool.submit(_run_one, config_dict, sweep_value, i)
                   for i in indices]
        return [f.result() for f in futures]


# ---------------------------------------------------------------------------
# plot-data emission

def emit_plot_data(result_csv, out_dir) -> list:
    """One whitespace-delimited series file per (figure, scheme) with
    columns x, mean, std copied verbatim from the CSV (bit-exact
    round-trip).  Returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    series = {}
    with open(result_csv, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or \
                tuple(reader.fieldnames) != CSV_COLUMNS:
            raise ValueError(f"{result_csv}:1: malformed CSV header "
                             f"{reader.fieldnames!r}")
        for lineno, row in enumerate(reader, start=2):
            if any(row.get(c) is None for c in CSV_COLUMNS):
                raise ValueError(f"{result_csv}:{lineno}: short row")
            figure = f"sum_rate_vs_{row['sweep_var']}"
            key = (figure, row["scheme"])
            series.setdefault(key, []).append(
                (row["sweep_value"], row["mean_sum_rate"],
                 row["std_sum_rate"]))
    paths = []
    for (figure, scheme), points in sorted(series.items()):
        path = out_dir / f"{figure}_{scheme}.dat"
        with open(path, "w") as fh:
            fh.write("# x mean std\n")
            for x, mean, std in points:
                fh.write(f"{x} {mean} {std}\n")
        paths.append(path)
    return paths
