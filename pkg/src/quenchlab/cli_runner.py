"""Configuration-driven scenario runner and command-line interface.

Parses strict JSON run configs, dispatches to the computation modules,
executes single runs and one-axis parameter sweeps (optionally with a
thread pool), and emits deterministic CSV/JSON artifacts plus a manifest
with content hashes.  Identical configs must reproduce identical artifact
bytes; every scenario also evaluates a set of invariant checks whose
outcome drives the process exit code.

Exit codes: 0 success, 2 config error, 3 computation error, 4 invariant
check failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    ComputationError,
    ConfigInvalid,
    IoError,
    QuenchLabError,
)
from . import fermi_impurity, ising_chain, large_dev, quench_ground, spectral_core
from .spectral_core import GROUND_STATE

# ---------------------------------------------------------------------------
# config schema
# ---------------------------------------------------------------------------

_NUM = (int, float)

#: scenario -> parameter name -> (types, required, allowed values or None)
SCENARIO_SCHEMAS: dict[str, dict[str, tuple]] = {
    "tpm": {
        "system": ((str,), True, ("two_level", "random")),
        "beta": ((int, float, str), True, None),
        "dim": ((int,), False, None),
        "protocol": ((str,), False, ("sudden", "random_unitary")),
    },
    "ising": {
        "length": ((int,), True, None),
        "lambda0": (_NUM, True, None),
        "lambda_f": (_NUM, True, None),
        "eta_scale": (_NUM, False, None),
        "w_points": ((int,), False, None),
    },
    "ratefn": {
        "length": ((int,), True, None),
        "lambda0": (_NUM, True, None),
        "lambda_f": (_NUM, True, None),
        "w_points": ((int,), False, None),
        "r_max": (_NUM, False, None),
    },
    "impurity": {
        "n_levels": ((int,), True, None),
        "n_particles": ((int,), True, None),
        "v": (_NUM, True, None),
        "dispersion": ((str,), False, ("linear", "box")),
        "spacing": (_NUM, False, None),
        "beta": ((int, float, str), False, None),
        "t_max": (_NUM, False, None),
        "t_points": ((int,), False, None),
    },
    "thermal": {
        "family": ((str,), True, ("pauli_z", "random")),
        "lambda0": (_NUM, True, None),
        "lambda_f": (_NUM, True, None),
        "beta": (_NUM, True, None),
        "dim": ((int,), False, None),
        "expansion_steps": ((int,), False, None),
    },
}

_TOP_LEVEL_KEYS = {"scenario", "parameters", "output_dir", "seed", "precision", "sweep"}


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration."""

    scenario: str
    parameters: dict
    output_dir: str | None = None
    seed: int = 0
    precision: int = 12
    sweep: dict | None = None


@dataclass
class ResultManifest:
    """Echo of the config plus artifact hashes and check outcomes."""

    config: dict
    artifacts: list[dict] = field(default_factory=list)
    wall_time_s: float = 0.0
    version: str = __version__
    invariant_checks: dict[str, bool] = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(self.invariant_checks.values())

    def as_dict(self) -> dict:
        return {
            "config": self.config,
            "artifacts": self.artifacts,
            "wall_time_s": self.wall_time_s,
            "version": self.version,
            "invariant_checks": self.invariant_checks,
            "all_passed": self.all_passed,
        }


def _beta_value(raw) -> float:
    if raw == "ground":
        return GROUND_STATE
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return float(raw)
    raise ConfigInvalid(f"parameters.beta must be a number or \"ground\", got {raw!r}")


def validate_config(raw: dict, allow_sweep: bool = False) -> RunConfig:
    """Validate a raw config dict against the strict schema.

    Raises :class:`ConfigInvalid` naming the offending key or path.
    """
    if not isinstance(raw, dict):
        raise ConfigInvalid("config root must be a JSON object")
    for key in raw:
        if key not in _TOP_LEVEL_KEYS:
            raise ConfigInvalid(f"unknown key {key!r}")
    scenario = raw.get("scenario")
    if scenario not in SCENARIO_SCHEMAS:
        raise ConfigInvalid(
            f"scenario must be one of {sorted(SCENARIO_SCHEMAS)}, got {scenario!r}")
    params = raw.get("parameters")
    if not isinstance(params, dict):
        raise ConfigInvalid("parameters must be an object")
    schema = SCENARIO_SCHEMAS[scenario]
    for key in params:
        if key not in schema:
            raise ConfigInvalid(f"unknown key parameters.{key}")
    for key, (types, required, allowed) in schema.items():
        if key not in params:
            if required:
                raise ConfigInvalid(f"missing required key parameters.{key}")
            continue
        val = params[key]
        if isinstance(val, bool) or not isinstance(val, types):
            raise ConfigInvalid(f"parameters.{key} has invalid type {type(val).__name__}")
        if allowed is not None and val not in allowed:
            raise ConfigInvalid(f"parameters.{key} must be one of {allowed}, got {val!r}")
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigInvalid("seed must be an integer")
    precision = raw.get("precision", 12)
    if isinstance(precision, bool) or not isinstance(precision, int) or precision < 1:
        raise ConfigInvalid("precision must be a positive integer")
    sweep = raw.get("sweep")
    if sweep is not None:
        if not allow_sweep:
            raise ConfigInvalid("sweep section is only valid for the sweep command")
        if not isinstance(sweep, dict) or set(sweep) != {"parameter", "values"}:
            raise ConfigInvalid("sweep must be {\"parameter\": ..., \"values\": [...]}")
        if sweep["parameter"] not in schema:
            raise ConfigInvalid(f"sweep.parameter {sweep['parameter']!r} not in scenario schema")
        if not isinstance(sweep["values"], list) or not sweep["values"]:
            raise ConfigInvalid("sweep.values must be a non-empty list")
    elif allow_sweep:
        raise ConfigInvalid("missing required key sweep")
    out_dir = raw.get("output_dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigInvalid("output_dir must be a string")
    return RunConfig(scenario=scenario, parameters=dict(params), output_dir=out_dir,
                     seed=seed, precision=precision,
                     sweep=dict(sweep) if sweep else None)


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------


def format_value(value, precision: int) -> str:
    """CSV cell formatting: fixed decimals for floats, inf as a literal."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        if v == 0.0:
            v = 0.0  # normalize negative zero
        return f"{v:.{precision}f}"
    return str(value)


def emit_csv(path: Path, header: list[str], rows: list, precision: int = 12) -> None:
    """Write a CSV artifact: header row, LF endings, UTF-8, fixed decimals."""
    try:
        lines = [",".join(header)]
        for row in rows:
            lines.append(",".join(format_value(v, precision) for v in row))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _json_ready(value):
    if isinstance(value, dict):
        return {str(k): _json_ready(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_ready(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_json_ready(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return v
    return value


def emit_json(path: Path, value) -> None:
    """Write a JSON artifact: sorted keys, LF, UTF-8, inf as string."""
    try:
        text = json.dumps(_json_ready(value), sort_keys=True, indent=2)
        path.write_text(text + "\n", encoding="utf-8", newline="\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------


def _tpm_system(config: RunConfig):
    params = config.parameters
    system = params["system"]
    if system == "two_level":
        h0 = spectral_core.eigendecompose(np.diag([-1.0, 1.0]))
        hf = spectral_core.eigendecompose(np.array([[0.0, 1.0], [1.0, 0.0]]))
    else:
        dim = params.get("dim", 4)
        if dim < 2:
            raise ConfigInvalid("parameters.dim must be >= 2")
        rng = np.random.default_rng(config.seed)
        h0 = spectral_core.random_hermitian(rng, dim)
        hf = spectral_core.random_hermitian(rng, dim)
    return h0, hf


def _run_tpm(config: RunConfig, out: Path) -> tuple[list[Path], dict]:
    params = config.parameters
    beta = _beta_value(params["beta"])
    h0, hf = _tpm_system(config)
    propagator = None
    if params.get("protocol", "sudden") == "random_unitary":
        rng = np.random.default_rng(config.seed + 1)
        propagator = spectral_core.random_unitary(rng, h0.dim)
    quench = spectral_core.QuenchSpec(initial=h0, final=hf, beta=beta,
                                      propagator=propagator)
    dist = spectral_core.tpm_distribution(quench)
    checks = {"normalization": abs(float(dist.probabilities.sum()) - 1.0) < 1e-10}
    u_grid = np.linspace(0.0, 10.0, 21)
    g_atoms = spectral_core.characteristic_function(dist, u_grid)
    g_trace = spectral_core.characteristic_function_trace(quench, u_grid)
    checks["characteristic_routes"] = bool(np.max(np.abs(g_atoms - g_trace)) < 1e-10)
    summary = {
        "mean_work": dist.mean(),
        "work_variance": dist.variance(),
        "adiabatic_shift": dist.adiabatic_shift,
        "n_atoms": len(dist.works),
        "beta": params["beta"],
    }
    if beta != GROUND_STATE and beta > 0:
        report = spectral_core.entropy_production(quench)
        checks["jarzynski"] = abs(report.jarzynski_residual) < 1e-9
        checks["entropy_identity"] = abs(
            report.s_irr - report.relative_entropy) < 1e-8 * max(1.0, abs(report.s_irr))
        checks["pinsker"] = report.s_irr >= report.trace_distance ** 2 / 2.0 - 1e-9
        summary.update({
            "s_irr": report.s_irr,
            "delta_f": report.delta_f,
            "relative_entropy": report.relative_entropy,
            "trace_distance": report.trace_distance,
            "jarzynski_residual": report.jarzynski_residual,
        })
    files = []
    dist_path = out / "work_distribution.csv"
    emit_csv(dist_path, ["work", "probability"],
             list(zip(dist.works, dist.probabilities)), config.precision)
    files.append(dist_path)
    summary_path = out / "summary.json"
    emit_json(summary_path, summary)
    files.append(summary_path)
    return files, checks


def _run_ising(config: RunConfig, out: Path) -> tuple[list[Path], dict]:
    params = config.parameters
    length = params["length"]
    modes = ising_chain.build_modes(length, params["lambda0"], params["lambda_f"])
    span = modes.spectral_span()
    eta = params.get("eta_scale", 1e-3) * span
    n_w = params.get("w_points", 2000)
    w_grid = np.linspace(0.0, span, n_w)
    density = ising_chain.work_density(modes, eta, w_grid)
    mass_total = density.total_mass()
    checks = {
        "density_normalization": abs(mass_total - 1.0) < 1e-6,
        "density_nonnegative": bool(density.density.min() > -1e-9),
    }
    fid2 = ising_chain.delta_atom_weight(modes)
    summary = {
        "length": length,
        "lambda0": params["lambda0"],
        "lambda_f": params["lambda_f"],
        "mass_gap": modes.mass(),
        "ground_shift": modes.ground_shift,
        "fidelity_squared": fid2,
        "surface_free_energy": ising_chain.surface_free_energy(modes),
        "mean_irreversible_work": ising_chain.mean_irreversible_work(modes),
        "total_mass": mass_total,
        "chi2_local": _local_chi2(length, params["lambda0"], params["lambda_f"]),
    }
    files = []
    density_path = out / "work_density.csv"
    emit_csv(density_path, ["w_irr", "density"],
             list(zip(density.w_grid, density.density)), config.precision)
    files.append(density_path)
    summary_path = out / "summary.json"
    emit_json(summary_path, summary)
    files.append(summary_path)
    return files, checks


def _local_chi2(length: int, lam0: float, lam_f: float, step: float = 1e-4) -> float:
    vals = [ising_chain.log_fidelity(ising_chain.build_modes(length, lam0, lam_f + k * step))
            for k in (-2, -1, 0, 1, 2)]
    d2 = (-vals[0] + 16 * vals[1] - 30 * vals[2] + 16 * vals[3] - vals[4]) / (12 * step ** 2)
    return -d2 / length


def _run_ratefn(config: RunConfig, out: Path) -> tuple[list[Path], dict]:
    params = config.parameters
    length = params["length"]
    modes = ising_chain.build_modes(length, params["lambda0"], params["lambda_f"])
    r_max = params.get("r_max", 60.0)
    r_grid = np.concatenate([
        -np.geomspace(1e-3, 4.0, 120)[::-1], [0.0], np.geomspace(1e-3, r_max, 300)])
    f_ex = ising_chain.excess_free_energy(modes, r_grid)
    wbar = ising_chain.mean_irreversible_work(modes) / length
    n_w = params.get("w_points", 400)
    w_grid = np.concatenate([[-wbar / 2], np.linspace(0.0, 2.0 * wbar, n_w)])
    fs2 = 2.0 * ising_chain.surface_free_energy(modes)
    curve = large_dev.rate_curve_from_samples(r_grid, f_ex, w_grid, length, wbar, fs2)
    i_zero = curve.rate_at(0.0)
    rate_fin = curve.rate[np.isfinite(curve.rate)]
    second = np.diff(rate_fin, 2)
    checks = {
        "f_ex_zero": abs(float(np.interp(0.0, r_grid, f_ex))) < 1e-12,
        "rate_nonnegative": bool(np.all(rate_fin >= -1e-12)),
        "rate_convex": bool(np.all(second >= -1e-9)) if len(second) else True,
        "rate_infinite_below_zero": bool(math.isinf(curve.rate[0])),
        "threshold_limit": abs(i_zero - fs2) <= 0.02 * fs2,
    }
    summary = {
        "length": length,
        "mean_intensive_work": wbar,
        "i_zero": i_zero,
        "surface_limit_2fs": fs2,
        "i_zero_rel_err": abs(i_zero - fs2) / fs2 if fs2 > 0 else math.nan,
    }
    files = []
    fex_path = out / "excess_free_energy.csv"
    emit_csv(fex_path, ["r", "f_ex"], list(zip(r_grid, f_ex)), config.precision)
    files.append(fex_path)
    rate_path = out / "rate_function.csv"
    emit_csv(rate_path, ["w", "rate"], list(zip(curve.w_grid, curve.rate)),
             config.precision)
    files.append(rate_path)
    summary_path = out / "summary.json"
    emit_json(summary_path, summary)
    files.append(summary_path)
    return files, checks


def _run_impurity(config: RunConfig, out: Path) -> tuple[list[Path], dict]:
    params = config.parameters
    model = fermi_impurity.build_impurity_model(
        params["n_levels"], params["n_particles"],
        dispersion=params.get("dispersion", "linear"), v=params["v"],
        spacing=params.get("spacing", 1.0 / params["n_levels"]))
    beta = _beta_value(params.get("beta", "ground"))
    t_max = params.get("t_max", 40.0)
    n_t = params.get("t_points", 400)
    t_grid = np.linspace(0.0, t_max, n_t)
    series = fermi_impurity.persistence_determinant(model, t_grid, beta)
    overlap = fermi_impurity.anderson_overlap(model)
    checks = {
        "nu_at_zero": abs(series.nu[0] - 1.0) < 1e-12,
        "nu_in_unit_disk": bool(np.max(np.abs(series.nu)) <= 1.0 + 1e-9),
    }
    if params["v"] == 0.0:
        checks["free_gas_persistence"] = bool(np.max(np.abs(series.nu - 1.0)) < 1e-12)
    summary = {
        "n_levels": model.n_levels,
        "n_particles": model.n_particles,
        "phase_shift_tmatrix": model.phase_shift,
        "phase_shift_levels": fermi_impurity.phase_shift_from_levels(model),
        "alpha_oc": model.alpha_oc,
        "overlap": overlap,
        "adiabatic_probability": overlap ** 2,
        "ground_shift": model.ground_shift(),
    }
    files = []
    nu_path = out / "persistence.csv"
    emit_csv(nu_path, ["t", "re_nu", "im_nu", "abs_nu"],
             [(t, nu.real, nu.imag, abs(nu)) for t, nu in zip(series.t_grid, series.nu)],
             config.precision)
    files.append(nu_path)
    summary_path = out / "summary.json"
    emit_json(summary_path, summary)
    files.append(summary_path)
    return files, checks


def _thermal_family(config: RunConfig) -> spectral_core.HamiltonianFamily:
    params = config.parameters
    if params["family"] == "pauli_z":
        base = np.zeros((2, 2))
        coupling = np.diag([1.0, -1.0])
        return spectral_core.family_from_matrices(base, coupling)
    dim = params.get("dim", 4)
    rng = np.random.default_rng(config.seed)
    return spectral_core.HamiltonianFamily(
        base=spectral_core.random_hermitian(rng, dim),
        coupling=spectral_core.random_hermitian(rng, dim))


def _run_thermal(config: RunConfig, out: Path) -> tuple[list[Path], dict]:
    params = config.parameters
    beta = params["beta"]
    if not beta > 0:
        raise ConfigInvalid("parameters.beta must be positive for thermal runs")
    fam = _thermal_family(config)
    routes = spectral_core.thermal_sudden_work(fam, params["lambda0"],
                                               params["lambda_f"], beta)
    agreement = abs(routes["lhs"] - routes["rhs"]) <= 1e-6 * max(1.0, abs(routes["lhs"]))
    checks = {"mean_work_routes": agreement}
    n_steps = params.get("expansion_steps", 4)
    base_dl = abs(params["lambda_f"] - params["lambda0"])
    rows_out = []
    if base_dl > 0 and n_steps >= 2:
        dlams = base_dl / (2.0 ** np.arange(n_steps))
        expansion = spectral_core.small_quench_entropy_expansion(
            fam, params["lambda0"], dlams, beta)
        rows_out = expansion["rows"]
        checks["expansion_order_cubic"] = bool(2.7 <= expansion["fitted_order"] <= 3.3)
        fitted_order = expansion["fitted_order"]
    else:
        fitted_order = math.nan
    summary = {
        "mean_work_distribution": routes["lhs"],
        "mean_work_free_energy_slope": routes["rhs"],
        "beta": beta,
        "expansion_fitted_order": fitted_order,
    }
    files = []
    if rows_out:
        exp_path = out / "entropy_expansion.csv"
        emit_csv(exp_path, ["dlam", "exact", "quadratic", "residual"], rows_out,
                 config.precision)
        files.append(exp_path)
    summary_path = out / "summary.json"
    emit_json(summary_path, summary)
    files.append(summary_path)
    return files, checks


_SCENARIO_RUNNERS = {
    "tpm": _run_tpm,
    "ising": _run_ising,
    "ratefn": _run_ratefn,
    "impurity": _run_impurity,
    "thermal": _run_thermal,
}

#: summary keys copied into sweep aggregate rows, per scenario
_AGGREGATE_FIELDS = {
    "tpm": ["mean_work", "s_irr"],
    "ising": ["chi2_local", "fidelity_squared"],
    "ratefn": ["i_zero", "surface_limit_2fs"],
    "impurity": ["overlap", "adiabatic_probability", "alpha_oc"],
    "thermal": ["mean_work_distribution", "mean_work_free_energy_slope"],
}


def run_scenario(config: RunConfig, out_dir: Path) -> ResultManifest:
    """Execute one scenario and write its artifacts plus ``manifest.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    runner = _SCENARIO_RUNNERS[config.scenario]
    try:
        files, checks = runner(config, out_dir)
    except (ConfigInvalid, ComputationError):
        raise
    except QuenchLabError as exc:
        raise ComputationError(f"{config.scenario}: {exc}") from exc
    manifest = ResultManifest(config=_config_echo(config))
    manifest.invariant_checks = checks
    manifest.wall_time_s = time.perf_counter() - start
    manifest.artifacts = [
        {"path": f.name, "sha256": _sha256(f)} for f in sorted(files)]
    emit_json(out_dir / "manifest.json", manifest.as_dict())
    return manifest


def _config_echo(config: RunConfig) -> dict:
    echo = {
        "scenario": config.scenario,
        "parameters": config.parameters,
        "seed": config.seed,
        "precision": config.precision,
    }
    if config.sweep is not None:
        echo["sweep"] = config.sweep
    return echo


def sweep(config: RunConfig, out_dir: Path, threads: int = 1) -> ResultManifest:
    """Run one scenario over a declared parameter axis.

    Point evaluations may run concurrently; the aggregate CSV preserves the
    axis order regardless of completion order.
    """
    if config.sweep is None:
        raise ConfigInvalid("missing required key sweep")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    axis = config.sweep["parameter"]
    values = config.sweep["values"]
    start = time.perf_counter()

    def run_point(idx_value):
        idx, value = idx_value
        params = dict(config.parameters)
        params[axis] = value
        point_cfg = validate_config({
            "scenario": config.scenario, "parameters": params,
            "seed": config.seed, "precision": config.precision,
        })
        point_dir = out_dir / f"point_{idx:03d}"
        manifest = run_scenario(point_cfg, point_dir)
        summary = json.loads((point_dir / "summary.json").read_text())
        return manifest, summary

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_point, enumerate(values)))
    else:
        results = [run_point(iv) for iv in enumerate(values)]

    fields = _AGGREGATE_FIELDS[config.scenario]
    header = [axis] + fields
    rows = []
    for value, (_, summary) in zip(values, results):
        rows.append([value] + [summary.get(f, math.nan) for f in fields])
    agg_path = out_dir / "aggregate.csv"
    emit_csv(agg_path, header, rows, config.precision)

    manifest = ResultManifest(config=_config_echo(config))
    manifest.invariant_checks = {
        f"point_{i:03d}_all_passed": m.all_passed for i, (m, _) in enumerate(results)}
    manifest.artifacts = [{"path": agg_path.name, "sha256": _sha256(agg_path)}]
    for i, (point_manifest, _) in enumerate(results):
        for art in point_manifest.artifacts:
            manifest.artifacts.append({
                "path": f"point_{i:03d}/{art['path']}", "sha256": art["sha256"]})
    manifest.wall_time_s = time.perf_counter() - start
    emit_json(out_dir / "manifest.json", manifest.as_dict())
    return manifest


# ---------------------------------------------------------------------------
# invariant battery (quenchlab check)
# ---------------------------------------------------------------------------


def _check_fluctuation_identities() -> bool:
    rng = np.random.default_rng(7)
    for i in range(30):
        dim = 2 + i % 5
        beta = (0.2, 1.0, 5.0)[i % 3]
        h0 = spectral_core.random_hermitian(rng, dim)
        hf = spectral_core.random_hermitian(rng, dim)
        propagator = spectral_core.random_unitary(rng, dim) if i % 2 else None
        quench = spectral_core.QuenchSpec(initial=h0, final=hf, beta=beta,
                                          propagator=propagator)
        dist = spectral_core.tpm_distribution(quench)
        if abs(float(dist.probabilities.sum()) - 1.0) > 1e-10:
            return False
        report = spectral_core.entropy_production(quench)
        if abs(report.jarzynski_residual) > 1e-9:
            return False
        if report.s_irr < report.trace_distance ** 2 / 2.0 - 1e-9:
            return False
    return True


def _check_ising_oracle() -> bool:
    rng = np.random.default_rng(11)
    u_grid = np.linspace(0.0, 20.0, 128)
    for length in (4, 6, 8):
        for _ in range(2):
            lam0, lam_f = rng.uniform(0.4, 2.0, size=2)
            modes = ising_chain.build_modes(length, lam0, lam_f)
            g_free = ising_chain.ising_g_exact(modes, u_grid)
            g_ed = ising_chain.ed_oracle_g(length, lam0, lam_f, u_grid)
            if np.max(np.abs(g_free - g_ed)) > 1e-8:
                return False
            if abs(ising_chain.ground_energy(length, lam0)
                   - ising_chain.ed_ground_energy(length, lam0)) > 1e-9:
                return False
    return True


def _check_surface_identity() -> bool:
    h0 = spectral_core.eigendecompose(np.diag([-1.0, 1.0]))
    hf = spectral_core.eigendecompose(np.array([[0.0, 1.0], [1.0, 0.0]]))
    film = quench_ground.film_partition_function(h0, hf, np.linspace(0.0, 40.0, 400), 1.0)
    fid = quench_ground.ground_fidelity(h0, hf)
    return abs(film.fidelity_squared() - fid ** 2) < 1e-8


def _check_duality() -> bool:
    modes = ising_chain.build_modes(1000, 1.5, 1.2)
    r_grid = np.concatenate([[0.0], np.geomspace(1e-3, 80.0, 400)])
    f_ex = ising_chain.excess_free_energy(modes, r_grid)
    rate, _ = large_dev.legendre_fenchel(r_grid, f_ex, np.array([0.0]))
    fs2 = 2.0 * ising_chain.surface_free_energy(modes)
    return abs(rate[0] - fs2) <= 0.02 * fs2


def _check_determinant_oracle() -> bool:
    model = fermi_impurity.build_impurity_model(6, 3, v=0.8, spacing=1.0 / 6.0)
    t_grid = np.linspace(0.0, 12.0, 60)
    for beta in (math.inf, 2.0):
        det_route = fermi_impurity.persistence_determinant(model, t_grid, beta).nu
        ed_route = fermi_impurity.many_body_persistence(model, t_grid, beta)
        if np.max(np.abs(det_route - ed_route)) > 1e-9:
            return False
    return True


def _check_thermal_routes() -> bool:
    rng = np.random.default_rng(13)
    fam = spectral_core.HamiltonianFamily(
        base=spectral_core.random_hermitian(rng, 4),
        coupling=spectral_core.random_hermitian(rng, 4))
    routes = spectral_core.thermal_sudden_work(fam, 0.3, 0.31, 2.0)
    return abs(routes["lhs"] - routes["rhs"]) <= 1e-6 * max(1.0, abs(routes["lhs"]))


def _check_density_mass() -> bool:
    modes = ising_chain.build_modes(200, 1.5, 1.2)
    span = modes.spectral_span()
    density = ising_chain.work_density(modes, 2.5e-3 * span,
                                       np.linspace(0.0, span, 3000))
    return abs(density.total_mass() - 1.0) < 1e-6


CHECKS = [
    ("fluctuation_identities", _check_fluctuation_identities),
    ("ising_oracle_equivalence", _check_ising_oracle),
    ("fidelity_surface_identity", _check_surface_identity),
    ("rate_function_threshold", _check_duality),
    ("determinant_vs_many_body", _check_determinant_oracle),
    ("thermal_work_routes", _check_thermal_routes),
    ("work_density_normalization", _check_density_mass),
]


def run_checks(stream=sys.stdout) -> bool:
    """Run the invariant battery, printing one line per check."""
    all_ok = True
    for name, fn in CHECKS:
        try:
            ok = fn()
        except QuenchLabError as exc:
            stream.write(f"FAIL {name}: {exc}\n")
            all_ok = False
            continue
        stream.write(f"{'ok  ' if ok else 'FAIL'} {name}\n")
        all_ok = all_ok and ok
    return all_ok


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _thread_count(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("QUENCHLAB_THREADS")
    if env is not None and env.isdigit():
        return max(1, int(env))
    return 1


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="quenchlab",
        description="Quantum work statistics scenario runner.")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in ("run", "sweep"):
        p = sub.add_parser(cmd)
        p.add_argument("config", type=Path)
        p.add_argument("--out", type=Path, default=None)
        p.add_argument("--threads", type=int, default=None)
    sub.add_parser("check")
    args = parser.parse_args(argv)

    if args.command == "check":
        return 0 if run_checks() else 4

    try:
        raw = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 2
    try:
        config = validate_config(raw, allow_sweep=args.command == "sweep")
        out_dir = args.out or (Path(config.output_dir) if config.output_dir else Path("."))
        if args.command == "run":
            manifest = run_scenario(config, out_dir)
        else:
            manifest = sweep(config, out_dir, threads=_thread_count(args))
    except ConfigInvalid as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 2
    except QuenchLabError as exc:
        sys.stderr.write(f"computation error: {exc}\n")
        return 3
    if not manifest.all_passed:
        sys.stderr.write("invariant checks failed\n")
        return 4
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
