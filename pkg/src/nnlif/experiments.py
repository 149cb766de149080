"""Execute an experiment configuration and write its CSV artifacts."""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .config import ExperimentConfig, InitialSpec
from .diagnostics import COLUMNS, convergence_check
from .errors import NNLIFError
from .model import (
    Grid,
    Population,
    PopulationDensity,
    maxwellian_initial,
    stationary_profile,
)
from .solver import RunOutcome, RunStatus, blowup_certificate, run_simulation
from .steady import bifurcation_sweep, classify_regime, find_steady_states

SERIES_HEADER = ("run",) + COLUMNS + ("status",)
PROFILES_HEADER = ("run", "t", "v", "rho_E", "rho_I")
ROOTS_HEADER = ("N_E_star", "N_I_star", "residual_E", "residual_I")
REGIME_HEADER = ("key", "value")
SWEEP_HEADER = ("param_value", "root_count", "parity", "lhs", "rhs", "F_limit", "error")

EXIT_OK, EXIT_ERROR, EXIT_BLOWUP = 0, 1, 2


@dataclass
class CsvArtifacts:
    """Named tables; each is a header plus rows of plain values."""

    tables: dict[str, tuple[tuple[str, ...], list[tuple]]] = field(default_factory=dict)
    blew_up: bool = False

    def add(self, name: str, header, rows=()):
        self.tables[name] = (tuple(header), list(rows))

    def rows(self, name: str) -> list[tuple]:
        return self.tables[name][1]


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        # shortest repr that round-trips; never fewer digits than the double holds
        return repr(x)
    return str(x)


def render_table(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(x) for x in row])
    return buf.getvalue()


def emit_csv(artifacts: CsvArtifacts, output_dir) -> list[Path]:
    """Write every table as ``<name>.csv``; each file appears atomically."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, (header, rows) in sorted(artifacts.tables.items()):
        target = out / f"{name}.csv"
        fd, tmp = tempfile.mkstemp(dir=out, prefix=f".{name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(render_table(header, rows))
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        written.append(target)
    return written


def snapshot_times(t_end: float) -> list[float]:
    """0, 0.1, 0.5, then doubling from 1 up to t_end, and t_end itself."""
    times = [0.0, 0.1, 0.5]
    t = 1.0
    while t < t_end:
        times.append(t)
        t *= 2.0
    times.append(t_end)
    return sorted({x for x in times if x <= t_end})


def build_initial(spec: InitialSpec, pop: Population, grid: Grid, config: ExperimentConfig):
    if spec.kind == "maxwellian":
        return maxwellian_initial(grid, spec.v0, math.sqrt(spec.var), pop)
    return normalized_profile(pop, spec.N_E, spec.N_I, grid, config)


def normalized_profile(pop, N_E, N_I, grid, config) -> PopulationDensity:
    """Stationary profile rescaled to unit trapezoidal mass on the grid."""
    rho = stationary_profile(pop, N_E, N_I, grid, config.network)
    return PopulationDensity(rho.values / rho.mass(grid), pop)


def _series_rows(label: str, outcome: RunOutcome) -> list[tuple]:
    status = outcome.status.value
    return [(label,) + tuple(r) + (status,) for r in outcome.series.rows]


def _profile_rows(label: str, outcome: RunOutcome, grid: Grid) -> list[tuple]:
    rows = []
    snaps = list(outcome.snapshots)
    final = outcome.final_state
    if not snaps or snaps[-1].t < final.t:
        rows_final = [(final.t, final.rho_E.values, final.rho_I.values)]
    else:
        rows_final = []
    for t, rE, rI in [(s.t, s.rho_E, s.rho_I) for s in snaps] + rows_final:
        rows.extend((label, t, float(v), float(e), float(i))
                    for v, e, i in zip(grid.nodes, rE, rI))
    return rows


def _regime_rows(config: ExperimentConfig, grid: Optional[Grid]) -> list[tuple]:
    rows = [("mode", config.mode),
            ("b_EE", config.network.b_EE), ("b_IE", config.network.b_IE),
            ("b_EI", config.network.b_EI), ("b_II", config.network.b_II),
            ("V_R", config.potentials.V_R), ("V_F", config.potentials.V_F),
            ("scan_N_E_max", config.scan.N_E_max), ("scan_n_points", config.scan.n_points),
            ("scan_rel_min", config.scan.rel_min)]
    if grid is not None:
        rows += [("grid_M", grid.M), ("grid_V_min", grid.potential.V_min), ("grid_dv", grid.dv)]
    return rows


def _classification_rows(config: ExperimentConfig) -> list[tuple]:
    try:
        report = classify_regime(config.network, config.potentials, config.scan)
    except NNLIFError as exc:
        return [("regime_error", f"{type(exc).__name__}: {exc}")]
    return [("lhs", report.lhs), ("rhs", report.rhs), ("parity", report.parity.value),
            ("coupled", report.coupled),
            ("no_steady_state_certified", report.no_steady_state_certified),
            ("two_state_certified", report.two_state_certified),
            ("F_limit", report.F_limit), ("N_E_bar", report.N_E_bar)]


def _simulate(config: ExperimentConfig, grid: Grid, art: CsvArtifacts):
    initials = tuple(build_initial(spec, pop, grid, config)
                     for spec, pop in zip(config.initial, (Population.E, Population.I)))
    times = snapshot_times(config.solver.t_end)
    outcome = run_simulation(initials, config.network, grid, config.solver, snapshot_times=times)
    art.add("series", SERIES_HEADER, _series_rows("run0", outcome))
    art.add("profiles", PROFILES_HEADER, _profile_rows("run0", outcome, grid))
    meta = _regime_rows(config, grid)
    meta.append(("snapshot_times", " ".join(repr(t) for t in times)))
    if config.network.b_EE > 0 and config.network.constant_diffusion:
        cert = blowup_certificate(initials[0], config.network, grid, config.solver.mu_override)
        meta += [("certificate_mu", cert.mu_used), ("certificate_M_mu0", cert.M_mu0),
                 ("certificate_satisfied", cert.satisfied)]
    meta += [("status", outcome.status.value), ("t_stop", outcome.t_stop),
             ("N_E_last", outcome.N_E_last)]
    art.add("regime", REGIME_HEADER, meta)
    art.blew_up = outcome.status is RunStatus.BLOWUP


def _steady_scan(config: ExperimentConfig, grid: Optional[Grid], art: CsvArtifacts,
                 with_profiles: bool = False):
    states = find_steady_states(config.network, config.potentials, config.scan,
                                grid=grid, with_profiles=with_profiles)
    art.add("roots", ROOTS_HEADER,
            [(s.N_E_star, s.N_I_star, s.residuals[0], s.residuals[1]) for s in states])
    meta = _regime_rows(config, grid) + _classification_rows(config)
    meta.append(("root_count", len(states)))
    art.add("regime", REGIME_HEADER, meta)
    return states


def _stability(config: ExperimentConfig, grid: Grid, art: CsvArtifacts):
    states = _steady_scan(config, grid, art)
    runs = []
    for k, s in enumerate(states):
        initials = (normalized_profile(Population.E, s.N_E_star, s.N_I_star, grid, config),
                    normalized_profile(Population.I, s.N_E_star, s.N_I_star, grid, config))
        runs.append((f"root{k}", s.N_E_star, initials))
    if config.initial is not None:
        initials = tuple(build_initial(spec, pop, grid, config)
                         for spec, pop in zip(config.initial, (Population.E, Population.I)))
        runs.append(("initial", None, initials))

    series, profiles = [], []
    meta = art.rows("regime")
    times = snapshot_times(config.solver.t_end)
    meta.append(("snapshot_times", " ".join(repr(t) for t in times)))
    for label, N_star, initials in runs:
        outcome = run_simulation(initials, config.network, grid, config.solver,
                                 snapshot_times=times)
        series += _series_rows(label, outcome)
        profiles += _profile_rows(label, outcome, grid)
        meta.append((f"{label}_status", outcome.status.value))
        art.blew_up |= outcome.status is RunStatus.BLOWUP
        if N_star is not None:
            check = convergence_check(outcome.series.column("t"), outcome.series.column("N_E"),
                                      N_star, outcome.status is RunStatus.BLOWUP)
            meta += [(f"{label}_N_E_star", N_star), (f"{label}_converges", check.converges),
                     (f"{label}_departs", check.departs),
                     (f"{label}_final_deviation", check.final_deviation)]
    art.add("series", SERIES_HEADER, series)
    art.add("profiles", PROFILES_HEADER, profiles)


def _bifurcation(config: ExperimentConfig, art: CsvArtifacts, workers: Optional[int]):
    rows = bifurcation_sweep(config.network, config.potentials, config.sweep.param,
                             config.sweep.values, config.scan, workers=workers)
    roots, sweep = [], []
    for row in rows:
        roots += [(row.value,) + r for r in row.roots]
        reg = row.regime
        sweep.append((row.value, row.count,
                      reg.parity.value if reg else None, reg.lhs if reg else None,
                      reg.rhs if reg else None, reg.F_limit if reg else None, row.error))
    art.add("roots", ("param_value",) + ROOTS_HEADER, roots)
    art.add("sweep", SWEEP_HEADER, sweep)
    meta = _regime_rows(config, None)
    meta.append(("sweep_param", config.sweep.param))
    art.add("regime", REGIME_HEADER, meta)


def _certificate(config: ExperimentConfig, grid: Grid, art: CsvArtifacts):
    rho_E0 = build_initial(config.initial[0], Population.E, grid, config)
    cert = blowup_certificate(rho_E0, config.network, grid, config.solver.mu_override)
    meta = _regime_rows(config, grid)
    meta += [("certificate_mu", cert.mu_used), ("certificate_M_mu0", cert.M_mu0),
             ("certificate_satisfied", cert.satisfied)]
    art.add("regime", REGIME_HEADER, meta)


def run_experiment(config: ExperimentConfig, workers: Optional[int] = None) -> CsvArtifacts:
    """Run ``config`` and return its tables (nothing is written)."""
    art = CsvArtifacts()
    needs_grid = config.mode in ("simulate", "stability", "certificate")
    grid = Grid.build(config.potentials, config.M) if needs_grid else None
    if config.mode == "simulate":
        _simulate(config, grid, art)
    elif config.mode == "steady_scan":
        _steady_scan(config, None, art)
    elif config.mode == "stability":
        _stability(config, grid, art)
    elif config.mode == "bifurcation":
        _bifurcation(config, art, workers)
    else:
        _certificate(config, grid, art)
    return art
