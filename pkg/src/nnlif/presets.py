"""Named experiments: blow-up runs, steady-state scans, sweeps, stability runs.

Common settings: V_F = 2, V_R = 1, nu_ext = 0, a_E = a_I = 1.  Domain,
grid and sweep grids are recorded in each preset's regime.csv.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np

from .config import ExperimentConfig, InitialSpec, SweepSpec, with_output_dir
from .errors import UnknownPreset
from .experiments import CsvArtifacts, emit_csv, run_experiment
from .model import NetworkParams, PotentialParams
from .solver import SolverConfig


def _net(b_EE, b_IE, b_EI, b_II) -> NetworkParams:
    return NetworkParams(b_EE=b_EE, b_IE=b_IE, b_EI=b_EI, b_II=b_II)


def _maxwellian(v0, var):
    spec = InitialSpec("maxwellian", v0=v0, var=var)
    return (spec, spec)


# blow-up runs get room on the left for inhibition-driven drift
_WIDE = PotentialParams(V_min=-6.0)


def _blowup(b, v0, var, record_every=10):
    return ExperimentConfig(mode="simulate", network=_net(*b), potentials=_WIDE, M=800,
                            solver=SolverConfig(t_end=5.0, record_every=record_every),
                            initial=_maxwellian(v0, var))


def _scan(b):
    return ExperimentConfig(mode="steady_scan", network=_net(*b))


def _sweep(b, param, values):
    return ExperimentConfig(mode="bifurcation", network=_net(*b),
                            sweep=SweepSpec(param, tuple(float(v) for v in values)))


def _stability(b, initial=None):
    # M = 400 on [-6, 2] (dv = 0.02) keeps a t = 10 run to seconds
    return ExperimentConfig(mode="stability", network=_net(*b), potentials=_WIDE, M=400,
                            solver=SolverConfig(t_end=10.0, record_every=50), initial=initial)


B_EE_GRID = np.round(np.arange(0.25, 4.0 + 1e-9, 0.25), 10)
B_IE_GRID = np.round(np.arange(1.0, 10.0 + 1e-9, 0.25), 10)

PRESETS: dict[str, ExperimentConfig] = {
    "blowup_bEE": _blowup((3.0, 0.75, 0.5, 0.25), 0.0, 0.5),
    # diverges within ~200 steps: record each one
    "blowup_ci": _blowup((0.5, 0.25, 0.25, 1.0), 1.83, 0.003, record_every=1),
    "blowup_bII": _blowup((3.0, 0.75, 0.5, 3.0), 0.0, 0.5),
    "caso1_left": _scan((3.0, 0.75, 0.5, 5.0)),
    "caso1_right": _scan((1.8, 0.75, 0.5, 0.25)),
    "caso2_one": _scan((0.5, 0.5, 3.0, 0.5)),
    "caso2_one_b": _scan((3.0, 9.0, 0.5, 0.25)),
    "caso2_three": _scan((3.0, 7.0, 0.5, 0.25)),
    "uncoupled_sweep": _sweep((0.0, 0.0, 0.0, 0.25), "b_EE", B_EE_GRID),
    "crossed_sweep": _sweep((0.0, 0.1, 0.1, 0.25), "b_EE", B_EE_GRID),
    "bIE_bifurcation": _sweep((3.0, 0.0, 0.5, 0.25), "b_IE", B_IE_GRID),
    "stability_two": _stability((1.8, 0.75, 0.5, 0.25), _maxwellian(0.0, 0.25)),
    "stability_three": _stability((3.0, 7.0, 0.5, 0.25)),
}


def preset_config(name: str) -> ExperimentConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise UnknownPreset(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None


def run_preset(name: str, output_dir: Optional[str] = None,
               workers: Optional[int] = None) -> CsvArtifacts:
    """Run a preset; write its CSV files when ``output_dir`` is given."""
    config = preset_config(name)
    if output_dir is not None:
        config = with_output_dir(config, str(Path(output_dir)))
    art = run_experiment(config, workers=workers)
    art.tables["regime"][1].insert(0, ("preset", name))
    if output_dir is not None:
        emit_csv(art, output_dir)
    return art
