"""Excitatory-inhibitory noisy leaky integrate-and-fire networks.

Time evolution of the coupled Fokker-Planck system, steady-state
enumeration and classification, entropy diagnostics and a CSV harness.
"""

from .config import ExperimentConfig, parse_config, serialize_config
from .diagnostics import (
    DecayFit,
    DiagnosticsRecord,
    EntropyReference,
    convergence_check,
    decay_rate_fit,
    entropy_admissibility,
    relative_entropy,
)
from .model import (
    ConstantDiffusion,
    FiringRates,
    Grid,
    NetworkParams,
    NetworkState,
    Population,
    PopulationDensity,
    PotentialParams,
    RateDependentDiffusion,
    maxwellian_initial,
    stationary_profile,
)
from .presets import PRESETS, run_preset
from .solver import RunStatus, SolverConfig, blowup_certificate, run_simulation
from .steady import (
    F_limit,
    F_of_NE,
    classify_regime,
    find_steady_states,
    solve_NI,
)

__all__ = [
    "ConstantDiffusion", "DecayFit", "DiagnosticsRecord", "EntropyReference",
    "ExperimentConfig", "F_limit", "F_of_NE", "FiringRates", "Grid", "NetworkParams",
    "NetworkState", "PRESETS", "Population", "PopulationDensity", "PotentialParams",
    "RateDependentDiffusion", "RunStatus", "SolverConfig", "blowup_certificate",
    "classify_regime", "convergence_check", "decay_rate_fit", "entropy_admissibility",
    "find_steady_states", "maxwellian_initial", "parse_config", "relative_entropy",
    "run_preset", "run_simulation", "serialize_config", "solve_NI", "stationary_profile",
]
