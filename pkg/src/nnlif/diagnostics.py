"""Run diagnostics: recorded time series and the quadratic relative entropy."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InsufficientDecay, ReferenceDegenerate
from .model import Grid, NetworkParams, NetworkState, PopulationDensity

COLUMNS = ("t", "mass_E", "mass_I", "N_E", "N_I", "dt", "M_mu", "E_t")


@dataclass
class DiagnosticsRecord:
    """Append-only, strictly time-ordered rows of run diagnostics."""

    rows: list[tuple] = field(default_factory=list)

    def append(self, t, mass_E, mass_I, N_E, N_I, dt, M_mu=None, E_t=None):
        if self.rows and not t > self.rows[-1][0]:
            raise ValueError(f"time {t} does not advance past {self.rows[-1][0]}")
        self.rows.append((float(t), float(mass_E), float(mass_I), float(N_E), float(N_I),
                          float(dt), None if M_mu is None else float(M_mu),
                          None if E_t is None else float(E_t)))

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        k = COLUMNS.index(name)
        return np.array([np.nan if r[k] is None else r[k] for r in self.rows], dtype=float)

    def snapshot(self) -> list[tuple]:
        return list(self.rows)


@dataclass(frozen=True, eq=False)
class EntropyReference:
    rho_E: PopulationDensity
    rho_I: PopulationDensity
    N_E: float
    N_I: float
    eps_floor: float = 1e-12

    def __post_init__(self):
        if not (self.N_E > 0 and self.N_I > 0):
            raise ValueError("reference rates must be positive")


def _population_entropy(rho, ref, eps_floor, grid):
    rho = np.asarray(rho, dtype=float)
    ref = np.asarray(ref, dtype=float)
    keep = ref >= eps_floor
    excluded = grid.integrate(np.where(keep, 0.0, np.abs(rho) + ref))
    integrand = np.zeros_like(ref)
    integrand[keep] = (rho[keep] - ref[keep]) ** 2 / ref[keep]
    return grid.integrate(integrand), excluded


def relative_entropy(state: NetworkState, ref: EntropyReference, grid: Grid,
                     max_excluded: float = 1e-6) -> float:
    """sum over populations of  int rho_inf (rho / rho_inf - 1)^2 dv.

    Nodes where the reference is below ``ref.eps_floor`` (V_F itself and the
    far left tail) are left out; the mass they carry must stay below
    ``max_excluded``.
    """
    total = 0.0
    for rho, r in ((state.rho_E.values, ref.rho_E.values), (state.rho_I.values, ref.rho_I.values)):
        value, excluded = _population_entropy(rho, r, ref.eps_floor, grid)
        if excluded > max_excluded:
            raise ReferenceDegenerate(f"excluded mass {excluded:.3e} > {max_excluded:g}")
        total += value
    return total


def entropy_threshold(params: NetworkParams) -> float:
    """1 / (2 max(b_EE + b_IE, b_EI + b_II))."""
    worst = max(params.b_EE + params.b_IE, params.b_EI + params.b_II)
    return math.inf if worst == 0 else 1.0 / (2.0 * worst)


def entropy_admissibility(ref: EntropyReference, initial_state: NetworkState,
                          params: NetworkParams, grid: Grid) -> bool:
    """Whether E[0] is below the smallness threshold of the decay estimate."""
    return relative_entropy(initial_state, ref, grid) < entropy_threshold(params)


@dataclass(frozen=True)
class DecayFit:
    mu_hat: float
    r_squared: float
    window: tuple[float, float]
    n_samples: int


def decay_rate_fit(series, floor: float = 1e-10, min_samples: int = 10,
                   monotone_tol: float = 1e-8) -> DecayFit:
    """Least-squares rate of log E[t] over the longest monotone tail.

    ``series`` is a :class:`DiagnosticsRecord` or a pair ``(t, E)`` of arrays.
    """
    if isinstance(series, DiagnosticsRecord):
        t, E = series.column("t"), series.column("E_t")
    else:
        t, E = (np.asarray(x, dtype=float) for x in series)
    ok = np.isfinite(E) & (E > floor)
    t, E = t[ok], E[ok]
    if len(E) < min_samples:
        raise InsufficientDecay(f"only {len(E)} entropy samples above {floor:g}")
    start = len(E) - 1
    while start > 0 and E[start - 1] >= E[start] - monotone_tol:
        start -= 1
    t, E = t[start:], E[start:]
    if len(E) < min_samples or not E[0] > E[-1]:
        raise InsufficientDecay("no monotone decreasing window of length >= "
                                f"{min_samples}")
    y = np.log(E)
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 0.0
    if not slope < 0:
        raise InsufficientDecay(f"fitted slope {slope:.3e} is not negative")
    return DecayFit(-float(slope), r2, (float(t[0]), float(t[-1])), len(E))


@dataclass(frozen=True)
class ConvergenceCheck:
    converges: bool
    departs: bool
    final_deviation: float
    max_late_deviation: float


def convergence_check(t, N_E, N_E_star: float, blew_up: bool = False,
                      tol: float = 1e-3) -> ConvergenceCheck:
    """Whether a rate trajectory settles at ``N_E_star`` or leaves it.

    Over the final half of the run the deviation |N_E - N_E_star| must stay
    below ``tol`` and end no higher than it started, up to ``tol / 10``.
    The slack absorbs the O(dv^2) offset between the continuous steady rate
    and the equilibrium of the discrete scheme.  A trajectory departs when
    it blows up or ends more than ``10 tol`` away.
    """
    t = np.asarray(t, dtype=float)
    d = np.abs(np.asarray(N_E, dtype=float) - N_E_star)
    if len(t) < 2:
        raise ValueError("need at least two samples")
    late = d[t >= 0.5 * t[-1]]
    if not np.all(np.isfinite(late)):
        return ConvergenceCheck(False, True, math.inf, math.inf)
    worst = float(late.max())
    converges = (not blew_up and worst <= tol and late[-1] <= late[0] + 0.1 * tol)
    departs = blew_up or float(d[-1]) > 10.0 * tol
    return ConvergenceCheck(bool(converges), bool(departs), float(d[-1]), worst)
