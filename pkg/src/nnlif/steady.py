"""Steady states of the coupled E-I system.

A steady state is a pair of positive rates solving ``N_E I_1 = 1`` and
``N_I I_2 = 1``.  ``I_2`` is increasing in ``N_I`` so the inhibitory
equation is solved first by bisection for every ``N_E``; the remaining
scalar equation ``F(N_E) = N_E I_1(N_E, N_I(N_E)) = 1`` is scanned for
sign changes.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy import integrate

from .errors import (
    BracketFailure,
    NNLIFError,
    QuadratureFailure,
    ScanTooCoarse,
    UndefinedLimit,
    ValidationError,
)
from .model import (
    FiringRates,
    Grid,
    NetworkParams,
    Population,
    PopulationDensity,
    PotentialParams,
    diffusion_coefficient,
    stationary_profile,
)

QUAD_RTOL = 1e-10
BISECTION_TOL = 1e-8
BRACKET_CAP = 1e6
# log(1e16): integrand tail below 1e-16 relative to O(1) values is dropped
_TAIL_LOG = 36.85
# exp(w^2 / 2) overflows a double beyond this
_OVERFLOW_W = 37.5


@dataclass(frozen=True)
class ReducedVariables:
    w_F: float
    w_R: float
    wt_F: float
    wt_R: float


def reduced_variables(N_E: float, N_I: float, params: NetworkParams,
                      potentials: PotentialParams) -> ReducedVariables:
    rates = FiringRates(N_E, N_I)
    out = []
    for pop in (Population.E, Population.I):
        a = diffusion_coefficient(pop, rates, params)
        V0 = params.drift_offset(pop, N_E, N_I)
        root = math.sqrt(a)
        out += [(potentials.V_F - V0) / root, (potentials.V_R - V0) / root]
    return ReducedVariables(*out)


def _truncation(w_F: float, w_R: float) -> float:
    # integrand <= (w_F - w_R) exp(-s^2/2 + s w_F); cut where that is < 1e-16
    L = _TAIL_LOG + math.log(max(1.0, w_F - w_R))
    return w_F + math.sqrt(w_F * w_F + 2.0 * L)


def _quad(f, lo, hi, what):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=QUAD_RTOL, limit=400)
        except integrate.IntegrationWarning as exc:
            raise QuadratureFailure(f"{what}: {exc}") from None
    return val


def flux_integral(w_F: float, w_R: float) -> float:
    """int_0^inf exp(-s^2/2) (exp(s w_F) - exp(s w_R)) / s ds.

    Grows like exp(w_F^2 / 2); returns ``inf`` once that overflows.
    """
    gap = w_F - w_R
    if gap == 0.0:
        return 0.0
    if w_F > _OVERFLOW_W:
        return math.inf

    def integrand(s):
        if s == 0.0:
            return gap
        return -math.exp(-0.5 * s * s + s * w_F) * math.expm1(-s * gap) / s

    return _quad(integrand, 0.0, _truncation(w_F, w_R), "flux integral")


def slope_integral(w_F: float, w_R: float) -> float:
    """int_0^inf exp(-s^2/2) (exp(s w_F) - exp(s w_R)) ds."""
    gap = w_F - w_R
    if gap == 0.0:
        return 0.0
    if w_F > _OVERFLOW_W:
        return math.inf

    def integrand(s):
        return -math.exp(-0.5 * s * s + s * w_F) * math.expm1(-s * gap)

    return _quad(integrand, 0.0, _truncation(w_F, w_R), "slope integral")


def I1_eval(N_E: float, N_I: float, params: NetworkParams, potentials: PotentialParams) -> float:
    r = reduced_variables(N_E, N_I, params, potentials)
    return flux_integral(r.w_F, r.w_R)


def I2_eval(N_E: float, N_I: float, params: NetworkParams, potentials: PotentialParams) -> float:
    r = reduced_variables(N_E, N_I, params, potentials)
    return flux_integral(r.wt_F, r.wt_R)


def bisect(f, lo: float, hi: float, tol: float = BISECTION_TOL, max_iter: int = 200):
    """Bisection on a sign change of ``f`` until ``|f(mid)| <= tol``.

    Returns ``(root, residual)``.  Stops early if the bracket can no longer
    be halved in floating point, returning the best endpoint seen.
    """
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0.0:
        return lo, 0.0
    if f_hi == 0.0:
        return hi, 0.0
    if (f_lo > 0) == (f_hi > 0):
        raise BracketFailure(f"no sign change on [{lo}, {hi}]")
    best = (lo, f_lo) if abs(f_lo) < abs(f_hi) else (hi, f_hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        f_mid = f(mid)
        if abs(f_mid) < abs(best[1]):
            best = (mid, f_mid)
        if abs(f_mid) <= tol:
            return mid, f_mid
        if (f_mid > 0) == (f_hi > 0):
            hi, f_hi = mid, f_mid
        else:
            lo, f_lo = mid, f_mid
    return best


def _NI_residual(N_E, params, potentials):
    return lambda N_I: N_I * I2_eval(N_E, N_I, params, potentials) - 1.0


def solve_NI_with_residual(N_E: float, params: NetworkParams,
                           potentials: PotentialParams) -> tuple[float, float]:
    if N_E < 0:
        raise ValueError("N_E must be >= 0")
    g = _NI_residual(N_E, params, potentials)
    B = 1.0
    while g(B) <= 0:
        B *= 2.0
        if B > BRACKET_CAP:
            raise BracketFailure(f"N_I bracket exceeded {BRACKET_CAP:g} at N_E={N_E}")
    return bisect(g, 0.0, B)


def solve_NI(N_E: float, params: NetworkParams, potentials: PotentialParams) -> float:
    """Unique N_I with N_I I_2(N_E, N_I) = 1, by bisection (|residual| <= 1e-8)."""
    return solve_NI_with_residual(N_E, params, potentials)[0]


def NI_slope(N_E: float, params: NetworkParams, potentials: PotentialParams,
             N_I: Optional[float] = None) -> float:
    """dN_I/dN_E = b_EI N_I^2 I / (sqrt(a_I) + b_II N_I^2 I) for constant a_I."""
    if not params.constant_diffusion:
        raise NotImplementedError("closed-form slope assumes constant diffusion")
    if N_I is None:
        N_I = solve_NI(N_E, params, potentials)
    if params.b_EI == 0.0:
        return 0.0
    r = reduced_variables(N_E, N_I, params, potentials)
    I = slope_integral(r.wt_F, r.wt_R)
    sa = math.sqrt(params.diffusion.a_I)
    q = N_I * N_I * I
    return params.b_EI * q / (sa + params.b_II * q)


def F_of_NE(N_E: float, params: NetworkParams, potentials: PotentialParams) -> float:
    """F(N_E) = N_E I_1(N_E, N_I(N_E))."""
    if N_E == 0.0:
        return 0.0
    N_I = solve_NI(N_E, params, potentials)
    return N_E * I1_eval(N_E, N_I, params, potentials)


def F_limit(params: NetworkParams, potentials: PotentialParams) -> float:
    """lim F(N_E) as N_E -> infinity, in the parameter cases where it is known."""
    gap = potentials.V_F - potentials.V_R
    bEE, bIE, bEI, bII = params.b_EE, params.b_IE, params.b_EI, params.b_II
    denom = bEE * (gap + bII) - bIE * bEI
    cross, pure = bEI * bIE, bEE * bII
    if bIE == 0.0 and bEI == 0.0 and bEE > 0.0:
        return gap / bEE
    if cross < pure and denom > 0:
        return gap * (gap + bII) / denom
    if cross > pure and bIE > 0:
        if bEI / (gap + bII) < bEE / bIE:
            return gap * (gap + bII) / denom
        if bEI / (gap + bII) > bEE / bIE:
            return math.inf
    raise UndefinedLimit(
        f"limit of F not classified for b=({bEE}, {bIE}, {bEI}, {bII})"
    )


@dataclass(frozen=True)
class ScanSettings:
    N_E_max: float = 50.0
    n_points: int = 512
    # lower end of the log grid, relative to N_E_max
    rel_min: float = 1e-8

    def __post_init__(self):
        if self.n_points < 64:
            raise ValidationError("scan needs n_points >= 64")
        if not self.N_E_max > 0:
            raise ValidationError("N_E_max must be positive")

    def points(self) -> np.ndarray:
        return np.geomspace(self.N_E_max * self.rel_min, self.N_E_max, self.n_points)


@dataclass(eq=False)
class SteadyState:
    N_E_star: float
    N_I_star: float
    residuals: tuple[float, float]
    profile_E: Optional[PopulationDensity] = None
    profile_I: Optional[PopulationDensity] = None

    @property
    def rates(self) -> FiringRates:
        return FiringRates(self.N_E_star, self.N_I_star)


@dataclass
class ScanResult:
    N_E: np.ndarray
    F: np.ndarray
    brackets: list[tuple[int, int]]
    suspected_double_roots: list[float] = field(default_factory=list)


def scan_F(params: NetworkParams, potentials: PotentialParams,
           scan: ScanSettings = ScanSettings()) -> ScanResult:
    """Evaluate F on the log grid and locate sign changes of F - 1."""
    xs = scan.points()
    Fs = np.array([F_of_NE(x, params, potentials) for x in xs])
    d = Fs - 1.0
    brackets = [(i, i + 1) for i in range(len(xs) - 1)
                if d[i] == 0.0 or (d[i] > 0) != (d[i + 1] > 0)]
    for (i, _), (k, _) in zip(brackets, brackets[1:]):
        if k == i + 1:
            warnings.warn(f"adjacent F-1 sign changes near N_E={xs[k]:.4g}; refine the scan",
                          ScanTooCoarse, stacklevel=2)
    suspected = []
    a = np.abs(d)
    for i in range(1, len(xs) - 1):
        if a[i] < 1e-4 and a[i] <= a[i - 1] and a[i] <= a[i + 1] \
                and (d[i - 1] > 0) == (d[i + 1] > 0) and d[i] != 0.0:
            suspected.append(float(xs[i]))
    return ScanResult(xs, Fs, brackets, suspected)


def _refine_root(lo, hi, params, potentials):
    def residual(N_E):
        return F_of_NE(N_E, params, potentials) - 1.0

    N_E, res_E = bisect(residual, lo, hi)
    N_I, res_I = solve_NI_with_residual(N_E, params, potentials)
    return N_E, N_I, res_E, res_I


def find_steady_states(params: NetworkParams, potentials: PotentialParams,
                       scan: ScanSettings = ScanSettings(), grid: Optional[Grid] = None,
                       with_profiles: bool = True) -> list[SteadyState]:
    """All steady states with N_E in the scan range, sorted by N_E.

    Tangential roots (no sign change) are not counted; they are reported as a
    ``ScanTooCoarse`` warning.
    """
    result = scan_F(params, potentials, scan)
    for x in result.suspected_double_roots:
        warnings.warn(f"suspected double root of F=1 near N_E={x:.6g}", ScanTooCoarse,
                      stacklevel=2)
    states: list[SteadyState] = []
    for i, k in result.brackets:
        N_E, N_I, res_E, res_I = _refine_root(result.N_E[i], result.N_E[k], params, potentials)
        if states and abs(N_E - states[-1].N_E_star) < 1e-6:
            continue
        states.append(SteadyState(N_E, N_I, (res_E, res_I)))
    if with_profiles and states:
        if grid is None:
            grid = Grid.build(potentials)
        for st in states:
            st.profile_E = stationary_profile(Population.E, st.N_E_star, st.N_I_star, grid, params)
            st.profile_I = stationary_profile(Population.I, st.N_E_star, st.N_I_star, grid, params)
    return states


class Parity(str, Enum):
    EVEN = "even"
    ODD = "odd"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class RegimeReport:
    lhs: float
    rhs: float
    parity: Parity
    coupled: bool
    no_steady_state_certified: bool
    two_state_certified: bool
    F_limit: Optional[float]
    N_E_bar: Optional[float] = None


def parity_terms(params: NetworkParams, potentials: PotentialParams) -> tuple[float, float]:
    gap = potentials.V_F - potentials.V_R
    rhs = gap * (params.b_EE - params.b_II) + params.b_EE * params.b_II - params.b_IE * params.b_EI
    return gap * gap, rhs


def _largest_fixed_point(params, potentials, scan):
    """Largest N with N = 2 (b_IE N_I(N) + V_F) / b_EE on the scan grid."""
    V_F = potentials.V_F

    def h(N):
        return N - 2.0 * (params.b_IE * solve_NI(N, params, potentials) + V_F) / params.b_EE

    xs = scan.points()
    hs = [h(x) for x in xs]
    for i in range(len(xs) - 2, -1, -1):
        if (hs[i] > 0) != (hs[i + 1] > 0):
            return bisect(h, xs[i], xs[i + 1])[0]
    return None


def classify_regime(params: NetworkParams, potentials: PotentialParams,
                    scan: ScanSettings = ScanSettings()) -> RegimeReport:
    lhs, rhs = parity_terms(params, potentials)
    if lhs < rhs:
        parity = Parity.EVEN
    elif lhs > rhs:
        parity = Parity.ODD
    else:
        parity = Parity.DEGENERATE
    coupled = params.b_IE > 0 and params.b_EI > 0
    try:
        limit = F_limit(params, potentials)
    except UndefinedLimit:
        limit = None

    gap = potentials.V_F - potentials.V_R
    no_state = False
    N_E_bar = None
    if parity is Parity.EVEN and params.b_EE > 0:
        N_E_bar = _largest_fixed_point(params, potentials, scan)
        if N_E_bar is not None:
            cross = (params.b_EI * params.b_IE / params.b_II if params.b_II > 0
                     else (0.0 if params.b_EI * params.b_IE == 0 else math.inf))
            I1_0 = I1_eval(0.0, solve_NI(0.0, params, potentials), params, potentials)
            bound = max(
                I1_0 * 2.0 * (potentials.V_F + params.b_IE * solve_NI(N_E_bar, params, potentials)),
                cross,
                2.0 * gap,
            )
            no_state = bound < params.b_EE

    two_states = False
    if parity is Parity.EVEN and params.constant_diffusion:
        a_E = params.diffusion.a_E
        N_low = 2.0 * a_E / gap ** 2
        rhs22 = (potentials.V_R + params.b_IE * solve_NI(N_low, params, potentials)) * gap ** 2
        two_states = 2.0 * a_E * params.b_EE < rhs22

    return RegimeReport(lhs, rhs, parity, coupled, no_state, two_states, limit, N_E_bar)


SWEEPABLE = ("b_EE", "b_IE", "b_EI", "b_II")


@dataclass
class SweepRow:
    value: float
    roots: list[tuple[float, float, float, float]]
    regime: Optional[RegimeReport]
    error: Optional[str] = None

    @property
    def count(self) -> int:
        return len(self.roots)


def _sweep_point(args) -> SweepRow:
    params, potentials, name, value, scan = args
    try:
        p = params.replace(**{name: value})
        states = find_steady_states(p, potentials, scan, with_profiles=False)
        regime = classify_regime(p, potentials, scan)
    except NNLIFError as exc:
        return SweepRow(value, [], None, f"{type(exc).__name__}: {exc}")
    roots = [(s.N_E_star, s.N_I_star, *s.residuals) for s in states]
    return SweepRow(value, roots, regime)


def worker_count(workers: Optional[int] = None) -> int:
    if workers is None:
        workers = int(os.environ.get("NNLIF_THREADS", "1"))
    return max(1, workers)


def bifurcation_sweep(params_template: NetworkParams, potentials: PotentialParams,
                      sweep_param: str, values: Sequence[float],
                      scan: ScanSettings = ScanSettings(),
                      workers: Optional[int] = None) -> list[SweepRow]:
    """Steady states and regime for each value of one connectivity parameter.

    Rows come back in the order of ``values`` whatever the worker count.
    """
    if sweep_param not in SWEEPABLE:
        raise ValueError(f"cannot sweep {sweep_param!r}; choose one of {SWEEPABLE}")
    jobs = [(params_template, potentials, sweep_param, float(v), scan) for v in values]
    n = worker_count(workers)
    if n == 1 or len(jobs) == 1:
        return [_sweep_point(j) for j in jobs]
    with warnings.catch_warnings(), ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(_sweep_point, jobs))
