"""Explicit solver for the coupled E-I Fokker-Planck system.

Space: finite-difference WENO5 for the drift term (global Lax-Friedrichs
splitting), centred second differences for diffusion, a one-node delta at
V_R for the reset source.  Time: three-stage SSP Runge-Kutta with a CFL
step.  Firing rates are recomputed from the stage densities at every stage.
Inside a time step, interior face fluxes go through a positivity limiter that
falls back toward a first-order flux only where a node would turn negative.

Boundaries: three zero ghosts on the left; odd reflection about V_F on the
right so that rho(V_F) = 0.  Node 0 is updated as a half cell with no flux
through V_min, and the amount reinjected at V_R equals the discrete flux
through the last cell face, so the trapezoidal mass is conserved to
round-off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numba
import numpy as np

from .errors import (
    InvariantViolation,
    NegativeRate,
    NonpositiveDiffusion,
    TimestepCollapse,
    ValidationError,
)
from .model import (
    FiringRates,
    Grid,
    NetworkParams,
    NetworkState,
    Population,
    PopulationDensity,
    diffusion_coefficient,
)

WENO_EPS = 1e-6
RATE_CLAMP = 1e-12

# kernel status codes
_OK, _NONPOS_DIFF, _NEG_RATE, _DT_COLLAPSE, _THRESHOLD, _NONFINITE, _SINGULAR = range(7)


# ---------------------------------------------------------------------------
# kernels

@numba.njit(cache=True, fastmath=True, inline="always")
def _weno_plus(f0, f1, f2, f3, f4):
    """Left-biased WENO5 value at the face between f2 and f3."""
    c0 = f0 - 2.0 * f1 + f2
    c1 = f1 - 2.0 * f2 + f3
    c2 = f2 - 2.0 * f3 + f4
    d0 = f0 - 4.0 * f1 + 3.0 * f2
    d1 = f1 - f3
    d2 = 3.0 * f2 - 4.0 * f3 + f4
    b0 = WENO_EPS + 13.0 / 12.0 * c0 * c0 + 0.25 * d0 * d0
    b1 = WENO_EPS + 13.0 / 12.0 * c1 * c1 + 0.25 * d1 * d1
    b2 = WENO_EPS + 13.0 / 12.0 * c2 * c2 + 0.25 * d2 * d2
    # weights 0.1, 0.6, 0.3 over b^2, scaled by the product of all b^2
    p0 = b1 * b1 * b2 * b2
    p1 = b0 * b0 * b2 * b2
    p2 = b0 * b0 * b1 * b1
    a0 = 0.1 * p0
    a1 = 0.6 * p1
    a2 = 0.3 * p2
    q0 = (2.0 * f0 - 7.0 * f1 + 11.0 * f2) / 6.0
    q1 = (-f1 + 5.0 * f2 + 2.0 * f3) / 6.0
    q2 = (2.0 * f2 + 5.0 * f3 - f4) / 6.0
    return (a0 * q0 + a1 * q1 + a2 * q2) / (a0 + a1 + a2)


@numba.njit(cache=True, fastmath=True)
def _face_fluxes(rho, h_ext, flux):
    """WENO5 numerical fluxes of h*rho at faces -1/2 .. M+1/2.

    ``h_ext`` holds the drift on the grid plus three ghost nodes per side.
    ``flux[k]`` is the flux through the face between nodes k-1 and k.
    """
    n = rho.shape[0]
    M = n - 1
    ext = n + 6
    fp = np.empty(ext)
    fm = np.empty(ext)
    lam = 0.0
    for e in range(ext):
        if abs(h_ext[e]) > lam:
            lam = abs(h_ext[e])
    for e in range(ext):
        j = e - 3
        if j < 0:
            r = 0.0
        elif j <= M:
            r = rho[j]
        else:
            r = -rho[2 * M - j]
        fp[e] = 0.5 * (h_ext[e] + lam) * r
        fm[e] = 0.5 * (h_ext[e] - lam) * r
    for k in range(flux.shape[0]):
        # left stencil nodes k-3..k+1 start at extended index k
        e = k + 2
        plus = _weno_plus(fp[e - 2], fp[e - 1], fp[e], fp[e + 1], fp[e + 2])
        minus = _weno_plus(fm[e + 3], fm[e + 2], fm[e + 1], fm[e], fm[e - 1])
        flux[k] = plus + minus


@numba.njit(cache=True)
def _affine_drift(V0, v_min, dv, n):
    h_ext = np.empty(n + 6)
    for e in range(n + 6):
        h_ext[e] = V0 - (v_min + (e - 3) * dv)
    return h_ext


@numba.njit(cache=True)
def _limit_positivity(rho, h_ext, lam_lf, a, dv, ratio, flux):
    """Blend interior face fluxes toward a first-order flux to keep rho >= 0.

    A forward-Euler update with step ``ratio * dv`` splits per node into
    ``(rho_j - 2 ratio F_{j+1/2}) / 2 + (rho_j + 2 ratio F_{j-1/2}) / 2``.  Each
    face flux is moved toward the Lax-Friedrichs + centred diffusion flux
    just far enough that both halves next to it stay nonnegative (or no
    worse than with the first-order flux).
    """
    M = rho.shape[0] - 1
    two_r = 2.0 * ratio
    for k in range(1, M):
        lo, hi = rho[k - 1], rho[k]
        low = (0.5 * (h_ext[k + 2] * lo + h_ext[k + 3] * hi) - 0.5 * lam_lf * (hi - lo)
               - a * (hi - lo) / dv)
        diff = flux[k] - low
        theta = 1.0
        left = lo - two_r * flux[k]
        if left < 0.0 and diff > 0.0:
            floor = min(0.0, lo - two_r * low)
            theta = min(theta, (lo - two_r * low - floor) / (two_r * diff))
        right = hi + two_r * flux[k]
        if right < 0.0 and diff < 0.0:
            floor = min(0.0, hi + two_r * low)
            theta = min(theta, (hi + two_r * low - floor) / (-two_r * diff))
        if theta < 1.0:
            theta = max(theta, 0.0)
            flux[k] = low + theta * diff


@numba.njit(cache=True)
def _population_rhs(rho, V0, a, v_min, dv, j_R, out, ratio=0.0):
    """Drift + diffusion + reset source for one population.

    The flux through the last face (between nodes M-1 and M) is
    ``h rho_face - a drho/dv`` with a centred face value; it is the firing
    rate and also the amount reinjected at V_R.  Returns that flux.

    ``ratio`` > 0 is dt/dv of the forward-Euler stage the result feeds and
    switches on the positivity limiter.
    """
    n = rho.shape[0]
    M = n - 1
    flux = np.empty(M + 1)
    h_ext = _affine_drift(V0, v_min, dv, n)
    _face_fluxes(rho, h_ext, flux)
    flux[0] += -a * rho[0] / dv
    for k in range(1, M):
        flux[k] += -a * (rho[k] - rho[k - 1]) / dv
    if ratio > 0.0:
        lam_lf = max(abs(h_ext[0]), abs(h_ext[n + 5]))
        _limit_positivity(rho, h_ext, lam_lf, a, dv, ratio, flux)
    v_face = v_min + (M - 0.5) * dv
    flux[M] = (V0 - v_face) * 0.5 * (rho[M - 1] + rho[M]) - a * (rho[M] - rho[M - 1]) / dv
    # half cell at V_min with no flux through the wall
    out[0] = -2.0 * flux[1] / dv
    for j in range(1, M):
        out[j] = -(flux[j + 1] - flux[j]) / dv
    out[M] = 0.0
    out[j_R] += flux[M] / dv
    return flux[M]


@numba.njit(cache=True)
def _boundary_slope(rho, dv):
    M = rho.shape[0] - 1
    return (3.0 * rho[M] - 4.0 * rho[M - 1] + rho[M - 2]) / (2.0 * dv)


@numba.njit(cache=True)
def _rates(rhoE, rhoI, coef, v_min, dv):
    """Boundary-flux firing rates and diffusions (N_E, N_I, a_E, a_I, status).

    N_alpha = (V0_alpha(N) - v_face) c_alpha + a_alpha(N) q_alpha, with c the
    face value and q the one-sided slope of rho at the last face, is linear
    in (N_E, N_I); the 2x2 system loses positivity of its determinant when
    the excitatory feedback through the boundary exceeds one.
    """
    M = rhoE.shape[0] - 1
    v_face = v_min + (M - 0.5) * dv
    cE = 0.5 * (rhoE[M - 1] + rhoE[M])
    cI = 0.5 * (rhoI[M - 1] + rhoI[M])
    qE = (rhoE[M - 1] - rhoE[M]) / dv
    qI = (rhoI[M - 1] - rhoI[M]) / dv
    bEE, bIE, bEI, bII, nu = coef[0], coef[1], coef[2], coef[3], coef[4]
    if coef[5] > 0.5:
        dEE = dIE = dEI = dII = 0.0
        aE0 = coef[6]
        aI0 = coef[7]
    else:
        dEE, dIE, dEI, dII = coef[8], coef[9], coef[10], coef[11]
        aE0 = dEE * nu
        aI0 = dEI * nu
    # (1 - A) N = r
    m11 = 1.0 - (bEE * cE + dEE * qE)
    m12 = bIE * cE - dIE * qE
    m21 = -(bEI * cI + dEI * qI)
    m22 = 1.0 + bII * cI - dII * qI
    r1 = -v_face * cE + aE0 * qE
    r2 = ((bEI - bEE) * nu - v_face) * cI + aI0 * qI
    det = m11 * m22 - m12 * m21
    if not det > 0.0:
        return math.inf, math.inf, 0.0, 0.0, _SINGULAR
    # a triangular system is solved by substitution so that a population
    # not driven by the other gets a rate that does not depend on it at all
    if m12 == 0.0:
        NE = r1 / m11
        NI = (r2 - m21 * NE) / m22
    elif m21 == 0.0:
        NI = r2 / m22
        NE = (r1 - m12 * NI) / m11
    else:
        NE = (r1 * m22 - m12 * r2) / det
        NI = (m11 * r2 - m21 * r1) / det
    aE = aE0 + dEE * NE + dIE * NI
    aI = aI0 + dEI * NE + dII * NI
    if not (math.isfinite(NE) and math.isfinite(NI)):
        return NE, NI, aE, aI, _NONFINITE
    if NE < -RATE_CLAMP or NI < -RATE_CLAMP:
        return NE, NI, aE, aI, _NEG_RATE
    NE = max(NE, 0.0)
    NI = max(NI, 0.0)
    if not (aE > 0.0 and aI > 0.0):
        return NE, NI, aE, aI, _NONPOS_DIFF
    return NE, NI, aE, aI, _OK


@numba.njit(cache=True)
def _coupled_rhs(rhoE, rhoI, coef, v_min, dv, j_R, outE, outI, ratio=0.0):
    NE, NI, aE, aI, status = _rates(rhoE, rhoI, coef, v_min, dv)
    if status != _OK:
        return NE, NI, 0.0, 0.0, status
    bEE, bIE, bEI, bII, nu = coef[0], coef[1], coef[2], coef[3], coef[4]
    V0E = bEE * NE - bIE * NI
    V0I = bEI * NE - bII * NI + (bEI - bEE) * nu
    srcE = _population_rhs(rhoE, V0E, aE, v_min, dv, j_R, outE, ratio)
    srcI = _population_rhs(rhoI, V0I, aI, v_min, dv, j_R, outI, ratio)
    return NE, NI, srcE, srcI, _OK


@numba.njit(cache=True)
def _cfl_dt(NE, NI, aE, aI, coef, v_min, v_max, dv, cfl):
    bEE, bIE, bEI, bII, nu = coef[0], coef[1], coef[2], coef[3], coef[4]
    dt = math.inf
    for pop in range(2):
        if pop == 0:
            V0 = bEE * NE - bIE * NI
            a = aE
        else:
            V0 = bEI * NE - bII * NI + (bEI - bEE) * nu
            a = aI
        hmax = max(abs(V0 - v_min), abs(V0 - v_max))
        if hmax > 0.0:
            dt = min(dt, dv / hmax)
        dt = min(dt, dv * dv / (2.0 * a))
    return cfl * dt


@numba.njit(cache=True)
def _rk3(rhoE, rhoI, dt, coef, v_min, dv, j_R):
    """One SSP-RK3 step in place.  Returns a status code."""
    n = rhoE.shape[0]
    ratio = dt / dv
    kE = np.empty(n)
    kI = np.empty(n)
    uE = np.empty(n)
    uI = np.empty(n)
    st = _coupled_rhs(rhoE, rhoI, coef, v_min, dv, j_R, kE, kI, ratio)[4]
    if st != _OK:
        return st
    for j in range(n):
        uE[j] = rhoE[j] + dt * kE[j]
        uI[j] = rhoI[j] + dt * kI[j]
    st = _coupled_rhs(uE, uI, coef, v_min, dv, j_R, kE, kI, ratio)[4]
    if st != _OK:
        return st
    for j in range(n):
        uE[j] = 0.75 * rhoE[j] + 0.25 * (uE[j] + dt * kE[j])
        uI[j] = 0.75 * rhoI[j] + 0.25 * (uI[j] + dt * kI[j])
    st = _coupled_rhs(uE, uI, coef, v_min, dv, j_R, kE, kI, ratio)[4]
    if st != _OK:
        return st
    for j in range(n):
        uE[j] = rhoE[j] / 3.0 + 2.0 / 3.0 * (uE[j] + dt * kE[j])
        uI[j] = rhoI[j] / 3.0 + 2.0 / 3.0 * (uI[j] + dt * kI[j])
    # keep the old densities if the new ones have no admissible rates
    st = _rates(uE, uI, coef, v_min, dv)[4]
    if st != _OK:
        return st
    rhoE[:] = uE
    rhoI[:] = uI
    return _OK


@numba.njit(cache=True)
def _advance(rhoE, rhoI, t, t_end, coef, v_min, v_max, dv, j_R,
             cfl, dt_floor, threshold, max_steps):
    """Up to ``max_steps`` CFL-limited RK3 steps, stopping at t_end.

    Returns (t, steps_taken, last_dt, status).
    """
    steps = 0
    dt = 0.0
    while steps < max_steps and t < t_end:
        NE, NI, aE, aI, st = _rates(rhoE, rhoI, coef, v_min, dv)
        if st != _OK:
            return t, steps, dt, st
        if NE >= threshold:
            return t, steps, dt, _THRESHOLD
        dt = _cfl_dt(NE, NI, aE, aI, coef, v_min, v_max, dv, cfl)
        if dt < dt_floor:
            return t, steps, dt, _DT_COLLAPSE
        # land exactly on t_end; avoid a sliver step just before it
        if t + dt >= t_end:
            dt = t_end - t
        elif t + 1.5 * dt > t_end:
            dt = 0.5 * (t_end - t)
        st = _rk3(rhoE, rhoI, dt, coef, v_min, dv, j_R)
        # rates about to become unbounded: retry with shorter steps until
        # the threshold is crossed or the step collapses
        while st == _SINGULAR:
            dt *= 0.5
            if dt < dt_floor:
                return t, steps, dt, _DT_COLLAPSE
            st = _rk3(rhoE, rhoI, dt, coef, v_min, dv, j_R)
        if st != _OK:
            return t, steps, dt, st
        t += dt
        steps += 1
    NE, NI, aE, aI, st = _rates(rhoE, rhoI, coef, v_min, dv)
    if st == _OK and NE >= threshold:
        return t, steps, dt, _THRESHOLD
    return t, steps, dt, st


def _coefficients(params: NetworkParams) -> np.ndarray:
    if params.constant_diffusion:
        flag, aE, aI = 1.0, params.diffusion.a_E, params.diffusion.a_I
    else:
        flag, aE, aI = 0.0, 0.0, 0.0
    return np.array([params.b_EE, params.b_IE, params.b_EI, params.b_II, params.nu_ext,
                     flag, aE, aI, params.d_EE, params.d_IE, params.d_EI, params.d_II])


def _raise_for(status: int, where: str):
    if status == _NONPOS_DIFF:
        raise NonpositiveDiffusion(f"diffusion <= 0 {where}")
    if status == _NEG_RATE:
        raise NegativeRate(f"negative firing rate {where}")
    if status == _NONFINITE:
        raise InvariantViolation(f"non-finite firing rate {where}")
    if status == _SINGULAR:
        raise InvariantViolation(f"boundary feedback >= 1, rates unbounded {where}")


# ---------------------------------------------------------------------------
# public operators


def firing_rate_from_density(rho: PopulationDensity, a: float, grid: Grid) -> float:
    """N = -a drho/dv(V_F) with the second-order one-sided difference."""
    values = np.asarray(getattr(rho, "values", rho), dtype=float)
    N = -a * float(_boundary_slope(values, grid.dv))
    if N < -RATE_CLAMP:
        raise NegativeRate(f"firing rate {N:.3e} < 0")
    return max(N, 0.0)


def advection_rhs(rho: PopulationDensity, h_at_nodes: np.ndarray, grid: Grid) -> np.ndarray:
    """-d/dv (h rho) by WENO5 on every node (ghost drift extrapolated linearly)."""
    values = np.asarray(getattr(rho, "values", rho), dtype=float)
    h = np.asarray(h_at_nodes, dtype=float)
    n = values.shape[0]
    h_ext = np.empty(n + 6)
    h_ext[3:n + 3] = h
    k = np.arange(1, 4)
    h_ext[3 - k] = h[0] - k * (h[1] - h[0])
    h_ext[n + 2 + k] = h[-1] + k * (h[-1] - h[-2])
    flux = np.empty(n + 1)
    _face_fluxes(values, h_ext, flux)
    return -(flux[1:] - flux[:-1]) / grid.dv


def diffusion_rhs(rho: PopulationDensity, a: float, grid: Grid) -> np.ndarray:
    """a (rho_{j+1} - 2 rho_j + rho_{j-1}) / dv^2; ghosts 0 on the left, odd on the right."""
    values = np.asarray(getattr(rho, "values", rho), dtype=float)
    padded = np.concatenate(([0.0], values, [-values[-2]]))
    return a * (padded[2:] - 2.0 * padded[1:-1] + padded[:-2]) / grid.dv ** 2


def source_rhs(N: float, grid: Grid) -> np.ndarray:
    """Discrete delta of total trapezoidal mass N at the reset node."""
    out = np.zeros(grid.M + 1)
    out[grid.j_R] = N / grid.dv
    return out


def state_rates(rho_E: np.ndarray, rho_I: np.ndarray, params: NetworkParams,
                grid: Grid) -> FiringRates:
    """Firing rates as the total flux through the last cell face.

    Agrees with the one-sided slope rate to O(dv^2) on smooth profiles and
    stays consistent with the reinjected mass when the layer at V_F is
    thinner than dv.
    """
    NE, NI, _, _, status = _rates(np.asarray(rho_E, float), np.asarray(rho_I, float),
                                  _coefficients(params), grid.potential.V_min, grid.dv)
    _raise_for(status, "extracting rates")
    return FiringRates(float(NE), float(NI))


def make_state(rho_E: PopulationDensity, rho_I: PopulationDensity, params: NetworkParams,
               grid: Grid, t: float = 0.0) -> NetworkState:
    rates = state_rates(rho_E.values, rho_I.values, params, grid)
    return NetworkState(PopulationDensity(rho_E.values, Population.E),
                        PopulationDensity(rho_I.values, Population.I), t, rates)


def coupled_rhs(state: NetworkState, params: NetworkParams,
                grid: Grid) -> tuple[np.ndarray, np.ndarray, FiringRates]:
    """Right-hand sides of both equations and the firing rates they used."""
    outE = np.empty(grid.M + 1)
    outI = np.empty(grid.M + 1)
    NE, NI, _, _, status = _coupled_rhs(
        np.asarray(state.rho_E.values, float), np.asarray(state.rho_I.values, float),
        _coefficients(params), grid.potential.V_min, grid.dv, grid.j_R, outE, outI)
    _raise_for(status, f"at t={state.t}")
    return outE, outI, FiringRates(float(NE), float(NI))


def ssp_rk3_step(rhs, u: np.ndarray, dt: float) -> np.ndarray:
    """Shu-Osher SSP-RK3 step of u' = rhs(u) for any array-valued right-hand side."""
    u1 = u + dt * rhs(u)
    u2 = 0.75 * u + 0.25 * (u1 + dt * rhs(u1))
    return u / 3.0 + 2.0 / 3.0 * (u2 + dt * rhs(u2))


def rk3_step(state: NetworkState, dt: float, params: NetworkParams, grid: Grid) -> NetworkState:
    """One SSP-RK3 step; rates are refreshed at every stage and at the end."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    rhoE = np.array(state.rho_E.values, dtype=float)
    rhoI = np.array(state.rho_I.values, dtype=float)
    status = _rk3(rhoE, rhoI, dt, _coefficients(params), grid.potential.V_min, grid.dv, grid.j_R)
    _raise_for(status, f"in step from t={state.t}")
    return make_state(PopulationDensity(rhoE, Population.E), PopulationDensity(rhoI, Population.I),
                      params, grid, state.t + dt)


def cfl_dt(state: NetworkState, params: NetworkParams, grid: Grid, cfl: float = 0.4,
           dt_floor: float = 1e-10) -> float:
    """cfl * min over populations of (dv / max|h|, dv^2 / 2a)."""
    rates = state.rates
    aE = diffusion_coefficient(Population.E, rates, params)
    aI = diffusion_coefficient(Population.I, rates, params)
    dt = float(_cfl_dt(rates.N_E, rates.N_I, aE, aI, _coefficients(params),
                       grid.potential.V_min, grid.potential.V_F, grid.dv, cfl))
    if dt < dt_floor:
        raise TimestepCollapse(dt, dt_floor)
    return dt


def exponential_moment(rho_E: PopulationDensity, mu: float, grid: Grid) -> float:
    """Trapezoidal integral of exp(mu v) rho_E(v)."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    values = np.asarray(getattr(rho_E, "values", rho_E), dtype=float)
    return grid.integrate(np.exp(mu * grid.nodes) * values)


@dataclass(frozen=True)
class BlowupCertificate:
    mu_used: float
    M_mu0: float
    satisfied: bool


def default_mu(params: NetworkParams, grid: Grid, M_guess: float = 0.0) -> float:
    """max((b_IE M + 2 V_F) / a_m, 1 / b_EE) with M the assumed bound on mean N_I."""
    if not params.b_EE > 0:
        raise ValueError("certificate needs b_EE > 0")
    if params.constant_diffusion:
        a_m = params.diffusion.a_E
    else:
        # a_E >= d_EE nu_ext for all nonnegative rates
        a_m = params.d_EE * params.nu_ext
        if not a_m > 0:
            raise NonpositiveDiffusion("no positive lower bound on a_E")
    return max((params.b_IE * M_guess + 2.0 * grid.potential.V_F) / a_m, 1.0 / params.b_EE)


def blowup_certificate(rho_E0: PopulationDensity, params: NetworkParams, grid: Grid,
                       mu: Optional[float] = None) -> BlowupCertificate:
    """Sufficient condition b_EE mu M_mu(0) > exp(mu V_F) for finite-time blow-up.

    ``satisfied=False`` says nothing about global existence.
    """
    mu_used = default_mu(params, grid) if mu is None else float(mu)
    M0 = exponential_moment(rho_E0, mu_used, grid)
    satisfied = params.b_EE * mu_used * M0 > math.exp(mu_used * grid.potential.V_F)
    return BlowupCertificate(mu_used, M0, bool(satisfied))


# ---------------------------------------------------------------------------
# time loop


class RunStatus(str, Enum):
    COMPLETED = "Completed"
    BLOWUP = "BlowUp"
    DIFFUSION_FAILURE = "DiffusionFailure"


@dataclass(frozen=True)
class SolverConfig:
    cfl: float = 0.4
    t_end: float = 5.0
    blowup_rate_threshold: float = 1e3
    dt_floor: float = 1e-10
    mu_override: Optional[float] = None
    record_every: int = 10
    tol_mass: float = 1e-6
    neg_tol: float = 1e-10

    def __post_init__(self):
        if not 0 < self.cfl <= 1:
            raise ValidationError("cfl must lie in (0, 1]")
        if not self.t_end > 0:
            raise ValidationError("t_end must be positive")
        if not self.dt_floor > 0:
            raise ValidationError("dt_floor must be positive")
        if self.record_every < 1:
            raise ValidationError("record_every must be >= 1")
        if self.mu_override is not None and not self.mu_override > 0:
            raise ValidationError("mu_override must be positive")


@dataclass
class Snapshot:
    t: float
    rho_E: np.ndarray
    rho_I: np.ndarray


@dataclass
class RunOutcome:
    final_state: NetworkState
    status: RunStatus
    series: "DiagnosticsRecord"
    t_stop: Optional[float] = None
    N_E_last: Optional[float] = None
    snapshots: list[Snapshot] = field(default_factory=list)
    message: str = ""


def run_simulation(initials: tuple[PopulationDensity, PopulationDensity], params: NetworkParams,
                   grid: Grid, config: SolverConfig = SolverConfig(),
                   entropy_ref=None, snapshot_times=()) -> RunOutcome:
    """Evolve from ``initials`` until ``config.t_end`` or blow-up.

    Diagnostics are recorded every ``config.record_every`` steps, at each
    requested snapshot time and at the final state.
    """
    from .diagnostics import DiagnosticsRecord, relative_entropy

    rhoE = np.array(initials[0].values, dtype=float)
    rhoI = np.array(initials[1].values, dtype=float)
    for name, rho in (("E", rhoE), ("I", rhoI)):
        if rho.shape != (grid.M + 1,):
            raise ValueError(f"rho_{name} has shape {rho.shape}, grid needs {(grid.M + 1,)}")
        mass = grid.integrate(rho)
        if abs(mass - 1.0) > config.tol_mass:
            raise InvariantViolation(f"initial mass of rho_{name} is {mass!r}")

    coef = _coefficients(params)
    V_min, V_F, dv, j_R = grid.potential.V_min, grid.potential.V_F, grid.dv, grid.j_R
    mu = config.mu_override
    if mu is None and params.b_EE > 0 and params.constant_diffusion:
        mu = default_mu(params, grid)

    series = DiagnosticsRecord()
    snapshots: list[Snapshot] = []
    pending = sorted(float(s) for s in snapshot_times if 0 <= s <= config.t_end)

    def current_state(t):
        return make_state(PopulationDensity(rhoE.copy(), Population.E),
                          PopulationDensity(rhoI.copy(), Population.I), params, grid, t)

    def record(state, dt):
        mE, mI = grid.integrate(state.rho_E.values), grid.integrate(state.rho_I.values)
        M_mu = exponential_moment(state.rho_E, mu, grid) if mu else None
        E_t = relative_entropy(state, entropy_ref, grid) if entropy_ref is not None else None
        series.append(state.t, mE, mI, state.rates.N_E, state.rates.N_I, dt, M_mu, E_t)
        if min(rhoE.min(), rhoI.min()) < -config.neg_tol:
            raise InvariantViolation(
                f"density below -{config.neg_tol:g} at t={state.t}: "
                f"min = {min(rhoE.min(), rhoI.min()):.3e}")
        if max(abs(mE - 1.0), abs(mI - 1.0)) > config.tol_mass:
            raise InvariantViolation(f"mass drift at t={state.t}: ({mE!r}, {mI!r})")

    def finish(status, t, message=""):
        state = current_state(t) if status is not RunStatus.DIFFUSION_FAILURE else last_good
        if not series.rows or series.rows[-1][0] < state.t:
            record(state, last_dt)
        N_last = state.rates.N_E
        return RunOutcome(state, status, series,
                          t_stop=t if status is not RunStatus.COMPLETED else None,
                          N_E_last=N_last if status is RunStatus.BLOWUP else None,
                          snapshots=snapshots, message=message)

    t = 0.0
    last_dt = 0.0
    try:
        last_good = current_state(t)
    except NonpositiveDiffusion as exc:
        last_good = NetworkState(initials[0], initials[1], 0.0, FiringRates())
        return RunOutcome(last_good, RunStatus.DIFFUSION_FAILURE, series, t_stop=0.0,
                          message=str(exc))
    record(last_good, 0.0)
    if pending and pending[0] == 0.0:
        snapshots.append(Snapshot(0.0, rhoE.copy(), rhoI.copy()))
        pending.pop(0)

    prev_NE = last_good.rates.N_E
    while t < config.t_end:
        target = pending[0] if pending else config.t_end
        t, steps, dt, status = _advance(rhoE, rhoI, t, target, coef, V_min, V_F, dv, j_R,
                                        config.cfl, config.dt_floor,
                                        config.blowup_rate_threshold, config.record_every)
        if steps:
            last_dt = dt
        if status == _THRESHOLD:
            return finish(RunStatus.BLOWUP, t, "N_E reached the blow-up threshold")
        if status == _SINGULAR:
            return finish(RunStatus.BLOWUP, t, "excitatory boundary feedback reached one")
        if status == _DT_COLLAPSE:
            NE_now = state_rates(rhoE, rhoI, params, grid).N_E
            if NE_now > prev_NE:
                return finish(RunStatus.BLOWUP, t, "timestep collapse with growing N_E")
            raise TimestepCollapse(dt, config.dt_floor)
        if status == _NONPOS_DIFF:
            return finish(RunStatus.DIFFUSION_FAILURE, t, "diffusion became nonpositive")
        _raise_for(status, f"near t={t}")
        state = current_state(t)
        record(state, last_dt)
        last_good = state
        prev_NE = state.rates.N_E
        if pending and t >= pending[0]:
            snapshots.append(Snapshot(t, rhoE.copy(), rhoI.copy()))
            pending.pop(0)
    return finish(RunStatus.COMPLETED, t)
