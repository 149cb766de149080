"""Parameters, grids, states and the coefficient functions of the E-I model.

Voltages are in the translated, normalized units used throughout the
package: the drift of population ``alpha`` is ``V0_alpha(N_E, N_I) - v`` and
its diffusion is ``a_alpha(N_E, N_I)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Union

import numpy as np
from scipy import integrate

from .errors import DegenerateProfile, DomainTooShort, NonpositiveDiffusion, ValidationError


# density allowed at V_min by the initial-data constructors
LEFT_TAIL_TOL = 1e-8


class Population(str, Enum):
    E = "E"
    I = "I"  # noqa: E741


@dataclass(frozen=True)
class ConstantDiffusion:
    a_E: float = 1.0
    a_I: float = 1.0

    def __post_init__(self):
        if not (self.a_E > 0 and self.a_I > 0):
            raise ValidationError("constant diffusion requires a_E > 0 and a_I > 0")


@dataclass(frozen=True)
class RateDependentDiffusion:
    """a_alpha = d_E^alpha nu_ext + d_E^alpha N_E + d_I^alpha N_I."""


DiffusionMode = Union[ConstantDiffusion, RateDependentDiffusion]


@dataclass(frozen=True)
class NetworkParams:
    """Coupling constants of the network.

    ``b_XY`` / ``d_XY`` is the connectivity / diffusion strength from source
    population ``X`` onto target population ``Y``.
    """

    b_EE: float = 0.0
    b_IE: float = 0.0
    b_EI: float = 0.0
    b_II: float = 0.0
    d_EE: float = 0.0
    d_IE: float = 0.0
    d_EI: float = 0.0
    d_II: float = 0.0
    nu_ext: float = 0.0
    diffusion: DiffusionMode = field(default_factory=ConstantDiffusion)

    def __post_init__(self):
        for name in ("b_EE", "b_IE", "b_EI", "b_II", "d_EE", "d_IE", "d_EI", "d_II", "nu_ext"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValidationError(f"{name} must be finite and >= 0, got {value}")

    @property
    def constant_diffusion(self) -> bool:
        return isinstance(self.diffusion, ConstantDiffusion)

    def couplings(self, pop: Population) -> tuple[float, float]:
        """(excitatory, inhibitory) connectivity onto ``pop``."""
        if Population(pop) is Population.E:
            return self.b_EE, self.b_IE
        return self.b_EI, self.b_II

    def diffusion_couplings(self, pop: Population) -> tuple[float, float]:
        if Population(pop) is Population.E:
            return self.d_EE, self.d_IE
        return self.d_EI, self.d_II

    def drift_offset(self, pop: Population, N_E: float, N_I: float) -> float:
        """V0 such that the drift reads ``V0 - v``."""
        b_E, b_I = self.couplings(pop)
        return b_E * N_E - b_I * N_I + (b_E - self.b_EE) * self.nu_ext

    def replace(self, **changes) -> NetworkParams:
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class PotentialParams:
    V_min: float = -4.0
    V_R: float = 1.0
    V_F: float = 2.0

    def __post_init__(self):
        if not (self.V_min < self.V_R < self.V_F):
            raise ValidationError(
                f"need V_min < V_R < V_F, got {self.V_min}, {self.V_R}, {self.V_F}"
            )


def default_v_min(V_R: float, params: NetworkParams) -> float:
    """Left truncation V_R - 5 max(1, sqrt(a)) for constant diffusion."""
    if params.constant_diffusion:
        a = max(params.diffusion.a_E, params.diffusion.a_I)
    else:
        a = 1.0
    return V_R - 5.0 * max(1.0, math.sqrt(a))


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform node-centred mesh on [V_min, V_F] with V_R on node ``j_R``.

    Build it with :meth:`Grid.build`, which may enlarge ``M`` and push
    ``V_min`` slightly to the left so that the reset voltage is a node.
    """

    potential: PotentialParams
    M: int
    dv: float
    nodes: np.ndarray
    j_R: int

    @classmethod
    def build(cls, potential: PotentialParams, M: int = 800) -> Grid:
        if M < 16:
            raise ValidationError(f"grid needs M >= 16 cells, got {M}")
        V_min, V_R, V_F = potential.V_min, potential.V_R, potential.V_F
        right = math.ceil(M * (V_F - V_R) / (V_F - V_min) - 1e-9)
        dv = (V_F - V_R) / right
        left = math.ceil((V_R - V_min) / dv - 1e-9)
        M_snapped = left + right
        V_min_snapped = V_R - left * dv
        nodes = V_R + dv * np.arange(-left, right + 1, dtype=float)
        nodes[-1] = V_F
        snapped = PotentialParams(V_min=V_min_snapped, V_R=V_R, V_F=V_F)
        return cls(potential=snapped, M=M_snapped, dv=dv, nodes=nodes, j_R=left)

    @property
    def weights(self) -> np.ndarray:
        w = np.full(self.M + 1, self.dv)
        w[0] = w[-1] = 0.5 * self.dv
        return w

    def integrate(self, values: np.ndarray) -> float:
        """Trapezoidal rule on the uniform mesh."""
        values = np.asarray(values, dtype=float)
        return float(self.dv * (values.sum() - 0.5 * (values[0] + values[-1])))


@dataclass(frozen=True, eq=False)
class PopulationDensity:
    values: np.ndarray
    population: Population = Population.E

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "population", Population(self.population))

    def mass(self, grid: Grid) -> float:
        return grid.integrate(self.values)


@dataclass(frozen=True)
class FiringRates:
    N_E: float = 0.0
    N_I: float = 0.0

    def __iter__(self):
        return iter((self.N_E, self.N_I))

    def valid(self) -> bool:
        return all(math.isfinite(n) and n >= 0 for n in self)


@dataclass(frozen=True, eq=False)
class NetworkState:
    rho_E: PopulationDensity
    rho_I: PopulationDensity
    t: float = 0.0
    rates: FiringRates = FiringRates()


def drift_coefficient(pop, v, rates: FiringRates, params: NetworkParams):
    """h^alpha(v) = -v + b_E^alpha N_E - b_I^alpha N_I + (b_E^alpha - b_E^E) nu_ext."""
    V0 = params.drift_offset(pop, rates.N_E, rates.N_I)
    if np.ndim(v):
        return V0 - np.asarray(v, dtype=float)
    return V0 - float(v)


def diffusion_coefficient(pop, rates: FiringRates, params: NetworkParams) -> float:
    pop = Population(pop)
    if params.constant_diffusion:
        a = params.diffusion.a_E if pop is Population.E else params.diffusion.a_I
    else:
        d_E, d_I = params.diffusion_couplings(pop)
        a = d_E * params.nu_ext + d_E * rates.N_E + d_I * rates.N_I
    if not a > 0:
        raise NonpositiveDiffusion(f"a_{pop.value} = {a} <= 0 at rates {rates}")
    return a


def maxwellian_initial(grid: Grid, v0: float, sigma0: float,
                       population: Population = Population.E) -> PopulationDensity:
    """Gaussian with mean ``v0`` and std ``sigma0`` normalized on the grid.

    The Dirichlet value at V_F is imposed before normalizing so that the
    returned array has unit trapezoidal mass.
    """
    if not sigma0 > 0:
        raise ValueError("sigma0 must be positive")
    v = grid.nodes
    values = np.exp(-0.5 * ((v - v0) / sigma0) ** 2) / (math.sqrt(2 * math.pi) * sigma0)
    values[-1] = 0.0
    mass = grid.integrate(values)
    if not mass > 1e-12:
        raise DegenerateProfile(
            f"Maxwellian(v0={v0}, sigma0={sigma0}) has mass {mass:.3e} on the grid"
        )
    values /= mass
    if values[0] > LEFT_TAIL_TOL:
        warnings.warn(f"initial density {values[0]:.2e} at V_min={v[0]:g} exceeds "
                      f"{LEFT_TAIL_TOL:g}; consider a smaller V_min", DomainTooShort, stacklevel=2)
    return PopulationDensity(values, population)


def _gauss_exponent_max(lo: float, hi: float, V0: float) -> float:
    """max of (w - V0)^2 over [lo, hi]."""
    return max((lo - V0) ** 2, (hi - V0) ** 2)


def stationary_profile(pop, N_E: float, N_I: float, grid: Grid,
                       params: NetworkParams, rtol: float = 1e-10) -> PopulationDensity:
    """Stationary density of ``pop`` for the rates (N_E, N_I).

    rho(v) = N/a exp(-(v-V0)^2/2a) int_{max(v,V_R)}^{V_F} exp((w-V0)^2/2a) dw
    """
    pop = Population(pop)
    N = N_E if pop is Population.E else N_I
    if not N > 0:
        raise ValueError(f"stationary profile needs N_{pop.value} > 0, got {N}")
    rates = FiringRates(N_E, N_I)
    a = diffusion_coefficient(pop, rates, params)
    V0 = params.drift_offset(pop, N_E, N_I)
    V_R, V_F = grid.potential.V_R, grid.potential.V_F
    v = grid.nodes
    values = np.zeros_like(v)

    # Below V_R the inner integral is a single constant; scale by its peak
    # exponent so that neither factor overflows.
    K = _gauss_exponent_max(V_R, V_F, V0) / (2 * a)
    inner, _ = integrate.quad(lambda w: math.exp((w - V0) ** 2 / (2 * a) - K), V_R, V_F,
                              epsabs=0.0, epsrel=rtol, limit=200)
    left = v < V_R
    values[left] = np.exp(K - (v[left] - V0) ** 2 / (2 * a)) * inner

    for j in range(grid.j_R, grid.M):
        vj = v[j]
        base = (vj - V0) ** 2
        val, _ = integrate.quad(lambda w: math.exp(((w - V0) ** 2 - base) / (2 * a)), vj, V_F,
                                epsabs=0.0, epsrel=rtol, limit=200)
        values[j] = val
    values *= N / a
    values[-1] = 0.0
    return PopulationDensity(values, pop)
