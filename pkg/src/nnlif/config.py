"""Flat ``key = value`` experiment configuration.

One assignment per line, ``#`` starts a comment, dotted keys select a
section::

    mode = simulate
    network.b_EE = 3
    grid.M = 800
    initial.E.kind = maxwellian
    initial.E.v0 = 0
    initial.E.var = 0.5

``initial.kind``, ``initial.v0``, ... without a population set both
populations at once.  Everything except ``mode`` has a default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Optional

from .errors import ParseError, ValidationError
from .model import (
    ConstantDiffusion,
    NetworkParams,
    PotentialParams,
    RateDependentDiffusion,
    default_v_min,
)
from .solver import SolverConfig
from .steady import SWEEPABLE, ScanSettings

MODES = ("simulate", "steady_scan", "bifurcation", "stability", "certificate")
INITIAL_KINDS = ("maxwellian", "stationary")
DEFAULT_T_END = {"stability": 10.0}


@dataclass(frozen=True)
class InitialSpec:
    """Maxwellian(v0, var) or the stationary profile at rates (N_E, N_I)."""

    kind: str = "maxwellian"
    v0: float = 0.0
    var: float = 0.5
    N_E: float = 0.0
    N_I: float = 0.0

    def __post_init__(self):
        if self.kind not in INITIAL_KINDS:
            raise ValidationError(f"initial kind must be one of {INITIAL_KINDS}, got {self.kind!r}")
        if self.kind == "maxwellian" and not self.var > 0:
            raise ValidationError("Maxwellian variance must be positive")
        if self.kind == "stationary" and not (self.N_E >= 0 and self.N_I >= 0):
            raise ValidationError("stationary profile rates must be >= 0")


@dataclass(frozen=True)
class SweepSpec:
    param: str
    values: tuple[float, ...]

    def __post_init__(self):
        if self.param not in SWEEPABLE:
            raise ValidationError(f"sweep.param must be one of {SWEEPABLE}, got {self.param!r}")
        if not self.values:
            raise ValidationError("sweep.values is empty")


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    network: NetworkParams = field(default_factory=NetworkParams)
    potentials: PotentialParams = field(default_factory=PotentialParams)
    M: int = 800
    solver: SolverConfig = field(default_factory=SolverConfig)
    initial: Optional[tuple[InitialSpec, InitialSpec]] = None
    scan: ScanSettings = field(default_factory=ScanSettings)
    sweep: Optional[SweepSpec] = None
    output_dir: str = "out"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        # stability runs start from every steady state; ``initial`` adds one more run
        if self.mode in ("simulate", "certificate") and self.initial is None:
            raise ValidationError(f"mode {self.mode} requires initial data")
        if self.mode == "bifurcation" and self.sweep is None:
            raise ValidationError("mode bifurcation requires sweep.param and sweep.values")
        if self.M < 16:
            raise ValidationError(f"grid.M must be >= 16, got {self.M}")


# key -> (section, attribute, type)
_NETWORK_KEYS = ("b_EE", "b_IE", "b_EI", "b_II", "d_EE", "d_IE", "d_EI", "d_II", "nu_ext")
_SOLVER_KEYS = {"cfl": float, "t_end": float, "blowup_rate_threshold": float,
                "dt_floor": float, "mu_override": float, "record_every": int}
_SCAN_KEYS = {"N_E_max": float, "n_points": int, "rel_min": float}
_INITIAL_FIELDS = {"kind": str, "v0": float, "var": float, "N_E": float, "N_I": float}


def _lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(lineno, f"expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or not value:
            raise ParseError(lineno, f"empty key or value in {raw.strip()!r}")
        yield lineno, key, value


def _convert(kind, value: str, lineno: int, key: str):
    try:
        if kind is float:
            out = float(value)
            if math.isnan(out):
                raise ValueError
            return out
        if kind is int:
            return int(value)
    except ValueError:
        raise ParseError(lineno, f"{key}: cannot read {value!r} as {kind.__name__}") from None
    return value


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a configuration document."""
    raw: dict[str, tuple[int, str]] = {}
    for lineno, key, value in _lines(text):
        if key in raw:
            raise ParseError(lineno, f"duplicate key {key!r} (first on line {raw[key][0]})")
        raw[key] = (lineno, value)

    network: dict = {}
    potential: dict = {}
    solver: dict = {}
    scan: dict = {}
    shared_initial: dict = {}
    per_pop: dict = {"E": {}, "I": {}}
    grid: dict = {}
    top: dict = {}
    sweep: dict = {}

    for key, (lineno, value) in raw.items():
        parts = key.split(".")
        head, rest = parts[0], parts[1:]
        if head in ("mode", "output_dir") and not rest:
            top[head] = value
        elif head == "network" and len(rest) == 1:
            name = rest[0]
            if name in _NETWORK_KEYS or name in ("a_E", "a_I"):
                network[name] = _convert(float, value, lineno, key)
            elif name == "diffusion":
                if value not in ("constant", "rate_dependent"):
                    raise ParseError(lineno, "network.diffusion must be constant or rate_dependent")
                network[name] = value
            else:
                raise ParseError(lineno, f"unknown key {key!r}")
        elif head == "potential" and len(rest) == 1 and rest[0] in ("V_F", "V_R"):
            potential[rest[0]] = _convert(float, value, lineno, key)
        elif head == "grid" and len(rest) == 1 and rest[0] in ("M", "V_min"):
            grid[rest[0]] = _convert(int if rest[0] == "M" else float, value, lineno, key)
        elif head == "solver" and len(rest) == 1 and rest[0] in _SOLVER_KEYS:
            solver[rest[0]] = _convert(_SOLVER_KEYS[rest[0]], value, lineno, key)
        elif head == "scan" and len(rest) == 1 and rest[0] in _SCAN_KEYS:
            scan[rest[0]] = _convert(_SCAN_KEYS[rest[0]], value, lineno, key)
        elif head == "initial" and len(rest) == 1 and rest[0] in _INITIAL_FIELDS:
            shared_initial[rest[0]] = _convert(_INITIAL_FIELDS[rest[0]], value, lineno, key)
        elif (head == "initial" and len(rest) == 2 and rest[0] in per_pop
              and rest[1] in _INITIAL_FIELDS):
            per_pop[rest[0]][rest[1]] = _convert(_INITIAL_FIELDS[rest[1]], value, lineno, key)
        elif head == "sweep" and rest == ["param"]:
            sweep["param"] = value
        elif head == "sweep" and rest == ["values"]:
            sweep["values"] = tuple(_convert(float, v.strip(), lineno, key)
                                    for v in value.split(",") if v.strip())
        else:
            raise ParseError(lineno, f"unknown key {key!r}")

    if "mode" not in top:
        raise ValidationError("mode is required")
    mode = top["mode"]

    diffusion_kind = network.pop("diffusion", "constant")
    a_E, a_I = network.pop("a_E", 1.0), network.pop("a_I", 1.0)
    if diffusion_kind == "constant":
        diffusion = ConstantDiffusion(a_E, a_I)
    else:
        diffusion = RateDependentDiffusion()
    params = NetworkParams(diffusion=diffusion, **network)

    V_R = potential.get("V_R", 1.0)
    V_min = grid.get("V_min", default_v_min(V_R, params))
    pots = PotentialParams(V_min=V_min, V_R=V_R, V_F=potential.get("V_F", 2.0))

    solver.setdefault("t_end", DEFAULT_T_END.get(mode, SolverConfig.t_end))
    solver_cfg = SolverConfig(**solver)

    initial = None
    if shared_initial or per_pop["E"] or per_pop["I"]:
        initial = tuple(InitialSpec(**{**shared_initial, **per_pop[p]}) for p in ("E", "I"))

    sweep_spec = None
    if sweep:
        if "param" not in sweep or "values" not in sweep:
            raise ValidationError("sweep needs both sweep.param and sweep.values")
        sweep_spec = SweepSpec(sweep["param"], sweep["values"])

    return ExperimentConfig(
        mode=mode, network=params, potentials=pots, M=grid.get("M", 800), solver=solver_cfg,
        initial=initial, scan=ScanSettings(**scan), sweep=sweep_spec,
        output_dir=top.get("output_dir", "out"),
    )


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


def serialize_config(config: ExperimentConfig) -> str:
    """Render a config so that ``parse_config`` gives it back unchanged."""
    out = [f"mode = {config.mode}", f"output_dir = {config.output_dir}"]
    net = config.network
    for name in _NETWORK_KEYS:
        out.append(f"network.{name} = {_fmt(getattr(net, name))}")
    if net.constant_diffusion:
        out += ["network.diffusion = constant",
                f"network.a_E = {_fmt(net.diffusion.a_E)}",
                f"network.a_I = {_fmt(net.diffusion.a_I)}"]
    else:
        out.append("network.diffusion = rate_dependent")
    out += [f"potential.V_R = {_fmt(config.potentials.V_R)}",
            f"potential.V_F = {_fmt(config.potentials.V_F)}",
            f"grid.M = {config.M}",
            f"grid.V_min = {_fmt(config.potentials.V_min)}"]
    for name in _SOLVER_KEYS:
        value = getattr(config.solver, name)
        if value is not None:
            out.append(f"solver.{name} = {_fmt(value)}")
    for name in _SCAN_KEYS:
        out.append(f"scan.{name} = {_fmt(getattr(config.scan, name))}")
    if config.initial is not None:
        for pop, spec in zip(("E", "I"), config.initial):
            for f in fields(spec):
                out.append(f"initial.{pop}.{f.name} = {_fmt(getattr(spec, f.name))}")
    if config.sweep is not None:
        out.append(f"sweep.param = {config.sweep.param}")
        out.append("sweep.values = " + ", ".join(_fmt(float(v)) for v in config.sweep.values))
    return "\n".join(out) + "\n"


def with_output_dir(config: ExperimentConfig, output_dir: str) -> ExperimentConfig:
    return replace(config, output_dir=str(output_dir))
