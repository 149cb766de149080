"""Exception hierarchy shared by every module of the package."""


class NNLIFError(Exception):
    """Base class for all errors raised by this package."""


class NonpositiveDiffusion(NNLIFError):
    """Diffusion coefficient evaluated to a value <= 0."""


class DegenerateProfile(NNLIFError):
    """An initial profile carries (numerically) no mass on the grid."""


class NegativeRate(NNLIFError):
    """A firing rate extracted from a density is clearly negative."""


class TimestepCollapse(NNLIFError):
    """The CFL timestep fell below the configured floor."""

    def __init__(self, dt, dt_floor):
        super().__init__(f"dt={dt:.3e} below floor {dt_floor:.3e}")
        self.dt = dt
        self.dt_floor = dt_floor


class InvariantViolation(NNLIFError):
    """Mass or positivity drifted beyond tolerance during a run."""


class QuadratureFailure(NNLIFError):
    """Adaptive quadrature could not reach the requested tolerance."""


class BracketFailure(NNLIFError):
    """No sign change found while growing a bisection bracket."""


class UndefinedLimit(NNLIFError):
    """Parameters fall outside the cases where the limit of F is known."""


class ReferenceDegenerate(NNLIFError):
    """Too much reference mass sits below the entropy positivity floor."""


class InsufficientDecay(NNLIFError):
    """No monotone decreasing entropy window long enough to fit."""


class ParseError(NNLIFError):
    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class ValidationError(NNLIFError, ValueError):
    """A configuration or parameter object violates an invariant."""


class UnknownPreset(NNLIFError):
    pass


class ScanTooCoarse(UserWarning):
    """Two adjacent root brackets share an endpoint."""


class DomainTooShort(UserWarning):
    """An initial density is not negligible at V_min."""
