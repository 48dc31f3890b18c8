"""Exception hierarchy for bifurcata.

Every error raised on purpose by the toolkit derives from BifurcataError so
callers (the CLI in particular) can map failures onto exit statuses.
"""


class BifurcataError(Exception):
    """Base class for all bifurcata errors"""


class ArgumentError(BifurcataError, ValueError):
    """Invalid argument passed to an operation"""


class DimensionMismatchError(ArgumentError):
    """Vector or matrix of the wrong shape"""


class NotSymmetricError(ArgumentError):
    """Operator expected to be symmetric is not"""


class InvalidSpecError(BifurcataError, ValueError):
    """Problem specification cannot define a valid potential family"""


class UnsupportedPencilError(BifurcataError):
    """Generalized eigenproblem outside the supported routes"""


class InconclusiveCrossingError(BifurcataError):
    """Crossing count did not stabilize over the sampled parameters"""


class NoCandidateError(BifurcataError):
    """Hessian at the parameter is nondegenerate, so it is not a candidate"""


class NondegenerateError(BifurcataError):
    """Reduction requested at a parameter with trivial kernel"""


class ReductionFailedError(BifurcataError):
    """Newton iteration for the complement equation did not converge"""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


class OutsideValidityError(BifurcataError):
    """Complement Jacobian became singular; the reduction is no longer valid"""


class UnsupportedDimensionError(BifurcataError):
    """Kernel dimension too large for critical point classification"""


class NotEquivariantError(BifurcataError):
    """Family is not even under u -> -u"""


class InvariantViolationError(BifurcataError):
    """Internal consistency check failed; no report may be emitted"""


class ConfigError(BifurcataError):
    """Semantic error in an analysis config"""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class ConfigSyntaxError(ConfigError):
    """Config text is not well-formed"""

    def __init__(self, message, line=None, column=None):
        location = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{location}")
        self.line = line
        self.column = column
