"""Exception types raised across the package."""


class MagTorusError(Exception):
    """Base class for every error raised by magtorus."""


class FluxNotQuantized(MagTorusError):
    pass


class NonRealField(MagTorusError):
    pass


class DirectionMismatch(MagTorusError):
    pass


class NonPositiveMeanFlux(MagTorusError):
    pass


class GridTooCoarse(MagTorusError):
    pass


class DimMismatch(MagTorusError):
    pass


class NoConvergence(MagTorusError):
    def __init__(self, iterations: int, worst_residual: float):
        super().__init__(
            f"no convergence after {iterations} iterations "
            f"(worst residual {worst_residual:.3e})"
        )
        self.iterations = iterations
        self.worst_residual = worst_residual


class IncommensurableShift(MagTorusError):
    pass


class GridTooCoarseForH(MagTorusError):
    pass


class SymbolRangeExceeded(MagTorusError):
    pass


class StepTooLarge(MagTorusError):
    pass


class ZeroField(MagTorusError):
    pass


class BadFlux(MagTorusError):
    pass


class ShellMismatch(MagTorusError):
    pass


class InsufficientSpan(MagTorusError):
    pass


class ConfigError(MagTorusError):
    """Configuration problem; ``key`` names the offending entry when known."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = ""
        if key is not None:
            where += f"[{key}] "
        if line is not None:
            where += f"(line {line}) "
        super().__init__(where + message)
        self.key = key
        self.line = line


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError):
    pass
