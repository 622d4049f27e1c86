"""Exception types raised across the package."""


class PtMetricError(Exception):
    """Base class for every error raised by ptmetric."""


# linear algebra
class NonConvergence(PtMetricError):
    pass


class NotHermitian(PtMetricError):
    pass


class NotPositiveDefinite(PtMetricError):
    pass


class UnsupportedJordanStructure(PtMetricError):
    """Jordan blocks longer than 2 (or clusters of more than two) were found."""


# metric construction
class WrongRegime(PtMetricError):
    pass


class UnpairedEigenvalue(PtMetricError):
    pass


class SingularMetric(PtMetricError):
    pass


class NotDefective(PtMetricError):
    pass


# dynamics
class ZeroNorm(PtMetricError):
    pass


class NonRealExpectation(PtMetricError):
    pass


class NonPositiveNormalization(PtMetricError):
    pass


class NoLimit(PtMetricError):
    pass


class DegenerateDirection(PtMetricError):
    pass


# lindblad
class StepTooLarge(PtMetricError):
    pass


class InvalidInitial(PtMetricError):
    pass


class InsufficientHorizon(PtMetricError):
    pass


# cli
class ConfigError(PtMetricError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, line=None, key=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.line = line
        self.key = key


class ValidationError(ConfigError):
    pass
