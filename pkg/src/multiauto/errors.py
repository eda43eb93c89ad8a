"""Exception hierarchy.

Errors fall into two families that the command line maps to distinct exit
codes: configuration/usage problems and numerical instability.  Verdict
failures are not exceptions; they are reported as ``passed = False``.
"""


class MultiautoError(Exception):
    """Base class for every toolkit error."""


class ConfigError(MultiautoError):
    """Malformed or inconsistent experiment configuration."""


class NumericalInstability(MultiautoError):
    """A computation could not be certified numerically."""


# -- function_core ---------------------------------------------------------

class DimensionMismatch(ConfigError, ValueError):
    pass


class ParseError(ConfigError, ValueError):
    pass


class MissingBound(ConfigError, ValueError):
    pass


class EmptyList(ConfigError, ValueError):
    pass


class SingularPoint(NumericalInstability, ArithmeticError):
    pass


class SupBoundViolation(NumericalInstability, ArithmeticError):
    pass


# -- sequence_limits -------------------------------------------------------

class NoConvergentSubsequence(MultiautoError):
    """Fewer than two translates form a Cauchy cluster.

    This is a verdict-level outcome (the function looks non-AA at the probed
    depth), so it is deliberately not a NumericalInstability.
    """


class FamilyNotUnbounded(ConfigError, ValueError):
    pass


# -- volterra_ops ----------------------------------------------------------

class TruncationUnstable(NumericalInstability):
    pass


class NegativeKernel(ConfigError, ValueError):
    pass


class E1Violated(NumericalInstability):
    pass


class SingularKernel(ConfigError, ValueError):
    pass


# -- fixed_point_solvers ---------------------------------------------------

class CertificateInvalid(NumericalInstability):
    pass


class EmptyInterior(ConfigError, ValueError):
    pass


class InsufficientSweeps(MultiautoError):
    pass


# -- pde / memory ----------------------------------------------------------

class NonpositiveTime(ConfigError, ValueError):
    pass


class UnboundedInitialData(ConfigError, ValueError):
    pass


class StepUnstable(NumericalInstability):
    pass


class NoDecay(NumericalInstability):
    pass


class HorizonExceedsTable(ConfigError, ValueError):
    pass
