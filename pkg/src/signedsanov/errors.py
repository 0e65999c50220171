"""Exception types raised across the package."""


class SignedSanovError(Exception):
    """Base class for all errors raised by this package."""


class LabelMismatch(SignedSanovError, ValueError):
    pass


class EmptySample(SignedSanovError, ValueError):
    pass


class DimensionMismatch(SignedSanovError, ValueError):
    pass


class MissingContext(SignedSanovError, KeyError):
    pass


class Infeasible(SignedSanovError):
    pass


class SolverStall(SignedSanovError):
    pass


class NegativeImage(SignedSanovError, ValueError):
    pass


class SignedNormalizationFailure(SignedSanovError, ValueError):
    """Total net mass of a doubled-space distribution is not positive."""

    def __init__(self, message, denominator):
        super().__init__(message)
        self.denominator = denominator


class NegativeNetMass(SignedSanovError, ValueError):
    """Some observable received negative net mass after cancellation.

    The raw (unclipped) net masses and the normalizer are kept on the
    exception so callers can inspect them.
    """

    def __init__(self, message, net_masses, normalizer):
        super().__init__(message)
        self.net_masses = net_masses
        self.normalizer = normalizer


class TooLarge(SignedSanovError, ValueError):
    pass


class ZeroProbability(SignedSanovError, ValueError):
    pass


class SingularCovariance(SignedSanovError, ValueError):
    pass


class ShapeViolation(SignedSanovError, ValueError):
    pass


class InvalidConfig(SignedSanovError, ValueError):
    pass


class StepTooLarge(InvalidConfig):
    pass


class NonConvergence(SignedSanovError):
    pass
