"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`BladeEnvelopeError`; the CLI maps the subclasses to exit codes.
"""


class BladeEnvelopeError(Exception):
    """Base class for all package errors."""


class ConfigError(BladeEnvelopeError, ValueError):
    """Invalid pipeline configuration."""


class NumericalError(BladeEnvelopeError, ArithmeticError):
    """A numerical routine could not produce a trustworthy result."""


class NotSymmetricError(NumericalError):
    def __init__(self, max_asymmetry):
        self.max_asymmetry = float(max_asymmetry)
        super().__init__(f"matrix is not symmetric: max |C - C^T| = {self.max_asymmetry:.3e}")


class NoActiveDirectionsError(NumericalError):
    """All eigenvalues are numerically zero, or no gap is large enough."""


class TrivialIntersectionError(NumericalError):
    """The active bases together span the whole design space."""


class RankDeficientError(NumericalError):
    def __init__(self, terms):
        self.terms = list(terms)
        super().__init__(f"design matrix is rank deficient in basis terms {self.terms}")


class ConstantObjectiveError(NumericalError):
    """A linear objective has a zero gradient, so no active direction exists."""


class SingularCovarianceError(NumericalError):
    """A covariance matrix could not be inverted."""


class GeometryError(BladeEnvelopeError):
    def __init__(self, segments):
        self.segments = list(segments)
        super().__init__(f"deformed profile self-intersects at segment pairs {self.segments[:10]}")


class EmptySliceError(BladeEnvelopeError):
    """The requested active coordinates leave no feasible design in the hypercube."""


class NotTrainedError(BladeEnvelopeError, RuntimeError):
    """A decision model was used before its logistic stage was trained."""


class MissingArtifactsError(BladeEnvelopeError, FileNotFoundError):
    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__("missing run artifacts: " + ", ".join(self.missing))
