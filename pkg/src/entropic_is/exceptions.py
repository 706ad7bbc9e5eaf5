"""Exception and warning classes raised across the package."""


class EntropicISError(Exception):
    """Base class for every error raised by this package."""


class NumericalFailure(EntropicISError):
    """An algorithm could not produce a trustworthy number."""


class AllWeightsDegenerate(NumericalFailure):
    """Every log-weight is -inf, so the ensemble cannot be normalized."""


class MismatchedSupport(EntropicISError, ValueError):
    """Two finite distributions are not defined on the same atoms."""


class DomainError(EntropicISError, ValueError):
    """A scalar parameter lies outside its admissible range."""


class InfeasibleMoment(NumericalFailure):
    """The requested moment is not reachable inside the exponential family."""


class SingularHessian(NumericalFailure):
    """The covariance of the statistic is rank deficient."""


class DegenerateTilt(NumericalFailure):
    """The tilted law collapsed numerically onto a single atom."""


class MaxIterations(NumericalFailure):
    """An iterative solver hit its iteration cap before converging."""


class ProfileIncomplete(NumericalFailure):
    """Required Renyi entropies are infinite on the whole search grid."""


class GridTooNarrow(NumericalFailure):
    """The deviation-probability curve does not bracket the target level."""


class EmptyFeasibleSet(EntropicISError, ValueError):
    """No admissible target satisfies the entropy budget."""


class DegenerateReference(EntropicISError, ValueError):
    """A reference distribution puts zero mass on an atom where mass is required."""


class QuadratureFailure(NumericalFailure):
    """The quadrature grid cannot resolve the requested construction."""


class MoveKernelRejectionStall(UserWarning):
    """The SMC move kernel accepted under 1% of proposals for 3 stages in a row."""


class WeightDegeneracyWarning(UserWarning):
    """Effective sample size dropped below the monitoring threshold."""
