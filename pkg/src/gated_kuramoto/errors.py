"""Exception types shared across the package."""


class GatedKuramotoError(Exception):
    """Base class for all package-specific errors."""


class PreconditionViolated(GatedKuramotoError):
    """An operation was called outside its documented domain."""


class StepSizeUnderflow(GatedKuramotoError):
    """The adaptive integrator shrank its step below 1e-14 of the time span.

    Usually indicates stiffness (e.g. an extremely sharp gate edge) or a
    misconfigured tolerance/time-scale combination.
    """


class NonFiniteState(GatedKuramotoError):
    """The integrated state left the finite floating-point range."""


class SingularJacobian(GatedKuramotoError):
    """The Newton system is rank-deficient beyond regularization."""


class DegenerateFit(GatedKuramotoError):
    """A least-squares fit has no information in its design (e.g. all K equal)."""


class ConfigError(GatedKuramotoError):
    """A run configuration file or override is malformed."""
