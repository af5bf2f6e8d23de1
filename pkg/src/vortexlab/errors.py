"""Exception types shared across modules."""


class VortexLabError(Exception):
    """Base class for package errors."""


class DensityFloorViolation(VortexLabError):
    """Density dropped below the admissible floor."""


class LinearSolveDiverged(VortexLabError):
    """The implicit acoustic solve produced non-finite values."""


class PoissonSolveDiverged(VortexLabError):
    """The projection Poisson solve produced non-finite values."""


class NonPositiveSamples(VortexLabError):
    """Decay fitting requires strictly positive sample values."""


class ConfigError(VortexLabError):
    """Invalid experiment configuration."""


class ZeroMassViolated(UserWarning):
    """Anti-derivatives requested while the zero-mass defect is large."""
