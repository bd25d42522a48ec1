"""Exception types raised by the library."""


class JumpParticlesError(Exception):
    """Base class for all library errors."""


class ModelError(JumpParticlesError, ValueError):
    """A model or coefficient is used outside its declared domain."""


class QuadratureError(JumpParticlesError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message: str, achieved_error: float):
        super().__init__(f"{message} (achieved error estimate {achieved_error:.3e})")
        self.achieved_error = achieved_error


class NonConvergentTailError(JumpParticlesError):
    """A tail integral over |z| > M does not appear to converge."""


class SamplerError(JumpParticlesError):
    """Rejection sampling is too inefficient to be useful."""


class NumericalError(JumpParticlesError):
    """Non-finite values appeared in a simulation or coefficient evaluation."""


class ConfigError(JumpParticlesError, ValueError):
    """Malformed or out-of-range scenario configuration."""
