"""Shared exception types."""


class QuadratureError(RuntimeError):
    """Panel doubling failed to converge; carries a diagnostic message."""


class UnsupportedConfigurationError(ValueError):
    """Operation requested outside its supported configuration space."""


class ExplosionError(RuntimeError):
    """A particle left the finite range during simulation."""

    def __init__(self, particle_index: int, step: int, clock: float):
        self.particle_index = particle_index
        self.step = step
        self.clock = clock
        super().__init__(
            f"non-finite state for particle {particle_index} at step {step} "
            f"(t={clock:.6g}); reduce the step size"
        )


class GuardViolationError(RuntimeError):
    """Step size violated the guard under the guarded policy."""


class ConfigError(ValueError):
    """Invalid experiment configuration; message includes the field path."""
