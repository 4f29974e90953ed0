"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Raised when a configuration is invalid.

    Carries the full list of violations so callers can report every
    problem at once instead of fixing them one by one.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class FixedPointError(RuntimeError):
    """Fixed-point iteration failed to converge.

    Attributes:
        last_iterate: tuple with the final (tau_wifi, tau_nru) estimate.
        residual: defect of the final iterate.
        iterations: number of iterations performed.
    """

    def __init__(self, message, last_iterate, residual, iterations):
        super().__init__(
            f"{message} (residual={residual:.3e} after {iterations} iterations, "
            f"last iterate={last_iterate})"
        )
        self.last_iterate = last_iterate
        self.residual = residual
        self.iterations = iterations


class UndefinedFairnessError(ValueError):
    """Fairness of an all-zero allocation is undefined."""


class TrainingDivergedError(RuntimeError):
    """Raised when a learning run produces non-finite parameters or losses."""

    def __init__(self, message, episode=None, step=None):
        detail = message
        if episode is not None:
            detail += f" (episode={episode}, step={step})"
        super().__init__(detail)
        self.episode = episode
        self.step = step


class InsufficientDataError(ValueError):
    """Input series is too short for the requested statistic."""
