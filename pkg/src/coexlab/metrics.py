"""Coexistence quality metrics: fairness and logarithmic utility."""

import math
from dataclasses import dataclass

from .errors import ConfigError, UndefinedFairnessError

UTILITY_CLAMP_LO = 1e-3
UTILITY_CLAMP_HI = 1.0


def jain_index(gamma_nr, gamma_wf):
    """Jain fairness of the two-technology allocation.

    (a + b)^2 / (2 (a^2 + b^2)); 1.0 for a perfectly even split, 0.5 when
    one side is starved.  Undefined when both inputs are zero.
    """
    a, b = float(gamma_nr), float(gamma_wf)
    if a == 0.0 and b == 0.0:
        raise UndefinedFairnessError("fairness is undefined for an all-zero allocation")
    return (a + b) ** 2 / (2.0 * (a * a + b * b))


@dataclass(frozen=True)
class UtilityModel:
    """Normalized diminishing-returns utility of a throughput value.

    U(x) = log(T(x) / T(b_min)) / log(T(b_max) / T(b_min)) for a strictly
    increasing transform T (identity by default), so U(b_min) = 0 and
    U(b_max) = 1.
    """

    b_min_mbps: float = 0.5
    b_max_mbps: float = 10.0
    transform: object = None  # strictly increasing callable, identity if None

    def __post_init__(self):
        problems = []
        if not 0.0 < self.b_min_mbps < self.b_max_mbps:
            problems.append(
                f"need 0 < b_min < b_max, got ({self.b_min_mbps!r}, {self.b_max_mbps!r})"
            )
        else:
            t = self.transform or (lambda x: x)
            lo, hi = t(self.b_min_mbps), t(self.b_max_mbps)
            if not (lo > 0.0 and hi > lo):
                problems.append("transform must be positive and strictly increasing on [b_min, b_max]")
        if problems:
            raise ConfigError(problems)

    def _t(self, x):
        return (self.transform or (lambda v: v))(x)


def utility(x_mbps, model):
    """Utility of a positive throughput under the given model."""
    x = float(x_mbps)
    if x <= 0.0:
        raise ConfigError(f"utility is defined for positive throughput only, got {x!r}")
    lo = model._t(model.b_min_mbps)
    return math.log(model._t(x) / lo) / math.log(model._t(model.b_max_mbps) / lo)


def clamp_utility(u):
    """Clamp a raw utility into [1e-3, 1] before ratio or fairness use."""
    return min(max(u, UTILITY_CLAMP_LO), UTILITY_CLAMP_HI)


def utility_fairness(u_nr, u_wf):
    """Jain fairness applied to (already clamped) utilities."""
    return jain_index(u_nr, u_wf)
