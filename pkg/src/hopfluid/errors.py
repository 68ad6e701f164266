"""Exception hierarchy shared by all hopfluid modules."""


class HopfluidError(Exception):
    """Base class for errors raised by hopfluid."""


class InvalidRates(HopfluidError, ValueError):
    """Hop rate and energy quantum violate the cutoff 2*lambda*eps*(k_max+1) <= 1."""


class InvalidState(HopfluidError, ValueError):
    """A mean-field or continuum state breaks its invariants."""


class EmptyOrColdSite(HopfluidError, ValueError):
    """Closure requested at a site with n = 0 or K = 0."""


class StepTooLarge(HopfluidError, ArithmeticError):
    """A mean-field step pushed an occupation outside [0, 1]."""


class TooLarge(HopfluidError, MemoryError):
    """The enumerated sample space exceeds the materialisation guard."""


class UnstableStep(HopfluidError, ValueError):
    """The requested time step exceeds the explicit stability bound."""


class BoundsViolated(HopfluidError, ArithmeticError):
    """Density left [0, rho_m] by more than the rounding allowance."""


class SingularForce(HopfluidError, ValueError):
    """Thermodynamic forces are undefined at rho = 0 or rho = rho_m."""


class SingularCoord(HopfluidError, ValueError):
    """Canonical coordinates are undefined at rho = 0 or rho = rho_m."""


class ConvergenceFailure(HopfluidError, ArithmeticError):
    """An error sequence failed to decrease under refinement."""


class ConfigError(HopfluidError, ValueError):
    """A run configuration has one or more violations.

    ``violations`` holds every problem found, each as a human readable
    string naming the offending field (and line, when known).
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class InvariantViolation(HopfluidError, ArithmeticError):
    """A run broke one of the audited physical invariants."""


class ConservationViolated(InvariantViolation):
    """Total particle number or energy drifted beyond tolerance."""


class SecondLawViolated(InvariantViolation):
    """The discrete entropy decreased beyond rounding."""
