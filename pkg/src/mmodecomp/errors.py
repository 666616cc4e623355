"""Exception hierarchy shared across the package.

Numerical failures derive from :class:`NumericalError` so the CLI can map
them to a dedicated exit code; configuration problems derive from
:class:`ConfigError`.
"""


class MmoDecompError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(MmoDecompError):
    """Invalid configuration or arguments (CLI exit code 2)."""


class NumericalError(MmoDecompError):
    """A numerical computation failed (CLI exit code 3)."""


# --- integrator ---------------------------------------------------------


class StepSizeUnderflow(NumericalError):
    """Step size collapsed below 1e-14 of the integration interval."""


class MaxStepsExceeded(NumericalError):
    """Step budget exhausted before reaching the end time."""


class NonFiniteState(NumericalError):
    """State or derivative became NaN/inf during integration."""


class SectionNotReached(NumericalError):
    """The requested section was not crossed within the time horizon."""

    def __init__(self, msg, last_state=None, last_time=None):
        super().__init__(msg)
        self.last_state = last_state
        self.last_time = last_time


# --- koper_model --------------------------------------------------------


class DivisionByZeroEps(NumericalError):
    """Full vector field requested with eps1 = 0."""


class UnsupportedK(NumericalError):
    """Closed-form eigendata requested away from k = -10."""


class OutOfRangeLambda(NumericalError):
    """lambda outside the range where the requested formula is defined."""


# --- singular_maps ------------------------------------------------------


class NoLandingRoot(NumericalError):
    """Fast fiber has no landing root distinct from the start point."""


class CanardEscape(NumericalError):
    """Strong-canard continuation exhausted its arclength budget."""

    def __init__(self, msg, last_point=None):
        super().__init__(msg)
        self.last_point = last_point


# --- map_fit ------------------------------------------------------------


class RankDeficient(NumericalError):
    """Least-squares design matrix is (numerically) rank deficient."""


class BranchMismatch(NumericalError):
    """Sample branch structure does not match the requested fit."""


class TooFewPoints(NumericalError):
    """Not enough grid points for the requested quadrature/fit."""


class EmptyDomain(NumericalError):
    """Error norms requested over an empty domain."""


# --- mmo_analysis -------------------------------------------------------


class OutOfDomain(NumericalError):
    """Composite map evaluated outside a stage domain."""

    def __init__(self, msg, stage=None):
        super().__init__(msg)
        self.stage = stage


class NoSignChange(NumericalError):
    """Root bracketing failed: no sign change over the bracket."""


# --- hybrid -------------------------------------------------------------


class ResonantMu(NumericalError):
    """1/mu is an odd integer (canard-count transition point)."""


class Escape(NumericalError):
    """Trajectory left the tracked region of a local normal form."""

    def __init__(self, msg, last_state=None, last_time=None):
        super().__init__(msg)
        self.last_state = last_state
        self.last_time = last_time
