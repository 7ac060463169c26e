"""Exception hierarchy for the solver library.

Every error raised by the library derives from EztcError so callers can
catch the whole family at once (the CLI maps them to exit codes).
"""


class EztcError(Exception):
    """Base class for all library errors."""


# --- model / parameter errors -------------------------------------------------

class InvalidParameters(EztcError):
    """Parameter set violates a standing assumption (theta > 0, lambda != 0, ...)."""


class IllPosedFrictionless(EztcError):
    """Frictionless problem is ill-posed (m_M <= 0)."""


# --- well-posedness / threshold errors ---------------------------------------

class QuadratureFailure(EztcError):
    """Adaptive quadrature for the threshold cost did not converge."""


class NotWellPosed(EztcError):
    """Solver entry point called on an (params, xi) pair that is ill-posed."""


# --- free-boundary solver errors ----------------------------------------------

class SingularPoint(EztcError):
    """ODE right-hand side evaluated too close to q = 1 or to n = ell(q)."""


class NoCrossing(EztcError):
    """Shot trajectory left the admissible strip without re-crossing m."""


class StiffnessFailure(EztcError):
    """Adaptive integrator step size underflowed."""


class BracketFailure(EztcError):
    """Root bracket for the shooting parameter could not be established."""


# --- policy evaluation errors --------------------------------------------------

class OutOfRange(EztcError):
    """Query point outside the no-transaction interval."""


class OutOfDomain(EztcError):
    """Query point outside the solvency-compatible extended domain."""


class PoleHit(EztcError):
    """Evaluation at the pole of a Moebius transformation (or of c(q))."""


class CostMismatch(EztcError):
    """Cost parameters passed to an evaluator do not match the solved xi."""


class InsolventState(EztcError):
    """(x, y, phi) lies outside the open solvency region."""


# --- asymptotics errors ---------------------------------------------------------

class DegenerateMertonRatio(EztcError):
    """Merton ratio in {0, 1}: the standard small-cost expansion does not apply."""


class HypothesisFail(EztcError):
    """Small-cost expansion hypothesis violated (sign pattern of R, S, m_M)."""


# --- simulation errors -----------------------------------------------------------

class InsolventStart(EztcError):
    """Simulation initial state outside the open solvency region."""


class TooFewPaths(EztcError):
    """Monte Carlo check requested with an insufficient sample."""


# --- CLI / config errors ----------------------------------------------------------

class ParseError(EztcError):
    """Configuration input could not be parsed."""


class ValidationError(EztcError):
    """Configuration parsed but failed validation; message lists all violations."""
