"""Exception hierarchy.

Two branches matter for the CLI exit code: ``ValidationError`` (bad inputs,
exit code 1) and ``NumericalError`` (estimation failed on valid inputs,
exit code 2).
"""


class LatentPanelError(Exception):
    """Base class for all package errors."""


class ValidationError(LatentPanelError):
    """Invalid input data or configuration."""


class NumericalError(LatentPanelError):
    """Numerical failure during estimation."""


# --- linear algebra ---------------------------------------------------------

class DimensionMismatch(ValidationError):
    pass


class RankDeficient(NumericalError):
    pass


class NotSymmetric(ValidationError):
    pass


class KTooLarge(ValidationError):
    pass


class EmptySpectrum(ValidationError):
    pass


# --- panel handling ---------------------------------------------------------

class TauTooLarge(ValidationError):
    pass


class SampleTooShort(ValidationError):
    pass


class EmptyMonth(ValidationError):
    pass


class UnbalancedPanel(ValidationError):
    pass


# --- feature construction ---------------------------------------------------

class NonPositivePrice(ValidationError):
    pass


class ZeroVolumeWithMove(ValidationError):
    pass


class AllZeroCaps(ValidationError):
    pass


# --- stage 1 ----------------------------------------------------------------

class OrderConditionViolated(ValidationError):
    pass


class FactorCountZero(NumericalError):
    pass


class SingularWeighting(NumericalError):
    pass


class RankDeficientA(NumericalError):
    pass


class Stage1Failed(NumericalError):
    """One or more unit-level fits failed; carries the unit labels."""

    def __init__(self, failures):
        self.failures = dict(failures)
        units = ", ".join(str(u) for u in self.failures)
        super().__init__(f"stage 1 failed for units: {units}")


# --- selection --------------------------------------------------------------

class DegreesOfFreedomExhausted(ValidationError):
    pass


class EmptyPool(ValidationError):
    pass


class EmptyGrid(ValidationError):
    pass


class NoConvergence(NumericalError):
    def __init__(self, gap, message=None):
        self.gap = float(gap)
        super().__init__(message or f"coordinate descent did not converge (duality gap {gap:.3e})")


# --- stage 2 ----------------------------------------------------------------

class TooManyPredictors(ValidationError):
    pass


class RankDeficientDesign(NumericalError):
    pass


# --- mean group -------------------------------------------------------------

class GroupTooSmall(ValidationError):
    pass


class OverlappingGroups(ValidationError):
    pass


# --- monte carlo ------------------------------------------------------------

class InvalidConfig(ValidationError):
    pass


class IndexOutOfRange(ValidationError):
    pass
