"""Exception hierarchy shared by all modules.

Every error carries an ``exit_code`` used by the command line front end:
2 for input/validation problems, 3 for numerical failures.
"""

from __future__ import annotations


class HodowaveError(Exception):
    exit_code = 3

    def __init__(self, message: str = "", stage: str | None = None, **details):
        super().__init__(message)
        self.stage = stage
        self.details = details

    def __str__(self) -> str:
        msg = super().__str__()
        if self.stage:
            return f"[{self.stage}] {type(self).__name__}: {msg}"
        return f"{type(self).__name__}: {msg}"


class ValidationError(HodowaveError):
    exit_code = 2


class NumericalError(HodowaveError):
    exit_code = 3


# stream_core
class NonSmoothVorticity(ValidationError):
    pass


class SubcriticalSlope(ValidationError):
    pass


class NoWavesForR(ValidationError):
    def __init__(self, message: str = "", R_c: float | None = None, s_c: float | None = None, **kw):
        super().__init__(message, R_c=R_c, s_c=s_c, **kw)
        self.R_c = R_c
        self.s_c = s_c


# dispersion
class SingularBVP(NumericalError):
    pass


class SupercriticalStream(ValidationError):
    pass


# hodograph_core
class DegenerateHp(NumericalError):
    pass


class SolverSingular(NumericalError):
    pass


class NewtonDiverged(NumericalError):
    pass


# continuation
class KernelNotFound(NumericalError):
    pass


class StepFailure(NumericalError):
    pass


# spectra
class EigensolverFailure(NumericalError):
    pass


class KernelNotSimple(NumericalError):
    pass


class AmbiguousSign(NumericalError):
    pass


# bifurcation
class NotReached(NumericalError):
    pass


class CurveBroken(NumericalError):
    pass


class OutOfRange(ValidationError):
    pass


class KernelCheckFailed(NumericalError):
    pass


class FellBackToStokes(NumericalError):
    pass


class FitAmbiguous(NumericalError):
    pass


# cli
class IoFailure(NumericalError):
    pass
