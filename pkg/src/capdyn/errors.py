"""Exception hierarchy shared by all capdyn modules.

Each class carries a short ``name`` that the command-line front end prints
next to the message, so scripts can match on it.
"""


class CapdynError(Exception):
    """Base class for every error raised by the library."""

    name = "capdyn-error"


class DomainError(CapdynError, ValueError):
    name = "domain"


class CompositionError(CapdynError, ValueError):
    name = "composition"


class SingularRateError(CapdynError, ValueError):
    name = "singular-rate"


class UndefinedPeakError(CapdynError, ValueError):
    name = "undefined-peak"


class SelfTransferError(CapdynError, ValueError):
    name = "self-transfer"


class SignError(CapdynError, ValueError):
    name = "sign"


class ArityError(CapdynError, ValueError):
    name = "arity"


class SingularUtilityError(CapdynError, ArithmeticError):
    name = "singular-utility"


class SingularStepError(CapdynError, ArithmeticError):
    name = "singular-step"


class NonDiagonalizableError(CapdynError, ArithmeticError):
    name = "non-diagonalizable"


class NumericalResidueError(CapdynError, ArithmeticError):
    name = "numerical-residue"
