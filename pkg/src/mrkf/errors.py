"""Exception hierarchy.  ``exit_code`` is what the CLI returns for each."""


class MrkfError(Exception):
    exit_code = 1


class DimensionMismatch(MrkfError, ValueError):
    exit_code = 3


class NotPositiveDefinite(MrkfError, ValueError):
    exit_code = 4


class InvalidMask(MrkfError, ValueError):
    exit_code = 5


class UndeclaredVariable(MrkfError, KeyError):
    exit_code = 6


class UnassignedVariable(MrkfError, KeyError):
    exit_code = 16


class NoConvergence(MrkfError, RuntimeError):
    exit_code = 7


class Unobservable(MrkfError, ValueError):
    exit_code = 8


class Infeasible(MrkfError, RuntimeError):
    exit_code = 9


class SolverFailure(MrkfError, RuntimeError):
    exit_code = 10


class Unstable(MrkfError, ValueError):
    exit_code = 11


class InsufficientData(MrkfError, ValueError):
    exit_code = 12


class VerificationFailed(MrkfError, RuntimeError):
    exit_code = 13


class ConfigParseError(MrkfError, ValueError):
    exit_code = 14


class InputOutputError(MrkfError, OSError):
    exit_code = 15


# 0 success, 1 unexpected error, 2 command-line usage (argparse)
EXIT_CODES = {
    cls.__name__: cls.exit_code
    for cls in (DimensionMismatch, NotPositiveDefinite, InvalidMask, UndeclaredVariable, UnassignedVariable,
                NoConvergence, Unobservable, Infeasible, SolverFailure, Unstable, InsufficientData,
                VerificationFailed, ConfigParseError, InputOutputError)
}
