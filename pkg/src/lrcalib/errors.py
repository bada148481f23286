"""Exception hierarchy.

Each exception carries the process exit code the command-line front end
uses when it escapes a command (2 config, 3 io, 4 numeric).
"""


class LrcalibError(Exception):
    exit_code = 4


# -- numeric failures -------------------------------------------------------

class NumericError(LrcalibError):
    exit_code = 4


class ZeroVector(NumericError):
    pass


class DimensionMismatch(NumericError):
    pass


class EmptyInput(NumericError):
    pass


class EmptyClass(NumericError):
    pass


class InsufficientPool(NumericError):
    pass


class InsufficientBaseClasses(NumericError):
    pass


class InsufficientClasses(NumericError):
    pass


class EmptyPool(NumericError):
    pass


class DegenerateRadius(NumericError):
    pass


class NegativeLoss(NumericError):
    pass


class NonpositiveWeight(NumericError):
    pass


# -- configuration ----------------------------------------------------------

class ConfigError(LrcalibError):
    exit_code = 2


class InvalidConfig(ConfigError):
    pass


class InvalidGrid(ConfigError):
    pass


# -- files ------------------------------------------------------------------

class IoError(LrcalibError):
    exit_code = 3


class ParseError(IoError):
    pass


class CheckpointMismatch(IoError):
    pass
