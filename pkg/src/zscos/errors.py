"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class ZSCOSError(Exception):
    exit_code = 1


class ConfigError(ZSCOSError, ValueError):
    exit_code = 1


class DimensionError(ZSCOSError, ValueError):
    exit_code = 1


class ModeError(ZSCOSError, ValueError):
    exit_code = 1


class FormatError(ZSCOSError, ValueError):
    exit_code = 2


class NumericError(ZSCOSError, FloatingPointError):
    exit_code = 3
