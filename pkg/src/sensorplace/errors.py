"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class SensorPlaceError(Exception):
    exit_code = 1


class InvalidArgument(SensorPlaceError, ValueError):
    exit_code = 2


class ConfigError(SensorPlaceError, ValueError):
    exit_code = 2


class InsufficientData(SensorPlaceError, ValueError):
    exit_code = 3


class DataError(SensorPlaceError, IOError):
    exit_code = 3


class NumericError(SensorPlaceError, ArithmeticError):
    exit_code = 4
