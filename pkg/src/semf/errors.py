"""Exception hierarchy; each class maps to a CLI exit code."""


class SemfError(Exception):
    exit_code = 3


class ConfigError(SemfError, ValueError):
    exit_code = 1


class DataError(SemfError, ValueError):
    exit_code = 2


class NumericError(SemfError, ArithmeticError):
    exit_code = 3


class NoAdmissibleConfig(SemfError):
    exit_code = 3
