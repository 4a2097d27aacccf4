"""Exception hierarchy shared by every stage of the pipeline.

Each class carries the process exit code the command-line front end maps it to.
"""


class MudecError(Exception):
    exit_code = 1


class ConfigError(MudecError, ValueError):
    exit_code = 2


class ParameterError(MudecError, ValueError):
    """A numeric argument is outside its admissible range."""

    exit_code = 2


class DataError(MudecError):
    exit_code = 3


class EmptyDatasetError(DataError):
    pass


class EmptyDecompositionError(DataError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ContainerError(DataError):
    """Malformed or corrupted signal container file."""


class NumericalError(MudecError):
    exit_code = 4

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConvergenceError(NumericalError):
    pass


class DegenerateFeatureWarning(UserWarning):
    pass
