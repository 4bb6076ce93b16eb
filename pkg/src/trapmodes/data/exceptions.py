class TrapModesException(Exception):
    """A common base class for custom exceptions within the trapmodes codebase"""


class ConfigurationError(TrapModesException):
    """A trap or run configuration could not be loaded or is physically inconsistent"""


class SingularConfigurationError(TrapModesException):
    """Two ions coincide (or nearly so), so the Coulomb terms are undefined"""
