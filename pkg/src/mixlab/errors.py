"""Exception hierarchy shared by every mixlab module."""


class MixlabError(Exception):
    """Base class for all library errors."""


class InvalidArgument(MixlabError, ValueError):
    pass


class DimensionError(MixlabError, ValueError):
    pass


class IoError(MixlabError, OSError):
    """A file could not be read or written; the message names the path."""


class NumericalError(MixlabError, ArithmeticError):
    """Base for failures caused by the numbers rather than the call."""


class NotPositiveDefinite(NumericalError):
    pass


class DegenerateData(NumericalError):
    pass


class DegenerateResponsibility(NumericalError):
    def __init__(self, message, pass_index=None):
        super().__init__(message if pass_index is None else f"pass {pass_index}: {message}")
        self.pass_index = pass_index


class EmptyComponent(NumericalError):
    def __init__(self, message, component=None, pass_index=None):
        super().__init__(message if pass_index is None else f"pass {pass_index}: {message}")
        self.component = component
        self.pass_index = pass_index


class UnsupportedModel(MixlabError, TypeError):
    pass


class SingularMap(NumericalError):
    pass


class NonFiniteIntegrand(NumericalError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class NumericalOverflow(NumericalError):
    def __init__(self, message, location=None):
        super().__init__(message if location is None else f"{location}: {message}")
        self.location = location
