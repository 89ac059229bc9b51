"""Exception hierarchy shared across the package."""


class BiCoGError(Exception):
    """Base class for all errors raised by this package."""


class InvalidState(BiCoGError, ValueError):
    pass


class InsufficientClassSamples(BiCoGError, ValueError):
    pass


class NoPrototype(BiCoGError, ValueError):
    pass


class DimensionMismatch(BiCoGError, ValueError):
    pass


class EmptyTrainSet(BiCoGError, ValueError):
    pass


class PeerCountMismatch(BiCoGError, ValueError):
    pass


class NoConsensus(BiCoGError):
    """No labeled sample produced a unique majority among the peers."""


class InvalidErrorRatio(BiCoGError, ValueError):
    pass


class NoiseTooHigh(BiCoGError, ValueError):
    pass


class EmptySubset(BiCoGError, ValueError):
    pass


class UnknownId(BiCoGError, KeyError):
    pass


class InvalidParams(BiCoGError, ValueError):
    pass


class ParseError(BiCoGError, ValueError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class MissingColumn(BiCoGError, KeyError):
    pass


class ConfigError(BiCoGError, ValueError):
    pass
