"""Exception hierarchy.

``ConfigError`` and ``DataError`` map to CLI exit codes 1 and 2.
"""


class KGExplainError(Exception):
    """Base class for all package errors."""


class ConfigError(KGExplainError):
    """Invalid configuration or parameter value."""


class DataError(KGExplainError):
    """Input data is malformed or inconsistent."""


class ParseError(DataError):
    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


class UnknownIdentifierError(DataError, KeyError):
    def __init__(self, kind, identifier):
        self.kind = kind
        self.identifier = identifier
        super().__init__(f"unknown {kind}: {identifier!r}")

    def __str__(self):
        return self.args[0]


class SchemaError(DataError):
    pass


class RemovalError(DataError):
    pass


class UnsupportedModelError(ConfigError):
    pass


class EmptyPositiveSetError(KGExplainError):
    """No nearest-neighbour pair carries the relation being explained."""


class DegenerateLabelsError(KGExplainError):
    """Surrogate input lacks positive or negative rows."""


class SingularSystemError(ConfigError):
    pass


class NotEnoughTestPointsError(KGExplainError):
    def __init__(self, requested, available):
        self.requested = requested
        self.available = available
        super().__init__(
            f"requested {requested} rank-1 validation triples, only {available} qualify"
        )
