"""Exception hierarchy shared across the toolkit.

Exit-code mapping used by the CLI: config errors -> 2, data errors -> 3,
anything else -> 4.
"""


class DrivescopeError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(DrivescopeError):
    """Invalid configuration or parameters."""


class DataError(DrivescopeError):
    """Invalid or missing input data."""


# --- ingestion ---

class SchemaViolation(DataError):
    def __init__(self, row, signal, reason):
        super().__init__(f"row {row}, signal {signal!r}: {reason}")
        self.row = row
        self.signal = signal
        self.reason = reason


class NonMonotoneTimestamp(DataError):
    def __init__(self, row, timestamp):
        super().__init__(f"row {row}: timestamp {timestamp} not strictly increasing")
        self.row = row
        self.timestamp = timestamp


# --- feature pipeline ---

class MeasurementTooShort(DataError):
    pass


class MissingSignal(DataError):
    pass


class DomainError(DataError):
    pass


class EmptyResult(DataError):
    pass


class UnknownCategory(DataError):
    pass


# --- detectors ---

class EmptyData(DataError):
    pass


class DegenerateData(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class InvalidContamination(ConfigError):
    pass


# --- proxy labeler ---

class UnknownFeature(ConfigError):
    def __init__(self, rule, feature):
        super().__init__(f"rule {rule!r} references unknown feature {feature!r}")
        self.rule = rule
        self.feature = feature


# --- synthetic generator / configs ---

class InvalidConfig(ConfigError):
    pass


# --- t-SNE ---

class TooFewPoints(DataError):
    pass


class NonFiniteDistance(DataError):
    pass


class DivergenceDetected(DrivescopeError):
    pass


# --- eval harness ---

class EmptyProxySet(DataError):
    pass


class EmptyNormalSet(DataError):
    pass


class TooFewWindows(DataError):
    pass


class SingleClass(DataError):
    pass


class LengthMismatch(DataError):
    pass


class MissingInput(DataError):
    pass
