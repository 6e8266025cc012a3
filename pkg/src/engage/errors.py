"""Exception types shared across the toolkit."""


class EngageError(Exception):
    """Base class for all domain errors."""


# --- annotation ---

class MissingFile(EngageError):
    pass


class MalformedRow(EngageError):
    def __init__(self, line: int, detail: str = ""):
        self.line = line
        super().__init__(f"malformed row at line {line}" + (f": {detail}" if detail else ""))


class ValueOutOfRange(EngageError):
    def __init__(self, line: int, value: float):
        self.line = line
        self.value = value
        super().__init__(f"value {value} outside [0,1] at line {line}")


class EmptyTrack(EngageError):
    pass


class NonPositiveS(EngageError):
    pass


class LengthMismatch(EngageError):
    pass


class TooShort(EngageError):
    pass


class ZeroVariance(EngageError):
    pass


class NoOverlap(EngageError):
    def __init__(self, pair):
        self.pair = pair
        super().__init__(f"no annotation overlap for coder pair {pair}")


class RateMismatch(EngageError):
    pass


# --- dataset ---

class DuplicateId(EngageError):
    pass


class BadChannelCount(EngageError):
    pass


# --- backbone / files ---

class BackboneNotLoaded(EngageError):
    pass


class DimensionMismatch(EngageError):
    pass


class BadMagic(EngageError):
    pass


class TruncatedFile(EngageError):
    pass


class VersionMismatch(EngageError):
    pass


class CorruptPayload(EngageError):
    pass


# --- model / training ---

class ShapeMismatch(EngageError):
    pass


class NonFiniteActivation(EngageError):
    pass


class EmptyBatch(EngageError):
    pass


class EmptyDataset(EngageError):
    pass


class DivergenceDetected(EngageError):
    pass


# --- evaluation ---

class EmptySet(EngageError):
    pass


class SingleClass(EngageError):
    pass


# --- streaming ---

class ModelNotLoaded(EngageError):
    pass


class EmptyStats(EngageError):
    pass


# --- cli / service ---

class ConfigError(EngageError):
    def __init__(self, path: str, detail: str, line: int | None = None):
        self.path = path
        self.line = line
        where = f"{path}:{line}" if line is not None else path
        super().__init__(f"config error at {where}: {detail}")
