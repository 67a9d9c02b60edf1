"""Typed errors shared across the pipeline."""


class TinyFitError(Exception):
    """Base class for all errors raised by this package."""


# --- signal / datasets ---

class EmptyRecording(TinyFitError):
    pass


class BadTimestamps(TinyFitError):
    pass


class EmptyDataset(TinyFitError):
    pass


class TooFewSubjects(TinyFitError):
    pass


class DatasetNotFound(TinyFitError):
    pass


# --- nn ---

class BadClassCount(TinyFitError):
    pass


class BadInput(TinyFitError):
    pass


class BadLabel(TinyFitError):
    pass


class InsufficientExamples(TinyFitError):
    def __init__(self, class_name: str, have: int, need: int):
        super().__init__(f"class {class_name!r}: have {have} windows, need {need}")
        self.class_name = class_name
        self.have = have
        self.need = need


# --- quant / bundle ---

class BadSparsity(TinyFitError):
    pass


class EmptyCalibration(TinyFitError):
    pass


class BadMagic(TinyFitError):
    pass


class BadFormatVersion(TinyFitError):
    pass


class Truncated(TinyFitError):
    pass


class CrcMismatch(TinyFitError):
    pass


# --- runtime ---

class ArenaOverflow(TinyFitError):
    def __init__(self, needed: int, capacity: int):
        super().__init__(f"arena overflow: need {needed} bytes, capacity {capacity}")
        self.needed = needed
        self.capacity = capacity


class NoModel(TinyFitError):
    pass


# --- server / device ---

class TooShort(TinyFitError):
    def __init__(self, min_needed: int, have: int):
        super().__init__(f"recording too short: {have} samples, need >= {min_needed}")
        self.min_needed = min_needed
        self.have = have


class JobAlreadyActive(TinyFitError):
    pass


class ServerUnreachable(TinyFitError):
    pass
