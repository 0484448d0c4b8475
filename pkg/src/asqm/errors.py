"""Exception hierarchy shared by all asqm modules.

Every error carries an ``exit_code`` so the CLI can map error classes onto
distinct process exit statuses without a lookup table.
"""
from __future__ import annotations


class AsqmError(Exception):
    exit_code = 1


class InvalidInputError(AsqmError, ValueError):
    exit_code = 2


class BitrateRangeError(InvalidInputError):
    def __init__(self, profile: str, br: float, br_min: float, br_max: float):
        super().__init__(
            f"bitrate {br} kbps outside range [{br_min}, {br_max}] of codec profile {profile!r}"
        )
        self.profile = profile
        self.br = br


class ConfigError(AsqmError):
    exit_code = 3


class ModelDomainError(AsqmError, ArithmeticError):
    exit_code = 4


class UndefinedStationaryError(ModelDomainError):
    pass


class DatasetError(AsqmError):
    """Bad fit dataset. ``row`` is the 1-based data row index when known."""

    exit_code = 5

    def __init__(self, message: str, row: int | None = None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class UnderdeterminedError(DatasetError):
    pass


class NotFoundError(AsqmError, LookupError):
    exit_code = 6


class UserNotFoundError(NotFoundError):
    pass


class AudioNotFoundError(NotFoundError):
    pass


class SessionParseError(AsqmError):
    exit_code = 7

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SessionRangeError(InvalidInputError):
    pass


class SimulationTimeoutError(AsqmError):
    exit_code = 8


class PlacementError(AsqmError):
    exit_code = 9


class RankDeficientWarning(UserWarning):
    pass
