from typing import Any, Dict, Optional


class RsvrcError(Exception):
    exit_code = 1


class InvalidArgumentError(RsvrcError, ValueError):
    exit_code = 2


class FormatError(RsvrcError):
    exit_code = 2


class CapacityError(RsvrcError):
    exit_code = 2


class EmbedFailure(RsvrcError):
    """No finite-cost trellis path satisfies the syndrome."""


class DecodeFailure(RsvrcError):
    exit_code = 3


class ExtractionFailure(RsvrcError):
    exit_code = 3

    def __init__(self, message: str, stats: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.stats = stats or {}
