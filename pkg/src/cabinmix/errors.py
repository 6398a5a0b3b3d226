"""Exception and warning types shared across the package."""

from __future__ import annotations


class CabinmixError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(CabinmixError):
    """An argument is invalid or names a condition the dataset does not have."""


class DatasetError(CabinmixError):
    """The dataset on disk is missing, malformed, or internally inconsistent."""


class ClippingWarning(UserWarning):
    """Synthesized output exceeds digital full scale.

    Carries the absolute peak amplitude so callers can report headroom.
    """

    def __init__(self, message: str, peak: float):
        super().__init__(message)
        self.peak = peak
