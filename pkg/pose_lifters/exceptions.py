# This code is licensed under the Apache License, Version 2.0. You may
# obtain a copy of this license in the LICENSE.txt file in the root directory
# of this source tree or at http://www.apache.org/licenses/LICENSE-2.0.

"""Exceptions raised by the pose lifting package."""

from typing import Optional


class PoseLiftingError(Exception):
    """Base class for errors raised by this package."""


class DomainError(PoseLiftingError, ValueError):
    """An input lies outside the domain of an operation.

    Raised for non-positive depths, degenerate poses, joint-count mismatches and
    similar shape or value problems.
    """


class FormatError(DomainError):
    """A file is malformed or carries an incompatible format version."""


class UsageError(PoseLiftingError, RuntimeError):
    """An API was called in an invalid state, e.g. backward without a forward cache."""


class NumericalError(PoseLiftingError, ArithmeticError):
    """A numeric failure happened at run time (e.g. a NaN training loss)."""

    def __init__(self, message: str, epoch: Optional[int] = None) -> None:
        """
        Args:
            message: Description of the failure.
            epoch: The training epoch during which the failure happened, if any.
        """
        super().__init__(message)
        self.epoch = epoch
