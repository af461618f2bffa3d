"""Exception hierarchy.

The three top-level families map onto CLI exit codes: input problems (2),
protocol failures (3) and numeric/overflow failures (4).
"""

from __future__ import annotations


class FedHPError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class InputError(FedHPError, ValueError):
    exit_code = 2


class ReportFormatError(InputError):
    """A client LHO file is malformed or violates the HP space."""

    def __init__(self, message: str, client_id: str | None = None, field: str | None = None):
        self.client_id = client_id
        self.field = field
        prefix = f"[client {client_id}] " if client_id is not None else ""
        suffix = f" (field: {field})" if field is not None else ""
        super().__init__(f"{prefix}{message}{suffix}")


class ProtocolError(FedHPError):
    exit_code = 3


class AllNoiseError(ProtocolError):
    """Density clustering labelled every point as noise."""


class MissingShareError(ProtocolError):
    """A distributed operation did not receive every party's share."""


class MissingContributionError(ProtocolError):
    """Collective key generation is missing a party contribution."""


class NumericError(FedHPError, ArithmeticError):
    exit_code = 4


class LevelExhaustedError(NumericError):
    """Not enough levels left for the requested homomorphic operation."""


class ScaleMismatchError(NumericError):
    """Operands disagree on level or scale."""


class SlotOverflowError(NumericError):
    """More values than plaintext slots."""


class ClusterOverflowError(NumericError):
    """More clusters than the public slot budget K_max."""


class DivisorRangeError(NumericError):
    """A public divisor bound (count_cap) was exceeded."""
