"""Exception types shared across the package.

The CLI maps each category to a distinct exit code, so errors raised by
library code should use the most specific class that applies.
"""

from __future__ import annotations


class AbsmoveError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(AbsmoveError):
    """Invalid or inconsistent configuration."""


class EnvironmentTooDenseError(AbsmoveError):
    """Block placement could not satisfy the non-overlap rule."""


class FileFormatError(AbsmoveError):
    """A serialized artifact is malformed, truncated, or version-mismatched."""


class GcmFormatError(FileFormatError):
    """Connectivity-map file is malformed, truncated, or mismatched."""


class InfeasibleSetError(AbsmoveError):
    """A feasible-cell set is empty or a placement cannot be repaired."""


class OracleCapError(AbsmoveError):
    """Exhaustive search space exceeds the configured cap."""


class ContractViolationError(AbsmoveError):
    """A runtime invariant (kinematics, coverage bookkeeping) was broken."""
