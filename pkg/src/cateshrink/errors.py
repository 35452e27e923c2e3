"""Exception hierarchy shared by the library, service, and CLI.

Each error carries a machine-readable category; the CLI maps categories to
exit codes (validation -> 2, numerical -> 3, simulation -> 4).
"""

from __future__ import annotations


class CateShrinkError(Exception):
    """Base class for all package errors."""

    category = "error"
    exit_code = 1


class ValidationError(CateShrinkError):
    """Bad input data, file, or configuration."""

    category = "validation"
    exit_code = 2


class NumericalError(CateShrinkError):
    """Rank deficiency, singularity, or failed numerical invariant."""

    category = "numerical"
    exit_code = 3


class SimulationFailureError(CateShrinkError):
    """Too many replication-level failures in a Monte Carlo sweep."""

    category = "simulation"
    exit_code = 4
