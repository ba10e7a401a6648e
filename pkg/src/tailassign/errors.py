"""Exception types shared across the solver."""

from __future__ import annotations


class TailAssignError(Exception):
    """Base class for solver errors."""


class InputError(TailAssignError):
    """Malformed instance, scenario or configuration data."""


class InfeasibleError(TailAssignError):
    """The model (or an aircraft subgraph) admits no feasible solution."""


class LimitError(TailAssignError):
    """An enumeration or iteration limit was exceeded."""


class UnboundedError(TailAssignError):
    """The LP is unbounded below — a modeling bug for this problem class."""
