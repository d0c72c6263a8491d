"""Exception hierarchy shared across the toolkit.

Two branches matter to callers. ValidationError means the request itself is
ill-posed (bad law, violated hypothesis, argument outside the domain) and maps
to CLI exit code 2. ResourceError means the request was legal but blew through
a configured budget, and maps to exit code 3. Everything inherits from
ToolkitError so `except ToolkitError` catches the lot.
"""

from __future__ import annotations


class ToolkitError(Exception):
    """Base class for every error this package raises on purpose."""


class ValidationError(ToolkitError):
    """The request is ill-posed; retrying with the same inputs cannot succeed."""


class ResourceError(ToolkitError):
    """The request exceeds a configured resource budget (memory, population)."""


class SubcriticalModel(ValidationError):
    """Offspring mean is <= 1, so the tree dies out and there is no speed."""


class NonZeroMean(ValidationError):
    """Displacement law must be centered; its mean is not zero."""


class EmptySupport(ValidationError):
    """A pmf has no usable support (no mass, or missing a required region)."""


class NotSchroeder(ValidationError):
    """Operation needs 0 < p0 + p1 < 1 so that thin trees are possible."""


class DegenerateBoundary(ValidationError):
    """The speed sits on the edge of the displacement support; no finite tilt exists."""


class OutOfRange(ValidationError):
    """Argument lies outside the interval where the requested quantity is defined."""


class AtomRequired(ValidationError):
    """Evaluation at the support edge needs an atom with positive mass there."""


class EmptyFeasible(ValidationError):
    """The feasible set of the requested optimization is empty."""


class NoRoot(ValidationError):
    """No sign change inside the finite part of the mgf domain."""


class RequiresBoettcher(ValidationError):
    """Construction forces a regular b-ary prefix; needs p0 = p1 = 0."""


class InsufficientTail(ValidationError):
    """Too few positive exceedances to fit a tail slope."""


class FormulaMismatch(ToolkitError):
    """Two independently computed values that must agree did not. A bug, not bad input."""


class GridOverflow(ResourceError):
    """Requested recursion grid exceeds the memory budget."""


class CapExceeded(ResourceError):
    """A simulation replica grew past the population cap."""

    def __init__(self, message: str, replica: int | None = None,
                 generation: int | None = None, population: int | None = None):
        super().__init__(message)
        self.replica = replica
        self.generation = generation
        self.population = population
