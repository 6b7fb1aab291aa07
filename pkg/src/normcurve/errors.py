"""Exception hierarchy shared by the package.

The CLI maps these onto exit codes: bad input -> 1, :class:`RegimeError`
-> 2, :class:`ToleranceError` -> 3.
"""


class RegimeError(RuntimeError):
    """The mathematics does not apply: no curve, cusp, several minima..."""


class ConvergenceError(RegimeError):
    """An iteration (Newton, continuation) failed to converge."""


class InversionError(RegimeError):
    """``h(w) = z`` has no solution in the reflection annulus."""


class ToleranceError(RuntimeError):
    """Two independent numerical routes disagree beyond tolerance."""
