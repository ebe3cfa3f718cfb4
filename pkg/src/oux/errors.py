"""Typed failures shared across the library."""


class EvaluationOverflow(OverflowError):
    """A special-function value left the representable float64 range.

    Raised instead of returning inf/garbage, e.g. for high-order
    eigenfunction evaluation at large barrier levels.
    """


class NotEnoughRoots(RuntimeError):
    """The eigenvalue scan found fewer sign changes than requested.

    Attributes
    ----------
    found : int
        Number of roots located below the scan ceiling.
    requested : int
        Number of roots asked for.
    """

    def __init__(self, found, requested, alpha_max):
        self.found = found
        self.requested = requested
        self.alpha_max = alpha_max
        super().__init__(
            f"found {found} of {requested} requested eigenvalues below "
            f"alpha_max={alpha_max}; raise alpha_max"
        )


class ResidualTooLarge(RuntimeError):
    """Time-change ODE solution fails its defining-equation residual check."""


class NonMonotoneGamma(RuntimeError):
    """Tabulated time change is not strictly increasing (numerical blow-up)."""


class GridTooNarrow(ValueError):
    """State grid leaves non-negligible stationary mass at its boundary."""


class DegenerateWeights(RuntimeError):
    """Importance weights collapsed onto a single sample (proposal mismatch)."""
