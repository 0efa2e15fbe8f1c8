"""Exception hierarchy for the minkwave laboratory."""


class MinkwaveError(Exception):
    """Base class for all package errors."""


# --- geometry ---------------------------------------------------------------

class NonUnitSpeed(MinkwaveError):
    """String data (a, b) fails the unit-speed requirement."""

    def __init__(self, report):
        self.report = report
        super().__init__(
            f"loop is not unit speed: max deviation a={report.max_dev_a:.3e}, "
            f"b={report.max_dev_b:.3e} exceeds tol={report.tol:.1e}"
        )


class SingularChart(MinkwaveError):
    """Normal-coordinate map is not a diffeomorphism on the requested tube."""


class DegenerateTangents(SingularChart):
    """Surface tangents fail to span a timelike plane (not immersed there)."""


class OutOfTube(MinkwaveError):
    """Chart evaluation requested outside the tube aperture."""


class NewtonDiverged(MinkwaveError):
    """Chart inversion failed to converge; carries the final residual."""

    def __init__(self, residual, msg="chart inversion did not converge"):
        self.residual = residual
        super().__init__(f"{msg} (residual {residual:.3e})")


class ChartUnavailable(MinkwaveError):
    """Requested time lies outside the chart's covered range."""


# --- wave solver ------------------------------------------------------------

class BlowUp(MinkwaveError):
    """Field left the stability guard band; the run is aborted."""

    def __init__(self, t, max_abs):
        self.t = t
        self.max_abs = max_abs
        super().__init__(f"solution blow-up at t={t:.6f}: max|u|={max_abs:.3e}")


# --- diagnostics ------------------------------------------------------------

class InsufficientSnapshots(MinkwaveError):
    """Snapshot store does not bracket the requested evaluation times."""


class OutOfBox(MinkwaveError):
    """Pullback point falls outside the Cartesian solver box."""


# --- decomposition ----------------------------------------------------------

class HypothesisFailed(MinkwaveError):
    """Smallness hypothesis of the projection/coercivity machinery fails."""


class NotUnique(MinkwaveError):
    """Profile projection found competing minima without a convexity certificate."""


class InsufficientSlices(MinkwaveError):
    """Not enough adjacent slices for the y0 derivative stencil."""


# --- 1D ODE lab -------------------------------------------------------------

class NoZeroCrossing(MinkwaveError):
    """Fiber has no zero in the admissible window; no interface to rescale around."""


class HypothesisViolated(MinkwaveError):
    """Input norm exceeds the admissible ball of the solution operator."""


class NoContraction(MinkwaveError):
    """Picard iteration observed a contraction factor >= 1."""

    def __init__(self, factor):
        self.factor = factor
        super().__init__(f"no contraction: observed factor {factor:.4f} >= 1")


# --- harness ----------------------------------------------------------------

class NonPositiveValue(MinkwaveError):
    """Log-log rate fit received a non-positive value."""
