"""Exception types shared across the library.

Every failure mode that callers are expected to handle gets its own class so
the CLI can map them onto exit codes without string matching.
"""


class FreeconvError(Exception):
    """Base class for all library errors."""


class OriginError(FreeconvError):
    """The spectral-plane origin is excluded (phase split undefined at z=0)."""

    def __init__(self, message="origin excluded: z = 0 has no phase split; use grids that avoid it"):
        super().__init__(message)


class SingularMatrixError(FreeconvError):
    """2x2 inversion failed; carries the offending |det|."""

    def __init__(self, det_abs):
        self.det_abs = det_abs
        super().__init__(f"singular 2x2 matrix: |det| = {det_abs:.3e}")


class ConvergenceError(FreeconvError):
    """A fixed-point/Newton solve did not reach tolerance; carries the last residual."""

    def __init__(self, message, residual=None):
        self.residual = residual
        if residual is not None:
            message = f"{message} (last residual {residual:.3e})"
        super().__init__(message)


class BranchUndecidedError(FreeconvError):
    """The asymptotic branch g ~ 1/z could not be certified at any ladder scale."""


class CenteredTransformError(FreeconvError):
    """S transform requested for a centered ensemble (first cumulant zero)."""

    def __init__(self, message="S transform undefined for centered ensemble"):
        super().__init__(message)


class SpecValidationError(FreeconvError):
    """Aggregated validation failures for ensemble specs or job configs."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {v}" for v in self.violations))


class GridError(FreeconvError):
    """Grid mismatch, empty grid, or grid/coverage precondition violations."""


class SampleFailureError(FreeconvError):
    """Too many Monte Carlo trials failed even after retries."""


class EmptyCloudError(FreeconvError):
    """An eigenvalue cloud required by an operation is empty."""
