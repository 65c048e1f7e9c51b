"""Exception types shared across the library.

Every failure mode raised by quenchlab derives from ``QuenchLabError`` so
callers (and the CLI) can distinguish library errors from programming
mistakes.  Names follow the failure they guard, not the operation that
raises them.
"""


class QuenchLabError(Exception):
    """Base class for all quenchlab errors."""


class NonHermitian(QuenchLabError):
    """Input matrix violates Hermitian symmetry beyond tolerance."""


class DecompositionFailure(QuenchLabError):
    """Eigenvalue solver failed to converge."""


class DimensionCap(QuenchLabError):
    """Requested problem size exceeds a configured safety cap."""


class DegenerateGround(QuenchLabError):
    """Operation requires a unique ground state but the gap is below tolerance."""


class OrderCap(QuenchLabError):
    """Requested cumulant order exceeds the numerical-stability cap."""


class IdentityMismatch(QuenchLabError):
    """Two independent routes to the same quantity disagree beyond tolerance.

    Raised deliberately: a mismatch signals an implementation bug, not a
    property of the input.
    """


class NonlinearFamily(QuenchLabError):
    """Caller supplied a Hamiltonian family that is not linear in the knob."""


class GridTooShort(QuenchLabError):
    """Imaginary-time grid ends before the projected matrix element converges."""


class FitWindowTooNarrow(QuenchLabError):
    """Fewer grid points than a power-law fit can support."""


class NoContinuum(QuenchLabError):
    """The distribution has no continuum part above its lowest atom."""


class NonConcaveInput(QuenchLabError):
    """Samples fed to the conjugate transform are not concave."""


class DivergentMGF(QuenchLabError):
    """Moment generating function diverges on the requested domain."""


class AliasingDetected(QuenchLabError):
    """Fourier inversion grid too coarse for the requested broadening."""


class QuadratureNonConvergent(QuenchLabError):
    """Time-integral evaluation produced non-finite values."""


class WindowTooShort(QuenchLabError):
    """Time grid ends before the windowed integrand has decayed."""


class InsufficientCurves(QuenchLabError):
    """Scaling collapse needs at least three curves."""


class ConfigInvalid(QuenchLabError):
    """Run configuration failed schema validation."""


class ComputationError(QuenchLabError):
    """A scenario computation failed; carries module context in the message."""


class IoError(QuenchLabError):
    """Artifact emission failed."""
