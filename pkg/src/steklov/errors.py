"""Exception types shared across the package."""


class SteklovError(Exception):
    """Base class for all package-specific errors."""


class SizingError(SteklovError):
    """Grid, bandlimit, or coefficient-vector size mismatch."""


class DomainError(SteklovError):
    """Invalid mathematical argument (e.g. |m| > l, negative order)."""


class SolverError(SteklovError):
    """A mode-wise linear solve failed; signals a discretization bug."""


class SpectralValidityError(SteklovError):
    """Computed spectrum has imaginary parts above tolerance.

    Signals that epsilon lies outside the trusted radius or that the
    basis truncation is too small for the requested eigenvalues.
    """


class OracleConvergenceError(SteklovError):
    """Fixed-point iteration of the direct solver failed to contract."""


class DegenerateDomainError(SteklovError):
    """The perturbed radius 1 + eps*rho is not strictly positive."""


class DegeneracyError(SteklovError):
    """Eigenvalue-gradient request at a degenerate eigenvalue without
    opting into the group-mean subgradient."""


class ConfigError(SteklovError):
    """Invalid run configuration."""
