"""Exception hierarchy.

Numerical failures carry enough context (time reached, last drift, offending
indices) to diagnose a run without re-executing it.  The CLI maps
:class:`ValidationError` to exit code 2 and :class:`SolverError` to exit code 3.
"""


class ParoscError(Exception):
    """Base class for all library errors."""


class ValidationError(ParoscError, ValueError):
    """Bad user input: parameters, configuration or shapes."""


class InvalidSpaceError(ValidationError):
    pass


class CompositionError(ValidationError):
    """Operands live on incompatible spaces or have mismatched dimensions."""


class InvalidStateError(ValidationError):
    pass


class NonHermitianError(ValidationError):
    pass


class SolverError(ParoscError, RuntimeError):
    """A numerical procedure failed to reach its target."""


class StiffnessError(SolverError):
    def __init__(self, t, h, message=None):
        self.t = t
        self.h = h
        super().__init__(message or f"step size underflow (h={h:.3e}) at t={t:.6g}")


class RunawayError(SolverError):
    def __init__(self, t, norm):
        self.t = t
        self.norm = norm
        super().__init__(f"trajectory diverged (|y|={norm:.3e}) at t={t:.6g}")


class NonConvergedError(SolverError):
    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)


class AmbiguousSteadyStateError(SolverError):
    def __init__(self, eigenvalues):
        self.eigenvalues = eigenvalues
        super().__init__(f"degenerate null space, smallest eigenvalues {eigenvalues}")


class ConvergenceTimeoutError(SolverError):
    def __init__(self, periods, drift):
        self.periods = periods
        self.drift = drift
        super().__init__(
            f"no stroboscopic convergence after {periods} periods (last drift {drift:.3e})"
        )


class BudgetExhaustedError(SolverError):
    def __init__(self, history):
        self.history = history
        last = history[-1] if history else None
        super().__init__(f"truncation budget exhausted; last (N, value) = {last}")


class NumericStabilityError(SolverError):
    def __init__(self, m, n, r):
        self.m, self.n, self.r = m, n, r
        super().__init__(f"non-finite Wigner basis function W_{m}{n} at r={r:.6g}")


class GridTooSmallError(ValidationError):
    def __init__(self, deficit):
        self.deficit = deficit
        super().__init__(f"phase-space grid misses {deficit:.2e} of the Wigner mass")


class AllPointsFailedError(SolverError):
    pass
