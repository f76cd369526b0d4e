"""Exception hierarchy shared by every module of the package."""


class ExpSpanError(Exception):
    """Base class for all errors raised by :mod:`expspan`."""


class DomainError(ExpSpanError, ValueError):
    """An input lies outside the mathematical domain of an operation."""


class DistinctnessError(ExpSpanError, ValueError):
    """Entries that must be pairwise distinct are not."""


class DimensionMismatchError(ExpSpanError, ValueError):
    """Operands live in spaces of different dimension."""


class UsageError(ExpSpanError, ValueError):
    """An operation was called outside its contract (bad index, wrong weight kind, ...)."""


class QuadratureError(ExpSpanError):
    """Gauss-Legendre order doubling did not converge."""

    def __init__(self, message, previous, last):
        super().__init__(message)
        self.previous = previous
        self.last = last


class NotPositiveDefiniteError(ExpSpanError, ArithmeticError):
    """Cholesky met a pivot that is non-positive or below the requested floor."""

    def __init__(self, index, value):
        super().__init__(f"pivot at index {index} not positive enough: {value}")
        self.index = index
        self.value = value


class PrecisionExhaustedError(ExpSpanError, ArithmeticError):
    """Escalation reached the configured precision ceiling without success."""

    def __init__(self, limit, detail=""):
        msg = f"precision exhausted at escalation limit of {limit} bits"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.limit = limit


class WeightBoundError(ExpSpanError, ValueError):
    """A weight violates |u_n| <= exp(-delta * lambda_n)."""

    def __init__(self, n, modulus, bound):
        super().__init__(f"weight u_{n} has modulus {float(modulus):.6g} > bound {float(bound):.6g}")
        self.n = n


class InternalConsistencyError(ExpSpanError, AssertionError):
    """Two independent computations of the same quantity disagree."""


class UndecidedRankError(ExpSpanError, ArithmeticError):
    """A numerical rank decision straddles the zero threshold at the current precision."""


class ConfigError(ExpSpanError, ValueError):
    """Configuration failed validation; ``violations`` lists every problem found."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.violations))
