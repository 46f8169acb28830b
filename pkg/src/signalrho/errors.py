"""Exception hierarchy shared by all signalrho modules.

Two broad classes matter for the CLI exit codes: configuration problems
(bad matrices, inconsistent schedules, parameters outside the supported
regime) and numerical failures (missing fixed points, singular solves,
divergent tail integrals).
"""


class SignalRhoError(Exception):
    """Base class for all package errors."""


class ValidationError(SignalRhoError):
    """Invalid input: shapes, Hermiticity, schedule structure, config files."""


class DomainError(ValidationError):
    """Parameters outside the regime where the requested quantity exists."""


class StepSizeError(ValidationError):
    """Time step too large for the first-order instrument decomposition."""


class NumericalError(SignalRhoError):
    """A numerical procedure failed (eigensolve, linear solve, integral)."""


class NumericalInputError(NumericalError):
    """NaN or Inf encountered where finite data is required."""


class SingularOperatorError(NumericalError):
    """Linear solve against an (effectively) singular operator."""

    def __init__(self, role: str, detail: str = ""):
        self.role = role
        msg = f"singular operator in role '{role}'"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class NoFixedPointError(NumericalError):
    """No eigenvalue found within tolerance of the requested target."""


class DegenerateFixedPointError(NumericalError):
    """Two or more eigenvalues compete for the requested target."""

    def __init__(self, target, candidates):
        self.target = target
        self.candidates = tuple(candidates)
        super().__init__(
            f"degenerate eigenvalues near {target}: "
            + ", ".join(repr(c) for c in self.candidates)
        )


class DivergentTailError(NumericalError):
    """Tail generator is not Hurwitz, so the infinite-time integral diverges."""
