"""Exception hierarchy.

Two families matter to callers: ``ValidationError`` for inputs that violate a
precondition (CLI exit code 2) and ``NumericalError`` for computations that
ran but did not produce an acceptable answer (CLI exit code 3).
"""


class TripointError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(TripointError):
    pass


class NumericalError(TripointError):
    pass


class DuplicateWells(ValidationError):
    pass


class HypothesisViolated(ValidationError):
    def __init__(self, name, witness, report=None):
        self.name = name
        self.witness = witness
        self.report = report
        super().__init__(f"hypothesis {name!r} violated at {witness}")


class NoJunction(ValidationError):
    def __init__(self, sides, witness_index):
        self.sides = tuple(float(s) for s in sides)
        self.witness_index = witness_index
        super().__init__(
            f"side {witness_index} = {self.sides[witness_index]:.6g} is not shorter "
            f"than the sum of the other two in {self.sides}"
        )


class DeltaTooLarge(ValidationError):
    def __init__(self, delta, min_alpha):
        self.delta = delta
        self.min_alpha = min_alpha
        super().__init__(f"delta={delta:.6g} must be < min(alpha)/2 = {min_alpha / 2:.6g}")


class ResolutionTooCoarse(ValidationError):
    def __init__(self, eps, h):
        self.eps = eps
        self.h = h
        super().__init__(f"eps={eps:.6g} < 3h = {3 * h:.6g}")


class StepTooCoarse(ValidationError):
    pass


class ScaleConditionViolated(ValidationError):
    def __init__(self, sigma, eps, alpha):
        self.sigma, self.eps, self.alpha = sigma, eps, alpha
        super().__init__(f"sigma={sigma:.6g} > eps^(1-alpha) = {eps ** (1 - alpha):.6g}")


class GridMismatch(ValidationError):
    pass


class EmptyAnnulus(ValidationError):
    pass


class NoTriplePoint(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class NonFinite(NumericalError):
    pass


class NoConvergence(NumericalError):
    def __init__(self, iterations, detail="", pair=None):
        self.iterations = iterations
        self.pair = pair
        msg = f"no convergence after {iterations} iterations"
        if pair is not None:
            msg += f" for pair {pair}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class ResidualTooLarge(NumericalError):
    def __init__(self, residual, bound):
        self.residual = residual
        self.bound = bound
        super().__init__(f"ODE residual {residual:.3e} exceeds {bound:.3e}")


class TailNotSettled(NumericalError):
    pass


class EnergyIncreased(NumericalError):
    def __init__(self, delta):
        self.delta = delta
        super().__init__(f"flow energy rose by {delta:.3e}")


class Blowup(NumericalError):
    pass


class MaxStepsExceeded(NumericalError):
    def __init__(self, steps, residual_trace):
        self.steps = steps
        self.residual_trace = list(residual_trace)
        last = self.residual_trace[-1] if self.residual_trace else float("nan")
        super().__init__(f"not converged after {steps} steps (residual {last:.3e})")
