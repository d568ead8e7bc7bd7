"""Exception hierarchy shared across the library."""


class BoundaryLabError(Exception):
    """Base class for all library-specific failures."""


class FormatError(BoundaryLabError):
    """A binary or text input does not match its declared format."""


class ParseError(FormatError):
    """A text record could not be parsed; carries the 1-based line number."""

    def __init__(self, message, line_number):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class SamplerStalled(BoundaryLabError):
    """Rejection sampling exceeded its proposal budget."""

    def __init__(self, message, acceptance_rate):
        super().__init__(f"{message} (acceptance rate {acceptance_rate:.3g})")
        self.acceptance_rate = acceptance_rate


class NumericError(BoundaryLabError):
    """A numerical routine failed to reach its accuracy target."""


class IllConditionedError(NumericError):
    """A linear solve failed; usually fixable with a larger ridge parameter."""


class TrainingDiverged(NumericError):
    """Loss became non-finite during gradient training."""


class AttackInfeasible(BoundaryLabError):
    """No adversarial example exists under the attack's constraints."""


class UnsupportedStrategy(BoundaryLabError):
    """The requested selection strategy cannot run against this model."""
