"""Shared exception types.

Configuration errors mean the caller asked for something structurally
impossible (bad ranges, unknown keys); domain errors mean well-formed
inputs whose values violate a precondition; format errors mean bytes
on disk that do not parse as the expected format.
"""


class ScatInpaintError(Exception):
    pass


class ConfigurationError(ScatInpaintError, ValueError):
    pass


class DomainError(ScatInpaintError, ValueError):
    pass


class FormatError(ScatInpaintError, ValueError):
    pass


class CheckpointError(ScatInpaintError, RuntimeError):
    pass


class TrainingDiverged(ScatInpaintError, RuntimeError):
    """Raised when a loss term stops being finite. Carries the term name."""

    def __init__(self, term: str, value: float, step: int):
        self.term = term
        self.value = value
        self.step = step
        super().__init__(
            f"non-finite loss term '{term}' ({value!r}) at step {step}"
        )
