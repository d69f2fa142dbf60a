"""Exception taxonomy shared across the toolkit."""


class MuscleGaitError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(MuscleGaitError):
    """Malformed or inconsistent configuration input."""


class InputError(MuscleGaitError):
    """A well-formed call received values outside its contract."""


class AttachmentError(InputError):
    """A joint was requested that the attachment does not span."""


class DomainError(InputError):
    """A smooth-curve query fell outside the fitted domain."""


class FitError(MuscleGaitError):
    """Least-squares surrogate fit missed the requested tolerance."""

    def __init__(self, msg, achieved=None):
        super().__init__(msg)
        self.achieved = achieved


class MappingError(MuscleGaitError):
    """A muscle-to-joint torque contribution is missing."""


class RankDeficiencyError(MuscleGaitError):
    """Contact constraint system is singular."""


class SchemaError(MuscleGaitError):
    """A structured file failed schema validation."""


class SimulationError(MuscleGaitError):
    """Closed-loop simulation stalled or the model fell."""
