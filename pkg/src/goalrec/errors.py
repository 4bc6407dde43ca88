"""Exception types raised across the package."""


class GoalrecError(Exception):
    """Base class for all package errors."""


class SceneValidationError(GoalrecError):
    """A scene file or in-memory scene violates a structural rule."""


class OffMapError(GoalrecError):
    """A vehicle position is not within tolerance of any lane."""


class UnreachableGoalError(GoalrecError):
    """No lane path from the current lane reaches the goal lane."""


class DegenerateObstacleError(GoalrecError):
    """An obstacle subtends a zero (or straight) angle at the ego centre."""


class EgoInsideObstacleError(GoalrecError):
    """The ego centre lies inside or on an obstacle polygon."""


class FeatureConsistencyError(GoalrecError):
    """A value is present for a potentially-missing feature whose
    indicator is true, or vice versa."""


class MissingModelError(GoalrecError):
    """No trained tree is available for a generated goal's type."""


class DegeneratePosteriorError(GoalrecError):
    """Every likelihood-prior product vanished, so the posterior is
    undefined (cannot happen while likelihoods stay inside (0, 1))."""


class ModelFormatError(GoalrecError):
    """A model file is malformed, has an unknown feature id, or carries
    an unsupported format version."""


class PropositionError(GoalrecError):
    """A proposition file is malformed or uses an unsupported
    constraint kind."""


class RecordingFormatError(GoalrecError):
    """A trajectory CSV is missing required columns or is malformed."""


class InsufficientEpisodesError(GoalrecError):
    """Too few episodes to populate every split under the chosen policy."""
