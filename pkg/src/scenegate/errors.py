"""Exception types shared across the library."""


class SceneGateError(Exception):
    """Base class for all scenegate errors."""


class DimensionMismatch(SceneGateError):
    """Two rasters that must share a shape do not."""


class UnsupportedTemplate(SceneGateError):
    """Instruction does not match any configured grammar rule."""


class EmptyPhrase(SceneGateError):
    """A parsed target or anchor phrase is empty."""


class UnknownDomain(SceneGateError):
    """Requested task-domain key is absent from the lexicon."""


class InvalidConfig(SceneGateError):
    """A configuration value violates its documented constraint."""


class NoTargetFound(SceneGateError):
    """Refinement could not isolate any target component."""


class BackendUnavailable(SceneGateError):
    """A segmentation or inpainting backend failed or refused the request."""


class BackendTimeout(BackendUnavailable):
    """A wire backend did not answer within the configured timeout."""


class ProtocolError(SceneGateError):
    """A wire message violates the protocol schema."""


class PlacementInfeasible(SceneGateError):
    """Scene generation cannot place the requested objects without overlap."""


class EpisodeAlreadyInitialized(SceneGateError):
    """Episode init was called twice."""


class UninitializedEpisode(SceneGateError):
    """Frame distillation requested before episode init."""
