"""Exception types raised across the package."""


class ModelDomainError(ValueError):
    """A model was evaluated outside the region where it is defined."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class NearSingularGError(ModelDomainError):
    """The digester input matrix has a diagonal entry too close to zero."""


class SettlingBoundError(ValueError):
    """Settling-time bound outside (1, inf)."""


class NoCompensationError(ValueError):
    """The sink flow cannot compensate the source (non-positive uptake)."""


class ConfigError(ValueError):
    pass


class IntegrationFailure(RuntimeError):
    def __init__(self, message, t=None):
        super().__init__(message if t is None else f"{message} (t={t:.6g})")
        self.t = t


class StiffnessError(IntegrationFailure):
    pass


class CalibrationFailure(RuntimeError):
    pass


class EpisodeFinishedError(RuntimeError):
    pass


class TrainingAbort(RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
