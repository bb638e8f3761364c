"""Compartmental CO2 network: digester control, microalgae uptake and ARS light control."""

from co2net.errors import (
    CalibrationFailure,
    ConfigError,
    SettlingBoundError,
    EpisodeFinishedError,
    IntegrationFailure,
    ModelDomainError,
    NearSingularGError,
    NoCompensationError,
    StiffnessError,
    TrainingAbort,
)

__version__ = "0.1.0"

__all__ = [
    "CalibrationFailure",
    "ConfigError",
    "SettlingBoundError",
    "EpisodeFinishedError",
    "IntegrationFailure",
    "ModelDomainError",
    "NearSingularGError",
    "NoCompensationError",
    "StiffnessError",
    "TrainingAbort",
]
