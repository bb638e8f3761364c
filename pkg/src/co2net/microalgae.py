"""Monod microalgae growth with light and nutrient limitation, and CO2 uptake."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numba
import numpy as np

from co2net.errors import ConfigError, IntegrationFailure, ModelDomainError

STATE_NAMES = ("X_ALG", "S")
NEGATIVE_SLACK = 1e-9


@dataclass(frozen=True)
class MonodParams:
    mu_ALG: float
    Th: float
    KS: float
    KsI: float
    KiI: float
    Y: float
    Sin: float
    K_CO2: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"microalgae parameter {f.name} must be positive, got {v}")
        if not self.K_CO2 < 1:
            raise ConfigError(f"K_CO2 must lie in (0, 1), got {self.K_CO2}")

    def as_tuple(self):
        return (self.mu_ALG, self.Th, self.KS, self.KsI, self.KiI, self.Y, self.Sin)


@dataclass(frozen=True)
class MonodState:
    X_ALG: float
    S: float

    def __post_init__(self):
        if self.X_ALG < 0 or self.S < 0:
            raise ModelDomainError("microalgae state must be non-negative", state=(self.X_ALG, self.S))

    def array(self):
        return np.array([self.X_ALG, self.S])


def _check_inputs(S, I):
    if S < 0 or I < 0:
        raise ModelDomainError(f"S and I must be non-negative (S={S}, I={I})")


def light_factor(I, params: MonodParams):
    return I / (I + params.KsI + I * I / params.KiI)


def growth_rate(S, I, params: MonodParams):
    """Specific growth rate (1/d), product of the light and nutrient factors."""
    S = float(S)
    I = float(I)
    _check_inputs(S, I)
    return params.mu_ALG * (I / (I + params.KsI + I * I / params.KiI)) * (S / (S + params.KS))


def uptake_rho(S, I, params: MonodParams):
    return growth_rate(S, I, params) / params.Y


def carbon_uptake(S, I, params: MonodParams):
    """CO2 share of the nutrient uptake; this is also the RL reward."""
    return params.K_CO2 * uptake_rho(S, I, params)


def monod_field(x, I, params: MonodParams) -> np.ndarray:
    X, S = (float(v) for v in (x.array() if isinstance(x, MonodState) else x))
    mu = growth_rate(S, I, params)
    return np.array([mu * X - X / params.Th, (params.Sin - S) / params.Th - mu / params.Y * X])


def optimal_light(params: MonodParams):
    """Light intensity maximising the growth rate at any nutrient level."""
    return math.sqrt(params.KsI * params.KiI)


def project_nonnegative(x, t=None):
    """Zero tiny negative excursions; larger ones are an integration failure."""
    x = np.asarray(x, dtype=float)
    if np.any(x < -NEGATIVE_SLACK):
        raise IntegrationFailure(f"negative microalgae state {x}", t)
    return np.maximum(x, 0.0)


@numba.njit(cache=True)
def _euler_kernel(X, S, I, mu, Th, KS, KsI, KiI, Y, Sin, dt, n):
    lf = I / (I + KsI + I * I / KiI)
    for _ in range(n):
        m = mu * lf * S / (S + KS)
        dX = m * X - X / Th
        dS = (Sin - S) / Th - m / Y * X
        X = X + dt * dX
        S = S + dt * dS
        if X < 0.0 or S < 0.0:
            if X < -1e-9 or S < -1e-9:
                return X, S, False
            X = max(X, 0.0)
            S = max(S, 0.0)
    return X, S, True


def advance(X, S, I, params: MonodParams, dt, n):
    """Advance ``n`` fixed first-order steps of size ``dt`` under constant light."""
    _check_inputs(S, I)
    X2, S2, ok = _euler_kernel(float(X), float(S), float(I), *params.as_tuple(), float(dt), int(n))
    if not ok:
        raise IntegrationFailure(f"negative microalgae state ({X2}, {S2})")
    return X2, S2
