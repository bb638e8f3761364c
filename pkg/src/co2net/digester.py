"""Six-state anaerobic digester (two-reaction model) with per-state dilution inputs.

State ordering is ``X1, X2, S1, S2, Z, C``. The controller works in translated
coordinates ``x~ = x - x_ss`` and ``u~ = u - u_ss`` so that the drift vanishes
at the operating point.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields

import numpy as np

from co2net.errors import ConfigError, ModelDomainError, NearSingularGError

log = logging.getLogger(__name__)

STATE_NAMES = ("X1", "X2", "S1", "S2", "Z", "C")
INPUT_NAMES = tuple(f"D{j}" for j in range(1, 7))
SINGULARITY_THRESHOLD = 1e-6


@dataclass(frozen=True)
class DigesterParams:
    alpha: float
    S1in: float
    S2in: float
    k1: float
    k2: float
    k3: float
    k4: float
    k5: float
    k6: float
    Zin: float
    Cin: float
    mu1max: float
    mu2max: float
    KS1: float
    KS2: float
    KI2: float
    kLa: float
    KH: float
    PT: float
    fr: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v):
                raise ConfigError(f"digester parameter {f.name} is not finite")
            if f.name == "fr":
                # fr = 0 is full capture
                if not 0 <= v <= 0.2:
                    raise ConfigError(f"fr must lie in [0, 0.2], got {v}")
            elif v <= 0:
                raise ConfigError(f"digester parameter {f.name} must be positive, got {v}")


@dataclass(frozen=True)
class DigesterState:
    X1: float
    X2: float
    S1: float
    S2: float
    Z: float
    C: float

    def array(self) -> np.ndarray:
        return np.array([self.X1, self.X2, self.S1, self.S2, self.Z, self.C], dtype=float)

    @classmethod
    def from_array(cls, x) -> "DigesterState":
        return cls(*(float(v) for v in x))


@dataclass(frozen=True)
class DilutionInput:
    D: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.D, dtype=float)
        if d.shape != (6,) or not np.all(np.isfinite(d)):
            raise ValueError("dilution input must be a finite 6-vector")
        object.__setattr__(self, "D", d)

    @property
    def feasible(self) -> bool:
        return bool(np.all(self.D >= 0))


@dataclass(frozen=True)
class Equilibrium:
    """Operating point ``(x_ss, u_ss)`` of the raw dynamics."""

    x_ss: np.ndarray
    u_ss: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x_ss", np.asarray(self.x_ss, dtype=float))
        object.__setattr__(self, "u_ss", np.asarray(self.u_ss, dtype=float))
        if self.x_ss.shape != (6,) or self.u_ss.shape != (6,):
            raise ConfigError("x_ss and u_ss must be 6-vectors")

    def residual(self, params: DigesterParams) -> np.ndarray:
        return raw_rhs(self.x_ss, self.u_ss, params)

    def check(self, params: DigesterParams, tol=1e-8):
        r = self.residual(params)
        if np.max(np.abs(r)) >= tol:
            raise ConfigError(
                f"inconsistent equilibrium pair: max residual {np.max(np.abs(r)):.3e} >= {tol:g}"
            )
        return self


def _as_float(name, v):
    v = float(v)
    if v < 0:
        raise ModelDomainError(f"{name} must be non-negative, got {v}")
    return v


def mu1(S1, params: DigesterParams):
    """Monod growth rate of acidogenic biomass (1/d)."""
    S1 = _as_float("S1", S1)
    return params.mu1max * S1 / (S1 + params.KS1)


def mu2(S2, params: DigesterParams):
    """Haldane growth rate of methanogenic biomass (1/d)."""
    S2 = _as_float("S2", S2)
    return params.mu2max * S2 / (S2 + params.KS2 + (S2 / params.KI2) ** 2)


def mu2_argmax(params: DigesterParams):
    return params.KI2 * math.sqrt(params.KS2)


def _unpack(x):
    X1, X2, S1, S2, Z, C = (float(v) for v in (x.array() if isinstance(x, DigesterState) else x))
    return X1, X2, S1, S2, Z, C


def gas_phi(x, params: DigesterParams):
    X1, X2, S1, S2, Z, C = _unpack(x)
    return C + S2 - Z + params.KH * params.PT + params.k6 / params.kLa * mu2(S2, params) * X2


def partial_pressure_pc(x, params: DigesterParams):
    """CO2 partial pressure (atm), smaller root of ``K_H P^2 - phi P + P_T (C + S2 - Z) = 0``."""
    X1, X2, S1, S2, Z, C = _unpack(x)
    phi = gas_phi(x, params)
    co2 = C + S2 - Z
    disc = phi * phi - 4.0 * params.KH * params.PT * co2
    if not disc >= 0:
        raise ModelDomainError(f"negative P_C discriminant {disc:.6g}", state=(X1, X2, S1, S2, Z, C))
    return (phi - math.sqrt(disc)) / (2.0 * params.KH)


def co2_outflow(x, params: DigesterParams):
    """CO2 released to the atmosphere after capture, mmol/(L d)."""
    X1, X2, S1, S2, Z, C = _unpack(x)
    pc = partial_pressure_pc(x, params)
    return params.fr * (params.kLa * (C + S2 - Z - params.KH * pc))


def raw_drift(x, params: DigesterParams) -> np.ndarray:
    """Input-free part of the untranslated dynamics."""
    X1, X2, S1, S2, Z, C = _unpack(x)
    r1 = mu1(S1, params) * X1
    r2 = mu2(S2, params) * X2
    m12 = co2_outflow(x, params)
    return np.array([
        r1,
        r2,
        -params.k1 * r1,
        params.k2 * r1 - params.k3 * r2,
        0.0,
        -m12 + params.k4 * r1 + params.k5 * r2,
    ])


def raw_input_diag(x, params: DigesterParams) -> np.ndarray:
    X1, X2, S1, S2, Z, C = _unpack(x)
    a = params.alpha
    return np.array([-a * X1, -a * X2, params.S1in - S1, params.S2in - S2, params.Zin - Z, params.Cin - C])


def raw_rhs(x, u, params: DigesterParams) -> np.ndarray:
    """Right-hand side of the six digester balances for dilution vector ``u``."""
    return raw_drift(x, params) + raw_input_diag(x, params) * np.asarray(u, dtype=float)


def equilibrium_input(x_ss, params: DigesterParams) -> np.ndarray:
    """Dilution vector that makes ``x_ss`` an equilibrium.

    Every state has its own input, so any state with a non-singular input
    matrix is an equilibrium for the returned dilutions.
    """
    g = raw_input_diag(x_ss, params)
    if np.any(np.abs(g) < SINGULARITY_THRESHOLD):
        raise NearSingularGError("input matrix singular at x_ss", state=tuple(x_ss))
    return -raw_drift(x_ss, params) / g


def drift_f(x_tilde, params: DigesterParams, equilibrium: Equilibrium) -> np.ndarray:
    """Translated drift ``F(x~ + x_ss) + G(x~ + x_ss) u_ss``; zero at ``x~ = 0``."""
    x = np.asarray(x_tilde, dtype=float) + equilibrium.x_ss
    return raw_drift(x, params) + raw_input_diag(x, params) * equilibrium.u_ss


def input_matrix_g(x_tilde, params: DigesterParams, equilibrium: Equilibrium,
                   threshold=SINGULARITY_THRESHOLD) -> np.ndarray:
    x = np.asarray(x_tilde, dtype=float) + equilibrium.x_ss
    g = raw_input_diag(x, params)
    small = np.abs(g) < threshold
    if np.any(small):
        names = ", ".join(STATE_NAMES[i] for i in np.flatnonzero(small))
        raise NearSingularGError(f"near-singular input matrix (entries for {names})", state=tuple(x))
    return np.diag(g)


class DigesterModel:
    """Bundles parameters and operating point; exposes the affine-in-control form."""

    def __init__(self, params: DigesterParams, equilibrium: Equilibrium,
                 threshold=SINGULARITY_THRESHOLD, strict=False):
        self.params = params
        self.equilibrium = equilibrium.check(params)
        self.threshold = threshold
        self.strict = strict
        self.infeasible_steps = 0

    def f(self, x_tilde):
        return drift_f(x_tilde, self.params, self.equilibrium)

    def G(self, x_tilde):
        return input_matrix_g(x_tilde, self.params, self.equilibrium, self.threshold)

    def physical_state(self, x_tilde):
        return np.asarray(x_tilde, dtype=float) + self.equilibrium.x_ss

    def physical_input(self, u_tilde, t=None):
        """Commanded dilution ``u_ss + u~``; negative entries are logged, not clipped."""
        u = self.equilibrium.u_ss + np.asarray(u_tilde, dtype=float)
        if np.any(u < 0):
            self.infeasible_steps += 1
            if self.strict:
                raise ModelDomainError(f"negative dilution {u} at t={t}")
            if self.infeasible_steps == 1:
                log.warning("negative dilution commanded at t=%s: %s", t, u)
        return u

    def outflow(self, x_tilde):
        return co2_outflow(self.physical_state(x_tilde), self.params)

    def translated_rhs(self, x_tilde, u_tilde):
        return self.f(x_tilde) + self.G(x_tilde) @ np.asarray(u_tilde, dtype=float)
