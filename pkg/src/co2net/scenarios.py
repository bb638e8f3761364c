"""Assembled runs: digester closed loop, coupled network, and the validation suite."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from co2net.ars import ArsConfig
from co2net.config import PRESETS, Config
from co2net.control import icd_control, lyapunov_grad, norm_law, pq_from, simulate_closed_loop
from co2net.digester import DigesterModel, gas_phi, partial_pressure_pc
from co2net.env import EnvConfig, MonodEnv
from co2net.errors import ConfigError, IntegrationFailure, ModelDomainError, NearSingularGError
from co2net.integrate import (ORACLE, IntegratorConfig, SimulationTrace, calibrate_dt, max_relative_error,
                              oracle_integrate)
from co2net.microalgae import MonodParams, advance, monod_field, project_nonnegative
from co2net.network import atmosphere_rate, circularity, clamped_circularity, compensation_volume

ORACLE_MATCH_TOL = 1e-3
NORM_LAW_TOL = 1e-3
RESIDUAL_TOL = 1e-10
PC_TOL = 1e-10


def _grid(t_end, dt, stride):
    n = t_end / (dt * stride)
    if n < 1 or abs(n - round(n)) > 1e-9 * n:
        raise ConfigError(f"t_end={t_end} must be a positive multiple of dt*stride={dt * stride}")
    return int(round(n))


def preset_x0(cfg: Config, preset=None):
    preset = cfg.get("controller", "preset", 1) if preset is None else preset
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    return PRESETS[preset].copy()


def digester_model(cfg: Config, strict=False) -> DigesterModel:
    return DigesterModel(cfg.digester_params(), cfg.equilibrium(), strict=strict)


def run_digester(cfg: Config, t_max=None, preset=None, t_end=None, method=None, sample_dt=None):
    """Closed-loop run from a preset translated initial condition."""
    model = digester_model(cfg)
    method = cfg.get("controller", "method", "adaptive") if method is None else method
    t_max = cfg.get("controller", "t_max", 3.5) if t_max is None else t_max
    dt = cfg.get("integrator", "dt", 5e-5)
    stride = cfg.get("integrator", "stride", 200)
    if sample_dt is not None:
        stride = max(1, int(round(sample_dt / dt)))
    trace, ctrl = simulate_closed_loop(model.f, model.G, preset_x0(cfg, preset), t_max, dt=dt,
                                       t_end=t_end, stride=stride, outflow=model.outflow, method=method)
    trace.meta["infeasible_steps"] = model.infeasible_steps
    return trace, ctrl


# ---------------------------------------------------------------- Monod runs

def monod_euler_trace(params: MonodParams, x0, I, dt, t_end, stride) -> SimulationTrace:
    """Fixed-step Monod trajectory under constant light, sampled every ``stride`` steps."""
    n = _grid(t_end, dt, stride)
    X, S = (float(v) for v in x0)
    rows = [(X, S)]
    for _ in range(n):
        X, S = advance(X, S, I, params, dt, stride)
        rows.append((X, S))
    return SimulationTrace(times=dt * stride * np.arange(n + 1), states=np.array(rows), state_names=("X_ALG", "S"))


def monod_oracle_trace(params: MonodParams, x0, I, dt, t_end, stride, rtol=1e-10, atol=1e-10):
    cfg = IntegratorConfig(dt=dt, t_end=t_end, method=ORACLE, stride=stride, rel_tol=rtol, abs_tol=atol)
    tr = oracle_integrate(x0, lambda t, x: monod_field(np.maximum(x, 0.0), I, params), cfg)
    tr.state_names = ("X_ALG", "S")
    return tr


def monod_inputs(cfg: Config):
    m = cfg.section("microalgae")
    return cfg.monod_params(), np.array([m["x_alg_0"], m["s_0"]]), m["i_ref"]


def env_config(cfg: Config, seed=None):
    params, x0, _ = monod_inputs(cfg)
    e = cfg.section("env")
    kw = {k: e[k] for k in ("max_episode_steps", "env_dt", "substep_dt", "action_low", "action_high") if k in e}
    return EnvConfig.around(params, float(x0[0]), float(x0[1]), e.get("init_low", 0.5), e.get("init_high", 1.5), seed=seed, **kw)


def env_factory(cfg: Config, seed=None):
    params, ec = cfg.monod_params(), env_config(cfg, seed)
    return lambda: MonodEnv(params, ec)


def ars_config(cfg: Config, seed=0, total_steps=None, **kw):
    a = cfg.section("ars")
    if total_steps is not None:
        a["total_steps"] = total_steps
    a.update(kw)
    return ArsConfig(seed=seed, **a)


# ---------------------------------------------------------------- coupled network

@numba.njit(cache=True)
def _network_kernel(X, S, m2, I, mu, Th, KS, KsI, KiI, Y, Sin, K, m12s, dt, stride, Vd, Vm):
    n = len(m12s) - 1
    out = np.empty((n + 1, 5))
    lf = I / (I + KsI + I * I / KiI)
    for k in range(n + 1):
        m23 = K * mu * lf * S / (S + KS) / Y
        out[k, 0] = X
        out[k, 1] = S
        out[k, 2] = m2
        out[k, 3] = m23
        out[k, 4] = m12s[k] * Vd - m23 * Vm
        if k == n:
            break
        a = m12s[k]
        b = m12s[k + 1]
        for j in range(stride):
            m12 = a + (b - a) * j / stride
            g = mu * lf * S / (S + KS)
            m23 = K * g / Y
            dX = g * X - X / Th
            dS = (Sin - S) / Th - g / Y * X
            m2 = m2 + dt * (m12 * Vd - m23 * Vm)
            X = X + dt * dX
            S = S + dt * dS
            if X < 0.0 or S < 0.0:
                if X < -1e-9 or S < -1e-9:
                    return out, k, False
                X = max(X, 0.0)
                S = max(S, 0.0)
    return out, n, True


@dataclass
class NetworkRun:
    trace: SimulationTrace
    summary: dict


def run_network(cfg: Config, preset=None, t_max=None) -> NetworkRun:
    """Digester closed loop feeding the atmosphere, drained by the cultivation.

    The digester is simulated with the finite-time controller and its outflow is
    interpolated linearly between samples for the fixed-step cultivation and
    atmosphere balance.
    """
    net = cfg.section("network")
    Vd, Vm, delta = net.get("vd", 1.0), net.get("vm", 1.0), net.get("delta", 1.0)
    t_end = net.get("t_end", 20.0)
    dt = cfg.get("integrator", "dt", 5e-5)
    stride = cfg.get("integrator", "stride", 200)
    n = _grid(t_end, dt, stride)
    dig, ctrl = run_digester(cfg, t_max=t_max, preset=preset, t_end=t_end)
    times = dt * stride * np.arange(n + 1)
    m12s = np.interp(times, dig.times, dig.column("m12"))
    params, x0, I = monod_inputs(cfg)
    out, k, ok = _network_kernel(float(x0[0]), float(x0[1]), 0.0, float(I), *params.as_tuple(), params.K_CO2,
                                 m12s, float(dt), int(stride), float(Vd), float(Vm))
    if not ok:
        raise IntegrationFailure("negative microalgae state in network run", float(times[k]))
    dig_states = np.column_stack([np.interp(times, dig.times, dig.states[:, i]) for i in range(dig.states.shape[1])])
    states = np.column_stack([out[:, :3], dig_states])
    names = ("X_ALG", "S", "m2") + tuple(f"x{i + 1}" for i in range(dig_states.shape[1]))
    trace = SimulationTrace(
        times=times, states=states, state_names=names,
        flows=np.column_stack([m12s, out[:, 3], out[:, 4]]), flow_names=("m12", "m23", "dm2_dt"),
    )
    m12_ss, m23_ss = float(m12s[-1]), float(out[-1, 3])
    ipk = int(np.argmax(out[:, 3]))
    i12 = int(np.argmin(np.abs(times - 12.0))) if t_end >= 12 else n
    vm_ratio = compensation_volume(m12_ss, m23_ss, Vd) / Vd
    lam_a = circularity(m12_ss, delta).lam
    lam_b = clamped_circularity(atmosphere_rate(m12_ss, m23_ss, Vd, Vm) / Vd, delta).lam
    summary = {
        "m12_ss": m12_ss,
        "m23_ss": m23_ss,
        "m23_peak": float(out[ipk, 3]),
        "m23_peak_t": float(times[ipk]),
        "x_alg_12d": float(out[i12, 0]),
        "x_alg_final": float(out[-1, 0]),
        "m2_final": float(out[-1, 2]),
        "vm_over_vd": vm_ratio,
        "lambda_a": lam_a,
        "lambda_b": lam_b,
        "uptake_orders_below_emissions": math.log10(m12_ss / m23_ss),
        "digester_settled_at": ctrl.settled_at,
        "vd": Vd,
        "vm": Vm,
        "delta": delta,
    }
    return NetworkRun(trace, summary)


# ---------------------------------------------------------------- validation

@dataclass(frozen=True)
class Check:
    name: str
    measured: float
    threshold: float
    passed: bool
    note: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.note})" if self.note else ""
        return f"{status} {self.name}: measured {self.measured:.6g} vs threshold {self.threshold:.6g}{extra}"


def check_equilibrium(cfg):
    r = float(np.max(np.abs(cfg.equilibrium().residual(cfg.digester_params()))))
    return Check("equilibrium_residual", r, 1e-8, r < 1e-8)


def check_oracle_match(cfg):
    params, x0, I = monod_inputs(cfg)
    dt = cfg.get("integrator", "dt", 5e-5)
    t_end = cfg.get("integrator", "t_end", 20.0)
    stride = max(1, int(round(0.01 / dt)))
    try:
        euler = monod_euler_trace(params, x0, I, dt, t_end, stride)
    except IntegrationFailure as exc:
        return Check("oracle_match", math.inf, ORACLE_MATCH_TOL, False, f"fixed-step run failed: {exc}")
    ref = monod_oracle_trace(params, x0, I, dt, t_end, stride, rtol=cfg.get("integrator", "oracle_rtol", 1e-10))
    err = max_relative_error(euler, ref)
    return Check("oracle_match", err, ORACLE_MATCH_TOL, err <= ORACLE_MATCH_TOL, f"dt={dt:g}")


def check_calibration(cfg):
    params, x0, I = monod_inputs(cfg)
    integ = cfg.section("integrator")
    dt0, tol = integ.get("calib_dt0", 8e-4), integ.get("calib_rel_tol", 5e-5)
    oracle = IntegratorConfig(dt=dt0, t_end=integ.get("t_end", 20.0), method=ORACLE,
                              rel_tol=integ.get("oracle_rtol", 1e-10), abs_tol=1e-10)
    field = lambda t, x: monod_field(np.maximum(x, 0.0), I, params)
    dt, hist = calibrate_dt(x0, field, dt0, oracle, rel_tol=tol, project=project_nonnegative)
    target = 5e-5
    return Check("calibrated_dt", dt, target, dt <= target * (1 + 1e-9),
                 "history " + ", ".join(f"{d:g}:{e:.3g}" for d, e in hist))


def check_norm_law(cfg, t_max=None, preset=None):
    t_max = cfg.get("controller", "t_max", 3.5) if t_max is None else t_max
    trace, ctrl = run_digester(cfg, t_max=t_max, preset=preset, method="adaptive", sample_dt=0.01)
    mask = trace.times <= 0.95 * t_max
    got = np.sum(trace.states[mask] ** 2, axis=1)
    want = norm_law(trace.times[mask], float(ctrl.x0 @ ctrl.x0), t_max)
    err = float(np.max(np.abs(got - want) / want))
    return Check("norm_law", err, NORM_LAW_TOL, err <= NORM_LAW_TOL, f"T_max={t_max:g}")


def random_translated_states(cfg, n=1000, seed=0, spread=0.5):
    """Translated states with every physical component within ``spread`` of x_ss."""
    x_ss = cfg.equilibrium().x_ss
    rng = np.random.default_rng(seed)
    return x_ss * rng.uniform(-spread, spread, size=(n, len(x_ss)))


def hjb_residual(model, x, pq):
    u = icd_control(x, model.f, model.G, pq)
    return model.f(x) + model.G(x) @ u + 0.5 * lyapunov_grad(x, pq)


def check_feedback_residual(cfg, n=1000, seed=0):
    model = digester_model(cfg)
    pq = pq_from(preset_x0(cfg), cfg.get("controller", "t_max", 3.5))
    worst, used = 0.0, 0
    for x in random_translated_states(cfg, n, seed):
        try:
            r = hjb_residual(model, x, pq)
        except (NearSingularGError, ModelDomainError):
            continue
        worst = max(worst, float(np.max(np.abs(r))))
        used += 1
    return Check("feedback_residual", worst, RESIDUAL_TOL, worst < RESIDUAL_TOL and used > 0, f"{used} states")


def check_pc_quadratic(cfg, n=1000, seed=1):
    p = cfg.digester_params()
    x_ss = cfg.equilibrium().x_ss
    worst, used = 0.0, 0
    for xt in random_translated_states(cfg, n, seed):
        x = x_ss + xt
        try:
            pc = partial_pressure_pc(x, p)
        except ModelDomainError:
            continue
        phi = gas_phi(x, p)
        co2 = x[5] + x[3] - x[4]
        scale = max(abs(p.KH * pc * pc), abs(phi * pc), abs(p.PT * co2), 1.0)
        worst = max(worst, abs(p.KH * pc * pc - phi * pc + p.PT * co2) / scale)
        used += 1
    return Check("pc_quadratic", worst, PC_TOL, worst < PC_TOL and used > 0, f"{used} states")


def validate(cfg: Config, calibrate=True):
    checks = [check_equilibrium(cfg), check_oracle_match(cfg)]
    if calibrate:
        checks.append(check_calibration(cfg))
    checks += [check_norm_law(cfg), check_feedback_residual(cfg), check_pc_quadratic(cfg)]
    return checks
