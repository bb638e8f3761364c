"""Fixed-step first-order integration, adaptive oracle and step-size calibration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp

from co2net.errors import CalibrationFailure, IntegrationFailure, StiffnessError

FIXED = "fixed_first_order"
ORACLE = "adaptive_oracle"
DT_FLOOR = 1e-8


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 5e-5
    t_end: float = 20.0
    method: str = FIXED
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    stride: int = 200

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end >= 0:
            raise ValueError("t_end must be non-negative")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.method not in (FIXED, ORACLE):
            raise ValueError(f"unknown method {self.method!r}")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")


@dataclass
class SimulationTrace:
    times: np.ndarray
    states: np.ndarray
    state_names: tuple
    flows: np.ndarray | None = None
    flow_names: tuple = ()
    inputs: np.ndarray | None = None
    input_names: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        n = len(self.times)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trace times must be strictly increasing")
        for name in ("states", "flows", "inputs"):
            arr = getattr(self, name)
            if arr is not None and len(arr) != n:
                raise ValueError(f"{name} has {len(arr)} rows, expected {n}")

    @property
    def header(self):
        return ["t", *self.state_names, *self.flow_names, *self.input_names]

    def table(self) -> np.ndarray:
        cols = [self.times[:, None], self.states]
        if self.flows is not None:
            cols.append(self.flows)
        if self.inputs is not None:
            cols.append(self.inputs)
        return np.hstack(cols)

    def column(self, name) -> np.ndarray:
        return self.table()[:, self.header.index(name)]

    def final(self, name):
        return float(self.column(name)[-1])

    def to_csv(self, path):
        np.savetxt(path, self.table(), delimiter=",", header=",".join(self.header), comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path, n_states, n_flows=0):
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        a, b = 1 + n_states, 1 + n_states + n_flows
        return cls(
            times=data[:, 0],
            states=data[:, 1:a],
            state_names=tuple(header[1:a]),
            flows=data[:, a:b] if n_flows else None,
            flow_names=tuple(header[a:b]),
            inputs=data[:, b:] if data.shape[1] > b else None,
            input_names=tuple(header[b:]),
        )


def step_fixed(x, field, dt, t=0.0):
    """One explicit first-order step ``x + dt * field(t, x)``."""
    x = np.asarray(x, dtype=float)
    dx = np.asarray(field(t, x), dtype=float)
    if not np.all(np.isfinite(dx)):
        raise IntegrationFailure("non-finite vector field", t)
    return x + dt * dx


def _step_count(t_end, dt):
    n = math.floor(t_end / dt + 1e-9)
    partial = t_end - n * dt
    return n, (partial if partial > 1e-12 * max(1.0, t_end) else 0.0)


def integrate(x0, field, config: IntegratorConfig, t0=0.0, observe=None, observe_names=((), ()),
              project=None, stride=None) -> SimulationTrace:
    """Fixed-step trajectory retaining every ``stride``-th step and the last one.

    ``observe(t, x)`` may return ``(flows_row, inputs_row)`` for retained rows.
    ``project(x, t)`` post-processes each new state (e.g. non-negativity).
    """
    if config.method == ORACLE:
        return oracle_integrate(x0, field, config, t0=t0)
    stride = config.stride if stride is None else stride
    dt = config.dt
    n, partial = _step_count(config.t_end, dt)
    x = np.asarray(x0, dtype=float).copy()
    rows_t, rows_x, rows_f, rows_u = [], [], [], []

    def keep(t, x):
        rows_t.append(t)
        rows_x.append(x.copy())
        if observe is not None:
            fl, inp = observe(t, x)
            rows_f.append(np.atleast_1d(fl))
            rows_u.append(np.atleast_1d(inp))

    keep(t0, x)
    for k in range(n):
        t = t0 + k * dt
        x = step_fixed(x, field, dt, t)
        if project is not None:
            x = project(x, t + dt)
        if (k + 1) % stride == 0 or (k + 1 == n and not partial):
            keep(t0 + (k + 1) * dt, x)
    if partial:
        x = step_fixed(x, field, partial, t0 + n * dt)
        if project is not None:
            x = project(x, t0 + config.t_end)
        keep(t0 + config.t_end, x)
    return _make_trace(rows_t, rows_x, rows_f, rows_u, observe_names, len(x))


def _make_trace(rows_t, rows_x, rows_f, rows_u, names, dim, state_names=None):
    flow_names, input_names = names
    return SimulationTrace(
        times=np.array(rows_t),
        states=np.array(rows_x).reshape(len(rows_t), dim),
        state_names=tuple(state_names or (f"x{i + 1}" for i in range(dim))),
        flows=np.array(rows_f) if rows_f and len(rows_f[0]) else None,
        flow_names=tuple(flow_names),
        inputs=np.array(rows_u) if rows_u and len(rows_u[0]) else None,
        input_names=tuple(input_names),
    )


def oracle_integrate(x0, field, config: IntegratorConfig, t0=0.0, t_eval=None) -> SimulationTrace:
    """Adaptive 8(5,3) embedded Runge-Kutta reference solution at sample times."""
    if t_eval is None:
        n, partial = _step_count(config.t_end, config.dt)
        idx = np.arange(0, n + 1, config.stride)
        t_eval = t0 + idx * config.dt
        if idx[-1] != n:
            t_eval = np.append(t_eval, t0 + n * config.dt)
        if partial:
            t_eval = np.append(t_eval, t0 + config.t_end)
    t_eval = np.asarray(t_eval, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if t_eval[-1] == t0:
        return _make_trace([t0], [x0], [], [], ((), ()), len(x0))
    sol = solve_ivp(field, (t0, t_eval[-1]), x0, method="DOP853", t_eval=t_eval,
                    rtol=config.rel_tol, atol=config.abs_tol)
    if sol.status != 0:
        if "step size" in sol.message.lower():
            raise StiffnessError(sol.message, float(sol.t[-1]) if len(sol.t) else t0)
        raise IntegrationFailure(sol.message)
    return _make_trace(list(sol.t), list(sol.y.T), [], [], ((), ()), len(x0))


def max_relative_error(trace: SimulationTrace, reference: SimulationTrace, floor=1e-9) -> float:
    if trace.states.shape != reference.states.shape or not np.allclose(trace.times, reference.times):
        raise ValueError("traces are not sampled on the same grid")
    denom = np.maximum(np.abs(reference.states), floor)
    return float(np.max(np.abs(trace.states - reference.states) / denom))


def calibrate_dt(x0, field, dt0, oracle_config: IntegratorConfig, rel_tol=None, n_samples=200,
                 project=None):
    """Largest ``dt0 / 2**k`` whose fixed-step solution is within ``rel_tol`` of the oracle.

    Returns ``(dt, history)`` with ``history`` a list of ``(dt, error)`` pairs.
    """
    if not dt0 > 0:
        raise ValueError("dt0 must be positive")
    rel_tol = oracle_config.rel_tol if rel_tol is None else rel_tol
    t_end = oracle_config.t_end
    base_stride = max(1, round(t_end / (n_samples * dt0)))
    oracle_cfg = replace(oracle_config, method=ORACLE, dt=dt0, stride=base_stride)
    ref = oracle_integrate(x0, field, oracle_cfg)
    history = []
    dt, k = dt0, 0
    while dt >= DT_FLOOR:
        cfg = IntegratorConfig(dt=dt, t_end=t_end, stride=base_stride * 2**k)
        fixed = integrate(x0, field, cfg, project=project)
        err = max_relative_error(fixed, ref)
        history.append((dt, err))
        if err <= rel_tol:
            return dt, history
        dt, k = dt / 2, k + 1
    raise CalibrationFailure(f"no step above {DT_FLOOR:g} meets rel_tol={rel_tol:g}; history={history}")
