"""Optimal finite-time stabilisation for affine-in-control systems.

The initial-condition-dependent controller uses the Lyapunov function
``V(x) = p (x'x)^q`` with ``p`` and ``q`` chosen from the initial condition and
the requested settling-time bound ``T_max``. Under this feedback the closed
loop is ``x' = -V'(x)'/2``, whose norm obeys
``|x(t)|^2 = |x0|^2 (1 - t/T_max)^(1 + T_max)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from co2net.errors import ConfigError, SettlingBoundError, IntegrationFailure, NearSingularGError
from co2net.integrate import SimulationTrace

SETTLE_TOL = 1e-4


def check_t_max(T_max):
    if not (math.isfinite(T_max) and T_max > 1):
        raise SettlingBoundError(f"T_max must lie in (1, inf), got {T_max!r}")
    return float(T_max)


@dataclass(frozen=True)
class LyapunovPQ:
    p: float
    q: float
    T_max: float
    v0: float = 0.0

    @property
    def degenerate(self) -> bool:
        return self.p == 0.0

    @property
    def beta(self) -> float:
        return 1.0 - 1.0 / self.T_max

    @property
    def c(self) -> float:
        return self.v0 ** (1.0 - self.beta)


@dataclass(frozen=True)
class ControllerConfig:
    T_max: float
    x0: np.ndarray
    singularity_threshold: float = 1e-6

    def __post_init__(self):
        check_t_max(self.T_max)
        x0 = np.asarray(self.x0, dtype=float)
        if not np.all(np.isfinite(x0)):
            raise ValueError("x0 must be finite")
        object.__setattr__(self, "x0", x0)

    @property
    def n(self) -> int:
        return len(self.x0)


def pq_from(x0, T_max) -> LyapunovPQ:
    """Lyapunov coefficients for initial condition ``x0`` and bound ``T_max``.

    A zero ``x0`` gives ``p = 0``; the controller then outputs zero action.
    """
    T_max = check_t_max(T_max)
    x0 = np.asarray(x0, dtype=float)
    r0 = float(x0 @ x0)
    q = T_max / (1.0 + T_max)
    p = 0.5 * r0 ** (1.0 / (1.0 + T_max)) * ((1.0 + T_max) / T_max) ** 2
    return LyapunovPQ(p=p, q=q, T_max=T_max, v0=p * r0**q)


def lyapunov_v(x, pq: LyapunovPQ):
    x = np.asarray(x, dtype=float)
    r = float(x @ x)
    return pq.p * r**pq.q if r > 0 else 0.0


def lyapunov_grad(x, pq: LyapunovPQ) -> np.ndarray:
    """Gradient ``2 p q (x'x)^(q-1) x``, defined as zero at the origin."""
    x = np.asarray(x, dtype=float)
    r = float(x @ x)
    if r == 0.0:
        return np.zeros_like(x)
    return 2.0 * pq.p * pq.q * r ** (pq.q - 1.0) * x


def closed_loop_field(x, pq: LyapunovPQ) -> np.ndarray:
    return -0.5 * lyapunov_grad(x, pq)


def norm_law(t, r0, T_max):
    """Closed-form squared norm of the closed loop; zero from ``T_max`` on."""
    s = np.clip(1.0 - np.asarray(t, dtype=float) / T_max, 0.0, None)
    return r0 * s ** (1.0 + T_max)


def default_l2(f, G):
    """Cross-weighting ``L2(x) = 2 f(x)' G(x)``."""
    return lambda x: 2.0 * f(x) @ G(x)


def default_r2inv(G):
    """Control weighting inverse ``G^-1 G^-T``."""
    def r2inv(x):
        ginv = np.linalg.inv(G(x))
        return ginv @ ginv.T
    return r2inv


def baseline_control(x, f, G, L2, R2inv, V_grad) -> np.ndarray:
    """General optimal finite-time feedback ``-R2^-1 (L2 + V'G)' / 2``.

    ``f``, ``G``, ``L2``, ``R2inv`` and ``V_grad`` are callables of the state.
    """
    R = np.atleast_2d(R2inv(x))
    if not np.allclose(R, R.T, rtol=1e-10, atol=1e-12):
        raise ConfigError("R2^-1 must be symmetric")
    try:
        np.linalg.cholesky(R)
    except np.linalg.LinAlgError as exc:
        raise ConfigError("R2^-1 must be positive definite") from exc
    return -0.5 * R @ (L2(x) + V_grad(x) @ G(x))


def icd_control(x, f, G, pq: LyapunovPQ) -> np.ndarray:
    """Initial-condition-dependent feedback ``-G^-1 (2 f + V'') / 2``."""
    Gx = G(x)
    rhs = 2.0 * f(x) + lyapunov_grad(x, pq)
    try:
        return -0.5 * np.linalg.solve(Gx, rhs)
    except np.linalg.LinAlgError as exc:
        raise NearSingularGError("singular input matrix in control law", state=tuple(np.ravel(x))) from exc


def finite_time_constants(x0, pq: LyapunovPQ):
    """``(c, beta)`` that make the settling bound equal ``T_max``."""
    beta = pq.beta
    return lyapunov_v(x0, pq) ** (1.0 - beta), beta


def settling_bound(x0, pq: LyapunovPQ, c, beta):
    if not 0 < beta < 1:
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    if not c > 0:
        raise ValueError(f"c must be positive, got {c}")
    return lyapunov_v(x0, pq) ** (1.0 - beta) / (c * (1.0 - beta))


def cost_integrand(x, u, f, G, pq: LyapunovPQ):
    fx, Gx = f(x), G(x)
    u = np.asarray(u, dtype=float)
    phi = -0.5 * np.linalg.solve(Gx, 2.0 * fx + lyapunov_grad(x, pq))
    Gphi = Gx @ phi
    L1 = Gphi @ Gphi - lyapunov_grad(x, pq) @ fx
    Gu = Gx @ u
    return float(L1 + 2.0 * fx @ Gu + Gu @ Gu)


def cost_step(x, u, f, G, pq: LyapunovPQ, dt):
    if not dt > 0:
        raise ValueError("dt must be positive")
    return cost_integrand(x, u, f, G, pq) * dt


@dataclass
class CostAccumulator:
    J: float = 0.0
    t: float = 0.0

    def add(self, increment, dt):
        self.J += increment
        self.t += dt
        return self.J


class FiniteTimeController:
    """Feedback with ``x0`` captured at construction.

    Once ``|x| < settle_tol * max(1, |x0|)`` the controller latches and returns
    zero (equilibrium) action. A perturbation after construction is not
    re-planned: ``x0`` stays the value seen here.
    """

    def __init__(self, f, G, x0, T_max, settle_tol=SETTLE_TOL):
        self.f = f
        self.G = G
        self.x0 = np.asarray(x0, dtype=float)
        self.pq = pq_from(self.x0, T_max)
        self.settle_radius = settle_tol * max(1.0, float(np.linalg.norm(self.x0)))
        self.settled_at = 0.0 if self.pq.degenerate else None

    @property
    def settled(self):
        return self.settled_at is not None

    def __call__(self, t, x):
        if not self.settled and float(np.linalg.norm(x)) < self.settle_radius:
            self.settled_at = t
        if self.settled:
            return np.zeros_like(self.x0)
        return icd_control(x, self.f, self.G, self.pq)


def simulate_closed_loop(f, G, x0, T_max, dt=5e-5, t_end=None, stride=200, outflow=None,
                         settle_tol=SETTLE_TOL, method="adaptive", rtol=1e-10, atol=1e-13):
    """Closed loop ``x' = f + G u`` under the initial-condition-dependent feedback.

    ``method="fixed"`` uses first-order steps of size ``dt``; ``"adaptive"``
    uses an error-controlled Runge-Kutta pair and stops exactly at the settle
    radius before holding. Samples are taken every ``stride * dt`` days.

    Returns ``(trace, controller)``. The trace inputs are ``u1..un, V, J``;
    ``J`` accumulates the performance integrand while the feedback is active.
    ``outflow(x)`` adds an ``m12`` flow column when given.
    """
    ctrl = FiniteTimeController(f, G, x0, T_max, settle_tol)
    t_end = ctrl.pq.T_max if t_end is None else float(t_end)
    if method == "fixed":
        times, xs, Js = _run_fixed(ctrl, f, G, dt, t_end, stride)
    elif method == "adaptive":
        times, xs, Js = _run_adaptive(ctrl, f, G, dt * stride, t_end, rtol, atol)
    else:
        raise ValueError(f"unknown method {method!r}")

    rows_u = []
    for t, x, J in zip(times, xs, Js):
        held = ctrl.settled_at is not None and t >= ctrl.settled_at
        u = np.zeros(len(x)) if held else icd_control(x, f, G, ctrl.pq)
        rows_u.append(np.concatenate([u, [lyapunov_v(x, ctrl.pq), J]]))
    n = len(ctrl.x0)
    flows = np.array([[outflow(x)] for x in xs]) if outflow is not None else None
    trace = SimulationTrace(
        times=np.asarray(times),
        states=np.asarray(xs),
        state_names=tuple(f"x{i + 1}" for i in range(n)),
        flows=flows,
        flow_names=("m12",) if outflow is not None else (),
        inputs=np.array(rows_u),
        input_names=(*(f"u{i + 1}" for i in range(n)), "V", "J"),
        meta={"settled_at": ctrl.settled_at, "p": ctrl.pq.p, "q": ctrl.pq.q, "J": float(Js[-1]),
              "method": method},
    )
    return trace, ctrl


def _run_fixed(ctrl, f, G, dt, t_end, stride):
    x = ctrl.x0.copy()
    steps = int(round(t_end / dt))
    acc = CostAccumulator()
    times, xs, Js = [], [], []
    for k in range(steps + 1):
        t = k * dt
        u = ctrl(t, x)
        if k % stride == 0 or k == steps:
            times.append(t)
            xs.append(x.copy())
            Js.append(acc.J)
        if k == steps:
            break
        fx, Gx = f(x), G(x)
        gu = Gx @ u
        if not ctrl.settled:
            # u is the optimal feedback here, so G phi = G u
            L1 = gu @ gu - lyapunov_grad(x, ctrl.pq) @ fx
            acc.add((L1 + 2.0 * fx @ gu + gu @ gu) * dt, dt)
        x = x + dt * (fx + gu)
        if not np.all(np.isfinite(x)):
            raise IntegrationFailure("non-finite closed-loop state", t)
    return times, xs, Js


def _run_adaptive(ctrl, f, G, sample_dt, t_end, rtol, atol):
    n = len(ctrl.x0)
    grid = sample_dt * np.arange(int(round(t_end / sample_dt)) + 1)
    grid[-1] = min(grid[-1], t_end)
    if grid[-1] < t_end:
        grid = np.append(grid, t_end)

    def active(t, y):
        x = y[:n]
        fx, Gx = f(x), G(x)
        u = -0.5 * np.linalg.solve(Gx, 2.0 * fx + lyapunov_grad(x, ctrl.pq))
        gu = Gx @ u
        L1 = gu @ gu - lyapunov_grad(x, ctrl.pq) @ fx
        return np.append(fx + gu, L1 + 2.0 * fx @ gu + gu @ gu)

    def held(t, y):
        return np.append(f(y[:n]), 0.0)

    def reach(t, y):
        return float(np.linalg.norm(y[:n])) - ctrl.settle_radius

    reach.terminal = True
    reach.direction = -1

    y0 = np.append(ctrl.x0, 0.0)
    if ctrl.settled:
        t_switch, y_switch = 0.0, y0
        times, ys = [], []
    else:
        sol = solve_ivp(active, (0.0, t_end), y0, method="DOP853", t_eval=grid, events=reach,
                        rtol=rtol, atol=atol)
        if sol.status == -1:
            raise IntegrationFailure(sol.message)
        times, ys = list(sol.t), list(sol.y.T)
        if sol.status == 1:
            t_switch, y_switch = float(sol.t_events[0][0]), sol.y_events[0][0]
            ctrl.settled_at = t_switch
        else:
            t_switch = None
    if t_switch is not None and t_switch < t_end:
        rest = grid[grid > t_switch]
        sol = solve_ivp(held, (t_switch, t_end), y_switch, method="DOP853", t_eval=rest,
                        rtol=rtol, atol=atol)
        if sol.status != 0:
            raise IntegrationFailure(sol.message)
        times += list(sol.t)
        ys += list(sol.y.T)
    ys = np.array(ys)
    return times, ys[:, :n], ys[:, n]
