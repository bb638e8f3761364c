import math

import numpy as np
import pytest

from co2net.errors import CalibrationFailure, IntegrationFailure, StiffnessError
from co2net.integrate import (ORACLE, IntegratorConfig, SimulationTrace, calibrate_dt, integrate,
                              max_relative_error, oracle_integrate, step_fixed)


def decay(t, x):
    return -x


def test_step_fixed_examples():
    np.testing.assert_array_equal(step_fixed([1.0, 2.0], lambda t, x: np.zeros(2), 0.1), [1.0, 2.0])
    assert step_fixed([1.0], decay, 0.1)[0] == pytest.approx(0.9)
    with pytest.raises(IntegrationFailure) as err:
        step_fixed([1.0], lambda t, x: np.array([np.nan]), 0.1, t=2.5)
    assert err.value.t == 2.5


def test_half_steps_second_order():
    errs = []
    for dt in (0.1, 0.05, 0.025):
        one = step_fixed([1.0], decay, dt)[0]
        two = step_fixed(step_fixed([1.0], decay, dt / 2), decay, dt / 2)[0]
        errs.append(abs(one - two))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.05)


def test_config_validation():
    for kw in ({"dt": 0.0}, {"t_end": -1.0}, {"abs_tol": 0.0}, {"method": "rk4"}, {"stride": 0}):
        with pytest.raises(ValueError):
            IntegratorConfig(**kw)


def test_zero_horizon():
    tr = integrate([3.0], decay, IntegratorConfig(dt=0.1, t_end=0.0))
    assert len(tr.times) == 1 and tr.states[0, 0] == 3.0


def test_times_exact_grid():
    cfg = IntegratorConfig(dt=0.1, t_end=100.0, stride=1)
    tr = integrate([1.0], lambda t, x: np.zeros(1), cfg)
    np.testing.assert_array_equal(tr.times, 0.1 * np.arange(1001))


def test_partial_last_step():
    tr = integrate([1.0], decay, IntegratorConfig(dt=0.3, t_end=1.0, stride=1))
    assert tr.times[-1] == 1.0
    assert tr.states[-1, 0] == pytest.approx(0.7**3 * 0.9)


def test_first_order_convergence():
    terr = []
    for dt in (1e-2, 5e-3, 2.5e-3):
        tr = integrate([1.0], decay, IntegratorConfig(dt=dt, t_end=1.0, stride=10**6))
        terr.append(abs(tr.states[-1, 0] - math.exp(-1)))
    assert 1.7 <= terr[0] / terr[1] <= 2.3 and 1.7 <= terr[1] / terr[2] <= 2.3


def test_oracle_exponential():
    tr = oracle_integrate([1.0], decay, IntegratorConfig(dt=0.01, t_end=1.0, method=ORACLE, stride=10))
    assert tr.states[-1, 0] == pytest.approx(math.exp(-1), abs=1e-8)
    again = oracle_integrate([1.0], decay, IntegratorConfig(dt=0.01, t_end=1.0, method=ORACLE, stride=10))
    np.testing.assert_array_equal(tr.states, again.states)


def test_oracle_oscillator_energy():
    cfg = IntegratorConfig(dt=2 * math.pi, t_end=200 * math.pi, method=ORACLE, stride=1, rel_tol=1e-12, abs_tol=1e-12)
    tr = oracle_integrate([1.0, 0.0], lambda t, x: np.array([x[1], -x[0]]), cfg)
    energy = np.sum(tr.states**2, axis=1)
    assert np.max(np.abs(energy - 1.0)) < 1e-6


def test_oracle_stiffness_error():
    cfg = IntegratorConfig(dt=0.1, t_end=2.0, method=ORACLE, stride=1)
    with pytest.raises(StiffnessError):
        oracle_integrate([1.0], lambda t, x: x**2 * 1e3, cfg)


def test_calibration_loose_accepts_dt0():
    oracle = IntegratorConfig(dt=0.01, t_end=1.0, method=ORACLE, rel_tol=1e-10)
    dt, hist = calibrate_dt([1.0], decay, 0.01, oracle, rel_tol=0.1)
    assert dt == 0.01 and len(hist) == 1


def test_calibration_refines_stiff():
    lam = 50.0
    oracle = IntegratorConfig(dt=0.05, t_end=1.0, method=ORACLE, rel_tol=1e-10)
    dt, hist = calibrate_dt([1.0], lambda t, x: -lam * (x - np.cos(t)), 0.05, oracle, rel_tol=1e-2)
    assert dt < 0.05
    assert hist[-1][1] <= 1e-2 and hist[0][1] > 1e-2


def test_calibration_failure():
    oracle = IntegratorConfig(dt=1e-7, t_end=1e-6, method=ORACLE)
    with pytest.raises(CalibrationFailure):
        calibrate_dt([1.0], decay, 1e-7, oracle, rel_tol=1e-30, n_samples=5)


def test_trace_roundtrip(tmp_path):
    tr = SimulationTrace(times=[0.0, 0.5, 1.0], states=np.arange(6.0).reshape(3, 2) / 3, state_names=("a", "b"),
                         flows=np.ones((3, 1)), flow_names=("m",), inputs=np.zeros((3, 1)), input_names=("u",))
    path = tmp_path / "t.csv"
    tr.to_csv(path)
    assert path.read_text().splitlines()[0] == "t,a,b,m,u"
    back = SimulationTrace.from_csv(path, n_states=2, n_flows=1)
    np.testing.assert_array_equal(back.table(), tr.table())
    assert max_relative_error(back, tr) == 0.0


def test_trace_invariants():
    with pytest.raises(ValueError):
        SimulationTrace(times=[0.0, 0.0], states=np.zeros((2, 1)), state_names=("a",))
    with pytest.raises(ValueError):
        SimulationTrace(times=[0.0, 1.0], states=np.zeros((3, 1)), state_names=("a",))
