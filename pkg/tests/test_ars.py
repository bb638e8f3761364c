import numpy as np
import pytest

from co2net.ars import (ArsConfig, LearningCurve, LinearPolicy, perturb, rollout, train, update)
from co2net.env import EnvConfig, MonodEnv
from co2net.errors import TrainingAbort


class Transition:
    def __init__(self, observation, reward, step_index, episode_done):
        self.observation, self.reward, self.step_index, self.episode_done = observation, reward, step_index, episode_done


class Bandit:
    """One-step task with reward -(a - target)^2 and a constant unit observation."""
    observation_dim = 1
    action_dim = 1
    max_episode_steps = 1

    def __init__(self, target=2.0):
        self.target = target

    def reset(self, seed=None):
        return np.ones(1)

    def clamp(self, a):
        return float(np.ravel(a)[0])

    def step(self, a):
        return Transition(np.ones(1), -(self.clamp(a) - self.target) ** 2, 1, True)


class Whitened:
    """One-step task with standard-normal observations and a linear optimum."""
    observation_dim = 2
    action_dim = 1
    max_episode_steps = 1
    W = np.array([1.5, -0.7])

    def __init__(self):
        self.obs = None
        self.rng = np.random.default_rng(0)

    def reset(self, seed=None):
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.obs = self.rng.standard_normal(2)
        return self.obs

    def clamp(self, a):
        return float(np.ravel(a)[0])

    def step(self, a):
        return Transition(self.obs, -(self.clamp(a) - self.W @ self.obs) ** 2, 1, True)


def test_policy_basics(tmp_path):
    p = LinearPolicy.zeros(2)
    assert p.shape == (1, 2) and np.all(p.M == 0)
    np.testing.assert_array_equal(p.act([3.0, 4.0]), [0.0])
    with pytest.raises(ValueError):
        LinearPolicy(np.zeros((1, 2)), np.zeros(2), -np.ones(2))
    with pytest.raises(ValueError):
        LinearPolicy(np.array([[np.nan, 0.0]]), np.zeros(2), np.ones(2))
    q = LinearPolicy(np.array([[0.1, 1 / 3]]), np.array([1.0, 2.0]), np.array([0.5, 4.0]), True, 7.0)
    q.save(tmp_path / "p.txt")
    back = LinearPolicy.load(tmp_path / "p.txt")
    np.testing.assert_array_equal(back.M, q.M)
    np.testing.assert_array_equal(back.obs_var, q.obs_var)
    assert back.normalize and back.count == 7.0


def test_running_stats(rng):
    data = rng.normal(3.0, 2.0, size=(1000, 2))
    p = LinearPolicy.zeros(2, normalize=True)
    for chunk in np.array_split(data, 7):
        p.observe(chunk)
    np.testing.assert_allclose(p.obs_mean, data.mean(axis=0), rtol=1e-12)
    np.testing.assert_allclose(p.obs_var, data.var(axis=0), rtol=1e-10)


def test_perturb(rng):
    p = LinearPolicy(rng.normal(size=(2, 3)), np.zeros(3), np.ones(3))
    plus, minus, d = perturb(p, 0.05, rng)
    np.testing.assert_allclose((plus.M + minus.M) / 2, p.M, rtol=0, atol=1e-15)
    tiny = perturb(p, 1e-300, rng)
    np.testing.assert_array_equal(tiny[0].M, p.M)
    with pytest.raises(ValueError):
        perturb(p, 0.0, rng)
    samples = np.concatenate([perturb(p, 0.1, rng)[2].ravel() for _ in range(20000)])
    assert len(samples) >= 1e5
    assert np.var(samples) == pytest.approx(1.0, abs=0.02)
    assert np.mean(samples) == pytest.approx(0.0, abs=0.01)


def test_update_rules(rng):
    cfg = ArsConfig(n_directions=2)
    p = LinearPolicy.zeros(2)
    same = [(1.0, 1.0, rng.normal(size=(1, 2))), (2.0, 2.0, rng.normal(size=(1, 2)))]
    np.testing.assert_array_equal(update(p, same, cfg).M, p.M)
    flat = [(5.0, 5.0, np.ones((1, 2)))] * 2
    assert update(p, flat, cfg) is p
    with pytest.raises(TrainingAbort):
        update(p, [(np.nan, 1.0, np.ones((1, 2)))], cfg)
    with pytest.raises(ValueError):
        update(p, [], cfg)


def test_update_arithmetic():
    cfg = ArsConfig(n_directions=1, learning_rate=0.02)
    unit = np.array([[1.0, 0.0]])
    r_plus, r_minus = 1.0, -1.0
    sigma = np.std([r_plus, r_minus])
    res = [(r_plus, r_minus, unit)]
    new = update(LinearPolicy.zeros(2), res, cfg)
    np.testing.assert_allclose(new.M, cfg.learning_rate / sigma * (r_plus - r_minus) * unit)
    # a difference of sigma * b / learning_rate moves M by exactly the unit pattern
    diff = sigma * 1 / cfg.learning_rate
    res = [(diff / 2, -diff / 2, unit)]
    sig2 = np.std([diff / 2, -diff / 2])
    new = update(LinearPolicy.zeros(2), res, cfg)
    np.testing.assert_allclose(new.M, unit * sigma / sig2)


def test_update_shift_invariant(rng):
    cfg = ArsConfig(n_directions=4, top_directions=2)
    p = LinearPolicy(rng.normal(size=(1, 3)), np.zeros(3), np.ones(3))
    res = [(rng.normal(), rng.normal(), rng.normal(size=(1, 3))) for _ in range(4)]
    shifted = [(a + 17.0, b + 17.0, d) for a, b, d in res]
    np.testing.assert_allclose(update(p, res, cfg).M, update(p, shifted, cfg).M, rtol=1e-12)
    rev = list(reversed(res))
    np.testing.assert_allclose(update(p, res, ArsConfig(n_directions=4)).M,
                               update(p, rev, ArsConfig(n_directions=4)).M, rtol=1e-13)


def test_top_directions():
    cfg = ArsConfig(n_directions=2, top_directions=1)
    res = [(10.0, 0.0, np.array([[1.0]])), (1.0, 0.0, np.array([[-1.0]]))]
    sigma = np.std([10.0, 0.0, 1.0, 0.0])
    new = update(LinearPolicy.zeros(1), res, cfg)
    np.testing.assert_allclose(new.M, [[cfg.learning_rate / sigma * 10.0]])


def test_config_validation():
    for kw in ({"top_directions": 9}, {"noise": 0.0}, {"learning_rate": -1.0}, {"n_directions": 0}):
        with pytest.raises(ValueError):
            ArsConfig(**kw)
    assert ArsConfig().top_directions == 8


def test_bandit_convergence():
    cfg = ArsConfig(total_steps=500 * 16, eval_episodes=1, seed=3)
    policy, curve = train(Bandit, cfg)
    assert len(curve.returns) == 501
    assert policy.M[0, 0] == pytest.approx(2.0, rel=0.05)


def test_step_accounting():
    cfg = ArsConfig(n_directions=3, episodes_per_candidate=2, total_steps=50, eval_episodes=2)
    _, curve = train(Bandit, cfg)
    per_iter = 2 * 3 * 2 * 1
    assert np.all(np.diff([0] + curve.train_steps[1:]) == per_iter)
    assert curve.train_steps[-1] >= 50 and curve.train_steps[-2] < 50
    assert np.all(np.diff(curve.eval_steps) == 2)


def test_zero_learning_rate_and_smoke():
    _, curve = train(Bandit, ArsConfig(learning_rate=0.0, total_steps=160, eval_episodes=1))
    assert curve.delta == 0.0
    policy, curve = train(Bandit, ArsConfig(total_steps=0))
    assert curve.delta is None and np.all(policy.M == 0)


def test_budget_abort():
    policy, curve = train(Bandit, ArsConfig(total_steps=10**9, max_seconds=0.0, eval_episodes=1))
    assert curve.aborted and curve.delta is None


def test_normalization_keeps_signs():
    cfg = ArsConfig(total_steps=300 * 16, eval_episodes=5, seed=1)
    plain, _ = train(Whitened, cfg)
    normed, _ = train(Whitened, ArsConfig(total_steps=300 * 16, eval_episodes=5, seed=1, normalize=True))
    np.testing.assert_array_equal(np.sign(plain.M), np.sign(Whitened.W)[None, :])
    np.testing.assert_array_equal(np.sign(normed.M), np.sign(plain.M))


def test_determinism_and_curve_file(mparams, tmp_path):
    factory = lambda: MonodEnv(mparams, EnvConfig.around(mparams, 20.0, 20.0, max_episode_steps=20))
    cfg = ArsConfig(total_steps=2 * 16 * 20, eval_episodes=2, seed=9)
    _, c1 = train(factory, cfg)
    _, c2 = train(factory, cfg)
    c1.to_csv(tmp_path / "a.csv")
    c2.to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert c1.trace().header[:4] == ["t", "return_mean", "return_std", "late_action"]


def test_rollout_offset():
    p = LinearPolicy.zeros(1)
    r0, *_ = rollout(p, Bandit(), 0)
    r1, _, _, n = rollout(p, Bandit(), 0, offset=2.5)
    assert r1 == r0 - 2.5 * n


def test_curve_properties():
    c = LearningCurve()
    assert c.delta is None and c.r_s is None
    c.record(0, 0, 10, 1.0, 0.0, 0.0)
    c.record(1, 16, 20, 3.0, 0.0, 1.0)
    assert (c.r_s, c.r_e, c.delta) == (1.0, 3.0, 2.0)
